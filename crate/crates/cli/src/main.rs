mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::Value;

use commands::{aggregate, Command, Outcome};
use config::{load_doc, parse_assignment, parse_sweep, parse_value, set_path, CliError, CliResult};

/// Strong-duality certificates, duality-gap bounds and landscape experiments.
#[derive(Parser)]
#[command(name = "dualgap", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Closed-form and iterative optima of a regularized deep linear network.
    StrongDuality(RunArgs),
    /// Duality gap of a multi-branch network against its bound, swept over I.
    GapBound(RunArgs),
    /// Loss surface on the plane through three trained solutions.
    Landscape(RunArgs),
    /// How often SGD reaches zero loss, per hidden width.
    HittingRate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed, same as `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, dotted for nested keys.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Run once per value, each into OUT/KEY=VALUE, and collect OUT/sweep.csv.
    #[arg(long, value_name = "KEY=A..B[:STEP]")]
    sweep: Option<String>,
}

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("DUALGAP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("DUALGAP_THREADS = `{raw}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::config(e.to_string()))
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn execute(cmd: Command, args: RunArgs) -> CliResult<i32> {
    init_threads()?;
    let mut doc = load_doc(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        set_path(&mut doc, "seed", Value::from(seed))?;
    }
    for raw in &args.sets {
        let (k, v) = parse_assignment(raw)?;
        set_path(&mut doc, &k, parse_value(&v))?;
    }
    let base = args.config.as_deref().and_then(Path::parent).map(Path::to_path_buf);
    let Some(raw) = args.sweep else {
        return Ok(cmd.run(doc, base.as_deref(), &args.out)?.code);
    };

    let sweep = parse_sweep(&raw)?;
    let results: Vec<CliResult<Outcome>> = sweep
        .values
        .par_iter()
        .map(|v| {
            let mut d = doc.clone();
            set_path(&mut d, &sweep.key, v.clone())?;
            let dir = args.out.join(format!("{}={}", sweep.key, value_label(v)));
            cmd.run(d, base.as_deref(), &dir)
        })
        .collect();
    let mut code = 0;
    let mut done = Vec::new();
    for (v, r) in sweep.values.iter().zip(results) {
        match r {
            Ok(o) => {
                if code == 0 {
                    code = o.code;
                }
                done.push((v.clone(), o.summary));
            }
            Err(e) => {
                eprintln!("{}={}: {e}", sweep.key, value_label(v));
                if code == 0 {
                    code = e.code;
                }
            }
        }
    }
    if !done.is_empty() {
        let table = aggregate(&sweep.key, &done)?;
        output::write_atomic(&args.out.join("sweep.csv"), |w| Ok(w.write_all(&table)?))?;
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Sub::StrongDuality(a) => (Command::StrongDuality, a),
        Sub::GapBound(a) => (Command::GapBound, a),
        Sub::Landscape(a) => (Command::Landscape, a),
        Sub::HittingRate(a) => (Command::HittingRate, a),
    };
    let code = match execute(cmd, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    ExitCode::from(code as u8)
}
