use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use dualgap_core::dual_lnn::{duality_gap_report, GapReportLnn, ReportParams};
use dualgap_core::landscape::{
    hitting_rate_experiment, landscape_experiment, teacher_synthetic_data, write_hit_csv, Architecture, Combiner, SgdConfig,
};
use dualgap_core::linear_net::{gaussian_identity_instance, InstanceDoc, ProblemInstance};
use dualgap_core::multibranch::{gap_sweep, BranchSpec, Dataset, GapInstance, GapReport, VerifyOptions};

use crate::config::{one_or_many, relative_to, resolve, to_pretty, CliError, CliResult, EXIT_NUMERICAL, EXIT_PRECONDITION};
use crate::output::{csv_bytes, write_atomic, write_text};

pub const RESOLVED: &str = "config.resolved.json";

/// Exit code and the summary table used to aggregate sweeps.
pub struct Outcome {
    pub code: i32,
    pub summary: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    StrongDuality,
    GapBound,
    Landscape,
    HittingRate,
}

impl Command {
    /// `base` is the config file's directory, for relative paths inside it.
    pub fn run(self, doc: Value, base: Option<&Path>, out: &Path) -> CliResult<Outcome> {
        match self {
            Command::StrongDuality => strong_duality(resolve(doc)?, base, out),
            Command::GapBound => gap_bound(resolve(doc)?, out),
            Command::Landscape => landscape(resolve(doc)?, out),
            Command::HittingRate => hitting_rate(resolve(doc)?, out),
        }
    }
}

fn write_resolved<T: Serialize>(cfg: &T, out: &Path) -> CliResult<()> {
    write_text(&out.join(RESOLVED), &to_pretty(cfg)?)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, |w| Ok(w.write_all(bytes)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrongDualityConfig {
    /// Instance file `{X, Y, gamma, dims}`; when absent a Gaussian instance
    /// with `X = I` is generated from `n`, `d_min`, `depth` and `seed`.
    pub instance: Option<PathBuf>,
    pub n: usize,
    pub d_min: usize,
    pub depth: usize,
    /// Explicit γ. Takes precedence over `gamma_ratio`.
    pub gamma: Option<f64>,
    /// γ as a multiple of σ_min(Ỹ).
    pub gamma_ratio: Option<f64>,
    pub tol: f64,
    pub emit_csv: bool,
    pub solver: ReportParams,
    pub seed: u64,
}

impl Default for StrongDualityConfig {
    fn default() -> Self {
        StrongDualityConfig {
            instance: None,
            n: 20,
            d_min: 5,
            depth: 2,
            gamma: None,
            gamma_ratio: None,
            tol: 1e-8,
            emit_csv: true,
            solver: ReportParams::default(),
            seed: 0,
        }
    }
}

fn load_instance(path: &Path) -> CliResult<ProblemInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let doc: InstanceDoc = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(ProblemInstance::from_doc(doc)?)
}

fn strong_duality(mut cfg: StrongDualityConfig, base: Option<&Path>, out: &Path) -> CliResult<Outcome> {
    cfg.instance = cfg.instance.map(|p| relative_to(base, &p));
    cfg.solver.seed = cfg.seed;
    let p = match &cfg.instance {
        Some(path) => load_instance(path)?,
        None => {
            if cfg.gamma.is_none() && cfg.gamma_ratio.is_none() {
                cfg.gamma_ratio = Some(0.5);
            }
            gaussian_identity_instance(cfg.n, cfg.d_min, cfg.depth, cfg.seed)?
        }
    };
    let gamma = match (cfg.gamma, cfg.gamma_ratio) {
        (Some(g), _) => g,
        (None, Some(r)) => r * p.sigma_min().unwrap_or(0.0),
        (None, None) => p.gamma(),
    };
    let p = p.with_gamma(gamma)?;
    write_resolved(&cfg, out)?;

    let report = duality_gap_report(&p, &cfg.solver)?;
    write_atomic(&out.join("report.json"), |w| Ok(report.write_json(w)?))?;
    let summary = csv_bytes(|buf| GapReportLnn::write_csv_rows(std::slice::from_ref(&report), buf))?;
    if cfg.emit_csv {
        write_bytes(&out.join("report.csv"), &summary)?;
    }
    let code = if let Some(why) = &report.hypothesis_violation {
        eprintln!("hypothesis violated: {why}");
        EXIT_PRECONDITION
    } else if !report.strong_duality_holds(cfg.tol) {
        eprintln!(
            "strong duality not certified at tol {}: relative gap {:?}, recovery distance {:?}",
            cfg.tol, report.relative_gap_closed_form, report.l2_distance
        );
        EXIT_NUMERICAL
    } else {
        0
    };
    Ok(Outcome { code, summary })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapBoundConfig {
    pub branches: Vec<BranchSpec>,
    pub dataset: Dataset,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default, rename = "K")]
    pub k: Option<f64>,
    /// Branch counts to sweep; the listed branches are cycled to reach each.
    #[serde(default, rename = "I", deserialize_with = "one_or_many")]
    pub counts: Vec<usize>,
    #[serde(default = "yes")]
    pub cross_check: bool,
    #[serde(default = "yes")]
    pub certificate: bool,
    #[serde(default)]
    pub lambda_max: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

fn gap_bound(mut cfg: GapBoundConfig, out: &Path) -> CliResult<Outcome> {
    if cfg.branches.is_empty() {
        return Err(CliError::config("config: `branches` is empty"));
    }
    if cfg.counts.is_empty() {
        cfg.counts = vec![cfg.branches.len()];
    }
    let inst = GapInstance { branches: cfg.branches.clone(), dataset: cfg.dataset.clone(), tau: cfg.tau, k: cfg.k, count: None };
    let (tau, k) = inst.resolve(cfg.seed)?;
    cfg.tau = Some(tau);
    cfg.k = Some(k);
    write_resolved(&cfg, out)?;

    let opts = VerifyOptions { cross_check: cfg.cross_check, certificate: cfg.certificate, lambda_max: cfg.lambda_max };
    let reports = gap_sweep(&cfg.branches, &cfg.dataset, tau, k, &cfg.counts, &opts)?;
    write_text(&out.join("reports.json"), &to_pretty(&reports)?)?;
    let summary = csv_bytes(|buf| GapReport::write_csv_rows(&reports, buf))?;
    write_bytes(&out.join("gap.csv"), &summary)?;
    let failed: Vec<usize> = reports.iter().filter(|r| !r.holds()).map(|r| r.branches).collect();
    let code = if failed.is_empty() {
        0
    } else {
        eprintln!("bound fails at I = {failed:?}");
        EXIT_NUMERICAL
    };
    Ok(Outcome { code, summary })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub n: usize,
    pub d: usize,
    pub teacher_hidden: usize,
    #[serde(rename = "I", deserialize_with = "one_or_many")]
    pub branches: Vec<usize>,
    /// Hidden widths of each branch.
    pub hidden: Vec<usize>,
    pub combiner: Combiner,
    /// Seed indices of the three trained solutions spanning the plane.
    pub seeds: [u64; 3],
    pub resolution: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            n: 1000,
            d: 10,
            teacher_hidden: 11,
            branches: vec![1, 3, 5, 100],
            hidden: vec![1],
            combiner: Combiner::Sum,
            seeds: [0, 1, 2],
            resolution: 41,
            sgd: SgdConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Serialize)]
struct MetricRow {
    #[serde(rename = "I")]
    branches: usize,
    violation: f64,
    loss_a: f64,
    loss_b: f64,
    loss_c: f64,
}

fn landscape(cfg: LandscapeConfig, out: &Path) -> CliResult<Outcome> {
    if cfg.branches.is_empty() {
        return Err(CliError::config("config: `I` is empty"));
    }
    write_resolved(&cfg, out)?;
    let task = teacher_synthetic_data(cfg.n, cfg.d, cfg.teacher_hidden, cfg.seed)?;
    let mut rows = Vec::with_capacity(cfg.branches.len());
    for &i in &cfg.branches {
        let arch = Architecture { input: cfg.d, hidden: cfg.hidden.clone(), output: 1, branches: i, combiner: cfg.combiner };
        let rep = landscape_experiment(&task.data, &arch, cfg.seeds, &cfg.sgd, cfg.resolution, cfg.seed)?;
        write_atomic(&out.join(format!("grid-I{i}.csv")), |w| Ok(rep.grid.write_csv(w)?))?;
        let [loss_a, loss_b, loss_c] = rep.anchor_losses;
        rows.push(MetricRow { branches: i, violation: rep.violation, loss_a, loss_b, loss_c });
    }
    let summary = serialize_rows(&rows)?;
    write_bytes(&out.join("metric.csv"), &summary)?;
    Ok(Outcome { code: 0, summary })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HittingRateConfig {
    pub n: usize,
    pub d: usize,
    pub teacher_hidden: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub widths: Vec<usize>,
    pub seeds: usize,
    pub tol: f64,
    pub sgd: SgdConfig,
    /// Use 100,000 iterations and tolerance 1e-5 instead of `sgd.iters` and `tol`.
    pub full_budget: bool,
    pub seed: u64,
}

impl Default for HittingRateConfig {
    fn default() -> Self {
        HittingRateConfig {
            n: 1000,
            d: 10,
            teacher_hidden: 11,
            widths: (10..=21).collect(),
            seeds: 100,
            tol: 1e-4,
            sgd: SgdConfig::default(),
            full_budget: false,
            seed: 0,
        }
    }
}

fn hitting_rate(mut cfg: HittingRateConfig, out: &Path) -> CliResult<Outcome> {
    if cfg.full_budget {
        cfg.sgd.iters = 100_000;
        cfg.tol = 1e-5;
        cfg.full_budget = false;
    }
    write_resolved(&cfg, out)?;
    let task = teacher_synthetic_data(cfg.n, cfg.d, cfg.teacher_hidden, cfg.seed)?;
    let rows = hitting_rate_experiment(&task.data, &cfg.widths, cfg.seeds, cfg.tol, &cfg.sgd, cfg.seed)?;
    let summary = csv_bytes(|buf| write_hit_csv(&rows, buf))?;
    write_bytes(&out.join("hits.csv"), &summary)?;
    Ok(Outcome { code: 0, summary })
}

fn serialize_rows<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError { code: EXIT_NUMERICAL, msg: e.to_string() })?;
    }
    w.into_inner().map_err(|e| CliError { code: EXIT_NUMERICAL, msg: e.to_string() })
}

/// Concatenates the runs' summaries under one header, prefixing each row
/// with the sweep value unless the summary already has a `key` column.
pub fn aggregate(key: &str, runs: &[(Value, Vec<u8>)]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let bad = |e: csv::Error| CliError { code: EXIT_NUMERICAL, msg: e.to_string() };
    let mut header_written = false;
    for (value, bytes) in runs {
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        let header = r.headers().map_err(bad)?.clone();
        let prefix = !header.iter().any(|h| h == key);
        if !header_written {
            let mut h: Vec<&str> = if prefix { vec![key] } else { Vec::new() };
            h.extend(header.iter());
            w.write_record(&h).map_err(bad)?;
            header_written = true;
        }
        let v = match value {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        for rec in r.records() {
            let rec = rec.map_err(bad)?;
            let mut row: Vec<&str> = if prefix { vec![v.as_str()] } else { Vec::new() };
            row.extend(rec.iter());
            w.write_record(&row).map_err(bad)?;
        }
    }
    w.into_inner().map_err(|e| CliError { code: EXIT_NUMERICAL, msg: e.to_string() })
}
