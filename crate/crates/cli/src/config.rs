use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use dualgap_core::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, msg: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::Parse(_) | Error::Json(_) | Error::SizeLimit(_) => {
                EXIT_CONFIG
            }
            Error::Io(_) | Error::Csv(_) => EXIT_CONFIG,
            Error::Hypothesis(_) | Error::Infeasible(_) | Error::Geometry(_) | Error::Domain(_) => EXIT_PRECONDITION,
            Error::OutsideHull { .. } | Error::Numerical(_) | Error::Unsupported(_) => EXIT_NUMERICAL,
        };
        CliError { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Reads the config document, or an empty object when no file is given.
pub fn load_doc(path: Option<&Path>) -> CliResult<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Map::new()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if !doc.is_object() {
        return Err(CliError::config(format!("{}: top level must be a JSON object", path.display())));
    }
    Ok(doc)
}

/// A JSON literal when it parses as one, otherwise a string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets a dotted `key` inside `doc`, creating objects on the way.
pub fn set_path(doc: &mut Value, key: &str, value: Value) -> CliResult<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("bad key `{key}`")));
    }
    let mut cur = doc;
    for p in &parts[..parts.len() - 1] {
        let obj = cur.as_object_mut().ok_or_else(|| CliError::config(format!("`{key}`: `{p}` is not inside an object")))?;
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = cur.as_object_mut().ok_or_else(|| CliError::config(format!("`{key}` does not name an object field")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn parse_assignment(raw: &str) -> CliResult<(String, String)> {
    match raw.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(CliError::config(format!("expected key=value, got `{raw}`"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<Value>,
}

/// `key=a..b` or `key=a..b:step`, both ends included. Integer ends and
/// step give integer values.
pub fn parse_sweep(raw: &str) -> CliResult<Sweep> {
    let (key, range) = parse_assignment(raw)?;
    let bad = || CliError::config(format!("sweep `{raw}` is not key=a..b[:step]"));
    let (span, step) = match range.split_once(':') {
        Some((s, t)) => (s, Some(t)),
        None => (range.as_str(), None),
    };
    let (a, b) = span.split_once("..").ok_or_else(bad)?;
    let ints = [Some(a), Some(b), step].iter().flatten().all(|s| s.parse::<i64>().is_ok());
    let values = if ints {
        let (a, b): (i64, i64) = (a.parse().unwrap(), b.parse().unwrap());
        let step: i64 = step.map_or(Ok(1), |s| s.parse()).map_err(|_| bad())?;
        if step <= 0 || b < a {
            return Err(bad());
        }
        (0..).map(|k| a + k * step).take_while(|v| *v <= b).map(Value::from).collect()
    } else {
        let a: f64 = a.parse().map_err(|_| bad())?;
        let b: f64 = b.parse().map_err(|_| bad())?;
        let step: f64 = step.ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if !(step > 0.0 && a.is_finite() && b >= a) {
            return Err(bad());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| Value::from(a + k as f64 * step)).collect()
    };
    Ok(Sweep { key, values })
}

/// Deserializes `doc`, rejecting unknown keys with the key named.
pub fn resolve<T: DeserializeOwned>(doc: Value) -> CliResult<T> {
    serde_json::from_value(doc).map_err(|e| CliError::config(format!("config: {e}")))
}

/// Resolves a path from the config against the config file's directory.
pub fn relative_to(base: Option<&Path>, p: &Path) -> PathBuf {
    let joined = match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    };
    joined.canonicalize().unwrap_or(joined)
}

/// Accepts either one value or a list.
pub fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match Either::deserialize(d)? {
        Either::One(v) => vec![v],
        Either::Many(v) => v,
    })
}

pub fn to_pretty<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| CliError { code: EXIT_NUMERICAL, msg: e.to_string() })
}
