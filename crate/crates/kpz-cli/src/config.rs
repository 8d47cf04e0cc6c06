//! Run configuration: one TOML file plus `--set key=value` overrides.
//!
//! Top-level keys describe the lattice model; per-subcommand tables hold
//! experiment parameters. Unknown keys are rejected so typos in a sweep do
//! not silently fall back to defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use kpz::lattice_spde::{Equation, HeatStep, SimConfig};
use kpz::noise::NoiseKind;
use toml::{Table, Value};

pub const REQUIRED: [&str; 7] = ["d", "L", "dt", "T", "nu0", "D0", "lambda"];
const OPTIONAL: [&str; 7] = ["dx", "v0", "seed", "noise", "kick_c", "equation", "heat"];
pub const SECTIONS: [&str; 5] = ["simulate", "polymer", "scaling", "powercount", "report"];

/// Configuration error with the offending keys, reported as a schema error.
#[derive(Debug)]
pub enum SchemaError {
    Missing(Vec<String>),
    Unknown(Vec<String>),
    Invalid { key: String, msg: String },
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchemaError::Missing(k) => write!(f, "missing required keys: {}", k.join(", ")),
            SchemaError::Unknown(k) => write!(f, "unknown keys: {}", k.join(", ")),
            SchemaError::Invalid { key, msg } => write!(f, "key {key}: {msg}"),
        }
    }
}

impl std::error::Error for SchemaError {}

impl SchemaError {
    pub fn keys(&self) -> Vec<String> {
        match self {
            SchemaError::Missing(k) | SchemaError::Unknown(k) => k.clone(),
            SchemaError::Invalid { key, .. } => vec![key.clone()],
        }
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> SchemaError {
    SchemaError::Invalid { key: key.into(), msg: msg.into() }
}

/// Loads a TOML config, or the config snapshot of a manifest (`.json`).
pub fn load(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: kpz::io::ExperimentManifest = serde_json::from_str(&text).context("parsing manifest")?;
        return json_to_table(&m.config);
    }
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn json_to_table(v: &serde_json::Value) -> Result<Table> {
    serde_json::from_value(v.clone()).context("config snapshot is not a table")
}

/// `a.b=value`; the value is parsed as TOML, falling back to a bare string.
pub fn apply_override(table: &mut Table, arg: &str) -> Result<()> {
    let Some((key, raw)) = arg.split_once('=') else {
        bail!("override {arg:?} is not of the form key=value");
    };
    let key = key.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .with_context(|| format!("{p} is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Rejects unknown top-level keys and non-table sections.
pub fn check_keys(table: &Table) -> Result<(), SchemaError> {
    let unknown: Vec<String> = table
        .iter()
        .filter(|(k, v)| {
            let k = k.as_str();
            if SECTIONS.contains(&k) {
                !v.is_table()
            } else {
                !REQUIRED.contains(&k) && !OPTIONAL.contains(&k)
            }
        })
        .map(|(k, _)| k.clone())
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(SchemaError::Unknown(unknown))
    }
}

fn num(table: &Table, key: &str) -> Result<Option<f64>, SchemaError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Float(x)) => Ok(Some(*x)),
        Some(Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(v) => Err(invalid(key, format!("expected a number, got {v}"))),
    }
}

fn uint(table: &Table, key: &str) -> Result<Option<u64>, SchemaError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
        Some(v) => Err(invalid(key, format!("expected a nonnegative integer, got {v}"))),
    }
}

fn string<'a>(table: &'a Table, key: &str) -> Result<Option<&'a str>, SchemaError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(v) => Err(invalid(key, format!("expected a string, got {v}"))),
    }
}

/// Builds the model configuration; every missing required key is listed.
pub fn sim_config(table: &Table) -> Result<SimConfig, SchemaError> {
    check_keys(table)?;
    let missing: Vec<String> = REQUIRED.iter().filter(|k| !table.contains_key(**k)).map(|k| k.to_string()).collect();
    if !missing.is_empty() {
        return Err(SchemaError::Missing(missing));
    }
    let req = |k: &str| num(table, k).map(|v| v.expect("checked above"));
    let d = uint(table, "d")?.expect("checked") as usize;
    let l = uint(table, "L")?.expect("checked") as usize;
    let mut cfg = SimConfig::new(d, l, req("dt")?, req("T")?, req("nu0")?, req("D0")?, req("lambda")?);
    if let Some(dx) = num(table, "dx")? {
        cfg.dx = dx;
    }
    if let Some(v0) = num(table, "v0")? {
        cfg.v0 = v0;
    }
    if let Some(seed) = uint(table, "seed")? {
        cfg.seed = seed;
    }
    let kick_c = num(table, "kick_c")?.unwrap_or(0.25);
    cfg.noise = match string(table, "noise")? {
        None | Some("mollified") => NoiseKind::Mollified,
        Some("kick") => NoiseKind::Kick { c: kick_c },
        Some("zero") => NoiseKind::Zero,
        Some(other) => return Err(invalid("noise", format!("{other:?} is not one of mollified, kick, zero"))),
    };
    cfg.equation = match string(table, "equation")? {
        None | Some("kpz") => Equation::Kpz,
        Some("ew") => Equation::Ew,
        Some("she") => Equation::She,
        Some(other) => return Err(invalid("equation", format!("{other:?} is not one of kpz, ew, she"))),
    };
    cfg.heat = match string(table, "heat")? {
        None | Some("euler") => HeatStep::Euler,
        Some("exact") => HeatStep::Exact,
        Some(other) => return Err(invalid("heat", format!("{other:?} is not one of euler, exact"))),
    };
    cfg.validate().map_err(|e| invalid("config", e.to_string()))?;
    Ok(cfg)
}

/// Typed access to one subcommand table, tracking which keys were read so
/// leftovers can be reported as unknown.
pub struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    seen: std::cell::RefCell<Vec<String>>,
}

impl<'a> Section<'a> {
    pub fn new(root: &'a Table, name: &'static str) -> Self {
        Self { name, table: root.get(name).and_then(Value::as_table), seen: Default::default() }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.seen.borrow_mut().push(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn full(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, SchemaError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Float(x)) => Ok(*x),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(invalid(&self.full(key), format!("expected a number, got {v}"))),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, SchemaError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(invalid(&self.full(key), format!("expected a nonnegative integer, got {v}"))),
        }
    }

    pub fn string(&self, key: &str, default: &str) -> Result<String, SchemaError> {
        match self.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(v) => Err(invalid(&self.full(key), format!("expected a string, got {v}"))),
        }
    }

    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, SchemaError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(invalid(&self.full(key), "expected a list of numbers")),
                })
                .collect(),
            Some(_) => Err(invalid(&self.full(key), "expected a list of numbers")),
        }
    }

    pub fn usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, SchemaError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    _ => Err(invalid(&self.full(key), "expected a list of nonnegative integers")),
                })
                .collect(),
            Some(_) => Err(invalid(&self.full(key), "expected a list of nonnegative integers")),
        }
    }

    /// Call after all reads: keys present in the table but never asked for.
    pub fn finish(self) -> Result<(), SchemaError> {
        let Some(t) = self.table else { return Ok(()) };
        let seen = self.seen.into_inner();
        let unknown: Vec<String> =
            t.keys().filter(|k| !seen.contains(k)).map(|k| format!("{}.{k}", self.name)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(SchemaError::Unknown(unknown))
        }
    }
}
