//! Per-invocation state: resolved config, output directory and the list of
//! files that go into the manifest.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kpz::io::{write_array, FieldHeader};
use kpz::rng::StreamKey;
use serde::Serialize;
use toml::{Table, Value};

/// A named invariant check that did not hold.
#[derive(Debug)]
pub struct ChecksFailed(pub Vec<String>);

impl std::fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "failed checks: {}", self.0.join(", "))
    }
}

impl std::error::Error for ChecksFailed {}

pub struct Run {
    /// Config after overrides, with the resolved seed and replica counts
    /// written back so the snapshot replays exactly.
    pub table: Table,
    pub seed: u64,
    pub replicas_flag: Option<usize>,
    pub replicas: Option<usize>,
    pub out: PathBuf,
    pub outputs: Vec<PathBuf>,
    pub failed: Vec<String>,
}

impl Run {
    pub fn new(mut table: Table, seed_flag: Option<u64>, replicas_flag: Option<usize>, out: PathBuf) -> Result<Self> {
        let seed = match (seed_flag, table.get("seed")) {
            (Some(s), _) => s,
            (None, Some(Value::Integer(s))) if *s >= 0 => *s as u64,
            (None, Some(v)) => anyhow::bail!(crate::config::SchemaError::Invalid {
                key: "seed".into(),
                msg: format!("expected a nonnegative integer, got {v}"),
            }),
            (None, None) => 0,
        };
        table.insert("seed".into(), Value::Integer(seed as i64));
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self { table, seed, replicas_flag, replicas: None, out, outputs: Vec::new(), failed: Vec::new() })
    }

    pub fn key(&self, purpose: &str) -> StreamKey {
        StreamKey::new(self.seed, purpose)
    }

    /// `--replicas`, else `section.replicas`, else `default`; recorded in the snapshot.
    pub fn replicas(&mut self, section: &str, default: usize) -> Result<usize> {
        let entry = self
            .table
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .context("section is not a table")?;
        let n = match (self.replicas_flag, entry.get("replicas")) {
            (Some(n), _) => n,
            (None, Some(Value::Integer(n))) if *n > 0 => *n as usize,
            (None, Some(v)) => anyhow::bail!(crate::config::SchemaError::Invalid {
                key: format!("{section}.replicas"),
                msg: format!("expected a positive integer, got {v}"),
            }),
            (None, None) => default,
        };
        entry.insert("replicas".into(), Value::Integer(n as i64));
        self.replicas = Some(n);
        Ok(n)
    }

    /// Errors if `--replicas` was given to a subcommand that has no replicas.
    pub fn no_replicas(&self, subcommand: &str) -> Result<()> {
        if self.replicas_flag.is_some() {
            anyhow::bail!(crate::config::SchemaError::Invalid {
                key: "replicas".into(),
                msg: format!("{subcommand} does not use replicas"),
            });
        }
        Ok(())
    }

    fn record(&mut self, name: &str) -> PathBuf {
        self.outputs.push(PathBuf::from(name));
        self.out.join(name)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.record(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let path = self.record(name);
        let mut w =
            csv::Writer::from_writer(File::create(&path).with_context(|| format!("writing {}", path.display()))?);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_array(&mut self, name: &str, header: &FieldHeader, data: &[f64]) -> Result<()> {
        let path = self.record(name);
        write_array(&path, header, data)?;
        Ok(())
    }

    pub fn check(&mut self, name: &str, ok: bool) {
        if !ok {
            self.failed.push(name.to_string());
        }
    }

    pub fn dir(&self) -> &Path {
        &self.out
    }
}

pub fn cell(x: impl ToString) -> String {
    x.to_string()
}
