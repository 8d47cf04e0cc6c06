//! On-disk formats: binary field arrays with a JSON header, and the
//! experiment manifest with output digests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{KpzError, Result};
use crate::field::SpaceTimeField;

pub const FIELD_MAGIC: &[u8; 4] = b"KPZF";
pub const FORMAT_VERSION: u32 = 1;

/// Header of a binary array file. `shape` is outermost first; data are
/// little-endian `f64` in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub version: u32,
    /// What the array holds, e.g. `"noise"` or `"height"`.
    pub content: String,
    pub shape: Vec<usize>,
    pub dt: f64,
    pub dx: f64,
    pub seed: u64,
    /// Free-form metadata (noise kind, time of a snapshot, ...).
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl FieldHeader {
    pub fn for_field(f: &SpaceTimeField, content: &str, seed: u64, meta: serde_json::Value) -> Self {
        let mut shape = vec![f.nt];
        shape.extend(std::iter::repeat_n(f.l, f.d));
        Self { version: FORMAT_VERSION, content: content.into(), shape, dt: f.dt, dx: f.dx, seed, meta }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layout: magic, `u32` version, `u32` header length, JSON header, data.
pub fn write_array(path: &Path, header: &FieldHeader, data: &[f64]) -> Result<()> {
    if header.len() != data.len() {
        return Err(KpzError::Argument(format!("shape {:?} does not match {} values", header.shape, data.len())));
    }
    let json = serde_json::to_vec(header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    if &word != FIELD_MAGIC {
        return Err(KpzError::Argument(format!("{} is not a field file", path.display())));
    }
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(KpzError::Argument(format!("unsupported field format version {version}")));
    }
    r.read_exact(&mut word)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut json)?;
    let header: FieldHeader = serde_json::from_slice(&json)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * header.len() {
        return Err(KpzError::Argument(format!(
            "field file holds {} bytes of data, header promises {}",
            bytes.len(),
            8 * header.len()
        )));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((header, data))
}

pub fn write_field(path: &Path, f: &SpaceTimeField, content: &str, seed: u64, meta: serde_json::Value) -> Result<()> {
    write_array(path, &FieldHeader::for_field(f, content, seed, meta), &f.data)
}

/// Hex SHA-256 of a file.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    let mut r = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn bytes_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the manifest directory.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to replay a run and check its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub version: u32,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub replicas: Option<usize>,
    pub code_version: String,
    pub outputs: Vec<OutputRecord>,
    pub wall_time_s: f64,
    /// Digest of the config snapshot and output digests, stamped on outputs.
    pub hash: String,
}

impl ExperimentManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, seed: u64, replicas: Option<usize>) -> Self {
        Self {
            version: FORMAT_VERSION,
            subcommand: subcommand.into(),
            config,
            seed,
            replicas,
            code_version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
            hash: String::new(),
        }
    }

    /// Records an output file located under `dir`.
    pub fn add_output(&mut self, dir: &Path, rel: &Path) -> Result<()> {
        if self.outputs.iter().any(|o| o.path == rel) {
            return Err(KpzError::Argument(format!("{} is already in the manifest", rel.display())));
        }
        let full = dir.join(rel);
        let bytes = std::fs::metadata(&full)?.len();
        self.outputs.push(OutputRecord { path: rel.to_path_buf(), sha256: file_digest(&full)?, bytes });
        Ok(())
    }

    /// Hash over everything except the wall time.
    pub fn compute_hash(&self) -> String {
        let key = serde_json::json!({
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "replicas": self.replicas,
            "code_version": self.code_version,
            "outputs": self.outputs,
        });
        bytes_digest(key.to_string().as_bytes())
    }

    pub fn finish(&mut self, wall_time_s: f64) {
        self.wall_time_s = wall_time_s;
        self.hash = self.compute_hash();
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    /// Recomputes every output digest; returns the paths that differ.
    pub fn verify(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            if file_digest(&dir.join(&o.path))? != o.sha256 {
                bad.push(o.path.clone());
            }
        }
        Ok(bad)
    }
}
