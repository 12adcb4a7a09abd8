//! On-disk run history.
//!
//! ```text
//! <dir>/config.json            canonical config (pretty JSON)
//! <dir>/agents.json            resolved agent ids
//! <dir>/snapshots/t{k}.kern    kernels at step k
//! <dir>/interactions.jsonl     one InteractionRecord per line
//! <dir>/adjacency/t{k}.csv     EdgeSet used at step k (k >= 1)
//! ```
//!
//! A `.kern` file is the 5-byte magic `PKRN1`, then little-endian `u32`
//! `n`, `m`, `p`, then `n * m * p` little-endian `f64` values, agent-major
//! and row-major within each agent's `m × p` kernel.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::agents::AgentId;
use crate::error::{Error, Result};
use crate::kernel::SurrogateKernel;
use crate::matrix::RowMatrix;
use crate::network::EdgeSet;

use super::{ExperimentConfig, HistorySink, InteractionRecord, RunHistory, Snapshot, FORMAT_VERSION};

pub const KERNEL_MAGIC: &[u8; 5] = b"PKRN1";
const KERNEL_MAGIC_STEM: &[u8; 4] = b"PKRN";

fn snapshot_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("snapshots").join(format!("t{t}.kern"))
}

fn adjacency_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("adjacency").join(format!("t{t}.csv"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Encodes kernels of equal shape into the `.kern` layout.
pub fn encode_kernels(kernels: &[SurrogateKernel]) -> Result<Vec<u8>> {
    let (m, p) = kernels.first().map_or((0, 0), SurrogateKernel::shape);
    if kernels.iter().any(|k| k.shape() != (m, p)) {
        return Err(Error::invalid_state("snapshot kernels differ in shape"));
    }
    let to_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::invalid_state("kernel dimension exceeds u32"));
    let mut out = Vec::with_capacity(17 + kernels.len() * m * p * 8);
    out.extend_from_slice(KERNEL_MAGIC);
    out.extend_from_slice(&to_u32(kernels.len())?.to_le_bytes());
    out.extend_from_slice(&to_u32(m)?.to_le_bytes());
    out.extend_from_slice(&to_u32(p)?.to_le_bytes());
    for k in kernels {
        for v in k.matrix.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_kernel_file(path: &Path, kernels: &[SurrogateKernel]) -> Result<()> {
    write_file(path, &encode_kernels(kernels)?)
}

/// Reads a `.kern` file into `(n, m, p, values)`.
pub fn read_kernel_file(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let bytes = read_file(path)?;
    if bytes.len() < 17 {
        return Err(Error::decode(path, format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    if &bytes[..4] != KERNEL_MAGIC_STEM {
        return Err(Error::decode(path, "missing PKRN magic"));
    }
    if &bytes[..5] != KERNEL_MAGIC {
        return Err(Error::VersionMismatch {
            path: path.to_owned(),
            found: String::from_utf8_lossy(&bytes[..5]).into_owned(),
            expected: String::from_utf8_lossy(KERNEL_MAGIC).into_owned(),
        });
    }
    let word = |k: usize| u32::from_le_bytes(bytes[5 + 4 * k..9 + 4 * k].try_into().expect("4 bytes")) as usize;
    let (n, m, p) = (word(0), word(1), word(2));
    let count = n
        .checked_mul(m)
        .and_then(|x| x.checked_mul(p))
        .ok_or_else(|| Error::decode(path, "header dimensions overflow"))?;
    let body = &bytes[17..];
    if body.len() != count * 8 {
        return Err(Error::decode(
            path,
            format!("expected {} payload bytes for n={n} m={m} p={p}, found {}", count * 8, body.len()),
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((n, m, p, values))
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Writes a run into `dir` step by step. Files from an earlier run in the
/// same directory are removed first so reruns produce identical trees.
pub struct DirSink {
    dir: PathBuf,
    interactions: Option<BufWriter<File>>,
}

impl DirSink {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for sub in ["snapshots", "adjacency"] {
            let path = dir.join(sub);
            if path.exists() {
                fs::remove_dir_all(&path).map_err(|e| Error::io(&path, e))?;
            }
            fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("interactions.jsonl");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(DirSink {
            dir: dir.to_owned(),
            interactions: Some(BufWriter::new(file)),
        })
    }

    /// Appends to an existing partial run without clearing it.
    pub fn append(dir: &Path) -> Result<Self> {
        let path = dir.join("interactions.jsonl");
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(DirSink {
            dir: dir.to_owned(),
            interactions: Some(BufWriter::new(file)),
        })
    }

    fn flush(&mut self) -> Result<()> {
        let path = self.dir.join("interactions.jsonl");
        if let Some(w) = self.interactions.as_mut() {
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

impl HistorySink for DirSink {
    fn on_start(&mut self, config: &ExperimentConfig, agents: &[AgentId]) -> Result<()> {
        write_file(&self.dir.join("config.json"), &to_json(config))?;
        write_file(&self.dir.join("agents.json"), &to_json(&agents))
    }

    fn on_snapshot(&mut self, snapshot: &Snapshot) -> Result<()> {
        // interactions of a step are flushed before its snapshot so a snapshot never outruns its records
        self.flush()?;
        write_kernel_file(&snapshot_path(&self.dir, snapshot.t), &snapshot.kernels)
    }

    fn on_step(&mut self, t: usize, edges: &EdgeSet, records: &[InteractionRecord]) -> Result<()> {
        write_file(&adjacency_path(&self.dir, t), edges.to_csv().as_bytes())?;
        let path = self.dir.join("interactions.jsonl");
        let w = self.interactions.as_mut().expect("open interactions file");
        for r in records {
            serde_json::to_writer(&mut *w, r).map_err(|e| Error::io(&path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

impl Drop for DirSink {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// Writes a complete history into `dir`.
pub fn save_history(history: &RunHistory, dir: &Path) -> Result<()> {
    let mut sink = DirSink::create(dir)?;
    sink.on_start(&history.config, &history.agents)?;
    for (k, snapshot) in history.snapshots.iter().enumerate() {
        if k > 0 {
            let t = snapshot.t;
            let edges = history
                .adjacency
                .get(k - 1)
                .ok_or_else(|| Error::invalid_state(format!("missing adjacency for step {t}")))?;
            let records: Vec<InteractionRecord> = history.interactions_at(t).cloned().collect();
            sink.on_step(t, edges, &records)?;
        }
        sink.on_snapshot(snapshot)?;
    }
    sink.flush()
}

/// Reads a history from `dir`. Partial runs load up to their last snapshot.
pub fn load_history(dir: &Path) -> Result<RunHistory> {
    let config_path = dir.join("config.json");
    let raw: serde_json::Value = serde_json::from_slice(&read_file(&config_path)?)
        .map_err(|e| Error::decode(&config_path, e.to_string()))?;
    let version = raw.get("format_version").and_then(serde_json::Value::as_u64);
    if version != Some(u64::from(FORMAT_VERSION)) {
        return Err(Error::VersionMismatch {
            path: config_path,
            found: version.map_or_else(|| "none".to_owned(), |v| v.to_string()),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let config: ExperimentConfig =
        serde_json::from_value(raw).map_err(|e| Error::decode(&config_path, e.to_string()))?;

    let agents_path = dir.join("agents.json");
    let agents: Vec<AgentId> = serde_json::from_slice(&read_file(&agents_path)?)
        .map_err(|e| Error::decode(&agents_path, e.to_string()))?;

    let mut snapshots = Vec::new();
    for t in 0..=config.steps {
        let path = snapshot_path(dir, t);
        if !path.exists() {
            break;
        }
        let (n, m, p, values) = read_kernel_file(&path)?;
        if n != agents.len() {
            return Err(Error::decode(&path, format!("holds {n} kernels for {} agents", agents.len())));
        }
        let kernels = values
            .chunks_exact((m * p).max(1))
            .take(n)
            .zip(&agents)
            .map(|(chunk, id)| {
                let data = if m * p == 0 { Vec::new() } else { chunk.to_vec() };
                SurrogateKernel::new(id.clone(), t, RowMatrix::from_vec(m, p, data))
                    .map_err(|e| Error::decode(&path, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        snapshots.push(Snapshot { t, kernels });
    }
    if snapshots.is_empty() {
        return Err(Error::decode(snapshot_path(dir, 0), "no snapshots found"));
    }
    let last = snapshots.len() - 1;

    let mut adjacency = Vec::with_capacity(last);
    for t in 1..=last {
        let path = adjacency_path(dir, t);
        let text = String::from_utf8(read_file(&path)?).map_err(|e| Error::decode(&path, e.to_string()))?;
        adjacency.push(EdgeSet::from_csv(&text).map_err(|e| Error::decode(&path, e.to_string()))?);
    }

    let path = dir.join("interactions.jsonl");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut interactions = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.is_empty() {
            continue;
        }
        let record: InteractionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::decode(&path, format!("line {}: {e}", lineno + 1)))?;
        if record.t <= last {
            interactions.push(record);
        }
    }

    Ok(RunHistory {
        config,
        agents,
        snapshots,
        interactions,
        adjacency,
    })
}
