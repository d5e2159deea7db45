//! Output directory layout, stage stamps and decision logs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tgrn_core::digest::{sha256_hex, ChunkHasher};

pub const OUTPUT_ROOT_ENV: &str = "TGRN_OUTPUT_ROOT";

pub struct Workdir {
    root: PathBuf,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Stamp {
    stage: String,
    input_hash: String,
    outputs: Vec<String>,
}

impl Workdir {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn expression_dir(&self) -> PathBuf {
        self.path("expression")
    }

    pub fn pseudotime_csv(&self) -> PathBuf {
        self.path("pseudotime.csv")
    }

    pub fn bins_csv(&self) -> PathBuf {
        self.path("bins.csv")
    }

    pub fn edges_tsv(&self) -> PathBuf {
        self.path("grn_edges.tsv")
    }

    pub fn bundle_dir(&self) -> PathBuf {
        self.path("bundle")
    }

    pub fn bench_dir(&self) -> PathBuf {
        self.path("bench")
    }

    fn stamp_path(&self, stage: &str) -> PathBuf {
        self.root.join(".stamps").join(format!("{stage}.json"))
    }

    /// True when the stage last ran on the same inputs and every output it
    /// listed still exists.
    pub fn is_fresh(&self, stage: &str, input_hash: &str) -> bool {
        let Ok(text) = fs::read_to_string(self.stamp_path(stage)) else {
            return false;
        };
        let Ok(stamp) = serde_json::from_str::<Stamp>(&text) else {
            return false;
        };
        stamp.stage == stage
            && stamp.input_hash == input_hash
            && stamp.outputs.iter().all(|o| self.root.join(o).exists())
    }

    pub fn write_stamp(&self, stage: &str, input_hash: &str, outputs: &[&str]) -> Result<()> {
        let p = self.stamp_path(stage);
        fs::create_dir_all(p.parent().expect("stamp has a parent"))?;
        let stamp = Stamp {
            stage: stage.into(),
            input_hash: input_hash.into(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        };
        fs::write(&p, serde_json::to_string_pretty(&stamp)? + "\n")?;
        Ok(())
    }

    pub fn write_log(&self, log: &DecisionLog) -> Result<()> {
        let dir = self.root.join("logs");
        fs::create_dir_all(&dir)?;
        let p = dir.join(format!("{}.json", log.stage));
        fs::write(&p, serde_json::to_string_pretty(&log.entries)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }
}

/// Key/value record of choices a stage made, also echoed to the log.
pub struct DecisionLog {
    stage: String,
    entries: Map<String, Value>,
}

impl DecisionLog {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            entries: Map::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("serializable log value");
        log::info!("{}: {key} = {v}", self.stage);
        self.entries.insert(key.to_string(), v);
    }
}

/// Digest of a stage's parameters and the bytes of its input files.
/// Directories are hashed file by file in name order.
pub fn input_hash(stage: &str, params: &Value, inputs: &[&Path]) -> Result<String> {
    let mut h = ChunkHasher::new();
    h.chunk(stage.as_bytes()).chunk(params.to_string().as_bytes());
    for p in inputs {
        h.chunk(p.display().to_string().as_bytes());
        hash_path(&mut h, p)?;
    }
    Ok(h.finish())
}

fn hash_path(h: &mut ChunkHasher, p: &Path) -> Result<()> {
    if p.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(p)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            h.chunk(e.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
            hash_path(h, &e)?;
        }
    } else {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        h.chunk(sha256_hex(&bytes).as_bytes());
    }
    Ok(())
}
