//! Run configuration: one TOML file, every field optional.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tgrn_core::bench::{BenchConfig, Task};
use tgrn_core::grn::GrnParams;
use tgrn_core::models::Family;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExprFormat {
    Csv,
    Mtx,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    /// Genes x cells counts: dense CSV, or a MatrixMarket file with
    /// `genes.tsv` and `cells.tsv` beside it.
    pub expression: Option<PathBuf>,
    pub expression_format: Option<ExprFormat>,
    /// One regulator symbol per line.
    pub regulators: Option<PathBuf>,
    /// Per-snapshot edge list (`snapshot_index, source, target, confidence`).
    pub grn_edges: Option<PathBuf>,
    /// Per-gene embedding CSV appended to node features.
    pub embeddings: Option<PathBuf>,
    /// Precomputed `cell_id,pseudotime` CSV; skips the pseudotime stage.
    pub pseudotime: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub n_pcs: usize,
    pub k: usize,
    pub n_components: usize,
    /// Root cell id; chosen automatically when absent.
    pub root: Option<String>,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        let p = tgrn_core::trajectory::TrajectoryParams::default();
        Self {
            n_pcs: p.n_pcs,
            k: p.k,
            n_components: p.n_components,
            root: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinningConfig {
    pub min_cells: usize,
    pub target_bins: usize,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            min_cells: 100,
            target_bins: 32,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Base seed for pipeline stages; bench seeds are listed separately.
    pub seed: u64,
    /// Output directory; falls back to `$TGRN_OUTPUT_ROOT`, then `tgrn-out`.
    pub output_dir: Option<PathBuf>,
    pub data: DataPaths,
    pub trajectory: TrajectoryConfig,
    pub binning: BinningConfig,
    pub grn: GrnParams,
    pub bench: BenchConfig,
}

/// Command-line values that replace config file entries when given.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub models: Option<Vec<Family>>,
    pub tasks: Option<Vec<Task>>,
    pub warmup_epochs: Option<usize>,
    pub finetune_epochs: Option<usize>,
    pub hidden: Option<usize>,
    pub lr: Option<f64>,
    pub root: Option<String>,
    pub k: Option<usize>,
    pub n_pcs: Option<usize>,
    pub min_cells: Option<usize>,
    pub target_bins: Option<usize>,
    pub expression: Option<PathBuf>,
    pub regulators: Option<PathBuf>,
    pub grn_edges: Option<PathBuf>,
    pub pseudotime: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    pub fn apply(&mut self, o: &Overrides) {
        let b = &mut self.bench;
        if let Some(v) = &o.seeds {
            b.seeds = v.clone();
        }
        if let Some(v) = &o.models {
            b.models = v.clone();
        }
        if let Some(v) = &o.tasks {
            b.tasks = v.clone();
        }
        if let Some(v) = o.warmup_epochs {
            b.warmup_epochs = v;
        }
        if let Some(v) = o.finetune_epochs {
            b.finetune_epochs = v;
        }
        if let Some(v) = o.hidden {
            b.model.hidden = v;
        }
        if let Some(v) = o.lr {
            b.adam.lr = v;
        }
        if let Some(v) = &o.root {
            self.trajectory.root = Some(v.clone());
        }
        if let Some(v) = o.k {
            self.trajectory.k = v;
        }
        if let Some(v) = o.n_pcs {
            self.trajectory.n_pcs = v;
        }
        if let Some(v) = o.min_cells {
            self.binning.min_cells = v;
        }
        if let Some(v) = o.target_bins {
            self.binning.target_bins = v;
        }
        let d = &mut self.data;
        for (slot, v) in [
            (&mut d.expression, &o.expression),
            (&mut d.regulators, &o.regulators),
            (&mut d.grn_edges, &o.grn_edges),
            (&mut d.pseudotime, &o.pseudotime),
        ] {
            if v.is_some() {
                *slot = v.clone();
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectory.k == 0 || self.trajectory.n_pcs == 0 || self.trajectory.n_components < 2 {
            bail!("trajectory needs k >= 1, n_pcs >= 1 and n_components >= 2");
        }
        if self.binning.min_cells == 0 || self.binning.target_bins < 2 {
            bail!("binning needs min_cells >= 1 and target_bins >= 2");
        }
        self.grn.validate()?;
        self.bench.validate()?;
        Ok(())
    }

    pub fn expression_format(&self, path: &Path) -> ExprFormat {
        self.data.expression_format.unwrap_or_else(|| {
            match path.extension().and_then(|e| e.to_str()) {
                Some("mtx") => ExprFormat::Mtx,
                _ => ExprFormat::Csv,
            }
        })
    }
}
