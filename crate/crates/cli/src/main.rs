//! `tgrn`: build temporal gene regulatory networks from single-cell counts
//! and benchmark one-step-ahead forecasting models on them.

mod config;
mod errors;
mod stages;
mod workdir;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use tgrn_core::bench::Task;
use tgrn_core::models::Family;

use config::{Overrides, RunConfig};
use errors::{categorize, Category, ErrorLine};
use stages::Ctx;
use workdir::{Workdir, OUTPUT_ROOT_ENV};

#[derive(Parser, Debug)]
#[command(name = "tgrn", version, about = "Temporal GRN construction and forecasting benchmarks")]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, short = 'c', global = true)]
    config: Option<PathBuf>,

    /// Output directory [default: config `output_dir`, then $TGRN_OUTPUT_ROOT, then ./tgrn-out]
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,

    /// Worker threads; 1 gives bit-reproducible reports.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Validate the configuration and print it without reading any data.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,

    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(flatten)]
    overrides: OverrideArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct OverrideArgs {
    /// Bench seeds, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Model families, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<Family>>,
    /// Tasks (link, expression, centrality), comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    tasks: Option<Vec<Task>>,
    #[arg(long, global = true)]
    warmup_epochs: Option<usize>,
    #[arg(long, global = true)]
    finetune_epochs: Option<usize>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Root cell id for pseudotime.
    #[arg(long, global = true)]
    root: Option<String>,
    /// Neighbours in the kNN affinity graph.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    n_pcs: Option<usize>,
    #[arg(long, global = true)]
    min_cells: Option<usize>,
    #[arg(long, global = true)]
    target_bins: Option<usize>,
    /// Expression matrix (dense CSV or .mtx).
    #[arg(long, global = true)]
    expression: Option<PathBuf>,
    /// Regulator symbols, one per line.
    #[arg(long, global = true)]
    regulators: Option<PathBuf>,
    /// Per-snapshot regulatory edge list.
    #[arg(long, global = true)]
    grn_edges: Option<PathBuf>,
    /// Precomputed `cell_id,pseudotime` CSV.
    #[arg(long, global = true)]
    pseudotime: Option<PathBuf>,
}

impl OverrideArgs {
    fn into_overrides(self) -> Overrides {
        Overrides {
            seeds: self.seeds,
            models: self.models,
            tasks: self.tasks,
            warmup_epochs: self.warmup_epochs,
            finetune_epochs: self.finetune_epochs,
            hidden: self.hidden,
            lr: self.lr,
            root: self.root,
            k: self.k,
            n_pcs: self.n_pcs,
            min_cells: self.min_cells,
            target_bins: self.target_bins,
            expression: self.expression,
            regulators: self.regulators,
            grn_edges: self.grn_edges,
            pseudotime: self.pseudotime,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load the expression matrix into the output directory.
    Ingest,
    /// Diffusion pseudotime for every cell.
    Pseudotime,
    /// Equal-frequency pseudotime bins.
    Bin,
    /// Co-expression regulatory edges per bin.
    InferGrn,
    /// Import per-snapshot regulatory edges from an edge list.
    ImportGrn,
    /// Assemble the temporal graph bundle.
    BuildGraph,
    /// Snapshot count, sizes and edge recurrence of a bundle.
    Stats {
        /// Bundle directory [default: <out>/bundle]
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Live-update benchmark over models, tasks and seeds.
    RunBench {
        /// Bundle directory [default: <out>/bundle]
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Also write final model parameters.
        #[arg(long)]
        save_checkpoints: bool,
    },
    /// Merge report fragments and rewrite aggregates and trend files.
    Report {
        /// Report files [default: <out>/bench/report.json]
        inputs: Vec<PathBuf>,
        /// Destination directory [default: <out>/report]
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Write a synthetic dataset with a matching config.
    Synth {
        #[arg(long, default_value_t = 200)]
        genes: usize,
        #[arg(long, default_value_t = 8)]
        snapshots: usize,
        #[arg(long, default_value_t = 30)]
        cells_per_bin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the default configuration.
    Config,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Pseudotime => "pseudotime",
            Command::Bin => "bin",
            Command::InferGrn => "infer-grn",
            Command::ImportGrn => "import-grn",
            Command::BuildGraph => "build-graph",
            Command::Stats { .. } => "stats",
            Command::RunBench { .. } => "run-bench",
            Command::Report { .. } => "report",
            Command::Synth { .. } => "synth",
            Command::Config => "config",
        }
    }
}

/// Relative data paths in a config file are taken relative to the file.
fn anchor_paths(cfg: &mut RunConfig, base: &Path) {
    let d = &mut cfg.data;
    for p in [
        &mut d.expression,
        &mut d.regulators,
        &mut d.grn_edges,
        &mut d.embeddings,
        &mut d.pseudotime,
    ]
    .into_iter()
    .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if let Some(o) = &mut cfg.output_dir {
        if o.is_relative() {
            *o = base.join(&*o);
        }
    }
}

fn resolve_config(cli: &Cli, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let mut c = RunConfig::load(p).map_err(|e| errors::tagged(Category::Config, format!("{e:#}")))?;
            anchor_paths(&mut c, p.parent().unwrap_or_else(|| Path::new(".")));
            c
        }
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate().map_err(|e| errors::tagged(Category::Config, format!("{e:#}")))?;
    Ok(cfg)
}

fn output_root(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("tgrn-out"))
}

fn execute(cli: Cli, overrides: Overrides) -> Result<()> {
    let cfg = resolve_config(&cli, &overrides)?;
    let root = output_root(&cli, &cfg);
    if cli.dry_run {
        log::info!("configuration is valid; output root {}", root.display());
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let wd = Workdir::new(root.clone());
    let ctx = Ctx {
        cfg: &cfg,
        wd: &wd,
        force: cli.force,
    };
    let mut stdout = std::io::stdout();
    match &cli.command {
        Command::Ingest => stages::ingest(&ctx),
        Command::Pseudotime => stages::pseudotime(&ctx),
        Command::Bin => stages::bin(&ctx),
        Command::InferGrn => stages::infer_grn(&ctx),
        Command::ImportGrn => stages::import_grn(&ctx),
        Command::BuildGraph => stages::build_graph(&ctx),
        Command::Stats { bundle } => {
            let s = stages::stats(&ctx, bundle.as_deref())?;
            Ok(stdout.write_all(s.as_bytes())?)
        }
        Command::RunBench {
            bundle,
            save_checkpoints,
        } => {
            let s = stages::run_bench_stage(&ctx, bundle.as_deref(), *save_checkpoints)?;
            Ok(stdout.write_all(s.as_bytes())?)
        }
        Command::Report { inputs, dest } => {
            let s = stages::report(&ctx, inputs, dest.as_deref())?;
            Ok(stdout.write_all(s.as_bytes())?)
        }
        Command::Synth {
            genes,
            snapshots,
            cells_per_bin,
            seed,
        } => stages::synth(&root, *genes, *snapshots, *cells_per_bin, *seed)
            .with_context(|| format!("writing synthetic data to {}", root.display())),
        Command::Config => Ok(stdout.write_all(RunConfig::default().to_toml().as_bytes())?),
    }
}

fn main() -> ExitCode {
    let help = format!("Default configuration (TOML):\n\n{}", RunConfig::default().to_toml());
    let matches = Cli::command().after_long_help(help).get_matches();
    let mut cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let stage = cli.command.stage();
    let overrides = std::mem::take(&mut cli.overrides).into_overrides();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build();
    let result = match pool {
        Ok(pool) => pool.install(|| execute(cli, overrides)),
        Err(e) => Err(errors::tagged(Category::Config, format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = categorize(&e);
            let line = ErrorLine {
                stage,
                category,
                message: format!("{stage}: {e:#}"),
            };
            eprintln!("{}", serde_json::to_string(&line).expect("error line serializes"));
            ExitCode::from(category.exit_code() as u8)
        }
    }
}
