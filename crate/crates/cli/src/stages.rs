//! Pipeline stages. Each reads its inputs from the config or from earlier
//! stages' artifacts, writes its outputs and a decision log, and is skipped
//! when a stamp shows it already ran on identical inputs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;
use tgrn_core::bench::{
    aggregate_report, recurrence_csv, run_bench, write_report_files, EvalReport, Task,
};
use tgrn_core::grn::{assemble_temporal_graph, infer_all_bins};
use tgrn_core::ingest::{
    format_grn_edgelists, import_embeddings, import_grn_edgelists, load_expression, load_regulators,
    write_matrix_market, ExpressionFormat, ExpressionMatrix,
};
use tgrn_core::models::Family;
use tgrn_core::seed::derive_seed;
use tgrn_core::synthetic::smoke_dataset;
use tgrn_core::tgraph::{load_bundle, recurrence_stats, save_bundle, TemporalGraph};
use tgrn_core::trajectory::{bin_cells, infer_pseudotime, TrajectoryParams};

use crate::config::{ExprFormat, RunConfig};
use crate::errors::{tagged, Category};
use crate::workdir::{input_hash, DecisionLog, Workdir};

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub wd: &'a Workdir,
    pub force: bool,
}

impl Ctx<'_> {
    /// Runs `body` unless the stamp for `stage` matches `hash`.
    fn stamped(
        &self,
        stage: &str,
        params: serde_json::Value,
        inputs: &[&Path],
        outputs: &[&str],
        body: impl FnOnce(&mut DecisionLog) -> Result<()>,
    ) -> Result<()> {
        let hash = input_hash(stage, &params, inputs)?;
        if !self.force && self.wd.is_fresh(stage, &hash) {
            log::info!("{stage}: inputs unchanged, nothing to do");
            return Ok(());
        }
        fs::create_dir_all(self.wd.root())?;
        let mut log = DecisionLog::new(stage);
        body(&mut log)?;
        self.wd.write_log(&log)?;
        self.wd.write_stamp(stage, &hash, outputs)
    }
}

fn required<'p>(p: &'p Option<PathBuf>, key: &str) -> Result<&'p PathBuf> {
    p.as_ref()
        .ok_or_else(|| tagged(Category::Config, format!("`{key}` is not set in the config or on the command line")))
}

fn load_ingested(wd: &Workdir) -> Result<ExpressionMatrix> {
    let mtx = wd.expression_dir().join("matrix.mtx");
    if !mtx.exists() {
        return Err(tagged(
            Category::Io,
            format!("{} is missing; run `tgrn ingest` first", mtx.display()),
        ));
    }
    Ok(load_expression(&mtx, ExpressionFormat::MatrixMarket)?)
}

fn read_pseudotime(path: &Path, cells: &[String]) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut by_cell: HashMap<String, f64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (Some(id), Some(v)) = (rec.get(0), rec.get(1)) else {
            return Err(tagged(Category::InvalidInput, format!("{}: expected cell_id,pseudotime rows", path.display())));
        };
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| tagged(Category::InvalidInput, format!("{}: bad pseudotime {v:?}", path.display())))?;
        by_cell.insert(id.trim().to_string(), v);
    }
    cells
        .iter()
        .map(|c| {
            by_cell
                .get(c)
                .copied()
                .ok_or_else(|| tagged(Category::InvalidInput, format!("no pseudotime for cell {c}")))
        })
        .collect()
}

fn read_bins(path: &Path, cells: &[String]) -> Result<Vec<usize>> {
    if !path.exists() {
        return Err(tagged(Category::Io, format!("{} is missing; run `tgrn bin` first", path.display())));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut by_cell: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let b = rec
            .get(2)
            .and_then(|b| b.trim().parse().ok())
            .ok_or_else(|| tagged(Category::InvalidInput, format!("{}: expected cell_id,pseudotime,bin", path.display())))?;
        by_cell.insert(rec.get(0).unwrap_or("").trim().to_string(), b);
    }
    cells
        .iter()
        .map(|c| {
            by_cell
                .get(c)
                .copied()
                .ok_or_else(|| tagged(Category::InvalidInput, format!("no bin for cell {c}")))
        })
        .collect()
}

pub fn ingest(ctx: &Ctx) -> Result<()> {
    let src = required(&ctx.cfg.data.expression, "data.expression")?;
    let format = ctx.cfg.expression_format(src);
    let mut inputs = vec![src.as_path()];
    let (genes, cells);
    if format == ExprFormat::Mtx {
        let dir = src.parent().unwrap_or_else(|| Path::new("."));
        genes = dir.join("genes.tsv");
        cells = dir.join("cells.tsv");
        inputs.push(&genes);
        inputs.push(&cells);
    }
    ctx.stamped(
        "ingest",
        json!({ "format": format }),
        &inputs,
        &["expression/matrix.mtx", "expression/genes.tsv", "expression/cells.tsv"],
        |log| {
            let f = match format {
                ExprFormat::Csv => ExpressionFormat::DenseCsv,
                ExprFormat::Mtx => ExpressionFormat::MatrixMarket,
            };
            let expr = load_expression(src, f)?;
            log.note("source", src.display().to_string());
            log.note("genes", expr.n_genes());
            log.note("cells", expr.n_cells());
            log.note("nonzeros", expr.values().nnz());
            write_matrix_market(&expr, &ctx.wd.expression_dir())?;
            Ok(())
        },
    )
}

pub fn pseudotime(ctx: &Ctx) -> Result<()> {
    if let Some(p) = &ctx.cfg.data.pseudotime {
        log::info!("pseudotime: using supplied values from {}; nothing to compute", p.display());
        return Ok(());
    }
    let expr_dir = ctx.wd.expression_dir();
    let tc = &ctx.cfg.trajectory;
    ctx.stamped(
        "pseudotime",
        json!({ "trajectory": tc, "seed": ctx.cfg.seed }),
        &[&expr_dir],
        &["pseudotime.csv"],
        |log| {
            let expr = load_ingested(ctx.wd)?;
            let root = match &tc.root {
                Some(id) => Some(
                    expr.cells()
                        .iter()
                        .position(|c| c == id)
                        .ok_or_else(|| tagged(Category::InvalidInput, format!("root cell {id:?} not found")))?,
                ),
                None => None,
            };
            let params = TrajectoryParams {
                n_pcs: tc.n_pcs,
                k: tc.k,
                n_components: tc.n_components,
                root,
                seed: derive_seed(ctx.cfg.seed, "pseudotime"),
            };
            let pt = infer_pseudotime(&expr, &params)?;
            log.note("root_cell", &expr.cells()[pt.root_cell]);
            log.note("root_auto_selected", pt.root_auto_selected);
            log.note("cells_outside_root_component", pt.outside_component);
            log.note("diffusion_components", pt.n_components_used);
            let mut out = String::from("cell_id,pseudotime\n");
            for (c, v) in expr.cells().iter().zip(&pt.values) {
                let _ = writeln!(out, "{c},{v}");
            }
            fs::write(ctx.wd.pseudotime_csv(), out)?;
            Ok(())
        },
    )
}

pub fn bin(ctx: &Ctx) -> Result<()> {
    let pt_path = ctx.cfg.data.pseudotime.clone().unwrap_or_else(|| ctx.wd.pseudotime_csv());
    let expr_dir = ctx.wd.expression_dir();
    let bc = &ctx.cfg.binning;
    ctx.stamped(
        "bin",
        json!({ "binning": bc }),
        &[&expr_dir, &pt_path],
        &["bins.csv", "bins.json"],
        |log| {
            let expr = load_ingested(ctx.wd)?;
            if !pt_path.exists() {
                return Err(tagged(Category::Io, format!("{} is missing; run `tgrn pseudotime` first", pt_path.display())));
            }
            let pt = read_pseudotime(&pt_path, expr.cells())?;
            let bins = bin_cells(&pt, bc.min_cells, bc.target_bins)?;
            log.note("pseudotime_source", pt_path.display().to_string());
            log.note("n_bins", bins.n_bins());
            log.note("cells_per_bin", &bins.counts);
            if bins.n_bins() < bc.target_bins {
                log.note("bins_reduced_from", bc.target_bins);
            }
            let mut out = String::from("cell_id,pseudotime,bin\n");
            for (c, (v, b)) in expr.cells().iter().zip(pt.iter().zip(&bins.bin_of_cell)) {
                let _ = writeln!(out, "{c},{v},{b}");
            }
            fs::write(ctx.wd.bins_csv(), out)?;
            let summary = json!({
                "n_bins": bins.n_bins(),
                "counts": bins.counts,
                "boundaries": bins.boundaries,
            });
            fs::write(ctx.wd.path("bins.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            Ok(())
        },
    )
}

pub fn infer_grn(ctx: &Ctx) -> Result<()> {
    let regs = required(&ctx.cfg.data.regulators, "data.regulators")?;
    let expr_dir = ctx.wd.expression_dir();
    let bins_csv = ctx.wd.bins_csv();
    ctx.stamped(
        "infer-grn",
        json!({ "grn": ctx.cfg.grn }),
        &[&expr_dir, &bins_csv, regs],
        &["grn_edges.tsv"],
        |log| {
            let expr = load_ingested(ctx.wd)?;
            let bins = read_bins(&bins_csv, expr.cells())?;
            let reg = load_regulators(regs, expr.genes())?;
            log.note("regulators", reg.ids.len());
            log.note("regulator_symbols_skipped", reg.skipped);
            let sets = infer_all_bins(&expr, &bins, &reg, &ctx.cfg.grn)?;
            log.note("edges_per_snapshot", sets.iter().map(|s| s.edges.len()).collect::<Vec<_>>());
            fs::write(ctx.wd.edges_tsv(), format_grn_edgelists(&sets, expr.genes()))?;
            Ok(())
        },
    )
}

pub fn import_grn(ctx: &Ctx) -> Result<()> {
    let src = required(&ctx.cfg.data.grn_edges, "data.grn_edges")?;
    let expr_dir = ctx.wd.expression_dir();
    ctx.stamped("import-grn", json!({}), &[&expr_dir, src], &["grn_edges.tsv"], |log| {
        let expr = load_ingested(ctx.wd)?;
        let imported = import_grn_edgelists(src, expr.genes())?;
        log.note("source", src.display().to_string());
        log.note("snapshots", imported.snapshots.len());
        log.note("edges_per_snapshot", imported.snapshots.iter().map(|s| s.edges.len()).collect::<Vec<_>>());
        log.note("rows_skipped_unknown_symbol", imported.skipped_unknown);
        log.note("rows_skipped_self_loop", imported.skipped_self_loops);
        log.note("duplicate_rows_merged", imported.merged_duplicates);
        fs::write(ctx.wd.edges_tsv(), format_grn_edgelists(&imported.snapshots, expr.genes()))?;
        Ok(())
    })
}

fn graph_summary(tg: &TemporalGraph) -> Result<serde_json::Value> {
    let rec = recurrence_stats(tg)?;
    Ok(json!({
        "snapshots": tg.len(),
        "genes": tg.n_genes(),
        "feature_dim": tg.feature_dim(),
        "total_edges": tg.total_edges(),
        "edges_per_snapshot": tg.snapshots().iter().map(|s| s.edges().len()).collect::<Vec<_>>(),
        "average_recurrence": rec.average,
    }))
}

pub fn build_graph(ctx: &Ctx) -> Result<()> {
    let expr_dir = ctx.wd.expression_dir();
    let bins_csv = ctx.wd.bins_csv();
    let edges = ctx.wd.edges_tsv();
    let mut inputs: Vec<&Path> = vec![&expr_dir, &bins_csv, &edges];
    if let Some(e) = &ctx.cfg.data.embeddings {
        inputs.push(e);
    }
    ctx.stamped(
        "build-graph",
        json!({}),
        &inputs,
        &["bundle/manifest.json", "recurrence.csv"],
        |log| {
            let expr = load_ingested(ctx.wd)?;
            let bins = read_bins(&bins_csv, expr.cells())?;
            if !edges.exists() {
                return Err(tagged(
                    Category::Io,
                    format!("{} is missing; run `tgrn infer-grn` or `tgrn import-grn` first", edges.display()),
                ));
            }
            let imported = import_grn_edgelists(&edges, expr.genes())?;
            let emb = match &ctx.cfg.data.embeddings {
                Some(p) => {
                    let e = import_embeddings(p, expr.genes())?;
                    log.note("embedding_dim", e.dim());
                    log.note("genes_without_embedding", e.missing);
                    Some(e)
                }
                None => None,
            };
            let tg = assemble_temporal_graph(&expr, &bins, &imported.snapshots, emb.as_ref())?;
            save_bundle(&tg, &ctx.wd.bundle_dir())?;
            fs::write(ctx.wd.path("recurrence.csv"), recurrence_csv(&recurrence_stats(&tg)?))?;
            for (k, v) in graph_summary(&tg)?.as_object().expect("object") {
                log.note(k, v);
            }
            Ok(())
        },
    )
}

fn bundle_path(ctx: &Ctx, bundle: Option<&Path>) -> PathBuf {
    bundle.map(Path::to_path_buf).unwrap_or_else(|| ctx.wd.bundle_dir())
}

fn open_bundle(dir: &Path) -> Result<TemporalGraph> {
    if !dir.join("manifest.json").exists() {
        return Err(tagged(
            Category::Io,
            format!("no bundle at {}; run `tgrn build-graph` or pass --bundle", dir.display()),
        ));
    }
    load_bundle(dir).with_context(|| format!("loading bundle {}", dir.display()))
}

pub fn stats(ctx: &Ctx, bundle: Option<&Path>) -> Result<String> {
    let tg = open_bundle(&bundle_path(ctx, bundle))?;
    let summary = graph_summary(&tg)?;
    fs::create_dir_all(ctx.wd.root())?;
    fs::write(ctx.wd.path("stats.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(ctx.wd.path("recurrence.csv"), recurrence_csv(&recurrence_stats(&tg)?))?;
    Ok(format!(
        "T={} genes={} edges={} avg_recurrence={:.4}\n",
        tg.len(),
        tg.n_genes(),
        tg.total_edges(),
        summary["average_recurrence"].as_f64().unwrap_or(f64::NAN)
    ))
}

pub fn run_bench_stage(ctx: &Ctx, bundle: Option<&Path>, save_checkpoints: bool) -> Result<String> {
    let dir = bundle_path(ctx, bundle);
    let bc = &ctx.cfg.bench;
    let mut summary = String::new();
    ctx.stamped(
        "run-bench",
        json!({ "bench": bc, "checkpoints": save_checkpoints }),
        &[&dir],
        &["bench/report.json"],
        |log| {
            let tg = open_bundle(&dir)?;
            log.note("bundle", dir.display().to_string());
            log.note("evaluation_steps", bc.n_steps(tg.len()));
            if bc.models.contains(&Family::EdgeBank) {
                let skipped: Vec<&str> = bc.tasks.iter().filter(|&&t| t != Task::Link).map(|t| t.name()).collect();
                if !skipped.is_empty() {
                    log.note("edgebank_skipped_tasks", skipped);
                }
            }
            let outcome = run_bench(&tg, bc, save_checkpoints)?;
            let out = ctx.wd.bench_dir();
            write_report_files(&outcome.report, &out)?;
            fs::write(out.join("recurrence.csv"), recurrence_csv(&recurrence_stats(&tg)?))?;
            match &outcome.heatmap {
                Some(h) => fs::write(out.join("hub_heatmap.csv"), h.to_csv(tg.vocab()))?,
                None => log.note("hub_heatmap", "not produced: no learned model ran the centrality task"),
            }
            if save_checkpoints {
                let ck = out.join("checkpoints");
                fs::create_dir_all(&ck)?;
                for (key, text) in &outcome.checkpoints {
                    fs::write(ck.join(format!("{}.json", key.replace('/', "_"))), text)?;
                }
            }
            let diverged: usize = outcome
                .report
                .runs
                .iter()
                .map(|r| r.steps.iter().filter(|s| s.diverged).count())
                .sum();
            log.note("runs", outcome.report.runs.len());
            log.note("diverged_steps", diverged);
            log.note("config_hash", &outcome.report.config_hash);
            summary = outcome.report.summary_table();
            Ok(())
        },
    )?;
    Ok(summary)
}

pub fn report(ctx: &Ctx, inputs: &[PathBuf], out: Option<&Path>) -> Result<String> {
    let inputs: Vec<PathBuf> = if inputs.is_empty() {
        vec![ctx.wd.bench_dir().join("report.json")]
    } else {
        inputs.to_vec()
    };
    let mut frags = Vec::with_capacity(inputs.len());
    for p in &inputs {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        frags.push(EvalReport::from_json(&text).with_context(|| format!("parsing {}", p.display()))?);
    }
    let merged = aggregate_report(frags)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| ctx.wd.path("report"));
    write_report_files(&merged, &dir)?;
    let mut log = DecisionLog::new("report");
    log.note("fragments", inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    log.note("runs", merged.runs.len());
    ctx.wd.write_log(&log)?;
    Ok(merged.summary_table())
}

/// Writes a synthetic dataset in the import formats together with a
/// config that points at it.
pub fn synth(dir: &Path, genes: usize, snapshots: usize, cells_per_bin: usize, seed: u64) -> Result<()> {
    let d = smoke_dataset(genes, snapshots, cells_per_bin, seed)?;
    fs::create_dir_all(dir)?;
    write_matrix_market(&d.expression, &dir.join("expression"))?;
    let vocab = d.expression.genes();
    let regs: String = d.regulators.iter().map(|&g| format!("{}\n", vocab.symbol(g))).collect();
    fs::write(dir.join("regulators.txt"), regs)?;
    fs::write(dir.join("grn_edges.tsv"), format_grn_edgelists(&d.edges, vocab))?;
    let mut pt = String::from("cell_id,pseudotime\n");
    for (c, v) in d.expression.cells().iter().zip(&d.pseudotime) {
        let _ = writeln!(pt, "{c},{v}");
    }
    fs::write(dir.join("pseudotime.csv"), pt)?;
    let mut cfg = RunConfig::default();
    cfg.data.expression = Some("expression/matrix.mtx".into());
    cfg.data.regulators = Some("regulators.txt".into());
    cfg.data.grn_edges = Some("grn_edges.tsv".into());
    cfg.data.pseudotime = Some("pseudotime.csv".into());
    cfg.binning.min_cells = cells_per_bin;
    cfg.binning.target_bins = snapshots;
    cfg.seed = seed;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}
