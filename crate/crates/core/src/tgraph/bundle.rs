//! On-disk bundle layout for temporal graphs.
//!
//! ```text
//! manifest.json             format version, |V|, T, d_x, feature names, sha256 per file
//! genes.tsv                 one symbol per line; line order defines ids
//! snapshot_<t>.edges.tsv    header + src_id<TAB>dst_id<TAB>confidence
//! snapshot_<t>.nodes.csv    header + |V| rows of d_x features
//! ```
//!
//! Reals are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{build_temporal_graph, Edge, GeneVocab, GraphError, Snapshot, TemporalGraph, BASE_FEATURES};
use crate::digest::sha256_hex;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "tgrn-temporal-graph";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub format_version: u32,
    pub n_genes: usize,
    pub n_snapshots: usize,
    pub d_x: usize,
    pub feature_names: Vec<String>,
    pub checksums: BTreeMap<String, String>,
}

pub(crate) fn feature_names(d_x: usize) -> Vec<String> {
    let mut names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
    if d_x < names.len() {
        names.truncate(d_x);
    }
    for i in 0..d_x.saturating_sub(BASE_FEATURES.len()) {
        names.push(format!("emb_{i}"));
    }
    names
}

fn edges_name(t: usize) -> String {
    format!("snapshot_{t}.edges.tsv")
}

fn nodes_name(t: usize) -> String {
    format!("snapshot_{t}.nodes.csv")
}

pub fn save_bundle(tg: &TemporalGraph, dir: &Path) -> Result<(), GraphError> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(String, String)> = Vec::with_capacity(2 * tg.len() + 1);

    let mut genes = String::new();
    for s in tg.vocab().symbols() {
        genes.push_str(s);
        genes.push('\n');
    }
    files.push(("genes.tsv".into(), genes));

    let names = feature_names(tg.feature_dim());
    for snap in tg.snapshots() {
        let mut edges = String::from("src_id\tdst_id\tconfidence\n");
        for e in snap.edges() {
            edges.push_str(&format!("{}\t{}\t{}\n", e.src, e.dst, e.confidence));
        }
        files.push((edges_name(snap.t()), edges));

        let mut nodes = names.join(",");
        nodes.push('\n');
        for row in snap.node_features().rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            nodes.push_str(&line.join(","));
            nodes.push('\n');
        }
        files.push((nodes_name(snap.t()), nodes));
    }

    let mut checksums = BTreeMap::new();
    for (name, body) in &files {
        fs::write(dir.join(name), body)?;
        checksums.insert(name.clone(), sha256_hex(body.as_bytes()));
    }
    let manifest = Manifest {
        format: FORMAT_TAG.into(),
        format_version: BUNDLE_FORMAT_VERSION,
        n_genes: tg.n_genes(),
        n_snapshots: tg.len(),
        d_x: tg.feature_dim(),
        feature_names: names,
        checksums,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| GraphError::SchemaMismatch(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

fn read_checked(dir: &Path, name: &str, manifest: &Manifest) -> Result<String, GraphError> {
    let body = fs::read_to_string(dir.join(name))?;
    let expected = manifest
        .checksums
        .get(name)
        .ok_or_else(|| GraphError::SchemaMismatch(format!("manifest lacks checksum for {name}")))?;
    if &sha256_hex(body.as_bytes()) != expected {
        return Err(GraphError::ChecksumMismatch(name.to_string()));
    }
    Ok(body)
}

fn parse_f64(tok: &str, file: &str, line: usize) -> Result<f64, GraphError> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| GraphError::SchemaMismatch(format!("{file}:{line}: bad number {tok:?}")))
}

fn parse_usize(tok: &str, file: &str, line: usize) -> Result<usize, GraphError> {
    tok.trim()
        .parse::<usize>()
        .map_err(|_| GraphError::SchemaMismatch(format!("{file}:{line}: bad gene id {tok:?}")))
}

pub fn load_bundle(dir: &Path) -> Result<TemporalGraph, GraphError> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(GraphError::SchemaMismatch(format!(
            "missing manifest.json in {}",
            dir.display()
        )));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
        .map_err(|e| GraphError::SchemaMismatch(format!("manifest.json: {e}")))?;
    if manifest.format != FORMAT_TAG || manifest.format_version != BUNDLE_FORMAT_VERSION {
        return Err(GraphError::SchemaMismatch(format!(
            "unsupported bundle format {} v{}",
            manifest.format, manifest.format_version
        )));
    }
    if manifest.feature_names.len() != manifest.d_x {
        return Err(GraphError::SchemaMismatch(
            "feature_names length differs from d_x".into(),
        ));
    }

    let genes = read_checked(dir, "genes.tsv", &manifest)?;
    let symbols: Vec<String> = genes
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if symbols.len() != manifest.n_genes {
        return Err(GraphError::SchemaMismatch(format!(
            "genes.tsv has {} symbols, manifest says {}",
            symbols.len(),
            manifest.n_genes
        )));
    }
    let vocab = GeneVocab::new(symbols)?;
    let n = vocab.len();

    let mut snapshots = Vec::with_capacity(manifest.n_snapshots);
    for t in 1..=manifest.n_snapshots {
        let ename = edges_name(t);
        let body = read_checked(dir, &ename, &manifest)?;
        let mut edges = Vec::new();
        for (ln, line) in body.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(GraphError::SchemaMismatch(format!(
                    "{ename}:{}: expected 3 columns",
                    ln + 1
                )));
            }
            let src = parse_usize(cols[0], &ename, ln + 1)?;
            let dst = parse_usize(cols[1], &ename, ln + 1)?;
            for id in [src, dst] {
                if id >= n {
                    return Err(GraphError::IdOutOfRange { id, n });
                }
            }
            edges.push(Edge::new(src, dst, parse_f64(cols[2], &ename, ln + 1)?));
        }

        let nname = nodes_name(t);
        let body = read_checked(dir, &nname, &manifest)?;
        let mut lines = body.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        if header != manifest.feature_names {
            return Err(GraphError::SchemaMismatch(format!(
                "{nname}: header does not match manifest feature names"
            )));
        }
        let mut feats = Array2::<f64>::zeros((n, manifest.d_x));
        let mut rows = 0;
        for (r, line) in lines.filter(|l| !l.is_empty()).enumerate() {
            if r >= n {
                return Err(GraphError::SchemaMismatch(format!("{nname}: more than |V| rows")));
            }
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != manifest.d_x {
                return Err(GraphError::SchemaMismatch(format!(
                    "{nname}:{}: expected {} columns",
                    r + 2,
                    manifest.d_x
                )));
            }
            for (c, tok) in vals.iter().enumerate() {
                feats[[r, c]] = parse_f64(tok, &nname, r + 2)?;
            }
            rows += 1;
        }
        if rows != n {
            return Err(GraphError::SchemaMismatch(format!(
                "{nname}: {rows} rows, expected {n}"
            )));
        }
        snapshots.push(Snapshot::new(t, edges, feats, n)?);
    }
    build_temporal_graph(vocab, snapshots)
}
