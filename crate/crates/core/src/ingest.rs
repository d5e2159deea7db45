//! Loaders for expression matrices, regulator lists, precomputed GRN edge
//! lists and external gene embeddings.
//!
//! Gene symbols are matched case-sensitively everywhere.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::sparse::CsrMatrix;
use crate::tgraph::{Edge, GeneVocab, GraphError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {file} line {line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("negative expression value {value} at gene {gene}, cell {cell}")]
    NegativeValue { gene: String, cell: String, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no entries left after filtering against the vocabulary ({skipped} skipped)")]
    EmptyAfterFiltering { skipped: usize },
    #[error("negative confidence {value} in {file} line {line}")]
    NegativeConfidence { file: String, line: usize, value: f64 },
    #[error("edge list contains no snapshots")]
    NoSnapshots,
    #[error("none of the {0} vocabulary genes have an embedding row")]
    AllGenesMissing(usize),
    #[error(transparent)]
    Vocab(#[from] GraphError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_real(tok: &str, file: &Path, line: usize) -> Result<f64, IngestError> {
    let v = tok.trim().parse::<f64>().map_err(|_| IngestError::Parse {
        file: file.display().to_string(),
        line,
        msg: format!("not a number: {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::Parse {
            file: file.display().to_string(),
            line,
            msg: format!("non-finite value {tok:?}"),
        });
    }
    Ok(v)
}

/// Genes × cells non-negative expression values, stored sparse by gene.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    genes: GeneVocab,
    cells: Vec<String>,
    values: CsrMatrix<f64>,
}

impl ExpressionMatrix {
    pub fn new(
        genes: GeneVocab,
        cells: Vec<String>,
        values: CsrMatrix<f64>,
    ) -> Result<Self, IngestError> {
        if cells.is_empty() {
            return Err(IngestError::DimensionMismatch("matrix has no cells".into()));
        }
        if values.nrows() != genes.len() || values.ncols() != cells.len() {
            return Err(IngestError::DimensionMismatch(format!(
                "values are {}x{}, vocab/cells are {}x{}",
                values.nrows(),
                values.ncols(),
                genes.len(),
                cells.len()
            )));
        }
        for (g, c, v) in values.iter() {
            if v.is_nan() || v < 0.0 {
                return Err(IngestError::NegativeValue {
                    gene: genes.symbol(g).to_string(),
                    cell: cells[c].clone(),
                    value: v,
                });
            }
        }
        // canonical form: explicit zeros dropped
        let trip = values.iter().filter(|t| t.2 != 0.0).collect();
        let values = CsrMatrix::from_triplets(genes.len(), cells.len(), trip);
        Ok(Self {
            genes,
            cells,
            values,
        })
    }

    pub fn from_dense(
        genes: GeneVocab,
        cells: Vec<String>,
        dense: &Array2<f64>,
    ) -> Result<Self, IngestError> {
        if let Some(((g, c), &v)) = dense.indexed_iter().find(|(_, v)| v.is_nan() || **v < 0.0) {
            return Err(IngestError::NegativeValue {
                gene: genes.symbols().get(g).cloned().unwrap_or_default(),
                cell: cells.get(c).cloned().unwrap_or_default(),
                value: v,
            });
        }
        Self::new(genes, cells, CsrMatrix::from_dense(dense))
    }

    pub fn genes(&self) -> &GeneVocab {
        &self.genes
    }

    pub fn cells(&self) -> &[String] {
        &self.cells
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn values(&self) -> &CsrMatrix<f64> {
        &self.values
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.values.to_dense()
    }

    /// Per-cell total counts.
    pub fn library_sizes(&self) -> Vec<f64> {
        let mut lib = vec![0.0; self.n_cells()];
        for (_, c, v) in self.values.iter() {
            lib[c] += v;
        }
        lib
    }

    /// New matrix restricted to `cells`, in the given order.
    pub fn select_cells(&self, cells: &[usize]) -> Result<Self, IngestError> {
        let mut position = HashMap::with_capacity(cells.len());
        for (new, &old) in cells.iter().enumerate() {
            if old >= self.n_cells() {
                return Err(IngestError::DimensionMismatch(format!(
                    "cell index {old} out of range"
                )));
            }
            position.insert(old, new);
        }
        let trip = self
            .values
            .iter()
            .filter_map(|(g, c, v)| position.get(&c).map(|&n| (g, n, v)))
            .collect();
        let names = cells.iter().map(|&c| self.cells[c].clone()).collect();
        Self::new(
            self.genes.clone(),
            names,
            CsrMatrix::from_triplets(self.n_genes(), cells.len(), trip),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpressionFormat {
    /// Header row of cell ids; each following row is `symbol,v1,v2,...`.
    DenseCsv,
    /// Coordinate Matrix Market file (genes × cells) with `genes.tsv` and
    /// `cells.tsv` next to it.
    MatrixMarket,
}

pub fn load_expression(path: &Path, format: ExpressionFormat) -> Result<ExpressionMatrix, IngestError> {
    match format {
        ExpressionFormat::DenseCsv => load_dense_csv(path),
        ExpressionFormat::MatrixMarket => load_matrix_market(path),
    }
}

fn load_dense_csv(path: &Path) -> Result<ExpressionMatrix, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| IngestError::Parse {
            file: path.display().to_string(),
            line: 1,
            msg: e.to_string(),
        })?,
        None => {
            return Err(IngestError::Parse {
                file: path.display().to_string(),
                line: 1,
                msg: "empty file".into(),
            })
        }
    };
    let cells: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut symbols = Vec::new();
    let mut trip = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| IngestError::Parse {
            file: path.display().to_string(),
            line,
            msg: e.to_string(),
        })?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if rec.len() != cells.len() + 1 {
            return Err(IngestError::DimensionMismatch(format!(
                "line {line}: {} values for {} cells",
                rec.len().saturating_sub(1),
                cells.len()
            )));
        }
        let g = symbols.len();
        let symbol = rec[0].trim().to_string();
        for (c, tok) in rec.iter().skip(1).enumerate() {
            let v = parse_real(tok, path, line)?;
            if v < 0.0 {
                return Err(IngestError::NegativeValue {
                    gene: symbol,
                    cell: cells[c].clone(),
                    value: v,
                });
            }
            if v != 0.0 {
                trip.push((g, c, v));
            }
        }
        symbols.push(symbol);
    }
    let genes = GeneVocab::new(symbols)?;
    let values = CsrMatrix::from_triplets(genes.len(), cells.len(), trip);
    ExpressionMatrix::new(genes, cells, values)
}

fn read_list(path: &Path) -> Result<Vec<String>, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(|l| l.split('\t').next().unwrap_or("").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn load_matrix_market(path: &Path) -> Result<ExpressionMatrix, IngestError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let symbols = read_list(&dir.join("genes.tsv"))?;
    let cells = read_list(&dir.join("cells.tsv"))?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let perr = |line: usize, msg: &str| IngestError::Parse {
        file: path.display().to_string(),
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    let banner = lines.next().map(|(_, l)| l.to_ascii_lowercase()).unwrap_or_default();
    if !banner.starts_with("%%matrixmarket matrix coordinate") {
        return Err(perr(1, "expected a coordinate MatrixMarket banner"));
    }
    if banner.contains("complex") || banner.contains("pattern") {
        return Err(perr(1, "only real/integer matrices are supported"));
    }
    let symmetric = banner.contains("symmetric");
    if symmetric {
        return Err(perr(1, "symmetric storage is not valid for a genes x cells matrix"));
    }
    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(perr(line, "size line needs rows cols nnz"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| perr(line, "bad size line"));
                size = Some((p(toks[0])?, p(toks[1])?, p(toks[2])?));
            }
            Some((nr, nc, _)) => {
                if toks.len() != 3 {
                    return Err(perr(line, "entry needs row col value"));
                }
                let r = toks[0].parse::<usize>().map_err(|_| perr(line, "bad row index"))?;
                let c = toks[1].parse::<usize>().map_err(|_| perr(line, "bad column index"))?;
                if r == 0 || c == 0 || r > nr || c > nc {
                    return Err(perr(line, "index out of bounds"));
                }
                let v = parse_real(toks[2], path, line)?;
                if v < 0.0 {
                    return Err(IngestError::NegativeValue {
                        gene: symbols.get(r - 1).cloned().unwrap_or_default(),
                        cell: cells.get(c - 1).cloned().unwrap_or_default(),
                        value: v,
                    });
                }
                trip.push((r - 1, c - 1, v));
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| perr(1, "missing size line"))?;
    if trip.len() != nnz {
        return Err(perr(0, &format!("declared {nnz} entries, found {}", trip.len())));
    }
    if nr != symbols.len() || nc != cells.len() {
        return Err(IngestError::DimensionMismatch(format!(
            "matrix is {nr}x{nc}, genes.tsv/cells.tsv list {}x{}",
            symbols.len(),
            cells.len()
        )));
    }
    let genes = GeneVocab::new(symbols)?;
    ExpressionMatrix::new(genes, cells, CsrMatrix::from_triplets(nr, nc, trip))
}

/// Writes `matrix.mtx`, `genes.tsv` and `cells.tsv` into `dir`.
pub fn write_matrix_market(expr: &ExpressionMatrix, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut body = String::from("%%MatrixMarket matrix coordinate real general\n");
    body.push_str(&format!(
        "{} {} {}\n",
        expr.n_genes(),
        expr.n_cells(),
        expr.values.nnz()
    ));
    for (g, c, v) in expr.values.iter() {
        body.push_str(&format!("{} {} {}\n", g + 1, c + 1, v));
    }
    let mtx = dir.join("matrix.mtx");
    fs::write(&mtx, body).map_err(io_err(&mtx))?;
    let genes = dir.join("genes.tsv");
    fs::write(&genes, expr.genes.symbols().join("\n") + "\n").map_err(io_err(&genes))?;
    let cells = dir.join("cells.tsv");
    fs::write(&cells, expr.cells.join("\n") + "\n").map_err(io_err(&cells))?;
    Ok(())
}

/// Transcription-factor ids resolved against a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct RegulatorList {
    pub ids: Vec<usize>,
    pub skipped: usize,
}

impl RegulatorList {
    pub fn from_ids(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self { ids, skipped: 0 }
    }
}

pub fn load_regulators(path: &Path, vocab: &GeneVocab) -> Result<RegulatorList, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_regulators(&text, vocab)
}

pub fn parse_regulators(text: &str, vocab: &GeneVocab) -> Result<RegulatorList, IngestError> {
    let mut ids = BTreeSet::new();
    let mut unknown = BTreeSet::new();
    for line in text.lines() {
        let sym = line.trim();
        if sym.is_empty() {
            continue;
        }
        match vocab.id(sym) {
            Some(id) => {
                ids.insert(id);
            }
            None => {
                unknown.insert(sym.to_string());
            }
        }
    }
    if ids.is_empty() {
        return Err(IngestError::EmptyAfterFiltering {
            skipped: unknown.len(),
        });
    }
    if !unknown.is_empty() {
        log::warn!("skipped {} regulator symbols not in the vocabulary", unknown.len());
    }
    Ok(RegulatorList {
        ids: ids.into_iter().collect(),
        skipped: unknown.len(),
    })
}

/// Edges of one snapshot as read from an edge-list file.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSet {
    pub t: usize,
    pub edges: Vec<Edge>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImportedEdges {
    /// Sorted by snapshot index; edges sorted by `(src, dst)`.
    pub snapshots: Vec<EdgeSet>,
    pub skipped_unknown: usize,
    pub skipped_self_loops: usize,
    pub merged_duplicates: usize,
}

/// Reads `snapshot_index, source_symbol, target_symbol, confidence` rows
/// (tab-separated, optional header). Unknown symbols and self-regulation rows
/// are skipped and counted; repeated `(t, src, dst)` rows keep the largest
/// confidence.
pub fn import_grn_edgelists(path: &Path, vocab: &GeneVocab) -> Result<ImportedEdges, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_grn_edgelists(&text, path, vocab)
}

pub fn parse_grn_edgelists(
    text: &str,
    path: &Path,
    vocab: &GeneVocab,
) -> Result<ImportedEdges, IngestError> {
    let mut grouped: BTreeMap<usize, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
    let (mut unknown, mut loops, mut dups) = (0, 0, 0);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(IngestError::Parse {
                file: path.display().to_string(),
                line,
                msg: format!("expected 4 tab-separated columns, found {}", cols.len()),
            });
        }
        let t = match cols[0].parse::<usize>() {
            Ok(t) => t,
            Err(_) if line == 1 => continue,
            Err(_) => {
                return Err(IngestError::Parse {
                    file: path.display().to_string(),
                    line,
                    msg: format!("bad snapshot index {:?}", cols[0]),
                })
            }
        };
        if t == 0 {
            return Err(IngestError::Parse {
                file: path.display().to_string(),
                line,
                msg: "snapshot indices are 1-based".into(),
            });
        }
        let conf = parse_real(cols[3], path, line)?;
        if conf < 0.0 {
            return Err(IngestError::NegativeConfidence {
                file: path.display().to_string(),
                line,
                value: conf,
            });
        }
        let (Some(src), Some(dst)) = (vocab.id(cols[1]), vocab.id(cols[2])) else {
            unknown += 1;
            continue;
        };
        if src == dst {
            loops += 1;
            continue;
        }
        let slot = grouped.entry(t).or_default().entry((src, dst)).or_insert(f64::NEG_INFINITY);
        if *slot != f64::NEG_INFINITY {
            dups += 1;
        }
        *slot = slot.max(conf);
    }
    if grouped.is_empty() {
        return Err(IngestError::NoSnapshots);
    }
    if unknown > 0 {
        log::warn!("skipped {unknown} edge rows with symbols outside the vocabulary");
    }
    let snapshots = grouped
        .into_iter()
        .map(|(t, m)| EdgeSet {
            t,
            edges: m.into_iter().map(|((s, d), c)| Edge::new(s, d, c)).collect(),
        })
        .collect();
    Ok(ImportedEdges {
        snapshots,
        skipped_unknown: unknown,
        skipped_self_loops: loops,
        merged_duplicates: dups,
    })
}

/// Writes edge sets in the format [`import_grn_edgelists`] reads.
pub fn format_grn_edgelists(sets: &[EdgeSet], vocab: &GeneVocab) -> String {
    let mut out = String::from("snapshot_index\tsource_symbol\ttarget_symbol\tconfidence\n");
    for s in sets {
        for e in &s.edges {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                s.t,
                vocab.symbol(e.src),
                vocab.symbol(e.dst),
                e.confidence
            ));
        }
    }
    out
}

/// Per-gene embedding rows aligned to a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalEmbeddings {
    pub matrix: Array2<f64>,
    pub provenance: String,
    pub missing: usize,
}

impl ExternalEmbeddings {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// CSV with a header row; first column is the gene symbol. Vocabulary genes
/// without a row are zero-filled and counted in `missing`.
pub fn import_embeddings(path: &Path, vocab: &GeneVocab) -> Result<ExternalEmbeddings, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let d = rdr
        .headers()
        .map_err(|e| IngestError::Parse {
            file: path.display().to_string(),
            line: 1,
            msg: e.to_string(),
        })?
        .len()
        .saturating_sub(1);
    if d == 0 {
        return Err(IngestError::DimensionMismatch("embedding file has no value columns".into()));
    }
    let mut matrix = Array2::<f64>::zeros((vocab.len(), d));
    let mut filled = vec![false; vocab.len()];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| IngestError::Parse {
            file: path.display().to_string(),
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != d + 1 {
            return Err(IngestError::DimensionMismatch(format!(
                "line {line}: expected {} columns",
                d + 1
            )));
        }
        let Some(g) = vocab.id(rec[0].trim()) else {
            continue;
        };
        for (j, tok) in rec.iter().skip(1).enumerate() {
            matrix[[g, j]] = parse_real(tok, path, line)?;
        }
        filled[g] = true;
    }
    let missing = filled.iter().filter(|f| !**f).count();
    if missing == vocab.len() {
        return Err(IngestError::AllGenesMissing(vocab.len()));
    }
    if missing > 0 {
        log::warn!("{missing} genes have no embedding row; zero-filled");
    }
    Ok(ExternalEmbeddings {
        matrix,
        provenance: path.display().to_string(),
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn dense_zero_matrix() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "x.csv", "gene,c1,c2\na,0,0\nb,0,0\nc,0,0\n");
        let m = load_expression(&p, ExpressionFormat::DenseCsv).unwrap();
        assert_eq!((m.n_genes(), m.n_cells()), (3, 2));
        assert_eq!(m.values().nnz(), 0);
    }

    #[test]
    fn dense_and_matrix_market_agree() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "x.csv", "gene,c1,c2,c3\na,1,0,2.5e0\nb,0,0,0\nc,3,4,0\n");
        let dense = load_expression(&p, ExpressionFormat::DenseCsv).unwrap();
        write_matrix_market(&dense, &d.path().join("mm")).unwrap();
        let mm = load_expression(&d.path().join("mm/matrix.mtx"), ExpressionFormat::MatrixMarket)
            .unwrap();
        assert_eq!(dense, mm);
    }

    #[test]
    fn matrix_market_negative_rejected() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "genes.tsv", "a\nb\n");
        write(d.path(), "cells.tsv", "c1\n");
        let p = write(
            d.path(),
            "matrix.mtx",
            "%%MatrixMarket matrix coordinate real general\n2 1 1\n1 1 -1\n",
        );
        assert!(matches!(
            load_expression(&p, ExpressionFormat::MatrixMarket),
            Err(IngestError::NegativeValue { .. })
        ));
    }

    #[test]
    fn dense_ragged_row_rejected() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "x.csv", "gene,c1,c2\na,1\nb,0,0\n");
        assert!(matches!(
            load_expression(&p, ExpressionFormat::DenseCsv),
            Err(IngestError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn regulators_filter_and_dedup() {
        let vocab = GeneVocab::new(vec!["Klf1".into(), "Spi1".into(), "Gata1".into()]).unwrap();
        let r = parse_regulators("Klf1\nSpi1\n", &vocab).unwrap();
        assert_eq!(r.ids, vec![0, 1]);
        let r = parse_regulators("Klf1\nKlf1\nFoo\n", &vocab).unwrap();
        assert_eq!(r.ids, vec![0]);
        assert_eq!(r.skipped, 1);
        assert!(matches!(
            parse_regulators("Foo\nBar\n", &vocab),
            Err(IngestError::EmptyAfterFiltering { skipped: 2 })
        ));
        assert!(parse_regulators("klf1\n", &vocab).is_err());
    }

    #[test]
    fn edge_lists_group_by_snapshot() {
        let vocab = GeneVocab::numbered(4).unwrap();
        let text = "snapshot_index\tsource_symbol\ttarget_symbol\tconfidence\n\
                    1\tg0\tg1\t0.5\n1\tg0\tg2\t1.5\n2\tg3\tg1\t2\n1\tg9\tg1\t1\n";
        let r = parse_grn_edgelists(text, Path::new("e.tsv"), &vocab).unwrap();
        assert_eq!(r.snapshots.len(), 2);
        assert_eq!(r.snapshots[0].edges.len(), 2);
        assert_eq!(r.snapshots[1].edges.len(), 1);
        assert_eq!(r.skipped_unknown, 1);
    }

    #[test]
    fn edge_list_negative_confidence() {
        let vocab = GeneVocab::numbered(4).unwrap();
        let r = parse_grn_edgelists("1\tg0\tg1\t-0.3\n", Path::new("e.tsv"), &vocab);
        assert!(matches!(r, Err(IngestError::NegativeConfidence { .. })));
        let r = parse_grn_edgelists("snapshot\ts\tt\tc\n", Path::new("e.tsv"), &vocab);
        assert!(matches!(r, Err(IngestError::NoSnapshots)));
    }

    #[test]
    fn edge_list_format_round_trips() {
        let vocab = GeneVocab::numbered(4).unwrap();
        let sets = vec![
            EdgeSet {
                t: 1,
                edges: vec![Edge::new(0, 1, 0.25), Edge::new(2, 3, 1e-9)],
            },
            EdgeSet {
                t: 2,
                edges: vec![Edge::new(3, 0, 4.0)],
            },
        ];
        let text = format_grn_edgelists(&sets, &vocab);
        let back = parse_grn_edgelists(&text, Path::new("e.tsv"), &vocab).unwrap();
        assert_eq!(back.snapshots, sets);
    }

    #[test]
    fn embeddings_keyed_join_with_fill() {
        let d = tempfile::tempdir().unwrap();
        let vocab = GeneVocab::numbered(4).unwrap();
        let p = write(
            d.path(),
            "emb.csv",
            "gene,e0,e1,e2,e3\ng2,1,2,3,4\ng0,5,6,7,8\nzz,9,9,9,9\n",
        );
        let e = import_embeddings(&p, &vocab).unwrap();
        assert_eq!(e.matrix.dim(), (4, 4));
        assert_eq!(e.missing, 2);
        assert_eq!(e.matrix.row(0).to_vec(), vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(e.matrix.row(2).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.matrix.row(1).to_vec(), vec![0.0; 4]);
        let p = write(d.path(), "none.csv", "gene,e0\nzz,1\n");
        assert!(matches!(
            import_embeddings(&p, &vocab),
            Err(IngestError::AllGenesMissing(4))
        ));
    }

    #[test]
    fn select_cells_reorders() {
        let vocab = GeneVocab::numbered(2).unwrap();
        let dense = ndarray::array![[1.0, 0.0, 3.0], [0.0, 2.0, 0.0]];
        let m = ExpressionMatrix::from_dense(vocab, vec!["a".into(), "b".into(), "c".into()], &dense)
            .unwrap();
        let s = m.select_cells(&[2, 1]).unwrap();
        assert_eq!(s.to_dense(), ndarray::array![[3.0, 0.0], [0.0, 2.0]]);
        assert_eq!(s.cells(), &["c".to_string(), "b".to_string()]);
    }
}
