//! Delimited-text ingestion of expression matrices and SF2 label tables,
//! sample alignment, and report serialization.
//!
//! Matrices are always held samples × genes in memory, whatever their
//! on-disk orientation.

mod report;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{format_real, render_report, write_report, Cell, CsvTable, Report, ReportFormat};

/// Which molecular layer a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Omic {
    Transcriptome,
    Proteome,
    Combined,
}

impl Omic {
    pub fn as_str(&self) -> &'static str {
        match self {
            Omic::Transcriptome => "transcriptome",
            Omic::Proteome => "proteome",
            Omic::Combined => "combined",
        }
    }

    /// Short tag appended to sample ids when omics are stacked.
    pub fn tag(&self) -> &'static str {
        match self {
            Omic::Transcriptome => "rna",
            Omic::Proteome => "prot",
            Omic::Combined => "comb",
        }
    }
}

impl fmt::Display for Omic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Omic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transcriptome" | "rna" => Ok(Omic::Transcriptome),
            "proteome" | "protein" => Ok(Omic::Proteome),
            "combined" => Ok(Omic::Combined),
            other => Err(Error::invalid(format!("unknown omic '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    GenesAsRows,
    #[default]
    SamplesAsRows,
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "genes_as_rows" | "genes" => Ok(Orientation::GenesAsRows),
            "samples_as_rows" | "samples" => Ok(Orientation::SamplesAsRows),
            other => Err(Error::invalid(format!("unknown orientation '{other}'"))),
        }
    }
}

/// Samples × genes table with a missing-value mask.
///
/// Missing cells hold `NaN` in `values`; every unmasked cell is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    sample_ids: Vec<String>,
    gene_ids: Vec<String>,
    values: DMatrix<f64>,
    missing: DMatrix<bool>,
}

impl ExpressionMatrix {
    pub fn new(
        sample_ids: Vec<String>,
        gene_ids: Vec<String>,
        mut values: DMatrix<f64>,
        missing: DMatrix<bool>,
    ) -> Result<Self> {
        if values.nrows() != sample_ids.len() || values.ncols() != gene_ids.len() {
            return Err(Error::invalid(format!(
                "matrix is {}x{} but has {} sample ids and {} gene ids",
                values.nrows(),
                values.ncols(),
                sample_ids.len(),
                gene_ids.len()
            )));
        }
        if missing.shape() != values.shape() {
            return Err(Error::invalid("missing mask shape differs from values"));
        }
        check_unique(&sample_ids, "sample")?;
        check_unique(&gene_ids, "gene")?;
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if missing[(i, j)] {
                    values[(i, j)] = f64::NAN;
                } else if !values[(i, j)].is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite value at sample '{}', gene '{}'",
                        sample_ids[i], gene_ids[j]
                    )));
                }
            }
        }
        Ok(Self {
            sample_ids,
            gene_ids,
            values,
            missing,
        })
    }

    /// Builds a matrix with no missing cells.
    pub fn complete(sample_ids: Vec<String>, gene_ids: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        let missing = DMatrix::from_element(values.nrows(), values.ncols(), false);
        Self::new(sample_ids, gene_ids, values, missing)
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn missing_mask(&self) -> &DMatrix<bool> {
        &self.missing
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    /// Column `j` as a contiguous slice (storage is column-major).
    pub fn gene_column(&self, j: usize) -> &[f64] {
        let n = self.n_samples();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn missing_in_gene(&self, j: usize) -> usize {
        self.missing.column(j).iter().filter(|&&m| m).count()
    }

    pub fn missing_total(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn gene_index(&self) -> HashMap<&str, usize> {
        self.gene_ids.iter().enumerate().map(|(j, g)| (g.as_str(), j)).collect()
    }

    /// Keeps the given gene columns, in the given order.
    pub fn select_genes(&self, cols: &[usize]) -> ExpressionMatrix {
        let n = self.n_samples();
        let values = DMatrix::from_fn(n, cols.len(), |i, k| self.values[(i, cols[k])]);
        let missing = DMatrix::from_fn(n, cols.len(), |i, k| self.missing[(i, cols[k])]);
        ExpressionMatrix {
            sample_ids: self.sample_ids.clone(),
            gene_ids: cols.iter().map(|&j| self.gene_ids[j].clone()).collect(),
            values,
            missing,
        }
    }

    /// Keeps the given sample rows, in the given order.
    pub fn select_samples(&self, rows: &[usize]) -> ExpressionMatrix {
        let p = self.n_genes();
        let values = DMatrix::from_fn(rows.len(), p, |k, j| self.values[(rows[k], j)]);
        let missing = DMatrix::from_fn(rows.len(), p, |k, j| self.missing[(rows[k], j)]);
        ExpressionMatrix {
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            gene_ids: self.gene_ids.clone(),
            values,
            missing,
        }
    }

    /// Restricts to the named genes in the order given. Errors on the first
    /// gene that is absent.
    pub fn select_gene_names<S: AsRef<str>>(&self, genes: &[S]) -> Result<ExpressionMatrix> {
        let index = self.gene_index();
        let cols = genes
            .iter()
            .map(|g| {
                index
                    .get(g.as_ref())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("gene '{}' not present in matrix", g.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_genes(&cols))
    }

    pub(crate) fn replace_values(&mut self, values: DMatrix<f64>, missing: DMatrix<bool>) {
        debug_assert_eq!(values.shape(), self.values.shape());
        self.values = values;
        self.missing = missing;
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::parse(format!("duplicate {what} identifier '{id}'")));
        }
    }
    Ok(())
}

/// Sample id → measured SF2.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelTable {
    entries: BTreeMap<String, f64>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, sample_id: impl Into<String>, sf2: f64) -> Result<()> {
        let sample_id = sample_id.into();
        if !sf2.is_finite() || sf2 <= 0.0 || sf2 > 1.0 {
            return Err(Error::invalid(format!(
                "SF2 for '{sample_id}' is {sf2}, outside (0, 1]"
            )));
        }
        if self.entries.contains_key(&sample_id) {
            return Err(Error::invalid(format!("duplicate sample '{sample_id}' in labels")));
        }
        self.entries.insert(sample_id, sf2);
        Ok(())
    }

    pub fn get(&self, sample_id: &str) -> Option<f64> {
        self.entries.get(sample_id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Expression matrix with its aligned SF2 vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub matrix: ExpressionMatrix,
    pub labels: Vec<f64>,
    pub provenance: Omic,
}

impl AlignedDataset {
    pub fn new(matrix: ExpressionMatrix, labels: Vec<f64>, provenance: Omic) -> Result<Self> {
        if labels.len() != matrix.n_samples() {
            return Err(Error::invalid(format!(
                "{} labels for {} samples",
                labels.len(),
                matrix.n_samples()
            )));
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("non-finite label"));
        }
        Ok(Self {
            matrix,
            labels,
            provenance,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.n_samples()
    }

    pub fn n_genes(&self) -> usize {
        self.matrix.n_genes()
    }

    /// Same samples, restricted to `genes` in the order given.
    pub fn restrict_genes<S: AsRef<str>>(&self, genes: &[S]) -> Result<AlignedDataset> {
        Ok(AlignedDataset {
            matrix: self.matrix.select_gene_names(genes)?,
            labels: self.labels.clone(),
            provenance: self.provenance,
        })
    }

    pub fn select_samples(&self, rows: &[usize]) -> AlignedDataset {
        AlignedDataset {
            matrix: self.matrix.select_samples(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            provenance: self.provenance,
        }
    }

    pub fn with_matrix(&self, matrix: ExpressionMatrix) -> AlignedDataset {
        AlignedDataset {
            matrix,
            labels: self.labels.clone(),
            provenance: self.provenance,
        }
    }

    /// Label table view, keyed by sample id.
    pub fn label_table(&self) -> LabelTable {
        LabelTable {
            entries: self
                .matrix
                .sample_ids()
                .iter()
                .cloned()
                .zip(self.labels.iter().copied())
                .collect(),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan")
}

fn parse_records(text: &str) -> Result<Vec<Vec<String>>> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(detect_delimiter(first))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(e.to_string()))?;
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        rows.push(rec.iter().map(|f| f.trim().to_string()).collect());
    }
    Ok(rows)
}

/// Reads a delimited expression matrix.
///
/// The header row lists column identifiers, optionally preceded by a cell
/// naming the id column (blank or `id`). Tab or comma delimiting is chosen
/// from the header line. Empty fields, `NA` and `NaN` mark missing values.
pub fn read_expression_matrix(path: impl AsRef<Path>, orientation: Orientation) -> Result<ExpressionMatrix> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_expression_matrix(&text, orientation).map_err(|e| match e {
        Error::Parse(msg) => Error::parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_expression_matrix(text: &str, orientation: Orientation) -> Result<ExpressionMatrix> {
    let rows = parse_records(text)?;
    let Some((header, body)) = rows.split_first() else {
        return Err(Error::parse("empty matrix file"));
    };
    let width = body.first().map(Vec::len).unwrap_or(header.len());
    let col_ids: Vec<String> = if header.len() == width {
        header[1..].to_vec()
    } else if header.len() + 1 == width {
        header.clone()
    } else {
        return Err(Error::parse(format!(
            "header has {} cells but first data row has {}",
            header.len(),
            width
        )));
    };
    check_unique(
        &col_ids,
        if orientation == Orientation::GenesAsRows {
            "sample"
        } else {
            "gene"
        },
    )?;
    let n_cols = col_ids.len();
    let n_rows = body.len();

    let mut row_ids = Vec::with_capacity(n_rows);
    let mut data = vec![0.0; n_rows * n_cols];
    let mut mask = vec![false; n_rows * n_cols];
    for (r, rec) in body.iter().enumerate() {
        if rec.len() != n_cols + 1 {
            return Err(Error::parse(format!(
                "ragged row {} ('{}'): expected {} fields, found {}",
                r + 2,
                rec[0],
                n_cols + 1,
                rec.len()
            )));
        }
        row_ids.push(rec[0].clone());
        for (c, field) in rec[1..].iter().enumerate() {
            let k = r * n_cols + c;
            if is_missing_token(field) {
                mask[k] = true;
                data[k] = f64::NAN;
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => data[k] = v,
                _ => {
                    return Err(Error::parse(format!(
                        "non-numeric value '{}' at row {}, column {} ('{}')",
                        field,
                        r + 2,
                        c + 2,
                        col_ids[c]
                    )))
                }
            }
        }
    }
    check_unique(
        &row_ids,
        if orientation == Orientation::GenesAsRows {
            "gene"
        } else {
            "sample"
        },
    )?;

    let values = DMatrix::from_row_slice(n_rows, n_cols, &data);
    let missing = DMatrix::from_row_slice(n_rows, n_cols, &mask);
    match orientation {
        Orientation::SamplesAsRows => ExpressionMatrix::new(row_ids, col_ids, values, missing),
        Orientation::GenesAsRows => ExpressionMatrix::new(col_ids, row_ids, values.transpose(), missing.transpose()),
    }
}

/// Writes a matrix as TSV with an `id` header cell. Values use the shortest
/// representation that parses back to the same `f64`; missing cells are `NA`.
pub fn write_expression_matrix(m: &ExpressionMatrix, path: impl AsRef<Path>, orientation: Orientation) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_expression_matrix(m, orientation)).map_err(|e| Error::io(path, e))
}

pub fn render_expression_matrix(m: &ExpressionMatrix, orientation: Orientation) -> String {
    let (row_ids, col_ids) = match orientation {
        Orientation::SamplesAsRows => (m.sample_ids(), m.gene_ids()),
        Orientation::GenesAsRows => (m.gene_ids(), m.sample_ids()),
    };
    let mut out = String::from("id");
    for c in col_ids {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for (r, rid) in row_ids.iter().enumerate() {
        out.push_str(rid);
        for c in 0..col_ids.len() {
            let (i, j) = match orientation {
                Orientation::SamplesAsRows => (r, c),
                Orientation::GenesAsRows => (c, r),
            };
            out.push('\t');
            if m.missing[(i, j)] {
                out.push_str("NA");
            } else {
                out.push_str(&m.values[(i, j)].to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Reads a two-column sample/SF2 file. A header row is recognised by a
/// non-numeric second field.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelTable> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_labels(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::parse(format!("{}: {msg}", path.display())),
        Error::Validation(msg) => Error::invalid(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_labels(text: &str) -> Result<LabelTable> {
    let rows = parse_records(text)?;
    let mut table = LabelTable::new();
    for (r, rec) in rows.iter().enumerate() {
        if rec.len() != 2 {
            return Err(Error::parse(format!(
                "label row {} has {} fields, expected 2",
                r + 1,
                rec.len()
            )));
        }
        let value = rec[1].parse::<f64>();
        if r == 0 && value.is_err() {
            continue;
        }
        let value = value.map_err(|_| Error::parse(format!("non-numeric SF2 '{}' on row {}", rec[1], r + 1)))?;
        table.insert(rec[0].clone(), value)?;
    }
    Ok(table)
}

pub fn write_labels(labels: &LabelTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("id\tsf2\n");
    for (id, v) in labels.iter() {
        out.push_str(&format!("{id}\t{v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Inner join of matrix rows and labels, rows sorted by sample id.
pub fn match_samples(matrix: &ExpressionMatrix, labels: &LabelTable, provenance: Omic) -> Result<AlignedDataset> {
    let mut rows: Vec<(usize, &str)> = matrix
        .sample_ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| labels.get(id).is_some())
        .map(|(i, id)| (i, id.as_str()))
        .collect();
    if rows.is_empty() {
        return Err(Error::invalid(format!("no {provenance} samples match the label table")));
    }
    rows.sort_by(|a, b| a.1.cmp(b.1));
    let idx: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let labels: Vec<f64> = rows
        .iter()
        .map(|(_, id)| labels.get(id).expect("filtered above"))
        .collect();
    AlignedDataset::new(matrix.select_samples(&idx), labels, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tsv() -> &'static str {
        "id\tS1\tS2\nG1\t1.5\tNA\nG2\t2\t3\nG3\t-1\t0.25\n"
    }

    #[test]
    fn genes_as_rows_is_transposed() {
        let m = parse_expression_matrix(small_tsv(), Orientation::GenesAsRows).unwrap();
        assert_eq!(m.n_samples(), 2);
        assert_eq!(m.n_genes(), 3);
        assert_eq!(m.sample_ids(), ["S1", "S2"]);
        assert_eq!(m.missing_total(), 1);
        assert!(m.missing_mask()[(1, 0)]);
        assert_eq!(m.values()[(0, 1)], 2.0);
        assert_eq!(m.values()[(1, 2)], 0.25);
    }

    #[test]
    fn header_without_id_cell() {
        let text = "G1,G2\nA,1,2\nB,,4\n";
        let m = parse_expression_matrix(text, Orientation::SamplesAsRows).unwrap();
        assert_eq!(m.gene_ids(), ["G1", "G2"]);
        assert!(m.missing_mask()[(1, 0)]);
    }

    #[test]
    fn duplicate_gene_is_named() {
        let text = "id\tS1\nKDM2A\t1\nKDM2A\t2\n";
        let err = parse_expression_matrix(text, Orientation::GenesAsRows).unwrap_err();
        assert!(err.to_string().contains("KDM2A"), "{err}");
    }

    #[test]
    fn bad_number_reports_position() {
        let text = "id\tG1\tG2\nA\t1\tx\n";
        let err = parse_expression_matrix(text, Orientation::SamplesAsRows).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("column 3"), "{msg}");
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = "id\tG1\tG2\nA\t1\t2\nB\t1\n";
        let err = parse_expression_matrix(text, Orientation::SamplesAsRows).unwrap_err();
        assert!(err.to_string().contains("ragged"));
    }

    #[test]
    fn nan_token_is_missing_case_insensitive() {
        let text = "id,G1,G2\nA,nan,Na\nB,1,2\n";
        let m = parse_expression_matrix(text, Orientation::SamplesAsRows).unwrap();
        assert_eq!(m.missing_total(), 2);
    }

    #[test]
    fn labels_with_and_without_header() {
        let t = parse_labels("A\t0.5\nB\t0.62\n").unwrap();
        assert_eq!(t.len(), 2);
        let t = parse_labels("cell_line,sf2\nA,0.5\n").unwrap();
        assert_eq!(t.get("A"), Some(0.5));
    }

    #[test]
    fn label_range_and_duplicates() {
        assert!(matches!(parse_labels("A\t1.2\n"), Err(Error::Validation(_))));
        assert!(matches!(parse_labels("A\t0\n"), Err(Error::Validation(_))));
        assert!(parse_labels("A\t1.0\n").is_ok());
        assert!(parse_labels("A\t0.3\nA\t0.4\n").is_err());
    }

    fn three_sample_matrix() -> ExpressionMatrix {
        ExpressionMatrix::complete(
            vec!["C".into(), "A".into(), "B".into()],
            vec!["G".into()],
            DMatrix::from_column_slice(3, 1, &[3.0, 1.0, 2.0]),
        )
        .unwrap()
    }

    #[test]
    fn match_is_sorted_intersection() {
        let m = three_sample_matrix();
        let mut labels = LabelTable::new();
        for (id, v) in [("B", 0.2), ("C", 0.3), ("D", 0.4)] {
            labels.insert(id, v).unwrap();
        }
        let ds = match_samples(&m, &labels, Omic::Transcriptome).unwrap();
        assert_eq!(ds.matrix.sample_ids(), ["B", "C"]);
        assert_eq!(ds.labels, vec![0.2, 0.3]);
        assert_eq!(ds.matrix.gene_column(0), &[2.0, 3.0]);

        let again = match_samples(&ds.matrix, &labels, Omic::Transcriptome).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn disjoint_match_fails() {
        let m = three_sample_matrix();
        let mut labels = LabelTable::new();
        labels.insert("Z", 0.5).unwrap();
        assert!(match_samples(&m, &labels, Omic::Proteome).is_err());
    }
}
