//! Gene-level cleaning: missing-value filter, mean imputation, greedy
//! correlation pruning, cross-omic gene intersection, z-scoring and the
//! row-wise merge of two omic blocks.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixio::{AlignedDataset, CsvTable, ExpressionMatrix, Omic, Report};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Genes with more than this many missing cells are dropped.
    pub max_missing: usize,
    /// |r| at or above which a later gene is considered redundant.
    pub redundancy_threshold: f64,
    /// Sort genes by id before pruning so the greedy scan is file-order independent.
    pub sort_genes: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_missing: 6,
            redundancy_threshold: 0.7,
            sort_genes: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.redundancy_threshold > 0.0 && self.redundancy_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "redundancy_threshold must lie in (0, 1], got {}",
                self.redundancy_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundantDrop {
    pub dropped: String,
    pub retained: String,
    pub r: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessLog {
    pub dropped_missing: Vec<String>,
    pub dropped_redundant: Vec<RedundantDrop>,
    pub dropped_zero_variance: Vec<String>,
    pub imputed_cells: usize,
}

impl PreprocessLog {
    pub fn absorb(&mut self, other: PreprocessLog) {
        self.dropped_missing.extend(other.dropped_missing);
        self.dropped_redundant.extend(other.dropped_redundant);
        self.dropped_zero_variance.extend(other.dropped_zero_variance);
        self.imputed_cells += other.imputed_cells;
    }
}

impl Report for PreprocessLog {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["gene_id", "reason", "retained_gene", "r"]);
        for g in &self.dropped_missing {
            t.push(vec![
                g.as_str().into(),
                "missing".into(),
                "".into(),
                crate::matrixio::Cell::Empty,
            ]);
        }
        for d in &self.dropped_redundant {
            t.push(vec![
                d.dropped.as_str().into(),
                "redundant".into(),
                d.retained.as_str().into(),
                d.r.into(),
            ]);
        }
        for g in &self.dropped_zero_variance {
            t.push(vec![
                g.as_str().into(),
                "zero variance".into(),
                "".into(),
                crate::matrixio::Cell::Empty,
            ]);
        }
        t
    }
}

/// Drops genes with more than `max_missing` missing cells.
pub fn filter_missing(m: &ExpressionMatrix, max_missing: usize) -> Result<(ExpressionMatrix, PreprocessLog)> {
    let mut keep = Vec::with_capacity(m.n_genes());
    let mut log = PreprocessLog::default();
    for j in 0..m.n_genes() {
        if m.missing_in_gene(j) > max_missing {
            log.dropped_missing.push(m.gene_ids()[j].clone());
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return Err(Error::invalid(format!(
            "every gene has more than {max_missing} missing values"
        )));
    }
    Ok((m.select_genes(&keep), log))
}

/// Replaces each missing cell with the mean of its gene's observed values.
pub fn impute_mean(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    if !m.has_missing() {
        return Ok(m.clone());
    }
    let (n, p) = (m.n_samples(), m.n_genes());
    let mask = m.missing_mask();
    let mut values = m.values().clone();
    for j in 0..p {
        let observed: Vec<f64> = (0..n).filter(|&i| !mask[(i, j)]).map(|i| values[(i, j)]).collect();
        if observed.len() == n {
            continue;
        }
        if observed.is_empty() {
            return Err(Error::invalid(format!(
                "gene '{}' has no observed values to impute from",
                m.gene_ids()[j]
            )));
        }
        let fill = stats::mean(&observed);
        for i in 0..n {
            if mask[(i, j)] {
                values[(i, j)] = fill;
            }
        }
    }
    let mut out = m.clone();
    out.replace_values(values, DMatrix::from_element(n, p, false));
    Ok(out)
}

/// Greedy redundancy pruning in column order.
///
/// A gene is dropped when |r| against any already-retained gene reaches
/// `threshold`. Constant genes have no correlation and are dropped as
/// zero-variance.
pub fn prune_redundant(m: &ExpressionMatrix, threshold: f64) -> Result<(ExpressionMatrix, PreprocessLog)> {
    if m.has_missing() {
        return Err(Error::invalid(
            "prune_redundant requires a matrix without missing values",
        ));
    }
    let mut log = PreprocessLog::default();
    let mut kept: Vec<usize> = Vec::new();
    let mut kept_units: Vec<Vec<f64>> = Vec::new();
    for j in 0..m.n_genes() {
        let Some(unit) = stats::center_unit(m.gene_column(j)) else {
            log.dropped_zero_variance.push(m.gene_ids()[j].clone());
            continue;
        };
        let hit = kept_units
            .iter()
            .enumerate()
            .map(|(k, u)| (k, stats::dot(u, &unit).clamp(-1.0, 1.0)))
            .find(|(_, r)| r.abs() >= threshold);
        match hit {
            Some((k, r)) => log.dropped_redundant.push(RedundantDrop {
                dropped: m.gene_ids()[j].clone(),
                retained: m.gene_ids()[kept[k]].clone(),
                r,
            }),
            None => {
                kept.push(j);
                kept_units.push(unit);
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("no gene survived redundancy pruning"));
    }
    Ok((m.select_genes(&kept), log))
}

/// Restricts both matrices to their shared genes in lexicographic order.
pub fn intersect_genes(a: &ExpressionMatrix, b: &ExpressionMatrix) -> Result<(ExpressionMatrix, ExpressionMatrix)> {
    let in_b: HashSet<&str> = b.gene_ids().iter().map(String::as_str).collect();
    let mut shared: Vec<&str> = a
        .gene_ids()
        .iter()
        .map(String::as_str)
        .filter(|g| in_b.contains(g))
        .collect();
    if shared.is_empty() {
        return Err(Error::invalid("the two matrices share no genes"));
    }
    shared.sort_unstable();
    Ok((a.select_gene_names(&shared)?, b.select_gene_names(&shared)?))
}

/// Standardizes each gene to mean 0 and sample standard deviation 1.
pub fn zscore(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    if m.has_missing() {
        return Err(Error::invalid("zscore requires a matrix without missing values"));
    }
    let (n, p) = (m.n_samples(), m.n_genes());
    if n < 2 {
        return Err(Error::invalid("zscore needs at least two samples"));
    }
    let mut values = m.values().clone();
    for j in 0..p {
        let col = m.gene_column(j);
        if stats::is_constant(col) {
            return Err(Error::invalid(format!(
                "gene '{}' has zero variance and cannot be z-scored",
                m.gene_ids()[j]
            )));
        }
        let mu = stats::mean(col);
        let sd = stats::sample_sd(col);
        for i in 0..n {
            values[(i, j)] = (col[i] - mu) / sd;
        }
    }
    let mut out = m.clone();
    out.replace_values(values, DMatrix::from_element(n, p, false));
    Ok(out)
}

/// Row-stacks two aligned datasets that share an identical gene list.
/// Sample ids get an omic suffix (`A549@rna`) so a cell line present in
/// both blocks stays unique.
pub fn merge_omics(a: &AlignedDataset, b: &AlignedDataset) -> Result<AlignedDataset> {
    let (ga, gb) = (a.matrix.gene_ids(), b.matrix.gene_ids());
    if ga != gb {
        let first = ga
            .iter()
            .zip(gb)
            .position(|(x, y)| x != y)
            .unwrap_or(ga.len().min(gb.len()));
        return Err(Error::invalid(format!(
            "gene lists differ ({} vs {} genes; first mismatch at position {}: {:?} vs {:?})",
            ga.len(),
            gb.len(),
            first,
            ga.get(first),
            gb.get(first)
        )));
    }
    let (na, nb, p) = (a.n_samples(), b.n_samples(), ga.len());
    let values = DMatrix::from_fn(na + nb, p, |i, j| {
        if i < na {
            a.matrix.values()[(i, j)]
        } else {
            b.matrix.values()[(i - na, j)]
        }
    });
    let missing = DMatrix::from_fn(na + nb, p, |i, j| {
        if i < na {
            a.matrix.missing_mask()[(i, j)]
        } else {
            b.matrix.missing_mask()[(i - na, j)]
        }
    });
    let (ta, tb) = merge_tags(a.provenance, b.provenance);
    let ids: Vec<String> = a
        .matrix
        .sample_ids()
        .iter()
        .map(|s| format!("{s}@{ta}"))
        .chain(b.matrix.sample_ids().iter().map(|s| format!("{s}@{tb}")))
        .collect();
    let matrix = ExpressionMatrix::new(ids, ga.to_vec(), values, missing)?;
    let labels = a.labels.iter().chain(&b.labels).copied().collect();
    AlignedDataset::new(matrix, labels, Omic::Combined)
}

fn merge_tags(a: Omic, b: Omic) -> (String, String) {
    if a == b {
        (format!("{}1", a.tag()), format!("{}2", b.tag()))
    } else {
        (a.tag().to_string(), b.tag().to_string())
    }
}

/// Per-omic cleaning: filter, impute, then prune.
pub fn clean(m: &ExpressionMatrix, cfg: &PreprocessConfig) -> Result<(ExpressionMatrix, PreprocessLog)> {
    cfg.validate()?;
    let (filtered, mut log) = filter_missing(m, cfg.max_missing)?;
    log.imputed_cells = filtered.missing_total();
    let imputed = impute_mean(&filtered)?;
    let ordered = if cfg.sort_genes {
        let mut order: Vec<usize> = (0..imputed.n_genes()).collect();
        order.sort_by(|&x, &y| imputed.gene_ids()[x].cmp(&imputed.gene_ids()[y]));
        imputed.select_genes(&order)
    } else {
        imputed
    };
    let (pruned, prune_log) = prune_redundant(&ordered, cfg.redundancy_threshold)?;
    log.absorb(prune_log);
    Ok((pruned, log))
}

/// Cleaned, gene-intersected and z-scored pair of omic datasets.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub transcriptome: AlignedDataset,
    pub proteome: AlignedDataset,
    pub transcriptome_log: PreprocessLog,
    pub proteome_log: PreprocessLog,
}

impl PreparedPair {
    pub fn combined(&self) -> Result<AlignedDataset> {
        merge_omics(&self.transcriptome, &self.proteome)
    }
}

/// Cleans one aligned dataset and z-scores it.
pub fn prepare_single(ds: &AlignedDataset, cfg: &PreprocessConfig) -> Result<(AlignedDataset, PreprocessLog)> {
    let (cleaned, log) = clean(&ds.matrix, cfg)?;
    Ok((ds.with_matrix(zscore(&cleaned)?), log))
}

/// Full two-omic preparation: clean each, intersect genes, z-score each.
pub fn prepare_pair(t: &AlignedDataset, p: &AlignedDataset, cfg: &PreprocessConfig) -> Result<PreparedPair> {
    let (ct, lt) = clean(&t.matrix, cfg)?;
    let (cp, lp) = clean(&p.matrix, cfg)?;
    let (it, ip) = intersect_genes(&ct, &cp)?;
    Ok(PreparedPair {
        transcriptome: t.with_matrix(zscore(&it)?),
        proteome: p.with_matrix(zscore(&ip)?),
        transcriptome_log: lt,
        proteome_log: lp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::pearson;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn from_columns(cols: &[Vec<f64>]) -> ExpressionMatrix {
        let n = cols[0].len();
        let flat: Vec<f64> = cols.iter().flatten().copied().collect();
        ExpressionMatrix::complete(
            ids("S", n),
            ids("G", cols.len()),
            DMatrix::from_column_slice(n, cols.len(), &flat),
        )
        .unwrap()
    }

    fn with_missing(n: usize, missing_per_gene: &[usize]) -> ExpressionMatrix {
        let p = missing_per_gene.len();
        let values = DMatrix::from_fn(n, p, |i, j| (i * 7 + j * 3) as f64);
        let mask = DMatrix::from_fn(n, p, |i, j| i < missing_per_gene[j]);
        ExpressionMatrix::new(ids("S", n), ids("G", p), values, mask).unwrap()
    }

    #[test]
    fn missing_threshold_boundary() {
        let m = with_missing(46, &[7, 6, 0]);
        let (out, log) = filter_missing(&m, 6).unwrap();
        assert_eq!(out.gene_ids(), ["G1", "G2"]);
        assert_eq!(log.dropped_missing, vec!["G0".to_string()]);
    }

    #[test]
    fn filter_without_missing_is_identity() {
        let m = with_missing(5, &[0, 0]);
        let (out, log) = filter_missing(&m, 6).unwrap();
        assert_eq!(out, m);
        assert!(log.dropped_missing.is_empty());
    }

    #[test]
    fn filter_everything_errors() {
        let m = with_missing(10, &[9, 8]);
        assert!(filter_missing(&m, 6).is_err());
    }

    #[test]
    fn impute_hand_means() {
        let values = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 3.0, 5.0, 0.0, 0.0]);
        let mask = DMatrix::from_column_slice(3, 2, &[false, true, false, false, true, true]);
        let m = ExpressionMatrix::new(ids("S", 3), ids("G", 2), values, mask).unwrap();
        let out = impute_mean(&m).unwrap();
        assert!(!out.has_missing());
        assert_eq!(out.gene_column(0), &[1.0, 2.0, 3.0]);
        assert_eq!(out.gene_column(1), &[5.0, 5.0, 5.0]);
    }

    #[test]
    fn impute_fully_missing_gene_errors() {
        let values = DMatrix::from_column_slice(2, 1, &[0.0, 0.0]);
        let mask = DMatrix::from_element(2, 1, true);
        let m = ExpressionMatrix::new(ids("S", 2), vec!["EMPTY".into()], values, mask).unwrap();
        let err = impute_mean(&m).unwrap_err();
        assert!(err.to_string().contains("EMPTY"));
    }

    #[test]
    fn duplicate_column_pruned() {
        let a = vec![1.0, 2.0, 4.0, 3.0];
        let m = from_columns(&[a.clone(), a]);
        let (out, log) = prune_redundant(&m, 0.7).unwrap();
        assert_eq!(out.gene_ids(), ["G0"]);
        assert_eq!(log.dropped_redundant[0].retained, "G0");
        assert!((log.dropped_redundant[0].r - 1.0).abs() < 1e-12);
    }

    // Orthonormal centered basis vectors on n = 4 samples.
    fn basis() -> [Vec<f64>; 3] {
        [
            vec![1.0, 1.0, -1.0, -1.0],
            vec![1.0, -1.0, 1.0, -1.0],
            vec![1.0, -1.0, -1.0, 1.0],
        ]
    }

    fn combo(c: &[f64], e: &[Vec<f64>]) -> Vec<f64> {
        (0..4).map(|i| c.iter().zip(e).map(|(w, v)| w * v[i]).sum()).collect()
    }

    #[test]
    fn pair_below_threshold_kept() {
        // r = 0.69 by construction: b = 0.69 e0 + sqrt(1 - 0.69^2) e1.
        let e = basis();
        let a = e[0].clone();
        let b = combo(&[0.69, (1.0f64 - 0.69 * 0.69).sqrt()], &e[..2]);
        assert!((pearson(&a, &b).unwrap() - 0.69).abs() < 1e-12);
        let (out, _) = prune_redundant(&from_columns(&[a, b]), 0.7).unwrap();
        assert_eq!(out.n_genes(), 2);
    }

    #[test]
    fn greedy_chain_compares_only_retained() {
        // unit vectors with r(a,b)=0.8, r(b,c)=0.8, r(a,c)=0.3
        let e = basis();
        let b1 = 0.8;
        let b2 = (1.0f64 - 0.64).sqrt();
        let c1 = 0.3;
        let c2 = (0.8 - b1 * c1) / b2;
        let c3 = (1.0 - c1 * c1 - c2 * c2).sqrt();
        let a = e[0].clone();
        let b = combo(&[b1, b2], &e[..2]);
        let c = combo(&[c1, c2, c3], &e);
        assert!((pearson(&a, &b).unwrap() - 0.8).abs() < 1e-12);
        assert!((pearson(&b, &c).unwrap() - 0.8).abs() < 1e-12);
        assert!((pearson(&a, &c).unwrap() - 0.3).abs() < 1e-12);
        let (out, log) = prune_redundant(&from_columns(&[a, b, c]), 0.7).unwrap();
        assert_eq!(out.gene_ids(), ["G0", "G2"]);
        assert_eq!(log.dropped_redundant.len(), 1);
        assert_eq!(log.dropped_redundant[0].dropped, "G1");
    }

    #[test]
    fn constant_gene_logged_as_zero_variance() {
        let m = from_columns(&[vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]]);
        let (out, log) = prune_redundant(&m, 0.7).unwrap();
        assert_eq!(out.gene_ids(), ["G0"]);
        assert_eq!(log.dropped_zero_variance, vec!["G1".to_string()]);
    }

    #[test]
    fn intersection_sorted() {
        let a = ExpressionMatrix::complete(
            ids("S", 2),
            vec!["X".into(), "Z".into(), "Y".into()],
            DMatrix::from_element(2, 3, 1.0),
        )
        .unwrap();
        let b = ExpressionMatrix::complete(
            ids("S", 2),
            vec!["W".into(), "Z".into(), "Y".into()],
            DMatrix::from_element(2, 3, 1.0),
        )
        .unwrap();
        let (ia, ib) = intersect_genes(&a, &b).unwrap();
        assert_eq!(ia.gene_ids(), ["Y", "Z"]);
        assert_eq!(ib.gene_ids(), ["Y", "Z"]);
        let c = ExpressionMatrix::complete(ids("S", 2), vec!["Q".into()], DMatrix::from_element(2, 1, 1.0)).unwrap();
        assert!(intersect_genes(&a, &c).is_err());
    }

    #[test]
    fn zscore_hand_column() {
        let m = from_columns(&[vec![1.0, 2.0, 3.0]]);
        let z = zscore(&m).unwrap();
        assert_eq!(z.gene_column(0), &[-1.0, 0.0, 1.0]);
        let zz = zscore(&z).unwrap();
        for (x, y) in z.gene_column(0).iter().zip(zz.gene_column(0)) {
            assert!((x - y).abs() < 1e-10);
        }
        let err = zscore(&from_columns(&[vec![2.0, 2.0, 2.0]])).unwrap_err();
        assert!(err.to_string().contains("G0"));
    }

    fn dataset(m: ExpressionMatrix, omic: Omic) -> AlignedDataset {
        let n = m.n_samples();
        AlignedDataset::new(m, (0..n).map(|i| 0.1 + 0.05 * i as f64).collect(), omic).unwrap()
    }

    #[test]
    fn merge_stacks_rows() {
        let a = dataset(
            from_columns(&[vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0]]),
            Omic::Transcriptome,
        );
        let b = dataset(from_columns(&[vec![5.0, 6.0], vec![1.0, 1.0]]), Omic::Proteome);
        let c = merge_omics(&a, &b).unwrap();
        assert_eq!(c.n_samples(), 5);
        assert_eq!(c.provenance, Omic::Combined);
        assert_eq!(c.matrix.sample_ids()[0], "S0@rna");
        assert_eq!(c.matrix.sample_ids()[3], "S0@prot");
        assert_eq!(c.labels.len(), 5);

        let self_merge = merge_omics(&a, &a).unwrap();
        assert_eq!(self_merge.n_samples(), 6);
        let mut l1 = self_merge.labels.clone();
        l1.sort_by(f64::total_cmp);
        let mut l2: Vec<f64> = a.labels.iter().chain(&a.labels).copied().collect();
        l2.sort_by(f64::total_cmp);
        assert_eq!(l1, l2);
    }

    #[test]
    fn merge_rejects_gene_order_mismatch() {
        let a = dataset(from_columns(&[vec![1.0, 2.0], vec![0.0, 1.0]]), Omic::Transcriptome);
        let swapped = a.matrix.select_genes(&[1, 0]);
        let b = dataset(swapped, Omic::Proteome);
        assert!(merge_omics(&a, &b).is_err());
    }
}
