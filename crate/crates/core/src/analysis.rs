//! Correlation and collinearity diagnostics over selected gene panels, plus
//! clonogenic survival arithmetic and linear–quadratic curve fitting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixio::{AlignedDataset, Cell, CsvTable, Report};
use crate::stats;

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "pearson on lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::invalid("pearson needs at least three observations"));
    }
    if stats::is_constant(x) || stats::is_constant(y) {
        return Err(Error::invalid("pearson is undefined for a constant vector"));
    }
    let (mx, my) = (stats::mean(x), stats::mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    pub gene_id: String,
    pub r: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub records: Vec<CorrelationRecord>,
    pub median_r: f64,
}

impl Report for CorrelationReport {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["gene_id", "r", "n"]);
        for rec in &self.records {
            t.push(vec![rec.gene_id.as_str().into(), rec.r.into(), rec.n.into()]);
        }
        t
    }
}

fn report(records: Vec<CorrelationRecord>) -> CorrelationReport {
    let rs: Vec<f64> = records.iter().map(|r| r.r).collect();
    let median_r = if rs.is_empty() { f64::NAN } else { stats::median(&rs) };
    CorrelationReport { records, median_r }
}

/// Per-gene RNA/protein correlation across matched cell lines.
///
/// Genes that are constant within the shared samples are skipped.
pub fn rna_protein_concordance(t: &AlignedDataset, p: &AlignedDataset) -> Result<CorrelationReport> {
    if t.matrix.gene_ids() != p.matrix.gene_ids() {
        return Err(Error::invalid("concordance requires identical gene lists"));
    }
    let p_rows: std::collections::HashMap<&str, usize> = p
        .matrix
        .sample_ids()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if p_rows.len() != t.n_samples() {
        return Err(Error::invalid(format!(
            "sample sets differ: {} vs {} samples",
            t.n_samples(),
            p_rows.len()
        )));
    }
    let pairs = t
        .matrix
        .sample_ids()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            p_rows
                .get(s.as_str())
                .map(|&k| (i, k))
                .ok_or_else(|| Error::invalid(format!("sample '{s}' missing from second omic")))
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.len() < 3 {
        return Err(Error::invalid("concordance needs at least three shared samples"));
    }
    let mut records = Vec::with_capacity(t.n_genes());
    for (j, g) in t.matrix.gene_ids().iter().enumerate() {
        let a: Vec<f64> = pairs.iter().map(|&(i, _)| t.matrix.values()[(i, j)]).collect();
        let b: Vec<f64> = pairs.iter().map(|&(_, k)| p.matrix.values()[(k, j)]).collect();
        if let Ok(r) = pearson(&a, &b) {
            records.push(CorrelationRecord {
                gene_id: g.clone(),
                r,
                n: pairs.len(),
            });
        }
    }
    Ok(report(records))
}

/// Correlation of each named gene with the SF2 labels. Negative r marks
/// genes whose higher expression goes with lower survival fraction.
pub fn gene_label_correlations<S: AsRef<str>>(ds: &AlignedDataset, genes: &[S]) -> Result<CorrelationReport> {
    let sub = ds.restrict_genes(genes)?;
    let records = sub
        .matrix
        .gene_ids()
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let r = pearson(sub.matrix.gene_column(j), &sub.labels)
                .map_err(|e| Error::invalid(format!("gene '{g}': {e}")))?;
            Ok(CorrelationRecord {
                gene_id: g.clone(),
                r,
                n: sub.n_samples(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(report(records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionRow {
    pub selected: String,
    pub substitute: String,
    pub r_to_gene: f64,
    pub r_to_label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionTable {
    pub r_gene_threshold: f64,
    pub r_label_threshold: f64,
    pub rows: Vec<SubstitutionRow>,
}

impl Report for SubstitutionTable {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["selected", "substitute", "r_to_gene", "r_to_label"]);
        for r in &self.rows {
            t.push(vec![
                r.selected.as_str().into(),
                r.substitute.as_str().into(),
                r.r_to_gene.into(),
                r.r_to_label.into(),
            ]);
        }
        t
    }
}

/// Pool genes correlated with a selected gene (|r| ≥ `r_gene`) and with the
/// labels (|r| ≥ `r_label`). The pool is every gene in `ds` that is neither
/// selected nor in `excluded`.
pub fn substitution_candidates<S: AsRef<str>>(
    ds: &AlignedDataset,
    selected: &[S],
    r_gene: f64,
    r_label: f64,
    excluded: &[S],
) -> Result<SubstitutionTable> {
    let index = ds.matrix.gene_index();
    let sel_cols = selected
        .iter()
        .map(|g| {
            index
                .get(g.as_ref())
                .copied()
                .ok_or_else(|| Error::invalid(format!("gene '{}' not present in matrix", g.as_ref())))
        })
        .collect::<Result<Vec<_>>>()?;
    let skip: std::collections::HashSet<&str> = selected.iter().chain(excluded).map(|g| g.as_ref()).collect();

    // Label correlation once per pool gene; constant genes never qualify.
    let pool: Vec<(usize, f64)> = ds
        .matrix
        .gene_ids()
        .iter()
        .enumerate()
        .filter(|(_, g)| !skip.contains(g.as_str()))
        .filter_map(|(j, _)| pearson(ds.matrix.gene_column(j), &ds.labels).ok().map(|r| (j, r)))
        .filter(|(_, r)| r.abs() >= r_label)
        .collect();

    let mut rows = Vec::new();
    for (s, &sc) in selected.iter().zip(&sel_cols) {
        let mut found: Vec<SubstitutionRow> = pool
            .iter()
            .filter_map(|&(j, rl)| {
                let rg = pearson(ds.matrix.gene_column(j), ds.matrix.gene_column(sc)).ok()?;
                (rg.abs() >= r_gene).then(|| SubstitutionRow {
                    selected: s.as_ref().to_string(),
                    substitute: ds.matrix.gene_ids()[j].clone(),
                    r_to_gene: rg,
                    r_to_label: rl,
                })
            })
            .collect();
        found.sort_by(|a, b| {
            b.r_to_gene
                .abs()
                .total_cmp(&a.r_to_gene.abs())
                .then(a.substitute.cmp(&b.substitute))
        });
        rows.extend(found);
    }
    Ok(SubstitutionTable {
        r_gene_threshold: r_gene,
        r_label_threshold: r_label,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum VifValue {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifRecord {
    pub gene_id: String,
    pub vif: VifValue,
}

impl VifRecord {
    pub fn value(&self) -> f64 {
        match self.vif {
            VifValue::Finite(v) => v,
            VifValue::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifReport {
    pub records: Vec<VifRecord>,
    pub max_vif: f64,
}

impl Report for VifReport {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["gene_id", "vif", "infinite"]);
        for r in &self.records {
            let (v, inf) = match r.vif {
                VifValue::Finite(v) => (Cell::Real(v), false),
                VifValue::Infinite => (Cell::Empty, true),
            };
            t.push(vec![r.gene_id.as_str().into(), v, inf.into()]);
        }
        t
    }
}

const COLLINEAR_TOL: f64 = 1e-10;

/// Variance inflation factors from auxiliary OLS regressions (with
/// intercept) of each gene on the others.
pub fn vif(ds: &AlignedDataset) -> Result<VifReport> {
    let (n, k) = (ds.n_samples(), ds.n_genes());
    if k < 2 {
        return Err(Error::invalid("vif needs at least two genes"));
    }
    if n <= k {
        return Err(Error::invalid(format!("vif needs more samples ({n}) than genes ({k})")));
    }
    let x = ds.matrix.values();
    let mut records = Vec::with_capacity(k);
    for j in 0..k {
        let target = DVector::from_column_slice(ds.matrix.gene_column(j));
        let design = DMatrix::from_fn(n, k, |i, c| {
            if c == 0 {
                1.0
            } else {
                let col = if c <= j { c - 1 } else { c };
                x[(i, col)]
            }
        });
        let svd = design.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let coef = svd
            .solve(&target, smax * 1e-12)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let fitted = &design * coef;
        let mean = target.mean();
        let ss_tot: f64 = target.iter().map(|v| (v - mean) * (v - mean)).sum();
        let ss_res: f64 = target.iter().zip(fitted.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if ss_tot == 0.0 {
            return Err(Error::invalid(format!(
                "gene '{}' is constant",
                ds.matrix.gene_ids()[j]
            )));
        }
        let tolerance = ss_res / ss_tot;
        let vif = if tolerance <= COLLINEAR_TOL {
            VifValue::Infinite
        } else {
            VifValue::Finite(1.0 / tolerance)
        };
        records.push(VifRecord {
            gene_id: ds.matrix.gene_ids()[j].clone(),
            vif,
        });
    }
    let max_vif = records.iter().map(VifRecord::value).fold(f64::NEG_INFINITY, f64::max);
    Ok(VifReport { records, max_vif })
}

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapStats {
    pub genes: Vec<String>,
    /// Row-major k × k correlation matrix.
    pub matrix: Vec<Vec<f64>>,
    pub mean_abs_offdiag: f64,
    pub sd_abs_offdiag: f64,
    /// Lower edges of the 0.1-wide bins over [−1, 1].
    pub bin_edges: Vec<f64>,
    pub histogram: Vec<usize>,
}

impl Report for HeatmapStats {
    fn csv_table(&self) -> CsvTable {
        let mut header = vec!["gene_id"];
        header.extend(self.genes.iter().map(String::as_str));
        let mut t = CsvTable::new(&header);
        for (g, row) in self.genes.iter().zip(&self.matrix) {
            let mut cells: Vec<Cell> = vec![g.as_str().into()];
            cells.extend(row.iter().map(|&r| Cell::Real(r)));
            t.push(cells);
        }
        t
    }
}

/// Histogram of correlation values as its own report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramView<'a>(pub &'a HeatmapStats);

impl Report for HistogramView<'_> {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["bin_low", "bin_high", "count"]);
        for (lo, c) in self.0.bin_edges.iter().zip(&self.0.histogram) {
            t.push(vec![(*lo).into(), (lo + 0.1).into(), (*c).into()]);
        }
        t
    }
}

fn bin_of(r: f64) -> usize {
    (((r + 1.0) * 10.0).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn pairwise_heatmap_stats(ds: &AlignedDataset) -> Result<HeatmapStats> {
    let k = ds.n_genes();
    if k < 2 {
        return Err(Error::invalid("heatmap needs at least two genes"));
    }
    let mut matrix = vec![vec![0.0; k]; k];
    let mut abs = Vec::with_capacity(k * (k - 1) / 2);
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for a in 0..k {
        matrix[a][a] = 1.0;
        for b in a + 1..k {
            let r = pearson(ds.matrix.gene_column(a), ds.matrix.gene_column(b)).map_err(|e| {
                Error::invalid(format!(
                    "genes '{}'/'{}': {e}",
                    ds.matrix.gene_ids()[a],
                    ds.matrix.gene_ids()[b]
                ))
            })?;
            matrix[a][b] = r;
            matrix[b][a] = r;
            abs.push(r.abs());
            histogram[bin_of(r)] += 1;
        }
    }
    let sd = if abs.len() > 1 { stats::sample_sd(&abs) } else { 0.0 };
    Ok(HeatmapStats {
        genes: ds.matrix.gene_ids().to_vec(),
        matrix,
        mean_abs_offdiag: stats::mean(&abs),
        sd_abs_offdiag: sd,
        bin_edges: (0..HISTOGRAM_BINS).map(|i| -1.0 + 0.1 * i as f64).collect(),
        histogram,
    })
}

pub fn plating_efficiency(control_colonies: f64, control_plated: f64) -> Result<f64> {
    if !(control_plated > 0.0) {
        return Err(Error::invalid("control plated count must be positive"));
    }
    if !(control_colonies >= 0.0) {
        return Err(Error::invalid("colony count must be non-negative"));
    }
    Ok(control_colonies / control_plated)
}

/// Surviving fraction: colonies / (plated · PE).
pub fn clonogenic_sf(colonies: f64, plated: f64, pe: f64) -> Result<f64> {
    if !(plated > 0.0) || !(pe > 0.0) {
        return Err(Error::invalid("plated count and plating efficiency must be positive"));
    }
    if !(colonies >= 0.0) {
        return Err(Error::invalid("colony count must be non-negative"));
    }
    Ok(colonies / (plated * pe))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqFit {
    /// Gy⁻¹
    pub alpha: f64,
    /// Gy⁻²
    pub beta: f64,
    pub sf2: f64,
    /// Residual sum of squares on the log-survival scale.
    pub residual_sse: f64,
}

/// S(d) = exp(−(αd + βd²)).
pub fn sf_at_dose(fit: &LqFit, dose: f64) -> f64 {
    (-(fit.alpha * dose + fit.beta * dose * dose)).exp()
}

/// Least-squares linear–quadratic fit on log survival with the curve forced
/// through S(0) = 1; dose-0 points are therefore dropped.
pub fn lq_fit(doses: &[f64], survivals: &[f64]) -> Result<LqFit> {
    if doses.len() != survivals.len() {
        return Err(Error::invalid("dose and survival lists differ in length"));
    }
    let mut rows = Vec::new();
    for (&d, &s) in doses.iter().zip(survivals) {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::invalid(format!("invalid dose {d}")));
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("surviving fraction {s} must be positive")));
        }
        if d > 0.0 {
            rows.push((d, s.ln()));
        }
    }
    let mut distinct: Vec<f64> = rows.iter().map(|r| r.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("lq_fit needs at least two distinct positive doses"));
    }
    let design = DMatrix::from_fn(rows.len(), 2, |i, c| {
        let d = rows[i].0;
        if c == 0 {
            -d
        } else {
            -d * d
        }
    });
    let target = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&target, 1e-14)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let resid = &target - &design * &coef;
    let (alpha, beta) = (coef[0], coef[1]);
    Ok(LqFit {
        alpha,
        beta,
        sf2: (-(2.0 * alpha + 4.0 * beta)).exp(),
        residual_sse: resid.norm_squared(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqRow {
    pub cell_line: String,
    pub fit: LqFit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LqReport {
    pub rows: Vec<LqRow>,
}

impl Report for LqReport {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["cell_line", "alpha", "beta", "sf2", "residual_sse"]);
        for r in &self.rows {
            t.push(vec![
                r.cell_line.as_str().into(),
                r.fit.alpha.into(),
                r.fit.beta.into(),
                r.fit.sf2.into(),
                r.fit.residual_sse.into(),
            ]);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixio::{ExpressionMatrix, Omic};
    use proptest::prelude::*;

    fn ds_from(cols: &[Vec<f64>], labels: Vec<f64>) -> AlignedDataset {
        let n = cols[0].len();
        let flat: Vec<f64> = cols.iter().flatten().copied().collect();
        let m = ExpressionMatrix::complete(
            (0..n).map(|i| format!("S{i}")).collect(),
            (0..cols.len()).map(|j| format!("G{j}")).collect(),
            DMatrix::from_column_slice(n, cols.len(), &flat),
        )
        .unwrap();
        AlignedDataset::new(m, labels, Omic::Transcriptome).unwrap()
    }

    #[test]
    fn pearson_hand_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn pearson_symmetric_affine(
            xy in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..30),
            a in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0],
            b in -5.0f64..5.0,
        ) {
            let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
            let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
            prop_assume!(!stats::is_constant(&x) && !stats::is_constant(&y));
            let r = pearson(&x, &y).unwrap();
            prop_assert!((r - pearson(&y, &x).unwrap()).abs() < 1e-12);
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&ax, &y).unwrap() - a.signum() * r).abs() < 1e-9);
        }
    }

    #[test]
    fn label_correlations_signs() {
        let y = vec![0.2, 0.5, 0.3, 0.9];
        let neg: Vec<f64> = y.iter().map(|v| 4.0 - v).collect();
        let ds = ds_from(&[y.clone(), neg], y);
        let rep = gene_label_correlations(&ds, &["G0", "G1"]).unwrap();
        assert!((rep.records[0].r - 1.0).abs() < 1e-12);
        assert!((rep.records[1].r + 1.0).abs() < 1e-12);
        assert!(gene_label_correlations(&ds, &["NOPE"]).is_err());
    }

    #[test]
    fn concordance_copy_and_negation() {
        let cols = vec![vec![1.0, 2.0, 4.0, 3.0], vec![0.5, 0.1, 0.2, 0.9]];
        let t = ds_from(&cols, vec![0.1, 0.2, 0.3, 0.4]);
        let rep = rna_protein_concordance(&t, &t).unwrap();
        assert!(rep.records.iter().all(|r| (r.r - 1.0).abs() < 1e-12));
        assert!((rep.median_r - 1.0).abs() < 1e-12);
        let negated: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| -v).collect()).collect();
        let p = ds_from(&negated, vec![0.1, 0.2, 0.3, 0.4]);
        let rep = rna_protein_concordance(&t, &p).unwrap();
        assert!(rep.records.iter().all(|r| (r.r + 1.0).abs() < 1e-12));
    }

    #[test]
    fn substitution_thresholds() {
        // Orthonormal centered basis on 4 samples lets r be set exactly.
        let e = [[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
        let mix = |c: [f64; 3]| -> Vec<f64> { (0..4).map(|i| (0..3).map(|k| c[k] * e[k][i]).sum()).collect() };
        let label = mix([1.0, 0.0, 0.0]);
        let sel = mix([0.6, 0.8, 0.0]);
        let copy = sel.clone();
        // r to selected = 0.39, r to label = 0.6
        let c3 = (1.0f64 - 0.36).sqrt();
        let near = {
            let b: f64 = (0.39 - 0.6 * 0.6) / 0.8;
            let c = (1.0 - 0.36 - b * b).sqrt();
            mix([0.6, b, c])
        };
        let labels: Vec<f64> = label.iter().map(|v| 0.5 + 0.1 * v).collect();
        let ds = ds_from(&[sel, copy, near, mix([0.6, 0.0, c3])], labels);
        assert!((pearson(ds.matrix.gene_column(2), ds.matrix.gene_column(0)).unwrap() - 0.39).abs() < 1e-12);
        let tab = substitution_candidates(&ds, &["G0"], 0.4, 0.2, &[]).unwrap();
        assert_eq!(tab.rows[0].substitute, "G1");
        assert!(tab.rows.iter().all(|r| r.substitute != "G2"));
        assert!(tab
            .rows
            .iter()
            .all(|r| r.r_to_gene.abs() >= 0.4 && r.r_to_label.abs() >= 0.2));
    }

    #[test]
    fn vif_cases() {
        let e = [
            vec![1.0, 1.0, -1.0, -1.0, 0.0],
            vec![1.0, -1.0, 1.0, -1.0, 0.0],
            vec![1.0, -1.0, -1.0, 1.0, 0.0],
        ];
        let y = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        let orth = vif(&ds_from(&e, y.clone())).unwrap();
        for r in &orth.records {
            assert!((r.value() - 1.0).abs() < 1e-9);
        }
        let sum: Vec<f64> = (0..5).map(|i| e[0][i] + e[1][i]).collect();
        let col = vif(&ds_from(&[e[0].clone(), e[1].clone(), sum], y.clone())).unwrap();
        assert_eq!(col.records[2].vif, VifValue::Infinite);

        // r = 0.6 pair → 1 / (1 - 0.36)
        let b: Vec<f64> = (0..5).map(|i| 0.6 * e[0][i] + 0.8 * e[1][i]).collect();
        let pair = vif(&ds_from(&[e[0].clone(), b], y.clone())).unwrap();
        for r in &pair.records {
            assert!((r.value() - 1.5625).abs() < 1e-9);
        }
        assert!(vif(&ds_from(&[e[0][..2].to_vec(), e[1][..2].to_vec()], vec![0.1, 0.2])).is_err());
    }

    #[test]
    fn heatmap_cases() {
        let g = vec![1.0, 2.0, 4.0, 3.0];
        let same = pairwise_heatmap_stats(&ds_from(&[g.clone(), g], vec![0.1; 4])).unwrap();
        assert_eq!(same.mean_abs_offdiag, 1.0);
        assert_eq!(same.sd_abs_offdiag, 0.0);
        assert_eq!(same.histogram[19], 1);

        let e = [
            vec![1.0, 1.0, -1.0, -1.0],
            vec![1.0, -1.0, 1.0, -1.0],
            vec![1.0, -1.0, -1.0, 1.0],
        ];
        let orth = pairwise_heatmap_stats(&ds_from(&e, vec![0.1; 4])).unwrap();
        assert!(orth.mean_abs_offdiag < 1e-12);
        assert_eq!(orth.histogram.iter().sum::<usize>(), 3);
        for a in 0..3 {
            assert_eq!(orth.matrix[a][a], 1.0);
            for b in 0..3 {
                assert_eq!(orth.matrix[a][b], orth.matrix[b][a]);
            }
        }
    }

    #[test]
    fn clonogenic_hand_cases() {
        assert_eq!(clonogenic_sf(100.0, 100.0, 1.0).unwrap(), 1.0);
        assert_eq!(plating_efficiency(100.0, 200.0).unwrap(), 0.5);
        assert_eq!(clonogenic_sf(50.0, 400.0, 0.5).unwrap(), 0.25);
        assert!(clonogenic_sf(1.0, 0.0, 0.5).is_err());
        assert!(clonogenic_sf(1.0, 10.0, 0.0).is_err());
        assert!(plating_efficiency(1.0, 0.0).is_err());
    }

    #[test]
    fn lq_recovery_and_errors() {
        let doses = [0.0, 1.0, 2.0, 3.0, 4.0];
        let sf: Vec<f64> = doses.iter().map(|d: &f64| (-(0.5 * d + 0.05 * d * d)).exp()).collect();
        let fit = lq_fit(&doses, &sf).unwrap();
        assert!((fit.alpha - 0.5).abs() < 1e-6);
        assert!((fit.beta - 0.05).abs() < 1e-6);
        assert!((fit.sf2 - (-1.2f64).exp()).abs() < 1e-9);
        assert_eq!(sf_at_dose(&fit, 0.0), 1.0);
        assert!(lq_fit(&[1.0, 2.0], &[0.5, 0.0]).is_err());
        assert!(lq_fit(&[0.0, 2.0, 2.0], &[1.0, 0.4, 0.41]).is_err());
    }
}
