//! Regression metrics, t-based confidence intervals and the repeated
//! k-fold evaluation harness around the linear SVR.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::matrixio::{AlignedDataset, CsvTable, Omic, Report};
use crate::selection::{make_folds, FeatureRanking};
use crate::stats;
use crate::svr::{default_c_grid, grid_search_c, svr_predict, svr_train, take_rows, SvrConfig};

/// Coefficient of determination, `1 − SS_res / SS_tot`. Not clamped.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::invalid(format!(
            "{} targets vs {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::invalid("r_squared needs at least two samples"));
    }
    let mean = stats::mean(y);
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("r_squared is undefined for constant targets"));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::invalid(format!(
            "{} targets vs {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("rmse of empty vectors"));
    }
    let ss: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// Two-sided t interval for the mean: `mean ± t(df = m−1) · sd / √m`, with
/// the quantile from `statrs`' Student t inverse CDF.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::invalid("confidence interval needs at least two samples"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let m = samples.len() as f64;
    let mean = stats::mean(samples);
    let sd = stats::sample_sd(samples);
    if sd == 0.0 {
        return Ok((mean, mean));
    }
    let t = StudentsT::new(0.0, 1.0, m - 1.0)
        .map_err(|e| Error::Numerical(e.to_string()))?
        .inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let half = t * sd / m.sqrt();
    Ok((mean - half, mean + half))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r_squared: f64,
    pub rmse: f64,
    pub n: usize,
}

impl Metrics {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self> {
        Ok(Self {
            r_squared: r_squared(y, yhat)?,
            rmse: rmse(y, yhat)?,
            n: y.len(),
        })
    }
}

impl Report for Metrics {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["r_squared", "rmse", "n"]);
        t.push(vec![self.r_squared.into(), self.rmse.into(), self.n.into()]);
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// Grid-search C inside every outer training fold.
    #[default]
    Nested,
    /// Grid-search C once on the full dataset and reuse it for every fold.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub folds: usize,
    pub repeats: usize,
    pub inner_folds: usize,
    pub c_grid: Vec<f64>,
    pub grid_mode: GridMode,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 10,
            inner_folds: 3,
            c_grid: default_c_grid(),
            grid_mode: GridMode::Nested,
            confidence: 0.95,
            seed: 0,
        }
    }
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 || self.inner_folds < 2 {
            return Err(Error::invalid("folds and inner_folds must be at least 2"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::invalid("c_grid must be a non-empty list of positive values"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid("confidence must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Seed for the inner grid-search split of outer iteration `it`.
    fn inner_seed(&self, it: usize) -> u64 {
        self.seed ^ (it as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub raw: Vec<f64>,
}

impl MetricSummary {
    pub fn from_samples(raw: Vec<f64>, level: f64) -> Result<Self> {
        let mean = stats::mean(&raw);
        let (lo, hi) = confidence_interval(&raw, level)?;
        Ok(Self {
            mean,
            ci_low: lo.min(mean),
            ci_high: hi.max(mean),
            raw,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub gene_id: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub omic: Omic,
    pub genes: Vec<String>,
    pub gene_count: usize,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub r_squared: MetricSummary,
    pub rmse: MetricSummary,
    /// C chosen in each outer iteration.
    pub chosen_c: Vec<f64>,
    /// SVR weight per gene averaged over iterations.
    pub weights: Vec<WeightSummary>,
}

impl Report for CvReport {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["iteration", "repeat", "fold", "r_squared", "rmse", "c"]);
        for i in 0..self.r_squared.raw.len() {
            t.push(vec![
                i.into(),
                (i / self.folds).into(),
                (i % self.folds).into(),
                self.r_squared.raw[i].into(),
                self.rmse.raw[i].into(),
                self.chosen_c[i].into(),
            ]);
        }
        t
    }
}

struct FoldOutcome {
    r2: f64,
    rmse: f64,
    c: f64,
    weights: Vec<f64>,
}

/// Repeated k-fold SVR evaluation restricted to `genes`.
pub fn cross_validate<S: AsRef<str>>(
    ds: &AlignedDataset,
    genes: &[S],
    cfg: &EvaluateConfig,
    svr: &SvrConfig,
) -> Result<CvReport> {
    cfg.validate()?;
    if genes.is_empty() {
        return Err(Error::invalid("no genes given for evaluation"));
    }
    let sub = ds.restrict_genes(genes)?;
    let x = sub.matrix.values();
    let y = &sub.labels;
    let splits = make_folds(sub.n_samples(), cfg.folds, cfg.repeats, cfg.seed)?;
    let global_c = match cfg.grid_mode {
        GridMode::Global => {
            Some(grid_search_c(x, y, &cfg.c_grid, cfg.inner_folds, cfg.inner_seed(usize::MAX >> 1), svr)?.best_c)
        }
        GridMode::Nested => None,
    };

    let outcomes: Vec<FoldOutcome> = splits
        .par_iter()
        .enumerate()
        .map(|(it, split)| {
            let (xt, yt) = take_rows(x, y, &split.train);
            let (xv, yv) = take_rows(x, y, &split.validation);
            let c = match global_c {
                Some(c) => c,
                None => grid_search_c(&xt, &yt, &cfg.c_grid, cfg.inner_folds, cfg.inner_seed(it), svr)?.best_c,
            };
            let model = svr_train(&xt, &yt, &svr.with_c(c))?;
            let pred = svr_predict(&model, &xv)?;
            Ok(FoldOutcome {
                r2: r_squared(&yv, &pred)?,
                rmse: rmse(&yv, &pred)?,
                c,
                weights: model.weights,
            })
        })
        .collect::<Result<_>>()?;

    let weights = sub
        .matrix
        .gene_ids()
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let w: Vec<f64> = outcomes.iter().map(|o| o.weights[j]).collect();
            let s = MetricSummary::from_samples(w, cfg.confidence)?;
            Ok(WeightSummary {
                gene_id: g.clone(),
                mean: s.mean,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
            })
        })
        .collect::<Result<_>>()?;

    Ok(CvReport {
        omic: ds.provenance,
        genes: sub.matrix.gene_ids().to_vec(),
        gene_count: sub.n_genes(),
        folds: cfg.folds,
        repeats: cfg.repeats,
        seed: cfg.seed,
        r_squared: MetricSummary::from_samples(outcomes.iter().map(|o| o.r2).collect(), cfg.confidence)?,
        rmse: MetricSummary::from_samples(outcomes.iter().map(|o| o.rmse).collect(), cfg.confidence)?,
        chosen_c: outcomes.iter().map(|o| o.c).collect(),
        weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Which dataset's ranking supplied the genes.
    pub model: String,
    /// Dataset the genes were evaluated on.
    pub dataset: Omic,
    pub gene_count: usize,
    pub r2_mean: f64,
    pub r2_ci_low: f64,
    pub r2_ci_high: f64,
    pub rmse_mean: f64,
    pub rmse_ci_low: f64,
    pub rmse_ci_high: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn extend(&mut self, other: SweepReport) {
        self.rows.extend(other.rows);
    }

    /// Row with the highest mean R² for the given model/dataset block.
    pub fn best(&self, model: &str, dataset: Omic) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.model == model && r.dataset == dataset)
            .max_by(|a, b| a.r2_mean.total_cmp(&b.r2_mean).then(b.gene_count.cmp(&a.gene_count)))
    }
}

impl Report for SweepReport {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "model",
            "dataset",
            "gene_count",
            "r2_mean",
            "r2_ci_low",
            "r2_ci_high",
            "rmse_mean",
            "rmse_ci_low",
            "rmse_ci_high",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.model.as_str().into(),
                r.dataset.as_str().into(),
                r.gene_count.into(),
                r.r2_mean.into(),
                r.r2_ci_low.into(),
                r.r2_ci_high.into(),
                r.rmse_mean.into(),
                r.rmse_ci_low.into(),
                r.rmse_ci_high.into(),
            ]);
        }
        t
    }
}

/// Cross-validates the top-N genes of `ranking` for N = 1..=max_count.
pub fn sweep_gene_count(
    ds: &AlignedDataset,
    ranking: &FeatureRanking,
    max_count: usize,
    model: &str,
    cfg: &EvaluateConfig,
    svr: &SvrConfig,
) -> Result<SweepReport> {
    if max_count == 0 {
        return Err(Error::invalid("max_count must be at least 1"));
    }
    if ranking.entries.len() < max_count {
        return Err(Error::invalid(format!(
            "ranking has {} genes, sweep needs {max_count}",
            ranking.entries.len()
        )));
    }
    let mut rows = Vec::with_capacity(max_count);
    for count in 1..=max_count {
        let rep = cross_validate(ds, &ranking.top(count), cfg, svr)?;
        rows.push(SweepRow {
            model: model.to_string(),
            dataset: ds.provenance,
            gene_count: count,
            r2_mean: rep.r_squared.mean,
            r2_ci_low: rep.r_squared.ci_low,
            r2_ci_high: rep.r_squared.ci_high,
            rmse_mean: rep.rmse.mean,
            rmse_ci_low: rep.rmse.ci_low,
            rmse_ci_high: rep.rmse.ci_high,
        });
    }
    Ok(SweepReport { rows })
}

/// Fits on every `source` sample (C by inner grid search) and scores the
/// model on every `target` sample.
pub fn cross_evaluate<S: AsRef<str>>(
    source: &AlignedDataset,
    target: &AlignedDataset,
    genes: &[S],
    cfg: &EvaluateConfig,
    svr: &SvrConfig,
) -> Result<Metrics> {
    cfg.validate()?;
    let src = source.restrict_genes(genes)?;
    let tgt = target.restrict_genes(genes)?;
    let x = src.matrix.values();
    let c = grid_search_c(x, &src.labels, &cfg.c_grid, cfg.inner_folds, cfg.inner_seed(0), svr)?.best_c;
    let model = svr_train(x, &src.labels, &svr.with_c(c))?;
    let pred = svr_predict(&model, tgt.matrix.values())?;
    Metrics::compute(&tgt.labels, &pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn r_squared_cases() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert_eq!(r_squared(&y, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r_squared(&y, &[1.1, 2.0, 2.9]).unwrap() - 0.99).abs() < 1e-12);
        assert!(r_squared(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(r_squared(&[1.0], &[1.0]).is_err());
        assert!(r_squared(&y, &[1.0]).is_err());
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[], &[]).is_err());
        let a = rmse(&[0.1, 0.7, 0.3], &[0.2, 0.5, 0.35]).unwrap();
        let b = rmse(&[5.1, 5.7, 5.3], &[5.2, 5.5, 5.35]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ci_cases() {
        assert_eq!(confidence_interval(&[0.3; 5], 0.95).unwrap(), (0.3, 0.3));
        let (lo, hi) = confidence_interval(&[-1.0, 1.0], 0.95).unwrap();
        assert!((lo + hi).abs() < 1e-12 && hi > 0.0);
        assert!(confidence_interval(&[1.0], 0.95).is_err());
    }

    proptest! {
        #[test]
        fn metric_identities(pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40)) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yhat: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let e = rmse(&y, &yhat).unwrap();
            let ss: f64 = y.iter().zip(&yhat).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!((e * e * y.len() as f64 - ss).abs() < 1e-10 * ss.max(1.0));
            if let Ok(r2) = r_squared(&y, &yhat) {
                prop_assert!(r2 <= 1.0);
            }
        }

        #[test]
        fn ci_brackets_mean(xs in proptest::collection::vec(-10.0f64..10.0, 2..60)) {
            let s = MetricSummary::from_samples(xs, 0.95).unwrap();
            prop_assert!(s.ci_low <= s.mean && s.mean <= s.ci_high);
        }
    }
}
