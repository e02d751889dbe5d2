//! Seeded synthetic datasets with planted sparse signals and paired omics.
//!
//! All randomness comes from a single ChaCha8 stream seeded with
//! `SynthConfig::seed`, so generated data is identical across platforms.

mod oracle;

pub use oracle::{oracle_lasso, oracle_svr, ORACLE_LASSO_MAX_P, ORACLE_SVR_MAX_N};

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixio::{AlignedDataset, ExpressionMatrix, Omic};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples_a: usize,
    pub n_samples_b: usize,
    pub n_genes: usize,
    pub n_signal: usize,
    pub signal_magnitude: f64,
    pub noise_sd: f64,
    pub cross_omic_rho: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Preset::Recovery.config(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Recovery,
    Concordance,
    TinyQp,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recovery" => Ok(Preset::Recovery),
            "concordance" => Ok(Preset::Concordance),
            "tiny-qp" => Ok(Preset::TinyQp),
            other => Err(Error::invalid(format!(
                "unknown preset '{other}' (expected recovery, concordance or tiny-qp)"
            ))),
        }
    }
}

impl Preset {
    pub fn config(self, seed: u64) -> SynthConfig {
        match self {
            Preset::Recovery => SynthConfig {
                n_samples_a: 80,
                n_samples_b: 80,
                n_genes: 500,
                n_signal: 10,
                signal_magnitude: 1.0,
                noise_sd: 0.1,
                cross_omic_rho: 0.4,
                missing_rate: 0.0,
                seed,
            },
            Preset::Concordance => SynthConfig {
                n_samples_a: 46,
                n_samples_b: 46,
                n_genes: 500,
                n_signal: 10,
                signal_magnitude: 1.0,
                noise_sd: 0.1,
                cross_omic_rho: 0.4,
                missing_rate: 0.0,
                seed,
            },
            Preset::TinyQp => SynthConfig {
                n_samples_a: 8,
                n_samples_b: 8,
                n_genes: 3,
                n_signal: 3,
                signal_magnitude: 1.0,
                noise_sd: 0.1,
                cross_omic_rho: 0.5,
                missing_rate: 0.0,
                seed,
            },
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples_a < 3 || self.n_genes == 0 {
            return Err(Error::invalid("synthetic data needs at least 3 samples and 1 gene"));
        }
        if self.n_samples_b > self.n_samples_a {
            return Err(Error::invalid(format!(
                "n_samples_b ({}) exceeds n_samples_a ({})",
                self.n_samples_b, self.n_samples_a
            )));
        }
        if self.n_signal > self.n_genes {
            return Err(Error::invalid(format!(
                "n_signal ({}) exceeds n_genes ({})",
                self.n_signal, self.n_genes
            )));
        }
        if !(self.noise_sd >= 0.0) || !(self.signal_magnitude >= 0.0) {
            return Err(Error::invalid("noise_sd and signal_magnitude must be non-negative"));
        }
        if !(-1.0..=1.0).contains(&self.cross_omic_rho) {
            return Err(Error::invalid("cross_omic_rho must lie in [-1, 1]"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::invalid("missing_rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub planted: Vec<String>,
    pub planted_indices: Vec<usize>,
    /// Length n_genes; zero off the planted set.
    pub coefficients: Vec<f64>,
    /// Affine map applied to the raw response: label = offset + scale·y.
    pub label_offset: f64,
    pub label_scale: f64,
    pub description: String,
}

pub fn sample_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("CL{i:04}")).collect()
}

pub fn gene_ids(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("G{j:05}")).collect()
}

/// n × p matrix of independent standard normal draws, filled column by column.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(n, p, data)
}

/// Coefficients linearly spaced in [m, 2m] with random signs.
fn planted_coefficients<R: Rng + ?Sized>(rng: &mut R, k: usize, m: f64) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let mag = if k > 1 {
                m * (1.0 + i as f64 / (k - 1) as f64)
            } else {
                m
            };
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Affine map of `y` onto [0.05, 0.95]; a constant response maps to 0.5.
fn squash(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return (vec![0.5; y.len()], 0.5, 0.0);
    }
    let scale = 0.9 / (hi - lo);
    let offset = 0.05 - lo * scale;
    (y.iter().map(|v| offset + scale * v).collect(), offset, scale)
}

fn inject_missing<R: Rng + ?Sized>(rng: &mut R, values: &mut DMatrix<f64>, rate: f64) -> DMatrix<bool> {
    let mut mask = DMatrix::from_element(values.nrows(), values.ncols(), false);
    if rate > 0.0 {
        for (v, m) in values.iter_mut().zip(mask.iter_mut()) {
            if rng.random::<f64>() < rate {
                *v = f64::NAN;
                *m = true;
            }
        }
    }
    mask
}

/// Draws omic a, its planted linear response, and omic b as a noisy copy of
/// a on the first `n_samples_b` cell lines.
pub fn generate(cfg: &SynthConfig) -> Result<(AlignedDataset, AlignedDataset, SynthTruth)> {
    cfg.validate()?;
    let (na, nb, p, k) = (cfg.n_samples_a, cfg.n_samples_b, cfg.n_genes, cfg.n_signal);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let xa = gaussian_matrix(&mut rng, na, p);
    let mut planted_indices = sample(&mut rng, p, k).into_vec();
    planted_indices.sort_unstable();
    let mags = planted_coefficients(&mut rng, k, cfg.signal_magnitude);
    let mut coefficients = vec![0.0; p];
    for (&j, &b) in planted_indices.iter().zip(&mags) {
        coefficients[j] = b;
    }
    let raw: Vec<f64> = (0..na)
        .map(|i| {
            let signal: f64 = planted_indices.iter().map(|&j| xa[(i, j)] * coefficients[j]).sum();
            let noise: f64 = rng.sample(StandardNormal);
            signal + cfg.noise_sd * noise
        })
        .collect();
    let (labels, label_offset, label_scale) = squash(&raw);

    let e = gaussian_matrix(&mut rng, nb, p);
    let rho = cfg.cross_omic_rho;
    let resid = (1.0 - rho * rho).max(0.0).sqrt();
    let mut xb = DMatrix::from_fn(nb, p, |i, j| rho * xa[(i, j)] + resid * e[(i, j)]);

    let mut xa = xa;
    let mask_a = inject_missing(&mut rng, &mut xa, cfg.missing_rate);
    let mask_b = inject_missing(&mut rng, &mut xb, cfg.missing_rate);

    let genes = gene_ids(p);
    let ids = sample_ids(na);
    let a = AlignedDataset::new(
        ExpressionMatrix::new(ids.clone(), genes.clone(), xa, mask_a)?,
        labels.clone(),
        Omic::Transcriptome,
    )?;
    let b = AlignedDataset::new(
        ExpressionMatrix::new(ids[..nb].to_vec(), genes.clone(), xb, mask_b)?,
        labels[..nb].to_vec(),
        Omic::Proteome,
    )?;
    let truth = SynthTruth {
        planted: planted_indices.iter().map(|&j| genes[j].clone()).collect(),
        planted_indices,
        coefficients,
        label_offset,
        label_scale,
        description: format!(
            "a ~ N(0,1) {na}x{p}; y = a*beta + {}*N(0,1) with {k} planted |beta| in [{m}, {m2}]; \
             label = {label_offset} + {label_scale}*y; b = {rho}*a + {resid}*N(0,1) on first {nb} samples; \
             missing_rate = {}",
            cfg.noise_sd,
            cfg.missing_rate,
            m = cfg.signal_magnitude,
            m2 = 2.0 * cfg.signal_magnitude,
        ),
    };
    Ok((a, b, truth))
}

/// Noiseless sparse regression instance whose nuisance columns are
/// orthogonal to the planted columns (and to the intercept).
///
/// Planted columns are standard normal; nuisance columns are standard normal
/// draws projected off span{1, X_planted} and rescaled to unit variance. The
/// response is X_planted·β with β spaced in [m, 2m].
pub fn orthogonal_nuisance_instance(
    n: usize,
    p: usize,
    k: usize,
    magnitude: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<f64>, Vec<usize>)> {
    if k == 0 || k > p || k + 1 >= n {
        return Err(Error::invalid(format!(
            "need 0 < k < n - 1 and k <= p (n={n}, p={p}, k={k})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planted = sample(&mut rng, p, k).into_vec();
    planted.sort_unstable();
    let mags = planted_coefficients(&mut rng, k, magnitude);
    let xs = gaussian_matrix(&mut rng, n, k);

    let basis = DMatrix::from_fn(n, k + 1, |i, c| if c == 0 { 1.0 } else { xs[(i, c - 1)] });
    let q = basis.qr().q();

    let mut x = DMatrix::zeros(n, p);
    let mut next = 0;
    for j in 0..p {
        if planted.binary_search(&j).is_ok() {
            x.set_column(j, &xs.column(next));
            next += 1;
        } else {
            let g = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let proj = &g - &q * (q.transpose() * &g);
            let sd = (proj.norm_squared() / (n - 1) as f64).sqrt();
            x.set_column(j, &(proj / sd));
        }
    }
    let y: Vec<f64> = (0..n)
        .map(|i| planted.iter().zip(&mags).map(|(&j, b)| x[(i, j)] * b).sum())
        .collect();
    Ok((x, y, planted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::rna_protein_concordance;

    #[test]
    fn deterministic_under_seed() {
        let cfg = Preset::TinyQp.config(5);
        let (a1, b1, t1) = generate(&cfg).unwrap();
        let (a2, b2, t2) = generate(&cfg).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!(t1, t2);
        let (a3, _, t3) = generate(&Preset::TinyQp.config(6)).unwrap();
        assert_ne!(a1.matrix.values(), a3.matrix.values());
        assert_eq!(t1.planted.len(), t3.planted.len());
        assert_eq!(t1.coefficients.len(), t3.coefficients.len());
    }

    #[test]
    fn labels_in_unit_interval() {
        let (a, b, truth) = generate(&Preset::Recovery.config(1)).unwrap();
        assert!(a.labels.iter().all(|&y| y > 0.0 && y <= 1.0));
        assert_eq!(b.labels, a.labels[..b.n_samples()].to_vec());
        assert_eq!(truth.planted.len(), 10);
        let nonzero = truth.coefficients.iter().filter(|c| **c != 0.0).count();
        assert_eq!(nonzero, 10);
        for &j in &truth.planted_indices {
            assert!((1.0..=2.0).contains(&truth.coefficients[j].abs()));
        }
    }

    #[test]
    fn rho_one_is_perfect_concordance() {
        let mut cfg = Preset::Concordance.config(2);
        cfg.cross_omic_rho = 1.0;
        let (a, b, _) = generate(&cfg).unwrap();
        let rep = rna_protein_concordance(&a, &b).unwrap();
        assert!((rep.median_r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_cells_are_masked() {
        let mut cfg = Preset::TinyQp.config(3);
        cfg.n_samples_a = 40;
        cfg.n_samples_b = 40;
        cfg.missing_rate = 0.3;
        let (a, _, _) = generate(&cfg).unwrap();
        let miss = a.matrix.missing_total();
        assert!(miss > 0 && miss < 120);
        for (v, m) in a.matrix.values().iter().zip(a.matrix.missing_mask().iter()) {
            assert_eq!(v.is_nan(), *m);
        }
    }

    #[test]
    fn degenerate_configs_rejected() {
        let mut cfg = Preset::TinyQp.config(0);
        cfg.n_signal = 4;
        assert!(generate(&cfg).is_err());
        let mut cfg = Preset::TinyQp.config(0);
        cfg.n_samples_b = 9;
        assert!(generate(&cfg).is_err());
        let mut cfg = Preset::TinyQp.config(0);
        cfg.noise_sd = -1.0;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn nuisance_columns_orthogonal() {
        let (x, y, planted) = orthogonal_nuisance_instance(20, 40, 5, 1.0, 9).unwrap();
        let ym = y.iter().sum::<f64>() / 20.0;
        for j in 0..40 {
            if planted.contains(&j) {
                continue;
            }
            let col = x.column(j);
            assert!(col.sum().abs() < 1e-10);
            let dot: f64 = col.iter().zip(&y).map(|(a, b)| a * (b - ym)).sum();
            assert!(dot.abs() < 1e-9);
        }
    }
}
