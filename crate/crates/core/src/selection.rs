//! Frequency-ranked Lasso feature selection over repeated k-fold splits.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{fit_with_support_traced, LambdaTrace, LassoConfig};
use crate::matrixio::{AlignedDataset, CsvTable, Report};
use crate::svr::take_rows;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub folds: usize,
    pub repeats: usize,
    pub support_k: usize,
    pub top_per_iter: usize,
    pub final_count: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 10,
            support_k: 30,
            top_per_iter: 20,
            final_count: 20,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn iterations(&self) -> usize {
        self.folds * self.repeats
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.support_k == 0 || self.top_per_iter == 0 || self.final_count == 0 {
            return Err(Error::invalid(
                "support_k, top_per_iter and final_count must be positive",
            ));
        }
        if self.top_per_iter > self.support_k {
            return Err(Error::invalid(format!(
                "top_per_iter ({}) exceeds support_k ({})",
                self.top_per_iter, self.support_k
            )));
        }
        Ok(())
    }
}

/// One train/validation split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Repeated k-fold partitions of `0..n`.
///
/// A single ChaCha8 stream seeded with `seed` drives one Fisher–Yates
/// shuffle (`rand` 0.9 `SliceRandom::shuffle`) per repeat; the shuffled
/// order is cut into `folds` contiguous blocks whose sizes differ by at
/// most one, larger blocks first. Index lists are returned sorted.
pub fn make_folds(n: usize, folds: usize, repeats: usize, seed: u64) -> Result<Vec<Split>> {
    if folds < 2 {
        return Err(Error::invalid(format!("folds must be at least 2, got {folds}")));
    }
    if n < folds {
        return Err(Error::invalid(format!("{n} samples cannot fill {folds} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(folds * repeats);
    for repeat in 0..repeats {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let (base, extra) = (n / folds, n % folds);
        let mut start = 0;
        let mut owner = vec![0usize; n];
        for fold in 0..folds {
            let size = base + usize::from(fold < extra);
            for &i in &perm[start..start + size] {
                owner[i] = fold;
            }
            start += size;
        }
        for fold in 0..folds {
            let (validation, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| owner[i] == fold);
            out.push(Split {
                repeat,
                fold,
                train,
                validation,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGene {
    pub gene_id: String,
    /// Fraction of iterations in which the gene made the per-iteration top list.
    pub importance: f64,
    pub selection_count: usize,
    /// Mean |coefficient| over the iterations where the gene was selected.
    pub mean_abs_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    /// The final ranked panel.
    pub entries: Vec<RankedGene>,
    /// Every gene selected at least once, in rank order.
    pub tallies: Vec<RankedGene>,
    pub iterations: usize,
    pub truncated_iterations: usize,
}

impl FeatureRanking {
    pub fn genes(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.gene_id.clone()).collect()
    }

    pub fn top(&self, n: usize) -> Vec<String> {
        self.entries.iter().take(n).map(|e| e.gene_id.clone()).collect()
    }
}

impl Report for FeatureRanking {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "rank",
            "gene_id",
            "importance",
            "selection_count",
            "mean_abs_coefficient",
        ]);
        for (i, e) in self.entries.iter().enumerate() {
            t.push(vec![
                (i + 1).into(),
                e.gene_id.as_str().into(),
                e.importance.into(),
                e.selection_count.into(),
                e.mean_abs_coefficient.into(),
            ]);
        }
        t
    }
}

fn rank_order(a: &RankedGene, b: &RankedGene) -> Ordering {
    b.importance
        .total_cmp(&a.importance)
        .then(b.mean_abs_coefficient.total_cmp(&a.mean_abs_coefficient))
        .then(a.gene_id.cmp(&b.gene_id))
}

struct IterationPick {
    picks: Vec<(usize, f64)>,
    truncated: bool,
    trace: LambdaTrace,
}

pub fn select_features(ds: &AlignedDataset, cfg: &SelectionConfig, lasso: &LassoConfig) -> Result<FeatureRanking> {
    select_features_traced(ds, cfg, lasso).map(|(r, _)| r)
}

/// Runs the selection and also returns the λ-bisection trace of every
/// iteration.
pub fn select_features_traced(
    ds: &AlignedDataset,
    cfg: &SelectionConfig,
    lasso: &LassoConfig,
) -> Result<(FeatureRanking, Vec<LambdaTrace>)> {
    cfg.validate()?;
    let lasso = LassoConfig {
        target_support: cfg.support_k,
        ..*lasso
    };
    let splits = make_folds(ds.n_samples(), cfg.folds, cfg.repeats, cfg.seed)?;
    let x = ds.matrix.values();
    let genes = ds.matrix.gene_ids();

    let picks: Vec<IterationPick> = splits
        .par_iter()
        .enumerate()
        .map(|(it, split)| {
            let (xt, yt) = take_rows(x, &ds.labels, &split.train);
            let (fit, trace) = fit_with_support_traced(&xt, &yt, cfg.support_k, &lasso)
                .map_err(|e| Error::Numerical(format!("selection iteration {it}: {e}")))?;
            let mut order = fit.support.clone();
            order.sort_by(|&a, &b| {
                fit.coefficients[b]
                    .abs()
                    .total_cmp(&fit.coefficients[a].abs())
                    .then(genes[a].cmp(&genes[b]))
            });
            order.truncate(cfg.top_per_iter);
            Ok(IterationPick {
                picks: order.iter().map(|&j| (j, fit.coefficients[j].abs())).collect(),
                truncated: fit.truncated,
                trace,
            })
        })
        .collect::<Result<_>>()?;

    let iterations = splits.len();
    let mut counts: HashMap<usize, (usize, f64)> = HashMap::new();
    for p in &picks {
        for &(j, c) in &p.picks {
            let e = counts.entry(j).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += c;
        }
    }
    let mut tallies: Vec<RankedGene> = counts
        .into_iter()
        .map(|(j, (count, sum))| RankedGene {
            gene_id: genes[j].clone(),
            importance: count as f64 / iterations as f64,
            selection_count: count,
            mean_abs_coefficient: sum / count as f64,
        })
        .collect();
    tallies.sort_by(rank_order);
    let entries = tallies.iter().take(cfg.final_count).cloned().collect();
    let ranking = FeatureRanking {
        entries,
        tallies,
        iterations,
        truncated_iterations: picks.iter().filter(|p| p.truncated).count(),
    };
    Ok((ranking, picks.into_iter().map(|p| p.trace).collect()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub gene_id: String,
    pub rank_a: usize,
    pub rank_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub shared: Vec<OverlapRow>,
}

impl Report for OverlapReport {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["gene_id", "rank_a", "rank_b"]);
        for r in &self.shared {
            t.push(vec![r.gene_id.as_str().into(), r.rank_a.into(), r.rank_b.into()]);
        }
        t
    }
}

/// Genes present in both final panels with their 1-based ranks, ordered by
/// rank in `a`.
pub fn ranking_overlap(a: &FeatureRanking, b: &FeatureRanking) -> OverlapReport {
    let in_b: HashMap<&str, usize> = b
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.gene_id.as_str(), i + 1))
        .collect();
    let shared = a
        .entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            in_b.get(e.gene_id.as_str()).map(|&rb| OverlapRow {
                gene_id: e.gene_id.clone(),
                rank_a: i + 1,
                rank_b: rb,
            })
        })
        .collect();
    OverlapReport { shared }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixio::{ExpressionMatrix, Omic};
    use crate::synth::gaussian_matrix;
    use std::collections::HashSet;

    #[test]
    fn partition_law() {
        let splits = make_folds(10, 5, 1, 42).unwrap();
        assert_eq!(splits.len(), 5);
        let mut seen = HashSet::new();
        for s in &splits {
            assert_eq!(s.validation.len(), 2);
            assert_eq!(s.train.len(), 8);
            for &i in &s.validation {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 10);
        assert_eq!(make_folds(10, 5, 1, 42).unwrap(), splits);
        assert_ne!(make_folds(10, 5, 1, 43).unwrap(), splits);
    }

    #[test]
    fn seventy_three_samples_fold_sizes() {
        let splits = make_folds(73, 5, 10, 7).unwrap();
        assert_eq!(splits.len(), 50);
        for rep in 0..10 {
            let mut covered = vec![0; 73];
            for s in splits.iter().filter(|s| s.repeat == rep) {
                assert!(s.validation.len() == 14 || s.validation.len() == 15);
                for &i in &s.validation {
                    covered[i] += 1;
                }
            }
            assert!(covered.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn fold_preconditions() {
        assert!(make_folds(3, 5, 1, 0).is_err());
        assert!(make_folds(10, 1, 1, 0).is_err());
    }

    fn named(gene_ids: &[&str]) -> FeatureRanking {
        let entries = gene_ids
            .iter()
            .map(|g| RankedGene {
                gene_id: g.to_string(),
                importance: 1.0,
                selection_count: 1,
                mean_abs_coefficient: 1.0,
            })
            .collect::<Vec<_>>();
        FeatureRanking {
            tallies: entries.clone(),
            entries,
            iterations: 1,
            truncated_iterations: 0,
        }
    }

    #[test]
    fn overlap_cases() {
        let a = named(&["A", "B", "C"]);
        let full = ranking_overlap(&a, &a);
        assert_eq!(full.shared.len(), 3);
        assert!(full.shared.iter().all(|r| r.rank_a == r.rank_b));
        assert!(ranking_overlap(&a, &named(&["X", "Y"])).shared.is_empty());

        let t = named(&["KDM2A", "PPIG", "CCDC47"]);
        let p = named(&[
            "PSIP1", "AQR", "HS1BP3", "SLC35B2", "GOSR1", "MRPS14", "CD276", "PRPF40A", "GOLPH3", "DHX8", "KDM2A",
        ]);
        let o = ranking_overlap(&t, &p);
        assert_eq!(
            o.shared,
            vec![OverlapRow {
                gene_id: "KDM2A".into(),
                rank_a: 1,
                rank_b: 11
            }]
        );
    }

    #[test]
    fn saturation_gives_unit_importance() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, p) = (40, 6);
        let x = gaussian_matrix(&mut rng, n, p);
        let coefs = [1.0, -0.8, 0.6, -0.5, 0.4, 0.3];
        let y: Vec<f64> = (0..n).map(|i| (0..p).map(|j| coefs[j] * x[(i, j)]).sum()).collect();
        let m = ExpressionMatrix::complete(
            (0..n).map(|i| format!("S{i}")).collect(),
            (0..p).map(|j| format!("G{j}")).collect(),
            x,
        )
        .unwrap();
        let ds = AlignedDataset::new(m, y, Omic::Transcriptome).unwrap();
        let cfg = SelectionConfig {
            support_k: p,
            top_per_iter: p,
            final_count: p,
            repeats: 2,
            ..SelectionConfig::default()
        };
        let r = select_features(&ds, &cfg, &LassoConfig::default()).unwrap();
        assert_eq!(r.entries.len(), p);
        assert!(r.entries.iter().all(|e| e.importance == 1.0));
        let total: usize = r.tallies.iter().map(|e| e.selection_count).sum();
        assert_eq!(total, cfg.iterations() * cfg.top_per_iter);
    }

    #[test]
    fn config_validation() {
        let bad = SelectionConfig {
            top_per_iter: 31,
            ..SelectionConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SelectionConfig {
            folds: 1,
            ..SelectionConfig::default()
        }
        .validate()
        .is_err());
    }
}
