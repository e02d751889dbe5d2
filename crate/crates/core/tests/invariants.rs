//! Cross-module invariants, mostly as property tests.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use radsens_core::analysis::{pairwise_heatmap_stats, pearson, vif, VifValue};
use radsens_core::lasso::{lasso_fit, lasso_objective, LassoConfig};
use radsens_core::matrixio::{
    match_samples, parse_expression_matrix, render_expression_matrix, AlignedDataset, ExpressionMatrix, Omic,
    Orientation,
};
use radsens_core::preprocess::{clean, prune_redundant, zscore, PreprocessConfig};
use radsens_core::selection::{select_features, SelectionConfig};
use radsens_core::svr::{svr_train, SvrConfig, SvrModel};
use radsens_core::synth::{gaussian_matrix, generate, oracle_lasso, oracle_svr, Preset, SynthConfig};

fn ids(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}

fn matrix_strategy() -> impl Strategy<Value = ExpressionMatrix> {
    (2usize..7, 2usize..7).prop_flat_map(|(n, p)| {
        (
            proptest::collection::vec(-1e6f64..1e6, n * p),
            proptest::collection::vec(proptest::bool::weighted(0.15), n * p),
        )
            .prop_map(move |(vals, miss)| {
                ExpressionMatrix::new(
                    ids("S", n),
                    ids("G", p),
                    DMatrix::from_vec(n, p, vals),
                    DMatrix::from_vec(n, p, miss),
                )
                .unwrap()
            })
    })
}

fn same_matrix(a: &ExpressionMatrix, b: &ExpressionMatrix) -> bool {
    a.sample_ids() == b.sample_ids()
        && a.gene_ids() == b.gene_ids()
        && a.missing_mask() == b.missing_mask()
        && a.values()
            .iter()
            .zip(b.values().iter())
            .all(|(x, y)| x == y || (x.is_nan() && y.is_nan()))
}

fn dual_objective(model: &SvrModel, y: &[f64]) -> f64 {
    let w2: f64 = model.weights.iter().map(|w| w * w).sum();
    let lin: f64 = model
        .dual_coefficients
        .iter()
        .zip(y)
        .map(|(b, yi)| model.config.epsilon * b.abs() - yi * b)
        .sum();
    0.5 * w2 + lin
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_round_trip(m in matrix_strategy(), genes_as_rows in any::<bool>()) {
        let o = if genes_as_rows { Orientation::GenesAsRows } else { Orientation::SamplesAsRows };
        let back = parse_expression_matrix(&render_expression_matrix(&m, o), o).unwrap();
        prop_assert!(same_matrix(&m, &back));
    }

    #[test]
    fn match_is_idempotent(seed in 0u64..500) {
        let (a, _, _) = generate(&SynthConfig { n_genes: 5, n_signal: 2, ..Preset::TinyQp.config(seed) }).unwrap();
        let table = a.label_table();
        let again = match_samples(&a.matrix, &table, Omic::Transcriptome).unwrap();
        let twice = match_samples(&again.matrix, &again.label_table(), Omic::Transcriptome).unwrap();
        prop_assert_eq!(again, twice);
    }

    #[test]
    fn zscore_keeps_correlations(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = gaussian_matrix(&mut rng, 12, 3).map(|v| 3.0 * v + 7.0);
        let m = ExpressionMatrix::complete(ids("S", 12), ids("G", 3), raw).unwrap();
        let z = zscore(&m).unwrap();
        let r_raw = pearson(m.gene_column(0), m.gene_column(1)).unwrap();
        let r_z = pearson(z.gene_column(0), z.gene_column(1)).unwrap();
        prop_assert!((r_raw - r_z).abs() < 1e-12);
    }

    #[test]
    fn pruning_matches_greedy_replay(seed in 0u64..500, threshold in 0.2f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = gaussian_matrix(&mut rng, 15, 3);
        let noise = gaussian_matrix(&mut rng, 15, 8);
        // Mixtures of three sources give a spread of pairwise correlations.
        let x = DMatrix::from_fn(15, 8, |i, j| base[(i, j % 3)] + 0.7 * noise[(i, j)]);
        let m = ExpressionMatrix::complete(ids("S", 15), ids("G", 8), x).unwrap();
        let (kept, _) = prune_redundant(&m, threshold).unwrap();

        let mut replay: Vec<usize> = Vec::new();
        for j in 0..8 {
            let col = m.gene_column(j);
            if replay.iter().all(|&k| pearson(m.gene_column(k), col).unwrap().abs() < threshold) {
                replay.push(j);
            }
        }
        let names: Vec<String> = replay.iter().map(|&j| format!("G{j}")).collect();
        prop_assert_eq!(kept.gene_ids(), &names[..]);
        for a in 0..kept.n_genes() {
            for b in a + 1..kept.n_genes() {
                prop_assert!(pearson(kept.gene_column(a), kept.gene_column(b)).unwrap().abs() < threshold);
            }
        }
    }

    #[test]
    fn vif_at_least_one_and_histogram_complete(seed in 0u64..500, k in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian_matrix(&mut rng, 20, k);
        let m = ExpressionMatrix::complete(ids("S", 20), ids("G", k), x).unwrap();
        let ds = AlignedDataset::new(m, vec![0.5; 20], Omic::Proteome).unwrap();
        for rec in vif(&ds).unwrap().records {
            if let VifValue::Finite(v) = rec.vif {
                prop_assert!(v >= 1.0 - 1e-12);
            }
        }
        let heat = pairwise_heatmap_stats(&ds).unwrap();
        prop_assert_eq!(heat.histogram.iter().sum::<usize>(), k * (k - 1) / 2);
        for a in 0..k {
            for b in 0..k {
                prop_assert_eq!(heat.matrix[a][b], heat.matrix[b][a]);
            }
        }
    }

    #[test]
    fn oracles_never_beaten(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian_matrix(&mut rng, 8, 3);
        let y: Vec<f64> = gaussian_matrix(&mut rng, 8, 1).iter().map(|v| 0.5 + 0.2 * v).collect();

        let lambda = 0.05;
        let ours = lasso_fit(&x, &y, lambda).unwrap();
        let reference = oracle_lasso(&x, &y, lambda).unwrap();
        prop_assert!(
            lasso_objective(&x, &y, &reference, lambda).unwrap()
                <= lasso_objective(&x, &y, &ours.coefficients, lambda).unwrap() + 1e-6
        );

        let model = svr_train(&x, &y, &SvrConfig::default()).unwrap();
        let reference = oracle_svr(&x, &y, 1.0, 0.1).unwrap();
        prop_assert!(dual_objective(&reference, &y) <= dual_objective(&model, &y) + 1e-6);
    }
}

#[test]
fn cleaning_is_idempotent() {
    let (a, _, _) = generate(&SynthConfig {
        n_genes: 60,
        missing_rate: 0.03,
        ..Preset::Concordance.config(9)
    })
    .unwrap();
    let cfg = PreprocessConfig::default();
    let (once, _) = clean(&a.matrix, &cfg).unwrap();
    let (twice, _) = clean(&once, &cfg).unwrap();
    assert!(same_matrix(&once, &twice));
    let z = zscore(&once).unwrap();
    let zz = zscore(&z).unwrap();
    assert!(z
        .values()
        .iter()
        .zip(zz.values().iter())
        .all(|(p, q)| (p - q).abs() < 1e-10));
}

#[test]
fn synth_shapes_depend_only_on_config() {
    let (a0, b0, t0) = generate(&Preset::Concordance.config(0)).unwrap();
    let (a1, b1, t1) = generate(&Preset::Concordance.config(1)).unwrap();
    assert_ne!(a0.labels, a1.labels);
    assert_eq!(a0.matrix.values().shape(), a1.matrix.values().shape());
    assert_eq!(b0.matrix.values().shape(), b1.matrix.values().shape());
    assert_eq!(t0.planted.len(), t1.planted.len());
    assert_eq!(t0.coefficients.len(), t1.coefficients.len());
}

#[test]
fn stronger_signal_never_loses_planted_genes() {
    let cfg = SelectionConfig {
        repeats: 2,
        seed: 1,
        ..SelectionConfig::default()
    };
    let mut hits = Vec::new();
    for magnitude in [0.02, 0.1, 1.0] {
        let (a, _, truth) = generate(&SynthConfig {
            n_genes: 200,
            signal_magnitude: magnitude,
            ..Preset::Recovery.config(1)
        })
        .unwrap();
        let top = select_features(&a, &cfg, &LassoConfig::default()).unwrap().genes();
        hits.push(truth.planted.iter().filter(|g| top.contains(g)).count());
    }
    assert!(
        hits.windows(2).all(|w| w[0] <= w[1]),
        "planted hits along the ladder: {hits:?}"
    );
}
