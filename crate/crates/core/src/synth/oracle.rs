//! Slow reference solvers for small problems, written independently of the
//! production solvers so the two can be checked against each other.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::svr::{assemble, SvrConfig, SvrModel};

pub const ORACLE_LASSO_MAX_P: usize = 12;
pub const ORACLE_SVR_MAX_N: usize = 10;
const ORACLE_MAX_ITER: usize = 500_000;
const ORACLE_STATIONARITY: f64 = 1e-8;

/// Exhaustive Lasso solve: for every sign pattern s ∈ {−1, 0, +1}^p the
/// stationarity equations on the active block are solved directly, and the
/// candidate with the smallest objective wins. Every candidate is a feasible
/// point, so the minimum is the global optimum whenever the restricted Gram
/// blocks are nonsingular.
pub fn oracle_lasso(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if p > ORACLE_LASSO_MAX_P {
        return Err(Error::invalid(format!(
            "oracle_lasso enumerates sign patterns and supports p <= {ORACLE_LASSO_MAX_P}, got {p}"
        )));
    }
    if y.len() != n || n == 0 {
        return Err(Error::invalid("oracle_lasso: label length mismatch"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let nf = n as f64;
    let ym = y.iter().sum::<f64>() / nf;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        let m = col.sum() / nf;
        col.add_scalar_mut(-m);
    }
    let gram = xc.transpose() * &xc / nf;
    let corr = xc.transpose() * &yc / nf;
    let objective = |beta: &DVector<f64>| -> f64 {
        let r = &yc - &xc * beta;
        r.norm_squared() / (2.0 * nf) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    };

    let mut best = DVector::zeros(p);
    let mut best_obj = objective(&best);
    let mut signs = vec![0i8; p];
    let total = 3usize.pow(p as u32);
    for code in 0..total {
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        if active.is_empty() {
            continue;
        }
        let k = active.len();
        let g = DMatrix::from_fn(k, k, |a, b| gram[(active[a], active[b])]);
        let rhs = DVector::from_fn(k, |a, _| corr[active[a]] - lambda * signs[active[a]] as f64);
        let Some(chol) = g.cholesky() else { continue };
        let sol = chol.solve(&rhs);
        let mut beta = DVector::zeros(p);
        for (a, &j) in active.iter().enumerate() {
            beta[j] = sol[a];
        }
        let obj = objective(&beta);
        if obj < best_obj {
            best_obj = obj;
            best = beta;
        }
    }
    Ok(best.iter().copied().collect())
}

/// Dense accelerated projected-gradient solve of the ε-SVR dual, followed by
/// an exact bias solve on the primal loss with the weights held fixed.
pub fn oracle_svr(x: &DMatrix<f64>, y: &[f64], c: f64, epsilon: f64) -> Result<SvrModel> {
    let n = x.nrows();
    if n > ORACLE_SVR_MAX_N {
        return Err(Error::invalid(format!(
            "oracle_svr is a dense reference solver for n <= {ORACLE_SVR_MAX_N}, got {n}"
        )));
    }
    if y.len() != n || n < 2 {
        return Err(Error::invalid(
            "oracle_svr: need at least two samples and matching labels",
        ));
    }
    if !(c > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::invalid(
            "oracle_svr: C must be positive and epsilon non-negative",
        ));
    }
    let k = x * x.transpose();
    // Hessian of the doubled dual is [[K, -K], [-K, K]]; its norm is 2‖K‖.
    let lip = 2.0 * k.symmetric_eigenvalues().amax().max(1e-12);
    let step = 1.0 / lip;

    // z = (a, a*), dual objective ½ βᵀKβ + ε Σ(a + a*) − yᵀβ with β = a − a*.
    let grad = |z: &[f64]| -> Vec<f64> {
        let beta: Vec<f64> = (0..n).map(|i| z[i] - z[i + n]).collect();
        let mut g = vec![0.0; 2 * n];
        for i in 0..n {
            let kb: f64 = (0..n).map(|j| k[(i, j)] * beta[j]).sum();
            g[i] = kb + epsilon - y[i];
            g[i + n] = -kb + epsilon + y[i];
        }
        g
    };
    let objective = |z: &[f64]| -> f64 {
        let beta: Vec<f64> = (0..n).map(|i| z[i] - z[i + n]).collect();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += beta[i] * k[(i, j)] * beta[j];
            }
        }
        0.5 * q
            + (0..n)
                .map(|i| epsilon * (z[i] + z[i + n]) - y[i] * beta[i])
                .sum::<f64>()
    };

    // Gradient-mapping norm: zero exactly at a constrained optimum.
    let stationarity = |z: &[f64]| -> f64 {
        let g = grad(z);
        let cand: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        project(&cand, n, c)
            .iter()
            .zip(z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };

    let mut z = vec![0.0; 2 * n];
    let mut v = z.clone();
    let mut t = 1.0f64;
    let mut obj = objective(&z);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < ORACLE_MAX_ITER {
        iterations += 1;
        if iterations % 50 == 0 && stationarity(&z) <= ORACLE_STATIONARITY * c.max(1.0) {
            converged = true;
            break;
        }
        let g = grad(&v);
        let cand: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let next = project(&cand, n, c);
        let next_obj = objective(&next);
        if next_obj > obj {
            // Adaptive restart: drop momentum and retake a plain step.
            t = 1.0;
            v = z.clone();
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        v = next
            .iter()
            .zip(&z)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        z = next;
        obj = next_obj;
        t = t_next;
    }

    let dual: Vec<f64> = (0..n)
        .map(|i| {
            let b = z[i] - z[i + n];
            if b.abs() < 1e-14 * c.max(1.0) {
                0.0
            } else {
                b
            }
        })
        .collect();
    let cfg = SvrConfig {
        c,
        epsilon,
        ..SvrConfig::default()
    };
    let mut model = assemble(x, dual, 0.0, cfg, converged, iterations);
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..x.ncols()).map(|j| x[(i, j)] * model.weights[j]).sum::<f64>())
        .collect();
    model.bias = tube_bias(&resid, epsilon);
    Ok(model)
}

/// Midpoint of the minimiser set of Σ max(0, |rᵢ − b| − ε).
fn tube_bias(resid: &[f64], epsilon: f64) -> f64 {
    let loss = |b: f64| -> f64 { resid.iter().map(|r| ((r - b).abs() - epsilon).max(0.0)).sum() };
    let mut knots: Vec<f64> = resid.iter().flat_map(|r| [r - epsilon, r + epsilon]).collect();
    knots.sort_by(f64::total_cmp);
    let values: Vec<f64> = knots.iter().map(|&b| loss(b)).collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * (1.0 + min.abs());
    let at_min: Vec<f64> = knots
        .iter()
        .zip(&values)
        .filter(|(_, v)| **v <= min + slack)
        .map(|(b, _)| *b)
        .collect();
    (at_min[0] + at_min[at_min.len() - 1]) / 2.0
}

/// Euclidean projection onto {0 ≤ z ≤ C, Σ z[..n] = Σ z[n..]}.
fn project(z: &[f64], n: usize, c: f64) -> Vec<f64> {
    let apply = |mu: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; 2 * n];
        let mut bal = 0.0;
        for i in 0..n {
            out[i] = (z[i] - mu).clamp(0.0, c);
            out[i + n] = (z[i + n] + mu).clamp(0.0, c);
            bal += out[i] - out[i + n];
        }
        (out, bal)
    };
    // balance(μ) is non-increasing in μ.
    let span = z.iter().map(|v| v.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if apply(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * span {
            break;
        }
    }
    apply(0.5 * (lo + hi)).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lasso_oracle_limits() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.5, 2.0, -1.0, 3.0, 0.0, 4.0, 1.5, 5.0, 2.0]);
        let y = [1.0, 2.5, 2.9, 4.2, 5.1];
        let lmax = crate::lasso::lambda_max(&x, &y).unwrap();
        assert!(oracle_lasso(&x, &y, lmax * 1.01).unwrap().iter().all(|b| *b == 0.0));

        // λ = 0 reproduces ordinary least squares with intercept.
        let design = DMatrix::from_fn(5, 3, |i, c| if c == 0 { 1.0 } else { x[(i, c - 1)] });
        let ols = design
            .clone()
            .svd(true, true)
            .solve(&DVector::from_column_slice(&y), 1e-14)
            .unwrap();
        let beta = oracle_lasso(&x, &y, 0.0).unwrap();
        assert!((beta[0] - ols[1]).abs() < 1e-10);
        assert!((beta[1] - ols[2]).abs() < 1e-10);
        assert!(oracle_lasso(&DMatrix::zeros(3, 13), &[0.0; 3], 0.1).is_err());
    }

    #[test]
    fn all_negative_pattern_is_searched() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let y = [-2.0, 0.0, 0.0, 2.0];
        // Orthogonal columns with xᵀx/n = 1: soft-threshold of (−1, −1).
        let beta = oracle_lasso(&x, &y, 0.25).unwrap();
        assert!((beta[0] + 0.75).abs() < 1e-12 && (beta[1] + 0.75).abs() < 1e-12);
    }

    #[test]
    fn projection_is_feasible() {
        let z = [3.0, -1.0, 0.4, 0.2, 5.0, 0.1];
        let out = project(&z, 3, 1.0);
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        let bal: f64 = out[..3].iter().sum::<f64>() - out[3..].iter().sum::<f64>();
        assert!(bal.abs() < 1e-12);
    }

    #[test]
    fn svr_oracle_flat_and_size_limit() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i * 3 + j) as f64 * 0.1);
        let m = oracle_svr(&x, &[0.4; 6], 1.0, 0.1).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-12));
        assert!((m.bias - 0.4).abs() < 1e-12);
        assert!(oracle_svr(&DMatrix::zeros(11, 1), &[0.0; 11], 1.0, 0.1).is_err());
    }

    #[test]
    fn bias_midpoint() {
        // Two residuals far apart: any b between them within the tubes is optimal.
        assert!((tube_bias(&[0.0, 1.0], 0.1) - 0.5).abs() < 1e-12);
        assert!((tube_bias(&[0.3], 0.1) - 0.3).abs() < 1e-12);
    }
}
