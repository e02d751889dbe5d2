//! Cyclic coordinate-descent Lasso with support-size targeting.
//!
//! Objective, with `yc` and the columns of `X` centered (the intercept is
//! recovered afterwards from the means):
//!
//! ```text
//! (1 / 2n) ‖yc − Xc β‖² + λ ‖β‖₁
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixio::{CsvTable, Report};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub target_support: usize,
    /// Upper bound on coordinate sweeps per fit.
    pub max_iter: usize,
    /// Convergence threshold on the largest coordinate change in a full sweep.
    pub tol: f64,
    pub lambda_bisection_steps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            target_support: 30,
            max_iter: 10_000,
            tol: 1e-7,
            lambda_bisection_steps: 60,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_support == 0 {
            return Err(Error::invalid("target_support must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("lasso tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("lasso max_iter must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub support: Vec<usize>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Set when the exact support size was never hit and the nearest larger
    /// support was cut down to the largest coefficients.
    pub truncated: bool,
}

impl LassoFit {
    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + self
                        .support
                        .iter()
                        .map(|&j| x[(i, j)] * self.coefficients[j])
                        .sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub lambda: f64,
    pub support_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTrace {
    pub target: usize,
    pub points: Vec<TracePoint>,
}

impl Report for LambdaTrace {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["step", "lambda", "support_size"]);
        for (i, p) in self.points.iter().enumerate() {
            t.push(vec![i.into(), p.lambda.into(), p.support_size.into()]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub max_violation: f64,
    pub residuals: Vec<f64>,
    pub within_tolerance: bool,
}

/// Centered copy of the design plus the quantities every sweep needs.
struct Problem {
    xc: DMatrix<f64>,
    yc: Vec<f64>,
    x_means: Vec<f64>,
    y_mean: f64,
    col_sq: Vec<f64>,
    n: f64,
}

impl Problem {
    fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 {
            return Err(Error::invalid("lasso needs at least one sample"));
        }
        if y.len() != n {
            return Err(Error::invalid(format!("{} labels for {} rows", y.len(), n)));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("lasso inputs must be finite"));
        }
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;
        let yc = y.iter().map(|v| v - y_mean).collect();
        let mut xc = x.clone();
        let mut x_means = Vec::with_capacity(p);
        let mut col_sq = Vec::with_capacity(p);
        for j in 0..p {
            let mut col = xc.column_mut(j);
            let m = col.sum() / nf;
            col.add_scalar_mut(-m);
            x_means.push(m);
            col_sq.push(col.norm_squared() / nf);
        }
        Ok(Self {
            xc,
            yc,
            x_means,
            y_mean,
            col_sq,
            n: nf,
        })
    }

    fn col(&self, j: usize) -> &[f64] {
        let n = self.xc.nrows();
        &self.xc.as_slice()[j * n..(j + 1) * n]
    }

    fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.yc.clone();
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (ri, xi) in r.iter_mut().zip(self.col(j)) {
                    *ri -= b * xi;
                }
            }
        }
        r
    }

    fn grad(&self, r: &[f64], j: usize) -> f64 {
        dot(self.col(j), r) / self.n
    }

    fn objective(&self, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
        dot(r, r) / (2.0 * self.n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn lambda_max(&self) -> f64 {
        (0..self.xc.ncols())
            .map(|j| self.grad(&self.yc, j).abs())
            .fold(0.0, f64::max)
    }

    fn kkt_residuals(&self, r: &[f64], beta: &[f64], lambda: f64) -> Vec<f64> {
        beta.iter()
            .enumerate()
            .map(|(j, &b)| {
                let g = self.grad(r, j);
                if b == 0.0 {
                    (g.abs() - lambda).max(0.0)
                } else {
                    (g - lambda * b.signum()).abs()
                }
            })
            .collect()
    }

    /// One pass of exact coordinate minimisation over `coords`. Returns the
    /// largest absolute coefficient change.
    fn sweep(&self, coords: &[usize], beta: &mut [f64], r: &mut [f64], lambda: f64) -> f64 {
        let mut max_change = 0.0f64;
        for &j in coords {
            let sq = self.col_sq[j];
            let new = if sq > 0.0 {
                soft_threshold(self.grad(r, j) + sq * beta[j], lambda) / sq
            } else {
                0.0
            };
            let delta = new - beta[j];
            if delta != 0.0 {
                for (ri, xi) in r.iter_mut().zip(self.col(j)) {
                    *ri -= delta * xi;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    fn solve(&self, lambda: f64, cfg: &LassoConfig, warm: Option<&[f64]>, history: Option<&mut Vec<f64>>) -> LassoFit {
        let p = self.xc.ncols();
        let mut beta = match warm {
            Some(w) if w.len() == p => w.to_vec(),
            _ => vec![0.0; p],
        };
        let mut r = self.residual(&beta);
        let all: Vec<usize> = (0..p).collect();
        let mut history = history;
        let mut record = |beta: &[f64], r: &[f64]| {
            if let Some(h) = history.as_deref_mut() {
                h.push(self.objective(r, beta, lambda));
            }
        };
        record(&beta, &r);

        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < cfg.max_iter {
            let change = self.sweep(&all, &mut beta, &mut r, lambda);
            sweeps += 1;
            record(&beta, &r);
            if change < cfg.tol {
                let worst = self.kkt_residuals(&r, &beta, lambda).into_iter().fold(0.0, f64::max);
                if worst <= 10.0 * cfg.tol {
                    converged = true;
                    break;
                }
            }
            // Polish the current active set before the next full pass.
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            while sweeps < cfg.max_iter && !active.is_empty() {
                let change = self.sweep(&active, &mut beta, &mut r, lambda);
                sweeps += 1;
                record(&beta, &r);
                if change < cfg.tol {
                    break;
                }
            }
        }
        self.finish(beta, lambda, sweeps, converged)
    }

    fn finish(&self, beta: Vec<f64>, lambda: f64, iterations_used: usize, converged: bool) -> LassoFit {
        let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        let intercept = self.y_mean - support.iter().map(|&j| self.x_means[j] * beta[j]).sum::<f64>();
        LassoFit {
            coefficients: beta,
            intercept,
            lambda,
            support,
            iterations_used,
            converged,
            truncated: false,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Smallest λ at which the solution is identically zero.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    Ok(Problem::new(x, y)?.lambda_max())
}

/// Objective value of `beta` at `lambda` under the centering convention above.
pub fn lasso_objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> Result<f64> {
    let prob = Problem::new(x, y)?;
    let r = prob.residual(beta);
    Ok(prob.objective(&r, beta, lambda))
}

pub fn lasso_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LassoFit> {
    lasso_fit_with(x, y, lambda, &LassoConfig::default(), None)
}

pub fn lasso_fit_with(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    cfg: &LassoConfig,
    warm_start: Option<&[f64]>,
) -> Result<LassoFit> {
    check_lambda(lambda)?;
    cfg.validate()?;
    Ok(Problem::new(x, y)?.solve(lambda, cfg, warm_start, None))
}

/// Like [`lasso_fit_with`], also returning the objective after every sweep
/// (element 0 is the starting point).
pub fn lasso_fit_history(x: &DMatrix<f64>, y: &[f64], lambda: f64, cfg: &LassoConfig) -> Result<(LassoFit, Vec<f64>)> {
    check_lambda(lambda)?;
    cfg.validate()?;
    let mut history = Vec::new();
    let fit = Problem::new(x, y)?.solve(lambda, cfg, None, Some(&mut history));
    Ok((fit, history))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

pub fn fit_with_support(x: &DMatrix<f64>, y: &[f64], k: usize, cfg: &LassoConfig) -> Result<LassoFit> {
    fit_with_support_traced(x, y, k, cfg).map(|(fit, _)| fit)
}

/// Bisects log λ over `[λmax·1e-4, λmax]` for a fit with exactly `k`
/// non-zeros. When no probed λ hits `k`, the smallest support above `k`
/// is truncated to its `k` largest |coefficients|.
pub fn fit_with_support_traced(
    x: &DMatrix<f64>,
    y: &[f64],
    k: usize,
    cfg: &LassoConfig,
) -> Result<(LassoFit, LambdaTrace)> {
    cfg.validate()?;
    let (n, p) = x.shape();
    if k == 0 || k > p || k + 1 > n {
        return Err(Error::invalid(format!(
            "support size {k} must lie in [1, min(n-1, p)] = [1, {}]",
            (n.saturating_sub(1)).min(p)
        )));
    }
    let prob = Problem::new(x, y)?;
    let lmax = prob.lambda_max();
    if lmax <= 0.0 {
        return Err(Error::invalid("labels are constant; no support is attainable"));
    }
    let mut trace = LambdaTrace {
        target: k,
        points: Vec::new(),
    };
    let mut lo = (lmax * 1e-4).ln();
    let mut hi = lmax.ln();

    let mut best = prob.solve(lo.exp(), cfg, None, None);
    trace.points.push(TracePoint {
        lambda: best.lambda,
        support_size: best.support_size(),
    });
    if best.support_size() == k {
        return Ok((best, trace));
    }
    if best.support_size() < k {
        return Err(Error::Numerical(format!(
            "support size {k} unattainable: largest support reached is {}",
            best.support_size()
        )));
    }
    for _ in 0..cfg.lambda_bisection_steps {
        let mid = 0.5 * (lo + hi);
        let fit = prob.solve(mid.exp(), cfg, Some(&best.coefficients), None);
        let s = fit.support_size();
        trace.points.push(TracePoint {
            lambda: fit.lambda,
            support_size: s,
        });
        if s == k {
            return Ok((fit, trace));
        }
        if s > k {
            lo = mid;
            if s <= best.support_size() {
                best = fit;
            }
        } else {
            hi = mid;
        }
    }
    Ok((truncate(&prob, best, k), trace))
}

fn truncate(prob: &Problem, fit: LassoFit, k: usize) -> LassoFit {
    let mut order = fit.support.clone();
    order.sort_by(|&a, &b| {
        fit.coefficients[b]
            .abs()
            .total_cmp(&fit.coefficients[a].abs())
            .then(a.cmp(&b))
    });
    let mut beta = vec![0.0; fit.coefficients.len()];
    for &j in &order[..k] {
        beta[j] = fit.coefficients[j];
    }
    let mut out = prob.finish(beta, fit.lambda, fit.iterations_used, fit.converged);
    out.truncated = true;
    out
}

/// Stationarity check of `fit` against the Lasso optimality conditions.
pub fn verify_kkt(x: &DMatrix<f64>, y: &[f64], fit: &LassoFit, tol: f64) -> Result<KktReport> {
    let prob = Problem::new(x, y)?;
    if fit.coefficients.len() != x.ncols() {
        return Err(Error::invalid("coefficient length differs from column count"));
    }
    let r = prob.residual(&fit.coefficients);
    let residuals = prob.kkt_residuals(&r, &fit.coefficients, fit.lambda);
    let max_violation = residuals.iter().copied().fold(0.0, f64::max);
    Ok(KktReport {
        max_violation,
        within_tolerance: max_violation <= 10.0 * tol,
        residuals,
    })
}
