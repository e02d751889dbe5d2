//! Linear ε-insensitive support vector regression.
//!
//! The dual is solved with a pairwise SMO scheme using second-order working
//! set selection (Fan, Chen & Lin 2005), in the doubled-variable layout used
//! by LIBSVM: variables `0..n` are α, `n..2n` are α*. A linear kernel on
//! fewer features than samples is rank deficient and pairwise steps crawl
//! along its flat directions for large C, so the free variables are
//! periodically solved for exactly on their subspace.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::r_squared;
use crate::matrixio::{CsvTable, Report};
use crate::selection::make_folds;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    /// Box bound on the dual variables.
    pub c: f64,
    pub epsilon: f64,
    /// Stopping threshold on the maximal KKT violating pair.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

impl SvrConfig {
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("svr tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// αᵢ − αᵢ* per training sample.
    pub dual_coefficients: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub config: SvrConfig,
    pub converged: bool,
    pub iterations: usize,
}

impl Report for SvrModel {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["term", "index", "value"]);
        t.push(vec!["bias".into(), crate::matrixio::Cell::Empty, self.bias.into()]);
        for (j, w) in self.weights.iter().enumerate() {
            t.push(vec!["weight".into(), j.into(), (*w).into()]);
        }
        t
    }
}

/// A trained model together with the gene names its weights refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSvrModel {
    pub genes: Vec<String>,
    pub model: SvrModel,
}

impl Report for NamedSvrModel {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["gene_id", "weight"]);
        t.push(vec!["(bias)".into(), self.model.bias.into()]);
        for (g, w) in self.genes.iter().zip(&self.model.weights) {
            t.push(vec![g.as_str().into(), (*w).into()]);
        }
        t
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() < 2 {
        return Err(Error::invalid("svr needs at least two samples"));
    }
    if y.len() != x.nrows() {
        return Err(Error::invalid(format!("{} labels for {} rows", y.len(), x.nrows())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("svr inputs must be finite"));
    }
    Ok(())
}

/// Trains a linear ε-SVR.
pub fn svr_train(x: &DMatrix<f64>, y: &[f64], cfg: &SvrConfig) -> Result<SvrModel> {
    cfg.validate()?;
    check_inputs(x, y)?;
    let n = x.nrows();
    let mut s = Smo::new(x * x.transpose(), y, cfg);

    let polish_every = (20 * n).max(1000);
    let mut polishes = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let Some((i, j)) = s.working_pair(cfg.tol) else {
            // A subspace solve usually lands on the exact optimum; if it
            // disturbs the bound variables, keep iterating.
            if polishes < MAX_FINAL_POLISHES && s.polish() {
                polishes += 1;
                if s.working_pair(cfg.tol).is_some() {
                    continue;
                }
            }
            converged = true;
            break;
        };
        iterations += 1;
        s.step(i, j);
        if iterations % polish_every == 0 {
            s.polish();
        }
    }

    let rho = s.threshold();
    let dual: Vec<f64> = (0..n).map(|k| s.alpha[k] - s.alpha[k + n]).collect();
    Ok(assemble(x, dual, -rho, *cfg, converged, iterations))
}

const MAX_FINAL_POLISHES: usize = 20;

/// Dual state in the doubled layout: variables `0..n` carry sign +1,
/// `n..2n` sign −1.
struct Smo {
    kernel: DMatrix<f64>,
    n: usize,
    c: f64,
    qd: Vec<f64>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl Smo {
    fn new(kernel: DMatrix<f64>, y: &[f64], cfg: &SvrConfig) -> Self {
        let n = y.len();
        let qd = (0..2 * n).map(|t| kernel[(t % n, t % n)]).collect();
        let grad = (0..2 * n)
            .map(|t| {
                if t < n {
                    cfg.epsilon - y[t]
                } else {
                    cfg.epsilon + y[t - n]
                }
            })
            .collect();
        Smo {
            kernel,
            n,
            c: cfg.c,
            qd,
            alpha: vec![0.0; 2 * n],
            grad,
        }
    }

    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    fn q(&self, s: usize, t: usize) -> f64 {
        self.sign(s) * self.sign(t) * self.kernel[(s % self.n, t % self.n)]
    }

    fn at_upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn at_lower(&self, t: usize) -> bool {
        self.alpha[t] <= 0.0
    }

    /// Maximal violating i, then j by second-order gain. `None` once the
    /// violation drops below `tol`.
    fn working_pair(&self, tol: f64) -> Option<(usize, usize)> {
        let l2 = 2 * self.n;
        let grad = &self.grad;
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax_idx = None;
        for t in 0..l2 {
            if self.sign(t) > 0.0 {
                if !self.at_upper(t) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    gmax_idx = Some(t);
                }
            } else if !self.at_lower(t) && grad[t] >= gmax {
                gmax = grad[t];
                gmax_idx = Some(t);
            }
        }
        let i = gmax_idx?;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut gmin_idx = None;
        let mut obj_diff_min = f64::INFINITY;
        for t in 0..l2 {
            let (grad_diff, quad) = if self.sign(t) > 0.0 {
                if self.at_lower(t) {
                    continue;
                }
                gmax2 = gmax2.max(grad[t]);
                (
                    gmax + grad[t],
                    self.qd[i] + self.qd[t] - 2.0 * self.sign(i) * self.q(i, t),
                )
            } else {
                if self.at_upper(t) {
                    continue;
                }
                gmax2 = gmax2.max(-grad[t]);
                (
                    gmax - grad[t],
                    self.qd[i] + self.qd[t] + 2.0 * self.sign(i) * self.q(i, t),
                )
            };
            if grad_diff > 0.0 {
                let obj_diff = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                if obj_diff <= obj_diff_min {
                    gmin_idx = Some(t);
                    obj_diff_min = obj_diff;
                }
            }
        }
        match gmin_idx {
            Some(j) if gmax + gmax2 >= tol => Some((i, j)),
            _ => None,
        }
    }

    fn step(&mut self, i: usize, j: usize) {
        let c = self.c;
        let qij = self.q(i, j);
        let opposite = self.sign(i) != self.sign(j);
        let alpha = &mut self.alpha;
        let grad = &self.grad;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if opposite {
            let quad = (self.qd[i] + self.qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (self.qd[i] + self.qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..2 * self.n {
            self.grad[t] += self.q(i, t) * di + self.q(j, t) * dj;
        }
    }

    /// Moves the free variables to the minimiser of the dual restricted to
    /// them, stopping at bounds on the way. Directions of zero curvature are
    /// followed to the nearest bound, which is where pairwise steps stall
    /// when the kernel is rank deficient. Returns whether anything moved.
    fn polish(&mut self) -> bool {
        let mut moved = false;
        for _ in 0..2 * self.n + 1 {
            let free: Vec<usize> = (0..2 * self.n)
                .filter(|&t| !self.at_lower(t) && !self.at_upper(t))
                .collect();
            let m = free.len();
            if m == 0 {
                break;
            }
            let mut kkt = DMatrix::zeros(m + 1, m + 1);
            for (a, &s) in free.iter().enumerate() {
                for (b, &t) in free.iter().enumerate() {
                    kkt[(a, b)] = self.q(s, t);
                }
                kkt[(a, m)] = self.sign(s);
                kkt[(m, a)] = self.sign(s);
            }
            let eig = kkt.symmetric_eigen();
            let scale = eig.eigenvalues.amax().max(1.0);
            let gnorm = free.iter().map(|&t| self.grad[t].abs()).fold(0.0, f64::max);
            if gnorm <= f64::EPSILON * scale {
                break;
            }

            let mut newton = vec![0.0; m];
            let mut flat = vec![0.0; m];
            let mut flat_descent = false;
            for k in 0..=m {
                let v = eig.eigenvectors.column(k);
                let coef = -free.iter().enumerate().map(|(a, &t)| v[a] * self.grad[t]).sum::<f64>();
                if eig.eigenvalues[k].abs() <= 1e-10 * scale {
                    if coef.abs() > 1e-12 * gnorm.max(1.0) {
                        flat_descent = true;
                        for a in 0..m {
                            flat[a] += coef * v[a];
                        }
                    }
                } else {
                    for a in 0..m {
                        newton[a] += coef / eig.eigenvalues[k] * v[a];
                    }
                }
            }
            let mut dir = if flat_descent { flat } else { newton };
            // Keep Σ sign·α fixed exactly.
            let drift = free.iter().zip(&dir).map(|(&t, d)| self.sign(t) * d).sum::<f64>() / m as f64;
            for (a, &t) in free.iter().enumerate() {
                dir[a] -= drift * self.sign(t);
            }
            let slope: f64 = free.iter().zip(&dir).map(|(&t, d)| self.grad[t] * d).sum();
            if !(slope < 0.0) {
                break;
            }

            let mut step = if flat_descent { f64::INFINITY } else { 1.0 };
            let mut blocking = None;
            for (a, &t) in free.iter().enumerate() {
                let room = if dir[a] > 0.0 {
                    (self.c - self.alpha[t]) / dir[a]
                } else if dir[a] < 0.0 {
                    -self.alpha[t] / dir[a]
                } else {
                    continue;
                };
                if room < step {
                    step = room;
                    blocking = Some(a);
                }
            }
            if !step.is_finite() {
                break;
            }
            let old: Vec<f64> = free.iter().map(|&t| self.alpha[t]).collect();
            for (a, &t) in free.iter().enumerate() {
                self.alpha[t] = (old[a] + step * dir[a]).clamp(0.0, self.c);
            }
            if let Some(a) = blocking {
                let t = free[a];
                self.alpha[t] = if dir[a] > 0.0 { self.c } else { 0.0 };
            }
            for (a, &s) in free.iter().enumerate() {
                let delta = self.alpha[s] - old[a];
                if delta != 0.0 {
                    for t in 0..2 * self.n {
                        self.grad[t] += self.q(s, t) * delta;
                    }
                }
            }
            moved = true;
            if blocking.is_none() {
                break;
            }
        }
        moved
    }

    /// Threshold from free variables, else the midpoint of the feasible band.
    fn threshold(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum_free) = (0usize, 0.0);
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            if self.at_upper(t) {
                if self.sign(t) < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.at_lower(t) {
                if self.sign(t) > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        if free > 0 {
            sum_free / free as f64
        } else {
            0.5 * (ub + lb)
        }
    }
}

pub(crate) fn assemble(
    x: &DMatrix<f64>,
    dual: Vec<f64>,
    bias: f64,
    config: SvrConfig,
    converged: bool,
    iterations: usize,
) -> SvrModel {
    let d = x.ncols();
    let mut weights = vec![0.0; d];
    for (i, &a) in dual.iter().enumerate() {
        if a != 0.0 {
            for (j, w) in weights.iter_mut().enumerate() {
                *w += a * x[(i, j)];
            }
        }
    }
    let support_indices = (0..dual.len()).filter(|&i| dual[i] != 0.0).collect();
    SvrModel {
        weights,
        bias,
        dual_coefficients: dual,
        support_indices,
        config,
        converged,
        iterations,
    }
}

pub fn svr_predict(model: &SvrModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.weights.len() {
        return Err(Error::invalid(format!(
            "model has {} weights but input has {} columns",
            model.weights.len(),
            x.ncols()
        )));
    }
    Ok((0..x.nrows())
        .map(|i| model.bias + (0..x.ncols()).map(|j| x[(i, j)] * model.weights[j]).sum::<f64>())
        .collect())
}

pub fn extract_weights(model: &SvrModel) -> Vec<f64> {
    model.weights.clone()
}

/// `2^-10, 2^-9, …, 2^10`.
pub fn default_c_grid() -> Vec<f64> {
    (-10..=10).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub c: f64,
    pub mean_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_c: f64,
    /// One entry per grid value, ascending in C.
    pub scores: Vec<GridScore>,
}

impl Report for GridSearchResult {
    fn csv_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["c", "mean_r2", "best"]);
        for s in &self.scores {
            t.push(vec![s.c.into(), s.mean_r2.into(), (s.c == self.best_c).into()]);
        }
        t
    }
}

/// Chooses C by mean validation R² over a seeded k-fold split. Ties go to
/// the smallest C.
pub fn grid_search_c(
    x: &DMatrix<f64>,
    y: &[f64],
    grid: &[f64],
    folds: usize,
    seed: u64,
    base: &SvrConfig,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::invalid("C grid is empty"));
    }
    check_inputs(x, y)?;
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for &c in &grid {
        base.with_c(c).validate()?;
    }
    let splits = make_folds(x.nrows(), folds, 1, seed)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..splits.len()).map(move |f| (g, f)))
        .collect();
    let fold_scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let split = &splits[f];
            let (xt, yt) = take_rows(x, y, &split.train);
            let (xv, yv) = take_rows(x, y, &split.validation);
            let model = svr_train(&xt, &yt, &base.with_c(grid[g]))?;
            r_squared(&yv, &svr_predict(&model, &xv)?)
        })
        .collect::<Result<_>>()?;

    let scores: Vec<GridScore> = grid
        .iter()
        .enumerate()
        .map(|(g, &c)| {
            let s = &fold_scores[g * splits.len()..(g + 1) * splits.len()];
            GridScore {
                c,
                mean_r2: s.iter().sum::<f64>() / s.len() as f64,
            }
        })
        .collect();
    let mut best = scores[0];
    for s in &scores[1..] {
        if s.mean_r2 > best.mean_r2 {
            best = *s;
        }
    }
    Ok(GridSearchResult { best_c: best.c, scores })
}

pub(crate) fn take_rows(x: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let xs = DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]);
    (xs, rows.iter().map(|&i| y[i]).collect())
}
