//! ε-insensitive support vector regression with an RBF kernel.
//!
//! The dual is solved with SMO over `2n` variables (one `α⁺`, one `α⁻` per
//! sample) using second-order working-set selection. The solver stops when
//! the maximal KKT violation gap falls below `tol`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_inputs, Algorithm, FittedModel, ModelParams, Standardizer};
use crate::error::{Error, Result};
use crate::genomic::DesignMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvrOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrOptions {
    fn default() -> Self {
        SvrOptions {
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// Support vectors live on the standardized scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_vectors: Array2<f64>,
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    /// `α⁺ − α⁻` per support vector, in `[−C, C]`.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub tube: f64,
    pub iterations: usize,
}

fn rbf(a: ArrayView1<f64>, b: ArrayView1<f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
    (-gamma * d2).exp()
}

impl SvrModel {
    pub(crate) fn predict(&self, z: &Array2<f64>) -> Vec<f64> {
        z.rows()
            .into_iter()
            .map(|row| {
                self.bias
                    + self
                        .support_vectors
                        .rows()
                        .into_iter()
                        .zip(&self.dual_coefficients)
                        .map(|(sv, &coef)| coef * rbf(sv, row, self.gamma))
                        .sum::<f64>()
            })
            .collect()
    }
}

pub fn fit_svr_rbf(x: &DesignMatrix, y: &[f64], c: f64, gamma: f64, tube: f64) -> Result<FittedModel> {
    fit_svr_rbf_with(x, y, c, gamma, tube, &SvrOptions::default())
}

pub fn fit_svr_rbf_with(
    x: &DesignMatrix,
    y: &[f64],
    c: f64,
    gamma: f64,
    tube: f64,
    opts: &SvrOptions,
) -> Result<FittedModel> {
    check_inputs(x, y)?;
    if !(c > 0.0 && gamma > 0.0 && tube >= 0.0) {
        return Err(Error::invalid(format!("svr C {c}, gamma {gamma}, tube {tube}")));
    }
    let standardizer = Standardizer::fit(x.values.view());
    let z = standardizer.transform(x.values.view());
    let kernel = kernel_matrix(z.view(), gamma);
    let solution = Smo::new(&kernel, y, c, tube).solve(opts)?;

    let keep: Vec<usize> = (0..y.len()).filter(|&i| solution.beta[i] != 0.0).collect();
    let model = SvrModel {
        support_vectors: z.select(ndarray::Axis(0), &keep),
        dual_coefficients: keep.iter().map(|&i| solution.beta[i]).collect(),
        support_indices: keep,
        bias: solution.bias,
        gamma,
        c,
        tube,
        iterations: solution.iterations,
    };
    Ok(FittedModel {
        algorithm: Algorithm::SvrRbf,
        columns: x.column_names.clone(),
        standardizer,
        params: ModelParams::SvrRbf(model),
    })
}

fn kernel_matrix(z: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let n = z.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        for j in 0..i {
            let v = rbf(z.row(i), z.row(j), gamma);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

struct Solution {
    beta: Vec<f64>,
    bias: f64,
    iterations: usize,
}

const TAU: f64 = 1e-12;

struct Smo<'a> {
    kernel: &'a Array2<f64>,
    n: usize,
    c: f64,
    sign: Vec<f64>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn new(kernel: &'a Array2<f64>, y: &[f64], c: f64, tube: f64) -> Self {
        let n = y.len();
        let sign = (0..2 * n).map(|t| if t < n { 1.0 } else { -1.0 }).collect();
        // linear term p: tube − y for α⁺, tube + y for α⁻
        let grad = (0..2 * n)
            .map(|t| if t < n { tube - y[t] } else { tube + y[t - n] })
            .collect();
        Smo {
            kernel,
            n,
            c,
            sign,
            alpha: vec![0.0; 2 * n],
            grad,
        }
    }

    fn q(&self, s: usize, t: usize) -> f64 {
        self.sign[s] * self.sign[t] * self.kernel[[s % self.n, t % self.n]]
    }

    fn at_upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn at_lower(&self, t: usize) -> bool {
        self.alpha[t] <= 0.0
    }

    fn select(&self, tol: f64) -> Option<(usize, usize)> {
        let l = 2 * self.n;
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            let v = -self.sign[t] * self.grad[t];
            let eligible = if self.sign[t] > 0.0 { !self.at_upper(t) } else { !self.at_lower(t) };
            if eligible && v >= gmax {
                gmax = v;
                i = t;
            }
        }
        if i == usize::MAX {
            return None;
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        let qii = self.q(i, i);
        for t in 0..l {
            let eligible = if self.sign[t] > 0.0 { !self.at_lower(t) } else { !self.at_upper(t) };
            if !eligible {
                continue;
            }
            let v = self.sign[t] * self.grad[t];
            gmax2 = gmax2.max(v);
            let grad_diff = gmax + v;
            if grad_diff > 0.0 {
                let quad = qii + self.q(t, t) - 2.0 * self.sign[i] * self.sign[t] * self.q(i, t);
                let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < tol || j == usize::MAX {
            None
        } else {
            Some((i, j))
        }
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.q(i, j);
        let (mut ai, mut aj) = (old_i, old_j);
        if self.sign[i] != self.sign[j] {
            let quad = (self.q(i, i) + self.q(j, j) + 2.0 * qij).max(TAU);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (self.q(i, i) + self.q(j, j) - 2.0 * qij).max(TAU);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..2 * self.n {
            self.grad[t] += self.q(i, t) * di + self.q(j, t) * dj;
        }
    }

    fn bias(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum_free) = (0usize, 0.0);
        for t in 0..2 * self.n {
            let yg = self.sign[t] * self.grad[t];
            if self.at_upper(t) {
                if self.sign[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.at_lower(t) {
                if self.sign[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
        -rho
    }

    fn solve(mut self, opts: &SvrOptions) -> Result<Solution> {
        let mut iterations = 0;
        while let Some((i, j)) = self.select(opts.tol) {
            if iterations >= opts.max_iter {
                return Err(Error::NotConverged {
                    solver: "svr smo",
                    iterations,
                });
            }
            self.update(i, j);
            iterations += 1;
        }
        let beta = (0..self.n).map(|i| self.alpha[i] - self.alpha[i + self.n]).collect();
        Ok(Solution {
            beta,
            bias: self.bias(),
            iterations,
        })
    }
}

/// Per-sample KKT violation of a fitted SVR on its training data.
///
/// With `g = y − f(x)`: a zero coefficient needs `|g| ≤ tube`, a coefficient
/// at `±C` needs `±g ≥ tube`, and a free coefficient needs `g = ±tube`.
pub fn kkt_residuals(model: &FittedModel, x: &DesignMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let ModelParams::SvrRbf(svr) = &model.params else {
        return Err(Error::invalid("kkt residuals need an SVR model"));
    };
    let z = model.standardizer.transform(x.values.view());
    let pred = svr.predict(&z);
    let mut beta = vec![0.0; x.nrows()];
    for (&i, &b) in svr.support_indices.iter().zip(&svr.dual_coefficients) {
        beta[i] = b;
    }
    let c = svr.c;
    let eps = svr.tube;
    let scale_tol = 1e-12 * c.max(1.0);
    Ok(y.iter()
        .zip(&pred)
        .zip(&beta)
        .map(|((&yi, &fi), &b)| {
            let g = yi - fi;
            if b.abs() <= scale_tol {
                (g.abs() - eps).max(0.0)
            } else if b >= c - scale_tol {
                (eps - g).max(0.0)
            } else if b <= -c + scale_tol {
                (g + eps).max(0.0)
            } else if b > 0.0 {
                (g - eps).abs()
            } else {
                (g + eps).abs()
            }
        })
        .collect())
}
