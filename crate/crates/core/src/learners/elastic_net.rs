//! Elastic net by cyclic coordinate descent on standardized columns.
//!
//! Minimizes
//! `(1/2n)·‖y − b − Zβ‖² + λ·(α‖β‖₁ + (1−α)/2·‖β‖²)`
//! where `Z` is the z-scored design, `λ` the penalty and `α` the mixing.
//! Sweeps alternate between a full pass and passes over the current
//! non-zero set until the largest coefficient change drops below `tol`.

use serde::{Deserialize, Serialize};

use super::{check_inputs, Algorithm, FittedModel, ModelParams, Standardizer};
use crate::error::{Error, Result};
use crate::genomic::DesignMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticNetOptions {
    /// Stop when no coefficient moves by more than this in a full sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ElasticNetOptions {
    fn default() -> Self {
        ElasticNetOptions {
            tol: 1e-6,
            max_sweeps: 10_000,
        }
    }
}

/// Coefficients live on the standardized scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
}

impl ElasticNetModel {
    pub(crate) fn predict(&self, z: &ndarray::Array2<f64>) -> Vec<f64> {
        z.rows()
            .into_iter()
            .map(|row| self.intercept + row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

pub fn fit_elastic_net(x: &DesignMatrix, y: &[f64], penalty: f64, mixing: f64) -> Result<FittedModel> {
    fit_elastic_net_with(x, y, penalty, mixing, &ElasticNetOptions::default())
}

pub fn fit_elastic_net_with(
    x: &DesignMatrix,
    y: &[f64],
    penalty: f64,
    mixing: f64,
    opts: &ElasticNetOptions,
) -> Result<FittedModel> {
    check_inputs(x, y)?;
    if !(penalty >= 0.0 && penalty.is_finite()) || !(0.0..=1.0).contains(&mixing) {
        return Err(Error::invalid(format!("elastic net penalty {penalty}, mixing {mixing}")));
    }
    let standardizer = Standardizer::fit(x.values.view());
    let z = standardizer.transform(x.values.view());
    let columns: Vec<Vec<f64>> = z.columns().into_iter().map(|c| c.to_vec()).collect();
    let frozen: Vec<bool> = (0..columns.len()).map(|j| standardizer.is_constant(j)).collect();

    let n = y.len() as f64;
    let intercept = y.iter().sum::<f64>() / n;
    let centered: Vec<f64> = y.iter().map(|v| v - intercept).collect();

    let (coefficients, sweeps) = CoordinateDescent {
        columns: &columns,
        frozen: &frozen,
        penalty,
        mixing,
    }
    .solve(&centered, opts, None)?;

    Ok(FittedModel {
        algorithm: Algorithm::ElasticNet,
        columns: x.column_names.clone(),
        standardizer,
        params: ModelParams::ElasticNet(ElasticNetModel {
            coefficients,
            intercept,
            sweeps,
        }),
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(crate) struct CoordinateDescent<'a> {
    pub columns: &'a [Vec<f64>],
    pub frozen: &'a [bool],
    pub penalty: f64,
    pub mixing: f64,
}

impl CoordinateDescent<'_> {
    pub fn objective(&self, residual: &[f64], beta: &[f64]) -> f64 {
        let n = residual.len() as f64;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / (2.0 * n);
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let l2: f64 = beta.iter().map(|b| b * b).sum();
        loss + self.penalty * (self.mixing * l1 + 0.5 * (1.0 - self.mixing) * l2)
    }

    /// Returns the coefficients and the number of sweeps used. When `trace`
    /// is given, the objective after every sweep is appended to it.
    pub fn solve(&self, y: &[f64], opts: &ElasticNetOptions, mut trace: Option<&mut Vec<f64>>) -> Result<(Vec<f64>, usize)> {
        let n = y.len() as f64;
        let p = self.columns.len();
        let scale: Vec<f64> = self
            .columns
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>() / n)
            .collect();
        let l1 = self.penalty * self.mixing;
        let l2 = self.penalty * (1.0 - self.mixing);

        let mut beta = vec![0.0; p];
        let mut residual = y.to_vec();
        let mut sweeps = 0;

        let sweep = |indices: &mut dyn Iterator<Item = usize>, beta: &mut [f64], residual: &mut [f64]| {
            let mut max_change: f64 = 0.0;
            for j in indices {
                if self.frozen[j] || scale[j] == 0.0 {
                    continue;
                }
                let col = &self.columns[j];
                let old = beta[j];
                let rho = col.iter().zip(residual.iter()).map(|(a, r)| a * r).sum::<f64>() / n + scale[j] * old;
                let new = soft_threshold(rho, l1) / (scale[j] + l2);
                let delta = new - old;
                if delta != 0.0 {
                    for (r, a) in residual.iter_mut().zip(col) {
                        *r -= a * delta;
                    }
                    beta[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            max_change
        };

        loop {
            let change = sweep(&mut (0..p), &mut beta, &mut residual);
            sweeps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(&residual, &beta));
            }
            if change < opts.tol {
                return Ok((beta, sweeps));
            }
            loop {
                if sweeps >= opts.max_sweeps {
                    return Err(Error::NotConverged {
                        solver: "elastic net coordinate descent",
                        iterations: sweeps,
                    });
                }
                let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
                let change = sweep(&mut active.into_iter(), &mut beta, &mut residual);
                sweeps += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(&residual, &beta));
                }
                if change < opts.tol {
                    break;
                }
            }
            if sweeps >= opts.max_sweeps {
                return Err(Error::NotConverged {
                    solver: "elastic net coordinate descent",
                    iterations: sweeps,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::predict;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(values: Array2<f64>) -> DesignMatrix {
        let rows = (0..values.nrows()).map(|i| format!("c{i}")).collect();
        let cols = (0..values.ncols()).map(|j| format!("x{j}")).collect();
        DesignMatrix::from_columns(rows, cols, values).unwrap()
    }

    fn coefs(m: &FittedModel) -> &ElasticNetModel {
        match &m.params {
            ModelParams::ElasticNet(e) => e,
            _ => unreachable!(),
        }
    }

    #[test]
    fn constant_target_gives_zero_coefficients() {
        let x = design(array![[1.0, 2.0], [2.0, 1.0], [3.0, 7.0], [4.0, 0.0]]);
        let m = fit_elastic_net(&x, &[2.5; 4], 0.1, 0.5).unwrap();
        assert!(coefs(&m).coefficients.iter().all(|&c| c == 0.0));
        assert_eq!(coefs(&m).intercept, 2.5);
    }

    #[test]
    fn single_feature_lasso_matches_soft_threshold() {
        // hand oracle: z standardized, beta = S(mean(z*y), lambda)
        let xs = [0.3, -1.2, 2.2, 0.7, 1.9, -0.4];
        let ys = [1.0, -0.5, 3.1, 0.2, 2.0, 0.9];
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let sx = (xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n).sqrt();
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) / sx * (y - my)).sum::<f64>() / n;
        let lambda = 0.3;
        let expected = (cov.abs() - lambda).max(0.0) * cov.signum();

        let x = design(Array2::from_shape_vec((6, 1), xs.to_vec()).unwrap());
        let m = fit_elastic_net(&x, &ys, lambda, 1.0).unwrap();
        assert!((coefs(&m).coefficients[0] - expected).abs() < 1e-8);
    }

    #[test]
    fn vanishing_ridge_matches_least_squares() {
        let x = design(array![[1.0, 0.5], [2.0, -1.0], [3.0, 2.0], [4.0, 0.0], [5.0, 1.5]]);
        // y = 1 + 2 x0 - 3 x1 exactly
        let y: Vec<f64> = x.values.rows().into_iter().map(|r| 1.0 + 2.0 * r[0] - 3.0 * r[1]).collect();
        let m = fit_elastic_net(&x, &y, 1e-12, 0.0).unwrap();
        let pred = predict(&m, &x).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() < 1e-6, "{p} vs {t}");
        }
        let s = &m.standardizer.std;
        assert!((coefs(&m).coefficients[0] / s[0] - 2.0).abs() < 1e-6);
        assert!((coefs(&m).coefficients[1] / s[1] + 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_variance_column_is_frozen() {
        let x = design(array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]]);
        let m = fit_elastic_net(&x, &[1.0, 2.0, 3.0, 4.0], 0.01, 0.5).unwrap();
        assert_eq!(coefs(&m).coefficients[1], 0.0);
        assert!(coefs(&m).coefficients[0] > 0.9);
    }

    #[test]
    fn rejects_non_finite_input() {
        let x = design(array![[1.0], [f64::NAN], [3.0]]);
        assert!(matches!(fit_elastic_net(&x, &[1.0, 2.0, 3.0], 0.1, 0.5), Err(Error::NonFinite(_))));
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols = vec![vec![0.0; n]; p];
        for col in cols.iter_mut() {
            for v in col.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let m = col.iter().sum::<f64>() / n as f64;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            col.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        let mut y: Vec<f64> = (0..n).map(|i| cols[0][i] - 0.5 * cols[1][i] + rng.gen_range(-0.3..0.3)).collect();
        let my = y.iter().sum::<f64>() / n as f64;
        y.iter_mut().for_each(|v| *v -= my);
        (cols, y)
    }

    #[test]
    fn objective_never_increases_and_subgradient_holds() {
        for seed in 0..10 {
            let (cols, y) = random_problem(seed, 30, 8);
            let frozen = vec![false; 8];
            let cd = CoordinateDescent {
                columns: &cols,
                frozen: &frozen,
                penalty: 0.05,
                mixing: 0.7,
            };
            let mut trace = Vec::new();
            let opts = ElasticNetOptions {
                tol: 1e-10,
                ..Default::default()
            };
            let (beta, _) = cd.solve(&y, &opts, Some(&mut trace)).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "objective rose: {} -> {}", w[0], w[1]);
            }
            // subgradient optimality
            let n = y.len() as f64;
            let resid: Vec<f64> = (0..y.len())
                .map(|i| y[i] - (0..8).map(|j| cols[j][i] * beta[j]).sum::<f64>())
                .collect();
            let l1 = 0.05 * 0.7;
            let l2 = 0.05 * 0.3;
            for j in 0..8 {
                let g = cols[j].iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / n - l2 * beta[j];
                if beta[j] == 0.0 {
                    assert!(g.abs() <= l1 + 1e-6);
                } else {
                    assert!((g - l1 * beta[j].signum()).abs() < 1e-6);
                }
            }
        }
    }
}
