//! Repeated double-split holdout: outer Monte-Carlo holdouts for assessment,
//! inner train/validation splits for choosing hyperparameters.
//!
//! Everything a model learns from data (gene selection, encoding layout,
//! standardization, coefficients) is computed from the rows handed to
//! [`DesignBuilder::build`] as `fit`, which are always training rows.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genomic::DesignMatrix;
use crate::learners::{self, FeatureImportances, FittedModel, HyperparameterGrid, Hyperparameters};
use crate::seed;

/// Runs with more failed outer loops than this are flagged invalid.
pub const MAX_FAILED_LOOPS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitPlan {
    pub n_outer: usize,
    pub outer_holdout_fraction: f64,
    pub n_inner: usize,
    pub inner_validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            n_outer: 10,
            outer_holdout_fraction: 0.2,
            n_inner: 5,
            inner_validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_outer == 0 || self.n_inner == 0 {
            return Err(Error::Config("n_outer and n_inner must be at least 1".into()));
        }
        for (name, f) in [
            ("outer_holdout_fraction", self.outer_holdout_fraction),
            ("inner_validation_fraction", self.inner_validation_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} must lie strictly inside (0, 1), got {f}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerSplit {
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterSplit {
    pub train_ids: Vec<String>,
    pub holdout_ids: Vec<String>,
    pub inner: Vec<InnerSplit>,
}

fn partition(ids: &[String], fraction: f64, rng: &mut impl rand::Rng) -> Result<(Vec<String>, Vec<String>)> {
    let n = ids.len();
    let held = (fraction * n as f64).round() as usize;
    if held < 2 || n - held < 2 {
        return Err(Error::invalid(format!(
            "{n} cell lines are too few for a {fraction} holdout fraction"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut is_held = vec![false; n];
    for &i in &order[..held] {
        is_held[i] = true;
    }
    let (mut keep, mut out) = (Vec::with_capacity(n - held), Vec::with_capacity(held));
    for (id, h) in ids.iter().zip(is_held) {
        if h {
            out.push(id.clone());
        } else {
            keep.push(id.clone());
        }
    }
    Ok((keep, out))
}

/// Draws `n_outer` independent holdouts and, inside each training part,
/// `n_inner` independent validation splits. Id order is preserved inside
/// every list.
pub fn make_split_plan(plan: &SplitPlan, ids: &[String]) -> Result<Vec<OuterSplit>> {
    plan.validate()?;
    if ids.len() < 10 {
        return Err(Error::invalid(format!("need at least 10 cell lines, got {}", ids.len())));
    }
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId {
                context: "split ids".into(),
                id: id.clone(),
            });
        }
    }
    (0..plan.n_outer)
        .map(|o| {
            let mut rng = seed::rng(plan.seed, &[1, o as u64]);
            let (train_ids, holdout_ids) = partition(ids, plan.outer_holdout_fraction, &mut rng)?;
            let inner = (0..plan.n_inner)
                .map(|i| {
                    let mut rng = seed::rng(plan.seed, &[2, o as u64, i as u64]);
                    let (train_ids, validation_ids) =
                        partition(&train_ids, plan.inner_validation_fraction, &mut rng)?;
                    Ok(InnerSplit {
                        train_ids,
                        validation_ids,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(OuterSplit {
                train_ids,
                holdout_ids,
                inner,
            })
        })
        .collect()
}

/// Coefficient of determination with the mean taken over `y_true`.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid("r2 inputs differ in length"));
    }
    if y_true.len() < 2 {
        return Err(Error::invalid("r2 needs at least two values"));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let sst: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Produces design matrices for a fitting partition and an evaluation partition.
///
/// Anything data-dependent must be learned from `fit` alone.
pub trait DesignBuilder: Sync {
    fn build(&self, fit: &[String], eval: &[String]) -> Result<(DesignMatrix, DesignMatrix)>;
}

impl<F> DesignBuilder for F
where
    F: Fn(&[String], &[String]) -> Result<(DesignMatrix, DesignMatrix)> + Sync,
{
    fn build(&self, fit: &[String], eval: &[String]) -> Result<(DesignMatrix, DesignMatrix)> {
        self(fit, eval)
    }
}

/// A design that does not depend on the fitting rows: rows are picked out of
/// one precomputed matrix.
pub struct FixedDesign<'a> {
    matrix: &'a DesignMatrix,
    index: BTreeMap<&'a str, usize>,
}

impl<'a> FixedDesign<'a> {
    pub fn new(matrix: &'a DesignMatrix) -> Self {
        let index = matrix
            .cell_line_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        FixedDesign { matrix, index }
    }

    fn rows(&self, ids: &[String]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                self.index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("cell line `{id}` not in design")))
            })
            .collect()
    }
}

impl DesignBuilder for FixedDesign<'_> {
    fn build(&self, fit: &[String], eval: &[String]) -> Result<(DesignMatrix, DesignMatrix)> {
        Ok((
            self.matrix.select_rows(&self.rows(fit)?),
            self.matrix.select_rows(&self.rows(eval)?),
        ))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions {
    pub seed: u64,
    /// Keep the refitted model of every outer loop.
    pub keep_models: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutPrediction {
    pub cell_line: String,
    pub observed: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopResult {
    pub index: usize,
    pub r2: Option<f64>,
    pub hyperparameters: Option<Hyperparameters>,
    /// Mean validation R² per grid point (`None` when every inner fit failed).
    pub inner_scores: Vec<Option<f64>>,
    pub predictions: Vec<HoldoutPrediction>,
    pub importances: Option<FeatureImportances>,
    #[serde(skip)]
    pub model: Option<FittedModel>,
    pub error: Option<String>,
}

impl LoopResult {
    fn failed(index: usize, inner_scores: Vec<Option<f64>>, hp: Option<Hyperparameters>, e: Error) -> Self {
        LoopResult {
            index,
            r2: None,
            hyperparameters: hp,
            inner_scores,
            predictions: Vec::new(),
            importances: None,
            model: None,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub loops: Vec<LoopResult>,
    /// Mean over the loops that produced an R².
    pub mean_r2: Option<f64>,
    pub failed_loops: usize,
    pub valid: bool,
}

impl EvaluationResult {
    pub fn from_loops(loops: Vec<LoopResult>) -> Self {
        let scores: Vec<f64> = loops.iter().filter_map(|l| l.r2).collect();
        let failed_loops = loops.len() - scores.len();
        let mean_r2 = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
        EvaluationResult {
            loops,
            mean_r2,
            failed_loops,
            valid: failed_loops <= MAX_FAILED_LOOPS && mean_r2.is_some(),
        }
    }

    pub fn r2_values(&self) -> Vec<f64> {
        self.loops.iter().filter_map(|l| l.r2).collect()
    }

    /// Population variance of the per-loop R² values.
    pub fn r2_variance(&self) -> Option<f64> {
        let v = self.r2_values();
        let m = self.mean_r2?;
        Some(v.iter().map(|r| (r - m).powi(2)).sum::<f64>() / v.len() as f64)
    }
}

fn responses_for(responses: &BTreeMap<String, f64>, ids: &[String]) -> Result<Vec<f64>> {
    ids.iter()
        .map(|id| {
            responses
                .get(id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("no response for cell line `{id}`")))
        })
        .collect()
}

fn fit_and_score(
    builder: &dyn DesignBuilder,
    responses: &BTreeMap<String, f64>,
    fit_ids: &[String],
    eval_ids: &[String],
    points: &[Hyperparameters],
    seeds: &[u64],
) -> Result<Vec<Option<f64>>> {
    let (xf, xe) = builder.build(fit_ids, eval_ids)?;
    let yf = responses_for(responses, fit_ids)?;
    let ye = responses_for(responses, eval_ids)?;
    Ok(points
        .iter()
        .zip(seeds)
        .map(|(hp, &s)| {
            let model = learners::fit(&xf, &yf, hp, s).ok()?;
            let pred = learners::predict(&model, &xe).ok()?;
            r2(&ye, &pred).ok()
        })
        .collect())
}

fn run_loop(
    index: usize,
    split: &OuterSplit,
    builder: &dyn DesignBuilder,
    responses: &BTreeMap<String, f64>,
    points: &[Hyperparameters],
    opts: EvalOptions,
) -> LoopResult {
    let o = index as u64;
    let mut sums = vec![0.0; points.len()];
    let mut counts = vec![0usize; points.len()];
    for (i, inner) in split.inner.iter().enumerate() {
        let seeds: Vec<u64> = (0..points.len())
            .map(|g| seed::derive(opts.seed, &[o, i as u64, g as u64]))
            .collect();
        match fit_and_score(builder, responses, &inner.train_ids, &inner.validation_ids, points, &seeds) {
            Ok(scores) => {
                for (g, s) in scores.into_iter().enumerate() {
                    if let Some(s) = s {
                        sums[g] += s;
                        counts[g] += 1;
                    }
                }
            }
            Err(e) => log::warn!("outer loop {index}, inner split {i}: {e}"),
        }
    }
    let inner_scores: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (g, s) in inner_scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((g, s));
            }
        }
    }
    let Some((g, _)) = best else {
        return LoopResult::failed(
            index,
            inner_scores,
            None,
            Error::invalid("no grid point could be fitted on the inner splits"),
        );
    };
    let hp = points[g].clone();

    let refit = || -> Result<(f64, Vec<HoldoutPrediction>, FittedModel)> {
        let (xf, xh) = builder.build(&split.train_ids, &split.holdout_ids)?;
        let yf = responses_for(responses, &split.train_ids)?;
        let model = learners::fit(&xf, &yf, &hp, seed::derive(opts.seed, &[o, u64::MAX, g as u64]))?;
        let pred = learners::predict(&model, &xh)?;
        let yh = responses_for(responses, &split.holdout_ids)?;
        let score = r2(&yh, &pred)?;
        let predictions = split
            .holdout_ids
            .iter()
            .zip(yh.iter().zip(&pred))
            .map(|(id, (&observed, &predicted))| HoldoutPrediction {
                cell_line: id.clone(),
                observed,
                predicted,
            })
            .collect();
        Ok((score, predictions, model))
    };
    match refit() {
        Ok((score, predictions, model)) => LoopResult {
            index,
            r2: Some(score),
            hyperparameters: Some(hp),
            inner_scores,
            predictions,
            importances: learners::feature_importances(&model),
            model: opts.keep_models.then_some(model),
            error: None,
        },
        Err(e) => {
            log::warn!("outer loop {index}: {e}");
            LoopResult::failed(index, inner_scores, Some(hp), e)
        }
    }
}

/// Inner grid search, refit on the outer training part, one score on the holdout,
/// for every outer split. Loops run in parallel and come back in order.
pub fn tune_and_evaluate(
    builder: &dyn DesignBuilder,
    responses: &BTreeMap<String, f64>,
    grid: &HyperparameterGrid,
    splits: &[OuterSplit],
    opts: EvalOptions,
) -> Result<EvaluationResult> {
    grid.validate()?;
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let loops: Vec<LoopResult> = splits
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_loop(i, s, builder, responses, &points, opts))
        .collect();
    Ok(EvaluationResult::from_loops(loops))
}
