//! Elastic net, RBF support vector regression and random forest regressors.
//!
//! All three share the same contract: fit on a [`DesignMatrix`] plus a
//! response vector, predict only on a design matrix with the identical
//! column list, and (for elastic net and random forest) report normalized
//! feature importances.

mod elastic_net;
mod forest;
mod svr;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genomic::DesignMatrix;

pub use elastic_net::{fit_elastic_net, ElasticNetModel, ElasticNetOptions};
pub use forest::{fit_random_forest, ForestModel, ForestOptions, Tree, TreeNode};
pub use svr::{fit_svr_rbf, kkt_residuals, SvrModel, SvrOptions};

/// The three supported algorithm families, in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ElasticNet,
    SvrRbf,
    RandomForest,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::ElasticNet, Algorithm::SvrRbf, Algorithm::RandomForest];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::ElasticNet => "elastic_net",
            Algorithm::SvrRbf => "svr_rbf",
            Algorithm::RandomForest => "random_forest",
        }
    }

    pub fn has_importances(self) -> bool {
        self != Algorithm::SvrRbf
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elastic_net" => Ok(Algorithm::ElasticNet),
            "svr_rbf" | "svr" => Ok(Algorithm::SvrRbf),
            "random_forest" => Ok(Algorithm::RandomForest),
            other => Err(Error::invalid(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Number of candidate features examined per random-forest split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaxFeaturesRepr", into = "MaxFeaturesRepr")]
pub enum MaxFeatures {
    Sqrt,
    Fraction(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MaxFeaturesRepr {
    Name(String),
    Fraction(f64),
}

impl TryFrom<MaxFeaturesRepr> for MaxFeatures {
    type Error = String;

    fn try_from(r: MaxFeaturesRepr) -> std::result::Result<Self, String> {
        match r {
            MaxFeaturesRepr::Name(s) if s == "sqrt" => Ok(MaxFeatures::Sqrt),
            MaxFeaturesRepr::Name(s) => Err(format!("unknown max_features `{s}`")),
            MaxFeaturesRepr::Fraction(f) => Ok(MaxFeatures::Fraction(f)),
        }
    }
}

impl From<MaxFeatures> for MaxFeaturesRepr {
    fn from(m: MaxFeatures) -> Self {
        match m {
            MaxFeatures::Sqrt => MaxFeaturesRepr::Name("sqrt".into()),
            MaxFeatures::Fraction(f) => MaxFeaturesRepr::Fraction(f),
        }
    }
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Fraction(f) => (f * n_features as f64).floor() as usize,
        };
        k.clamp(1, n_features.max(1))
    }
}

/// One point of a hyperparameter grid.
///
/// SVR stores its kernel width as `gamma_scale`; the fitted width is
/// `gamma_scale / d` with `d` the number of design columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Hyperparameters {
    ElasticNet { penalty: f64, mixing: f64 },
    SvrRbf { c: f64, gamma_scale: f64, tube: f64 },
    RandomForest { n_trees: usize, max_features: MaxFeatures, min_leaf: usize },
}

impl Hyperparameters {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyperparameters::ElasticNet { .. } => Algorithm::ElasticNet,
            Hyperparameters::SvrRbf { .. } => Algorithm::SvrRbf,
            Hyperparameters::RandomForest { .. } => Algorithm::RandomForest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Hyperparameters::ElasticNet { penalty, mixing } => {
                penalty > 0.0 && penalty.is_finite() && (0.0..=1.0).contains(&mixing)
            }
            Hyperparameters::SvrRbf { c, gamma_scale, tube } => {
                c > 0.0 && c.is_finite() && gamma_scale > 0.0 && gamma_scale.is_finite() && tube >= 0.0
            }
            Hyperparameters::RandomForest {
                n_trees,
                max_features,
                min_leaf,
            } => {
                n_trees >= 1
                    && min_leaf >= 1
                    && match max_features {
                        MaxFeatures::Sqrt => true,
                        MaxFeatures::Fraction(f) => f > 0.0 && f <= 1.0,
                    }
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("hyperparameters out of range: {self:?}")))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("hyperparameters serialize")
    }
}

/// Per-algorithm lists of candidate values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum HyperparameterGrid {
    ElasticNet {
        penalty: Vec<f64>,
        mixing: Vec<f64>,
    },
    SvrRbf {
        c: Vec<f64>,
        gamma_scale: Vec<f64>,
        tube: Vec<f64>,
    },
    RandomForest {
        n_trees: Vec<usize>,
        max_features: Vec<MaxFeatures>,
        min_leaf: Vec<usize>,
    },
}

impl HyperparameterGrid {
    pub fn default_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::ElasticNet => HyperparameterGrid::ElasticNet {
                penalty: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
                mixing: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            },
            Algorithm::SvrRbf => HyperparameterGrid::SvrRbf {
                c: vec![0.1, 1.0, 10.0, 100.0],
                gamma_scale: vec![0.1, 1.0, 10.0],
                tube: vec![0.01, 0.1],
            },
            Algorithm::RandomForest => HyperparameterGrid::RandomForest {
                n_trees: vec![100],
                max_features: vec![MaxFeatures::Sqrt, MaxFeatures::Fraction(0.25), MaxFeatures::Fraction(1.0)],
                min_leaf: vec![1, 5],
            },
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            HyperparameterGrid::ElasticNet { .. } => Algorithm::ElasticNet,
            HyperparameterGrid::SvrRbf { .. } => Algorithm::SvrRbf,
            HyperparameterGrid::RandomForest { .. } => Algorithm::RandomForest,
        }
    }

    /// Grid points in tie-break order: strongest regularization first.
    ///
    /// Elastic net: penalty descending. SVR: C ascending, gamma ascending,
    /// tube descending. Random forest: min_leaf descending. Remaining
    /// lists keep their given order.
    pub fn points(&self) -> Vec<Hyperparameters> {
        fn sorted<T: Copy>(v: &[T], cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> Vec<T> {
            let mut v = v.to_vec();
            v.sort_by(cmp);
            v
        }
        let mut out = Vec::new();
        match self {
            HyperparameterGrid::ElasticNet { penalty, mixing } => {
                for &p in &sorted(penalty, |a, b| b.total_cmp(a)) {
                    for &m in mixing {
                        out.push(Hyperparameters::ElasticNet { penalty: p, mixing: m });
                    }
                }
            }
            HyperparameterGrid::SvrRbf { c, gamma_scale, tube } => {
                for &cv in &sorted(c, f64::total_cmp) {
                    for &g in &sorted(gamma_scale, f64::total_cmp) {
                        for &t in &sorted(tube, |a, b| b.total_cmp(a)) {
                            out.push(Hyperparameters::SvrRbf {
                                c: cv,
                                gamma_scale: g,
                                tube: t,
                            });
                        }
                    }
                }
            }
            HyperparameterGrid::RandomForest {
                n_trees,
                max_features,
                min_leaf,
            } => {
                for &l in &sorted(min_leaf, |a, b| b.cmp(a)) {
                    for &t in n_trees {
                        for &f in max_features {
                            out.push(Hyperparameters::RandomForest {
                                n_trees: t,
                                max_features: f,
                                min_leaf: l,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let empty = match self {
            HyperparameterGrid::ElasticNet { penalty, mixing } => penalty.is_empty() || mixing.is_empty(),
            HyperparameterGrid::SvrRbf { c, gamma_scale, tube } => {
                c.is_empty() || gamma_scale.is_empty() || tube.is_empty()
            }
            HyperparameterGrid::RandomForest {
                n_trees,
                max_features,
                min_leaf,
            } => n_trees.is_empty() || max_features.is_empty() || min_leaf.is_empty(),
        };
        if empty {
            return Err(Error::invalid(format!("{} grid has an empty parameter list", self.algorithm())));
        }
        self.points().iter().try_for_each(Hyperparameters::validate)
    }
}

/// Per-column z-scoring with statistics from the fitting rows.
///
/// Columns with zero variance get `std = 0` and standardize to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const ZERO_VARIANCE: f64 = 1e-12;

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(if var.sqrt() > ZERO_VARIANCE * (1.0 + m.abs()) {
                var.sqrt()
            } else {
                0.0
            });
        }
        Standardizer { mean, std }
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.std[j] == 0.0
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.to_owned();
        for (j, mut col) in z.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| if s == 0.0 { 0.0 } else { (v - m) / s });
        }
        z
    }
}

/// Algorithm-specific learned state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    ElasticNet(ElasticNetModel),
    SvrRbf(SvrModel),
    RandomForest(ForestModel),
}

/// Version tag of the audit JSON written by [`FittedModel::to_audit_json`].
pub const MODEL_REPORT_VERSION: u32 = 1;

/// A trained regressor bound to the exact column list it was fitted on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub algorithm: Algorithm,
    pub columns: Vec<String>,
    pub standardizer: Standardizer,
    pub params: ModelParams,
}

impl FittedModel {
    pub fn to_audit_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "format_version": MODEL_REPORT_VERSION,
            "model": self,
        }))
        .expect("model serializes")
    }

    fn predict_raw(&self, x: ArrayView2<f64>) -> Vec<f64> {
        match &self.params {
            ModelParams::ElasticNet(m) => m.predict(&self.standardizer.transform(x)),
            ModelParams::SvrRbf(m) => m.predict(&self.standardizer.transform(x)),
            // trees split on raw values
            ModelParams::RandomForest(m) => m.predict(x),
        }
    }
}

pub(crate) fn check_inputs(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} responses", x.nrows(), y.len())));
    }
    if y.len() < 2 {
        return Err(Error::invalid("need at least two training rows"));
    }
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }
    Ok(())
}

/// Fits the model described by `hp`. `seed` only matters for random forests.
pub fn fit(x: &DesignMatrix, y: &[f64], hp: &Hyperparameters, seed: u64) -> Result<FittedModel> {
    hp.validate()?;
    match *hp {
        Hyperparameters::ElasticNet { penalty, mixing } => fit_elastic_net(x, y, penalty, mixing),
        Hyperparameters::SvrRbf { c, gamma_scale, tube } => {
            let gamma = gamma_scale / x.ncols().max(1) as f64;
            fit_svr_rbf(x, y, c, gamma, tube)
        }
        Hyperparameters::RandomForest {
            n_trees,
            max_features,
            min_leaf,
        } => fit_random_forest(
            x,
            y,
            &ForestOptions {
                n_trees,
                max_features,
                min_leaf,
                seed,
                ..Default::default()
            },
        ),
    }
}

/// Predicts one value per row. The design must carry exactly the fitted
/// columns, in the same order.
pub fn predict(model: &FittedModel, x: &DesignMatrix) -> Result<Vec<f64>> {
    if x.column_names != model.columns {
        let missing = model
            .columns
            .iter()
            .filter(|c| !x.column_names.contains(c))
            .cloned()
            .collect();
        let unexpected = x
            .column_names
            .iter()
            .filter(|c| !model.columns.contains(c))
            .cloned()
            .collect();
        return Err(Error::ColumnMismatch { missing, unexpected });
    }
    if x.nrows() == 0 {
        return Ok(Vec::new());
    }
    let out = model.predict_raw(x.values.view());
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prediction"));
    }
    Ok(out)
}

/// Non-negative weights per column summing to 1 (all zero when nothing is used).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportances {
    pub weights: BTreeMap<String, f64>,
}

impl FeatureImportances {
    pub fn from_raw(names: &[String], raw: &[f64]) -> Self {
        let total: f64 = raw.iter().sum();
        let weights = names
            .iter()
            .zip(raw)
            .map(|(n, &v)| (n.clone(), if total > 0.0 { v / total } else { 0.0 }))
            .collect();
        FeatureImportances { weights }
    }

    pub fn get(&self, column: &str) -> f64 {
        self.weights.get(column).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Columns sorted by descending weight, then name.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.weights.iter().map(|(k, &w)| (k.as_str(), w)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

/// Elastic net: |standardized coefficient|; random forest: mean impurity
/// decrease. SVR has none and returns `None`.
pub fn feature_importances(model: &FittedModel) -> Option<FeatureImportances> {
    let raw: Vec<f64> = match &model.params {
        ModelParams::ElasticNet(m) => m.coefficients.iter().map(|c| c.abs()).collect(),
        ModelParams::RandomForest(m) => m.impurity_decrease(),
        ModelParams::SvrRbf(_) => return None,
    };
    Some(FeatureImportances::from_raw(&model.columns, &raw))
}
