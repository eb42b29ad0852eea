//! Tunes an elastic net grid with repeated outer holdouts and inner validation splits.

use std::collections::BTreeMap;

use cell_line_analyzer::genomic::DesignMatrix;
use cell_line_analyzer::harness::{make_split_plan, tune_and_evaluate, EvalOptions, FixedDesign, SplitPlan};
use cell_line_analyzer::learners::HyperparameterGrid;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> cell_line_analyzer::Result<()> {
    let (n, p) = (150, 30);
    let mut rng = cell_line_analyzer::seed::rng(9, &[]);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let ids: Vec<String> = (0..n).map(|i| format!("CL{i:03}")).collect();
    let y: BTreeMap<String, f64> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), x[[i, 0]] + 0.5 * x[[i, 1]] + 0.5 * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let design = DesignMatrix::from_columns(ids.clone(), (0..p).map(|j| format!("expr:G{j}")).collect(), x)?;

    let plan = SplitPlan { n_outer: 5, n_inner: 3, seed: 1, ..Default::default() };
    let splits = make_split_plan(&plan, &ids)?;
    let grid = HyperparameterGrid::ElasticNet { penalty: vec![0.001, 0.01, 0.1, 1.0], mixing: vec![0.0, 0.5, 1.0] };
    let result = tune_and_evaluate(&FixedDesign::new(&design), &y, &grid, &splits, EvalOptions { seed: 1, keep_models: false })?;

    for l in &result.loops {
        println!(
            "loop {}: holdout R2 {:.3} with {}",
            l.index,
            l.r2.unwrap_or(f64::NAN),
            l.hyperparameters.as_ref().map(|h| h.to_json()).unwrap_or_default()
        );
    }
    println!(
        "mean R2 {:.3}, variance {:.4}, failed loops {}",
        result.mean_r2.unwrap_or(f64::NAN),
        result.r2_variance().unwrap_or(f64::NAN),
        result.failed_loops
    );
    Ok(())
}
