//! Fits the three regressors on one planted problem and compares them on held-out rows.

use cell_line_analyzer::genomic::DesignMatrix;
use cell_line_analyzer::harness::r2;
use cell_line_analyzer::learners::{self, Hyperparameters, MaxFeatures};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> cell_line_analyzer::Result<()> {
    let (n, p) = (200, 12);
    let mut rng = cell_line_analyzer::seed::rng(5, &[]);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n)
        .map(|i| 2.0 * x[[i, 0]] - x[[i, 1]] + (x[[i, 2]] > 0.0) as u8 as f64 + 0.2 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let ids = (0..n).map(|i| format!("CL{i:03}")).collect();
    let names = (0..p).map(|j| format!("expr:G{j}")).collect();
    let design = DesignMatrix::from_columns(ids, names, x)?;
    let train: Vec<usize> = (0..150).collect();
    let test: Vec<usize> = (150..n).collect();
    let (xtr, xte) = (design.select_rows(&train), design.select_rows(&test));
    let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let yte: Vec<f64> = test.iter().map(|&i| y[i]).collect();

    let candidates = [
        Hyperparameters::ElasticNet { penalty: 0.01, mixing: 0.5 },
        Hyperparameters::SvrRbf { c: 10.0, gamma_scale: 1.0, tube: 0.1 },
        Hyperparameters::RandomForest { n_trees: 200, max_features: MaxFeatures::Fraction(0.5), min_leaf: 2 },
    ];
    for hp in &candidates {
        let model = learners::fit(&xtr, &ytr, hp, 1)?;
        let pred = learners::predict(&model, &xte)?;
        print!("{:<14} test R2 {:.3}", hp.algorithm().as_str(), r2(&yte, &pred)?);
        if let Some(imp) = learners::feature_importances(&model) {
            let top: Vec<_> = imp.ranked().into_iter().take(3).map(|(c, v)| format!("{c}={v:.2}")).collect();
            print!("  top: {}", top.join(", "));
        }
        println!();
    }
    Ok(())
}
