//! Spearman correlation and the two-sided rank-sum test, exact and approximate.

use cell_line_analyzer::stats::{ranksum, spearman};

fn main() -> cell_line_analyzer::Result<()> {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
    println!("spearman = {:.3}", spearman(&x, &y)?);

    let a = [0.61, 0.58, 0.72, 0.66, 0.70];
    let b = [0.41, 0.52, 0.49, 0.55, 0.47, 0.60];
    let small = ranksum(&a, &b)?;
    println!("n=11: W={} p={:.4} exact={}", small.statistic, small.p_value, small.exact);

    let a: Vec<f64> = (0..20).map(|i| i as f64 * 0.1 + 0.5).collect();
    let b: Vec<f64> = (0..25).map(|i| i as f64 * 0.1).collect();
    let large = ranksum(&a, &b)?;
    println!("n=45: W={} p={:.4} exact={}", large.statistic, large.p_value, large.exact);
    Ok(())
}
