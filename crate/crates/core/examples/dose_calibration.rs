//! Calibrates each drug to the level nearest 75% mean viability and shows the curve means.

use cell_line_analyzer::dose::{self, N_LEVELS};
use cell_line_analyzer::synthetic::{generate, SyntheticSpec};

fn main() -> cell_line_analyzer::Result<()> {
    let world = generate(&SyntheticSpec { n_cell_lines: 60, n_drugs: 3, missingness: 0.1, seed: 4, ..Default::default() })?;
    for (drug, table) in &world.dose_response {
        let means: Vec<String> = (0..N_LEVELS)
            .map(|l| {
                let r = table.responses_at(l).unwrap_or_default();
                format!("{:.2}", r.values().sum::<f64>() / r.len().max(1) as f64)
            })
            .collect();
        let c = dose::calibrate_concentration(table, dose::DEFAULT_TARGET_VIABILITY)?;
        println!("{drug}: level {} (mean {:.3})  curve [{}]", c.level, c.mean_viability, means.join(" "));
    }
    Ok(())
}
