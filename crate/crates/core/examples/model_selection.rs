//! Per-drug search over algorithms and gene-set combos on a planted world.

use cell_line_analyzer::dose;
use cell_line_analyzer::genomic::FeatureType;
use cell_line_analyzer::harness::SplitPlan;
use cell_line_analyzer::learners::HyperparameterGrid;
use cell_line_analyzer::mas::{self, MasRunConfig};
use cell_line_analyzer::synthetic::{generate, SyntheticSpec};

fn main() -> cell_line_analyzer::Result<()> {
    let world = generate(&SyntheticSpec { n_cell_lines: 150, n_genes: 100, n_drugs: 3, n_informative: 8, seed: 2, ..Default::default() })?;
    let (_, responses) = dose::calibrated_viabilities(&world.dose_response, dose::DEFAULT_TARGET_VIABILITY)?;

    let config = MasRunConfig {
        grids: vec![HyperparameterGrid::ElasticNet { penalty: vec![0.003, 0.03], mixing: vec![0.5] }],
        feature_types: vec![FeatureType::Expression, FeatureType::CopyNumber],
        plan: SplitPlan { n_outer: 5, n_inner: 3, ..Default::default() },
        seed: 2,
        ..Default::default()
    };
    let outcome = mas::run_mas(&config, &world.data, &responses)?;

    for d in &outcome.drugs {
        if let Some(b) = &d.best {
            println!("{}: {} on {} (mean R2 {:.3})", d.drug_id, b.algorithm.as_str(), b.combo.id(), b.mean_r2);
        }
    }
    println!("\ngene set comparison (usage among each algorithm's top 5 combos):");
    for c in mas::compare_all_gene_sets(&outcome, &config.set_names(&world.data), 5) {
        println!("{} {:<8} p={:.3} usage={}", c.drug_id, c.gene_set, c.p_value, c.usage);
    }
    Ok(())
}
