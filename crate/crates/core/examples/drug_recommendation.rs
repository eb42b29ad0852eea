//! Leave-one-out drug recommendation against the tissue and random baselines.

use std::collections::BTreeMap;

use cell_line_analyzer::dose;
use cell_line_analyzer::drs::{self, DrsConfig, Policy};
use cell_line_analyzer::genomic::{Combo, EncodingOptions, FeatureType};
use cell_line_analyzer::learners::{Algorithm, Hyperparameters};
use cell_line_analyzer::mas::BestConfig;
use cell_line_analyzer::synthetic::{generate, SyntheticSpec, PLANTED_SET};

fn main() -> cell_line_analyzer::Result<()> {
    let world = generate(&SyntheticSpec {
        n_cell_lines: 100,
        n_genes: 60,
        n_drugs: 6,
        n_informative: 6,
        tissue_effect: 1.0,
        seed: 8,
        ..Default::default()
    })?;
    let (_, truth) = dose::calibrated_viabilities(&world.dose_response, dose::DEFAULT_TARGET_VIABILITY)?;

    let best: BTreeMap<String, BestConfig> = truth
        .keys()
        .map(|d| {
            let cfg = BestConfig {
                algorithm: Algorithm::ElasticNet,
                combo: Combo::single(FeatureType::Expression, PLANTED_SET),
                hyperparameters: Hyperparameters::ElasticNet { penalty: 0.03, mixing: 0.5 },
                mean_r2: 0.0,
                r2_variance: 0.0,
                univariate_k: None,
                encoding: EncodingOptions { include_tissue: true, ..Default::default() },
            };
            (d.clone(), cfg)
        })
        .collect();

    let config = DrsConfig { min_drugs_per_cell_line: 6, seed: 8, ..Default::default() };
    let outcome = drs::recommend_loo(&config, &world.data, &best, &truth)?;
    for policy in [Policy::TopN { n: 1 }, Policy::Epsilon { epsilon: 0.05 }] {
        let eval = drs::evaluate(&outcome, &truth, policy)?;
        println!("{policy:?}");
        for (name, m) in [("drs", Some(&eval.drs)), ("tissue", eval.tissue.as_ref()), ("random", Some(&eval.random))] {
            if let Some(m) = m {
                println!("  {name:<7} top-1 {:.2}  mean true rank {:.2}", m.top1, m.mean_true_rank);
            }
        }
    }
    Ok(())
}
