//! Generates a small synthetic world, writes it to disk and prints its planted truth.
//!
//! cargo run --example synthetic_world -- /tmp/world

use cell_line_analyzer::synthetic::{generate, SyntheticSpec};

fn main() -> cell_line_analyzer::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic_world".into());
    let spec = SyntheticSpec {
        n_cell_lines: 120,
        n_genes: 80,
        n_drugs: 4,
        n_informative: 6,
        tissue_effect: 0.5,
        seed: 11,
        ..Default::default()
    };
    let world = generate(&spec)?;
    let files = world.write(&out)?;

    println!("wrote {} cell lines x {} genes to {out}", spec.n_cell_lines, spec.n_genes);
    println!("gene sets: {:?}", world.data.gene_sets.keys().collect::<Vec<_>>());
    for d in &world.truth.drugs {
        println!(
            "{}: {} informative {} genes, calibrated level {}",
            d.drug_id,
            d.informative_genes.len(),
            d.feature_type,
            d.calibrated_level
        );
    }
    let mut wins = std::collections::BTreeMap::<&str, usize>::new();
    for drug in world.truth.best_drug.values() {
        *wins.entry(drug).or_default() += 1;
    }
    println!("truly best drug counts: {wins:?}");
    println!("ground truth: {}", files.truth.display());
    Ok(())
}
