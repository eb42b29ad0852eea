//! Seeded synthetic cell-line worlds with planted ground truth.
//!
//! Each drug gets a genomic score built from a few informative genes of one
//! feature type, plus a per-tissue shift and Gaussian noise. Viability at
//! concentration level `c` is `sigmoid(slope * (score + offset - step * c))`,
//! which never increases with dose. AUC is the mean viability over levels.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dose::{self, AucTable, DoseResponseTable, N_LEVELS};
use crate::error::{Error, Result};
use crate::genomic::{FeatureMatrix, FeatureType, GeneSet, GenomicData, TissueLabels, MAX_MUTATION_CODE};
use crate::seed;

/// Name of the gene set holding every informative gene.
pub const PLANTED_SET: &str = "planted";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Linear,
    /// Each informative gene contributes its weight when its value is positive.
    Threshold,
    /// Products of consecutive informative-gene pairs.
    Interaction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_cell_lines: usize,
    pub n_genes: usize,
    pub n_drugs: usize,
    /// Informative genes per drug, drawn independently for each drug.
    pub n_informative: usize,
    pub informative_type: FeatureType,
    pub link: Link,
    /// Standard deviation of the genomic score across cell lines.
    pub signal: f64,
    pub noise_sd: f64,
    pub n_tissues: usize,
    /// Standard deviation of the per-(drug, tissue) shifts.
    pub tissue_effect: f64,
    /// Probability that a drug was not tested on a cell line.
    pub missingness: f64,
    pub mutation_prevalence: f64,
    /// Pad the planted set with uninformative genes up to this size.
    pub planted_set_size: usize,
    pub n_decoy_sets: usize,
    /// Decoy set size; 0 means the planted set's size.
    pub decoy_set_size: usize,
    pub slope: f64,
    pub dose_step: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_cell_lines: 300,
            n_genes: 500,
            n_drugs: 5,
            n_informative: 20,
            informative_type: FeatureType::Expression,
            link: Link::Linear,
            signal: 1.0,
            noise_sd: 0.1,
            n_tissues: 4,
            tissue_effect: 0.0,
            missingness: 0.0,
            mutation_prevalence: 0.2,
            planted_set_size: 0,
            n_decoy_sets: 2,
            decoy_set_size: 0,
            slope: 1.5,
            dose_step: 0.6,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_cell_lines < 2 || self.n_genes == 0 || self.n_drugs == 0 {
            return bad("need at least 2 cell lines, 1 gene and 1 drug".into());
        }
        if self.n_informative > self.n_genes {
            return bad(format!(
                "{} informative genes do not fit in a universe of {}",
                self.n_informative, self.n_genes
            ));
        }
        if self.planted_set_size > self.n_genes || self.decoy_set_size > self.n_genes {
            return bad("gene set larger than the gene universe".into());
        }
        if !(self.noise_sd >= 0.0 && self.signal >= 0.0 && self.tissue_effect >= 0.0) {
            return bad("noise_sd, signal and tissue_effect must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.missingness) {
            return bad("missingness must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.mutation_prevalence) {
            return bad("mutation_prevalence must lie in [0, 1]".into());
        }
        if self.n_tissues == 0 {
            return bad("need at least one tissue".into());
        }
        if !(self.slope > 0.0 && self.dose_step > 0.0) {
            return bad("slope and dose_step must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrugTruth {
    pub drug_id: String,
    pub feature_type: FeatureType,
    pub informative_genes: Vec<String>,
    pub weights: Vec<f64>,
    pub link: Link,
    pub offset: f64,
    pub tissue_effects: BTreeMap<String, f64>,
    pub calibrated_level: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    pub drugs: Vec<DrugTruth>,
    /// Viability of every tested pair at the drug's calibrated level.
    pub viability: BTreeMap<String, BTreeMap<String, f64>>,
    /// Lowest calibrated viability per cell line, ties by drug id.
    pub best_drug: BTreeMap<String, String>,
    /// Drugs per cell line from best to worst.
    pub ordering: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub data: GenomicData,
    pub dose_response: BTreeMap<String, DoseResponseTable>,
    pub auc: AucTable,
    pub truth: GroundTruth,
}

/// File locations written by [`SyntheticWorld::write`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldFiles {
    pub expression: PathBuf,
    pub mutation: PathBuf,
    pub copy_number: PathBuf,
    pub tissues: PathBuf,
    pub gene_sets: PathBuf,
    pub dose_response: PathBuf,
    pub auc: PathBuf,
    pub truth: PathBuf,
}

impl WorldFiles {
    pub fn in_dir(dir: &Path) -> Self {
        WorldFiles {
            expression: dir.join("expression.csv"),
            mutation: dir.join("mutation.csv"),
            copy_number: dir.join("copy_number.csv"),
            tissues: dir.join("tissues.csv"),
            gene_sets: dir.join("gene_sets"),
            dose_response: dir.join("dose_response.csv"),
            auc: dir.join("auc.csv"),
            truth: dir.join("truth.json"),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 1e-12 { (*x - mean) / sd } else { 0.0 };
    }
}

fn raw_score(link: Link, x: &[f64], w: &[f64]) -> f64 {
    match link {
        Link::Linear => x.iter().zip(w).map(|(a, b)| a * b).sum(),
        Link::Threshold => x.iter().zip(w).filter(|(a, _)| **a > 0.0).map(|(_, b)| b).sum(),
        Link::Interaction => {
            let mut s = 0.0;
            for k in (0..x.len()).step_by(2) {
                s += w[k] * if k + 1 < x.len() { x[k] * x[k + 1] } else { x[k] };
            }
            s
        }
    }
}

/// Builds the world described by `spec`. Same spec, same world, bit for bit.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let n = spec.n_cell_lines;
    let p = spec.n_genes;
    let cells: Vec<String> = (1..=n).map(|i| format!("CL{i:04}")).collect();
    let genes: Vec<String> = (1..=p).map(|j| format!("G{j:04}")).collect();
    let tissues: Vec<String> = (1..=spec.n_tissues).map(|t| format!("T{t}")).collect();

    let mut rng = seed::rng(spec.seed, &[1]);
    let tissue_of: Vec<usize> = (0..n).map(|_| rng.gen_range(0..spec.n_tissues)).collect();
    let labels = TissueLabels::new(
        cells
            .iter()
            .zip(&tissue_of)
            .map(|(c, &t)| (c.clone(), tissues[t].clone()))
            .collect(),
    );

    let mut rng = seed::rng(spec.seed, &[2]);
    let expr = Array2::from_shape_simple_fn((n, p), || rng.sample::<f64, _>(StandardNormal));
    let mut rng = seed::rng(spec.seed, &[3]);
    let mutation = Array2::from_shape_simple_fn((n, p), || {
        if rng.gen_bool(spec.mutation_prevalence) {
            f64::from(rng.gen_range(1..=MAX_MUTATION_CODE))
        } else {
            0.0
        }
    });
    let mut rng = seed::rng(spec.seed, &[4]);
    let cnv = Array2::from_shape_simple_fn((n, p), || {
        (rng.sample::<f64, _>(StandardNormal) * 0.8).round().clamp(-2.0, 2.0)
    });

    let mut drugs = Vec::with_capacity(spec.n_drugs);
    let mut dose_response = BTreeMap::new();
    let mut auc = AucTable::new();
    let mut planted: BTreeSet<String> = BTreeSet::new();
    for d in 0..spec.n_drugs {
        let drug_id = format!("D{:02}", d + 1);
        let mut rng = seed::rng(spec.seed, &[10, d as u64]);
        let cols: Vec<usize> = index::sample(&mut rng, p, spec.n_informative).into_vec();
        let weights: Vec<f64> = cols
            .iter()
            .map(|_| {
                let m: f64 = rng.gen_range(0.5..1.5);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let offset: f64 = rng.gen_range(2.5..3.5);
        let tissue_effects: BTreeMap<String, f64> = tissues
            .iter()
            .map(|t| (t.clone(), spec.tissue_effect * rng.sample::<f64, _>(StandardNormal)))
            .collect();

        let source = match spec.informative_type {
            FeatureType::Expression => &expr,
            FeatureType::Mutation => &mutation,
            FeatureType::CopyNumber => &cnv,
        };
        let mut genomic: Vec<f64> = (0..n)
            .map(|i| {
                let x: Vec<f64> = cols
                    .iter()
                    .map(|&c| match spec.informative_type {
                        FeatureType::Mutation => f64::from(u8::from(source[[i, c]] != 0.0)),
                        _ => source[[i, c]],
                    })
                    .collect();
                raw_score(spec.link, &x, &weights)
            })
            .collect();
        standardize(&mut genomic);

        let mut noise_rng = seed::rng(spec.seed, &[20, d as u64]);
        let mut miss_rng = seed::rng(spec.seed, &[30, d as u64]);
        let mut table = DoseResponseTable::new(&drug_id);
        let mut drug_auc = BTreeMap::new();
        for i in 0..n {
            let eps: f64 = noise_rng.sample(StandardNormal);
            let tested = !miss_rng.gen_bool(spec.missingness);
            if !tested {
                continue;
            }
            let score = spec.signal * genomic[i] + tissue_effects[&tissues[tissue_of[i]]] + spec.noise_sd * eps;
            let mut curve = [None; N_LEVELS];
            for (c, slot) in curve.iter_mut().enumerate() {
                *slot = Some(sigmoid(spec.slope * (score + offset - spec.dose_step * c as f64)));
            }
            let area = curve.iter().flatten().sum::<f64>() / N_LEVELS as f64;
            table.insert(cells[i].clone(), curve)?;
            drug_auc.insert(cells[i].clone(), area);
        }
        let informative_genes: Vec<String> = cols.iter().map(|&c| genes[c].clone()).collect();
        planted.extend(informative_genes.iter().cloned());
        let calibrated_level = if table.is_empty() {
            0
        } else {
            dose::calibrate_concentration(&table, dose::DEFAULT_TARGET_VIABILITY)?.level
        };
        drugs.push(DrugTruth {
            drug_id: drug_id.clone(),
            feature_type: spec.informative_type,
            informative_genes,
            weights,
            link: spec.link,
            offset,
            tissue_effects,
            calibrated_level,
        });
        dose_response.insert(drug_id.clone(), table);
        auc.insert(drug_id, drug_auc);
    }

    let mut rng = seed::rng(spec.seed, &[40]);
    let mut others: Vec<&String> = genes.iter().filter(|g| !planted.contains(*g)).collect();
    others.shuffle(&mut rng);
    let target = spec.planted_set_size.max(if planted.is_empty() { 20.min(p) } else { 0 });
    let mut pool = others.into_iter();
    while planted.len() < target {
        match pool.next() {
            Some(g) => planted.insert(g.clone()),
            None => break,
        };
    }
    let decoy_size = if spec.decoy_set_size > 0 {
        spec.decoy_set_size
    } else {
        planted.len()
    };
    let mut sets = vec![GeneSet::new(PLANTED_SET, planted.iter().cloned())?];
    let uninformative: Vec<&String> = genes
        .iter()
        .filter(|g| !drugs.iter().any(|d| d.informative_genes.contains(*g)))
        .collect();
    for k in 1..=spec.n_decoy_sets {
        let mut rng = seed::rng(spec.seed, &[41, k as u64]);
        let size = decoy_size.min(uninformative.len());
        let chosen = index::sample(&mut rng, uninformative.len(), size);
        sets.push(GeneSet::new(
            format!("decoy_{k}"),
            chosen.into_iter().map(|i| uninformative[i].clone()),
        )?);
    }

    let mut viability: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for d in &drugs {
        for (c, v) in dose_response[&d.drug_id].responses_at(d.calibrated_level)? {
            viability.entry(c).or_default().insert(d.drug_id.clone(), v);
        }
    }
    let mut best_drug = BTreeMap::new();
    let mut ordering = BTreeMap::new();
    for (c, by_drug) in &viability {
        let mut order: Vec<(&String, f64)> = by_drug.iter().map(|(d, &v)| (d, v)).collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        best_drug.insert(c.clone(), order[0].0.clone());
        ordering.insert(c.clone(), order.into_iter().map(|(d, _)| d.clone()).collect());
    }

    let data = GenomicData::new(
        [
            FeatureMatrix::new(FeatureType::Expression, cells.clone(), genes.clone(), expr)?,
            FeatureMatrix::new(FeatureType::Mutation, cells.clone(), genes.clone(), mutation)?,
            FeatureMatrix::new(FeatureType::CopyNumber, cells, genes, cnv)?,
        ],
        sets,
        Some(labels),
    )?;
    Ok(SyntheticWorld {
        data,
        dose_response,
        auc,
        truth: GroundTruth {
            spec: spec.clone(),
            drugs,
            viability,
            best_drug,
            ordering,
        },
    })
}

impl SyntheticWorld {
    /// Writes every input file in the ingestion formats plus `truth.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<WorldFiles> {
        let dir = dir.as_ref();
        let files = WorldFiles::in_dir(dir);
        fs::create_dir_all(&files.gene_sets).map_err(|e| Error::io(&files.gene_sets, e))?;
        self.data.matrix(FeatureType::Expression)?.write_csv(&files.expression)?;
        self.data.matrix(FeatureType::Mutation)?.write_csv(&files.mutation)?;
        self.data.matrix(FeatureType::CopyNumber)?.write_csv(&files.copy_number)?;
        if let Some(t) = &self.data.tissues {
            t.write_csv(&files.tissues)?;
        }
        for s in self.data.gene_sets.values() {
            s.write(&files.gene_sets)?;
        }
        dose::write_dose_response(&files.dose_response, &self.dose_response)?;
        dose::write_auc(&files.auc, &self.auc)?;
        let json = serde_json::to_string_pretty(&self.truth)?;
        fs::write(&files.truth, json + "\n").map_err(|e| Error::io(&files.truth, e))?;
        Ok(files)
    }
}
