//! Per-drug model analysis and selection: every algorithm × combo pair goes
//! through the double-split harness, the best configuration is kept for the
//! recommender, and gene sets are compared by the R² of combos using them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use ndarray::ArrayView1;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genomic::{
    enumerate_combos_by_name, Combo, DesignLayout, DesignMatrix, EncodingOptions, FeatureMatrix, FeatureType,
    GeneSet, GenomicData,
};
use crate::harness::{make_split_plan, tune_and_evaluate, DesignBuilder, EvalOptions, EvaluationResult, SplitPlan};
use crate::learners::{Algorithm, FeatureImportances, HyperparameterGrid, Hyperparameters};
use crate::seed;
use crate::stats::{is_constant, ranksum_test, spearman};

/// Pseudo gene set whose genes are picked per training partition.
pub const UNIVARIATE_SET: &str = "univariate";

/// Default number of genes kept by univariate selection.
pub const DEFAULT_UNIVARIATE_K: usize = 263;

/// Significance level used in reports.
pub const SIGNIFICANCE: f64 = 0.05;

/// Drug id → cell line id → response.
pub type Responses = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MasRunConfig {
    /// Drugs to analyze; empty means every drug with responses.
    pub drugs: Vec<String>,
    /// One grid per algorithm to run.
    pub grids: Vec<HyperparameterGrid>,
    pub feature_types: Vec<FeatureType>,
    /// Gene sets entering combos; empty means every loaded set.
    pub gene_sets: Vec<String>,
    /// Split geometry. Its seed is replaced by one derived from `seed` and the drug.
    pub plan: SplitPlan,
    pub encoding: EncodingOptions,
    pub min_cell_lines: usize,
    /// When set, adds the [`UNIVARIATE_SET`] pseudo set keeping this many genes.
    pub univariate_k: Option<usize>,
    pub top_k_importances: usize,
    pub top_n_usage: usize,
    pub seed: u64,
}

impl Default for MasRunConfig {
    fn default() -> Self {
        MasRunConfig {
            drugs: Vec::new(),
            grids: Algorithm::ALL.iter().map(|&a| HyperparameterGrid::default_for(a)).collect(),
            feature_types: FeatureType::ALL.to_vec(),
            gene_sets: Vec::new(),
            plan: SplitPlan::default(),
            encoding: EncodingOptions::default(),
            min_cell_lines: 30,
            univariate_k: None,
            top_k_importances: 10,
            top_n_usage: 5,
            seed: 0,
        }
    }
}

impl MasRunConfig {
    /// Checks that need no data.
    pub fn validate_settings(&self) -> Result<()> {
        if self.grids.is_empty() {
            return Err(Error::Config("no algorithms configured".into()));
        }
        let mut seen = BTreeSet::new();
        for g in &self.grids {
            g.validate()?;
            if !seen.insert(g.algorithm()) {
                return Err(Error::Config(format!("algorithm {} listed twice", g.algorithm())));
            }
        }
        if self.feature_types.is_empty() {
            return Err(Error::Config("no feature types configured".into()));
        }
        if self.univariate_k == Some(0) {
            return Err(Error::Config("univariate_k must be positive".into()));
        }
        if self.min_cell_lines < 10 {
            return Err(Error::Config("min_cell_lines must be at least 10".into()));
        }
        self.plan.validate()
    }

    pub fn validate(&self, data: &GenomicData) -> Result<()> {
        self.validate_settings()?;
        for ft in &self.feature_types {
            data.matrix(*ft)?;
        }
        for s in &self.gene_sets {
            if !data.gene_sets.contains_key(s) {
                return Err(Error::UnknownGeneSet(s.clone()));
            }
        }
        if self.univariate_k.is_some() && data.gene_sets.contains_key(UNIVARIATE_SET) {
            return Err(Error::Config(format!("a loaded gene set is named `{UNIVARIATE_SET}`")));
        }
        Ok(())
    }

    /// Gene set names combos are built from, in combo order.
    pub fn set_names(&self, data: &GenomicData) -> Vec<String> {
        let mut names: Vec<String> = if self.gene_sets.is_empty() {
            data.gene_sets.keys().cloned().collect()
        } else {
            self.gene_sets.clone()
        };
        if self.univariate_k.is_some() {
            names.push(UNIVARIATE_SET.to_string());
        }
        names
    }
}

/// Top `k` genes by univariate association with `y`, computed on the rows
/// given (which must be training rows).
///
/// Continuous features rank by |Spearman ρ|; mutations are collapsed to
/// mutated / wild type and rank by rank-sum p-value. Constant genes score
/// ρ = 0 or p = 1. Ties go to the smaller gene id. `k` larger than the gene
/// count returns every gene.
pub fn univariate_select(
    feature_type: FeatureType,
    matrix: &FeatureMatrix,
    rows: &[String],
    y: &[f64],
    k: usize,
) -> Result<Vec<String>> {
    if rows.len() != y.len() {
        return Err(Error::invalid("univariate selection: rows and responses differ in length"));
    }
    let idx: Vec<usize> = rows
        .iter()
        .map(|r| {
            matrix.row_of(r).ok_or_else(|| Error::MissingCellLine {
                cell_line: r.clone(),
                feature_type: feature_type.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let values = matrix.values().select(ndarray::Axis(0), &idx);
    let genes = matrix.gene_ids();
    let mut scored: Vec<(f64, &String)> = Vec::with_capacity(genes.len());
    for (j, g) in genes.iter().enumerate() {
        let col = values.column(j);
        // higher is better in both branches
        let score = match feature_type {
            FeatureType::Mutation => -mutation_p_value(col, y)?,
            _ => {
                let x = col.to_vec();
                if is_constant(&x) {
                    0.0
                } else {
                    spearman(&x, y)?.abs()
                }
            }
        };
        scored.push((score, g));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored.into_iter().take(k).map(|(_, g)| g.clone()).collect())
}

fn mutation_p_value(col: ArrayView1<f64>, y: &[f64]) -> Result<f64> {
    let (mut mutated, mut wild) = (Vec::new(), Vec::new());
    for (&v, &r) in col.iter().zip(y) {
        if v != 0.0 {
            mutated.push(r);
        } else {
            wild.push(r);
        }
    }
    if mutated.is_empty() || wild.is_empty() {
        return Ok(1.0);
    }
    ranksum_test(&mutated, &wild)
}

/// Builds design matrices for one combo. Curated slots resolve to fixed
/// gene lists; a [`UNIVARIATE_SET`] slot is re-selected on every fitting
/// partition from that partition's responses only.
pub struct ComboDesign<'a> {
    data: &'a GenomicData,
    encoding: EncodingOptions,
    fixed: BTreeMap<FeatureType, Vec<String>>,
    univariate: Vec<FeatureType>,
    univariate_k: usize,
    responses: &'a BTreeMap<String, f64>,
}

impl<'a> ComboDesign<'a> {
    pub fn new(
        data: &'a GenomicData,
        combo: &Combo,
        encoding: EncodingOptions,
        univariate_k: Option<usize>,
        responses: &'a BTreeMap<String, f64>,
    ) -> Result<Self> {
        let mut fixed = BTreeMap::new();
        let mut univariate = Vec::new();
        for (ft, set) in combo.assignment() {
            if set == UNIVARIATE_SET && univariate_k.is_some() {
                univariate.push(*ft);
            } else {
                let (kept, dropped) = data.resolve_genes(set, *ft)?;
                if dropped > 0 {
                    log::debug!("{combo}: {dropped} genes of `{set}` absent from the {ft} matrix");
                }
                fixed.insert(*ft, kept);
            }
        }
        Ok(ComboDesign {
            data,
            encoding,
            fixed,
            univariate,
            univariate_k: univariate_k.unwrap_or(DEFAULT_UNIVARIATE_K),
            responses,
        })
    }

    /// Genes per feature type when fitting on `fit`.
    pub fn genes_for(&self, fit: &[String]) -> Result<BTreeMap<FeatureType, Vec<String>>> {
        let mut genes = self.fixed.clone();
        if !self.univariate.is_empty() {
            let y: Vec<f64> = fit
                .iter()
                .map(|id| {
                    self.responses
                        .get(id)
                        .copied()
                        .ok_or_else(|| Error::invalid(format!("no response for cell line `{id}`")))
                })
                .collect::<Result<_>>()?;
            for &ft in &self.univariate {
                let picked = univariate_select(ft, self.data.matrix(ft)?, fit, &y, self.univariate_k)?;
                genes.insert(ft, picked);
            }
        }
        Ok(genes)
    }
}

impl DesignBuilder for ComboDesign<'_> {
    fn build(&self, fit: &[String], eval: &[String]) -> Result<(DesignMatrix, DesignMatrix)> {
        let layout = DesignLayout::plan(&self.genes_for(fit)?, self.data, fit, self.encoding)?;
        Ok((layout.encode(self.data, fit)?, layout.encode(self.data, eval)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComboEvaluation {
    pub algorithm: Algorithm,
    pub combo: Combo,
    pub result: EvaluationResult,
}

impl ComboEvaluation {
    fn usable(&self) -> bool {
        self.result.valid && self.result.mean_r2.is_some()
    }
}

/// Configuration handed to the recommender.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestConfig {
    pub algorithm: Algorithm,
    pub combo: Combo,
    /// Most frequently chosen hyperparameters over the outer loops.
    pub hyperparameters: Hyperparameters,
    pub mean_r2: f64,
    pub r2_variance: f64,
    /// Size of the univariate selection when the combo uses it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub univariate_k: Option<usize>,
    #[serde(default)]
    pub encoding: EncodingOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasDrugResult {
    pub drug_id: String,
    pub n_cell_lines: usize,
    pub evaluations: Vec<ComboEvaluation>,
    pub best: Option<BestConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MasOutcome {
    pub drugs: Vec<MasDrugResult>,
    pub warnings: Vec<String>,
}

fn algorithm_rank(a: Algorithm) -> usize {
    Algorithm::ALL.iter().position(|&x| x == a).expect("known algorithm")
}

/// Ranks evaluations best first: mean R² descending, variance ascending,
/// then algorithm order, then combo enumeration order.
fn ranked<'a>(evals: impl Iterator<Item = (usize, &'a ComboEvaluation)>) -> Vec<(usize, &'a ComboEvaluation)> {
    let mut v: Vec<_> = evals.filter(|(_, e)| e.usable()).collect();
    v.sort_by(|(ia, a), (ib, b)| {
        let (ma, mb) = (a.result.mean_r2.unwrap(), b.result.mean_r2.unwrap());
        let (va, vb) = (a.result.r2_variance().unwrap_or(0.0), b.result.r2_variance().unwrap_or(0.0));
        mb.total_cmp(&ma)
            .then(va.total_cmp(&vb))
            .then(algorithm_rank(a.algorithm).cmp(&algorithm_rank(b.algorithm)))
            .then(ia.cmp(ib))
    });
    v
}

fn modal_hyperparameters(result: &EvaluationResult, grid_order: &[Hyperparameters]) -> Option<Hyperparameters> {
    let mut counts = vec![0usize; grid_order.len()];
    for l in &result.loops {
        if let (Some(hp), Some(_)) = (&l.hyperparameters, l.r2) {
            if let Some(i) = grid_order.iter().position(|g| g == hp) {
                counts[i] += 1;
            }
        }
    }
    let best = counts.iter().copied().max().filter(|&c| c > 0)?;
    let i = counts.iter().position(|&c| c == best)?;
    Some(grid_order[i].clone())
}

/// Evaluates every algorithm × combo pair for every drug.
///
/// Each drug uses the cell lines that have a response and appear in every
/// loaded matrix; drugs with fewer than `min_cell_lines` are skipped. All
/// combos of a drug share one split plan.
pub fn run_mas(config: &MasRunConfig, data: &GenomicData, responses: &Responses) -> Result<MasOutcome> {
    config.validate(data)?;
    let combos = enumerate_combos_by_name(&config.set_names(data), &config.feature_types)?;
    let common: BTreeSet<String> = data.common_cell_lines().into_iter().collect();
    let drug_ids: Vec<String> = if config.drugs.is_empty() {
        responses.keys().cloned().collect()
    } else {
        config.drugs.clone()
    };

    let mut warnings = Vec::new();
    struct DrugPlan<'r> {
        drug: String,
        ids: Vec<String>,
        y: &'r BTreeMap<String, f64>,
        splits: Vec<crate::harness::OuterSplit>,
    }
    let mut plans = Vec::new();
    for drug in &drug_ids {
        let Some(y) = responses.get(drug) else {
            warnings.push(format!("drug {drug}: no responses, skipped"));
            continue;
        };
        let ids: Vec<String> = y.keys().filter(|c| common.contains(*c)).cloned().collect();
        let missing = y.len() - ids.len();
        if missing > 0 {
            warnings.push(format!("drug {drug}: {missing} tested cell lines lack genomic data and were dropped"));
        }
        if ids.len() < config.min_cell_lines {
            warnings.push(format!(
                "drug {drug}: only {} usable cell lines (need {}), skipped",
                ids.len(),
                config.min_cell_lines
            ));
            continue;
        }
        let plan = SplitPlan {
            seed: seed::derive(config.seed, &[1, seed::hash_str(drug)]),
            ..config.plan
        };
        let splits = make_split_plan(&plan, &ids)?;
        plans.push(DrugPlan {
            drug: drug.clone(),
            ids,
            y,
            splits,
        });
    }

    let mut tasks = Vec::new();
    for (d, _) in plans.iter().enumerate() {
        for (g, _) in config.grids.iter().enumerate() {
            for (c, _) in combos.iter().enumerate() {
                tasks.push((d, g, c));
            }
        }
    }
    let results: Vec<Result<EvaluationResult>> = tasks
        .par_iter()
        .map(|&(d, g, c)| {
            let p = &plans[d];
            let builder = ComboDesign::new(data, &combos[c], config.encoding, config.univariate_k, p.y)?;
            let opts = EvalOptions {
                seed: seed::derive(config.seed, &[2, seed::hash_str(&p.drug), g as u64, c as u64]),
                keep_models: false,
            };
            tune_and_evaluate(&builder, p.y, &config.grids[g], &p.splits, opts)
        })
        .collect();

    let mut results = results.into_iter();
    let mut drugs = Vec::with_capacity(plans.len());
    for p in &plans {
        let mut evaluations = Vec::with_capacity(config.grids.len() * combos.len());
        for grid in &config.grids {
            for combo in &combos {
                let result = results.next().expect("one result per task")?;
                if result.failed_loops > 0 {
                    warnings.push(format!(
                        "drug {}: {} {}: {} of {} outer loops failed{}",
                        p.drug,
                        grid.algorithm(),
                        combo,
                        result.failed_loops,
                        result.loops.len(),
                        if result.valid { "" } else { ", result marked invalid" }
                    ));
                }
                evaluations.push(ComboEvaluation {
                    algorithm: grid.algorithm(),
                    combo: combo.clone(),
                    result,
                });
            }
        }
        let best = ranked(evaluations.iter().enumerate()).first().map(|(_, e)| {
            let grid = config
                .grids
                .iter()
                .find(|g| g.algorithm() == e.algorithm)
                .expect("grid of evaluated algorithm");
            BestConfig {
                algorithm: e.algorithm,
                combo: e.combo.clone(),
                hyperparameters: modal_hyperparameters(&e.result, &grid.points()).expect("usable result has a loop"),
                mean_r2: e.result.mean_r2.expect("usable"),
                r2_variance: e.result.r2_variance().unwrap_or(0.0),
                univariate_k: config
                    .univariate_k
                    .filter(|_| e.combo.uses_set(UNIVARIATE_SET)),
                encoding: config.encoding,
            }
        });
        if best.is_none() {
            warnings.push(format!("drug {}: no valid evaluation, no best configuration", p.drug));
        }
        drugs.push(MasDrugResult {
            drug_id: p.drug.clone(),
            n_cell_lines: p.ids.len(),
            evaluations,
            best,
        });
    }
    Ok(MasOutcome { drugs, warnings })
}

/// Random gene sets named `random_<size>_<replicate>`, sampled without
/// replacement from `universe`.
pub fn generate_random_gene_sets(universe: &[String], sizes: &[usize], count: usize, seed: u64) -> Result<Vec<GeneSet>> {
    let distinct: BTreeSet<&String> = universe.iter().collect();
    let universe: Vec<&String> = distinct.into_iter().collect();
    let mut out = Vec::with_capacity(sizes.len() * count);
    for &size in sizes {
        if size > universe.len() {
            return Err(Error::invalid(format!(
                "random gene set of size {size} exceeds the universe of {} genes",
                universe.len()
            )));
        }
        for rep in 1..=count {
            let mut rng = seed::rng(seed, &[size as u64, rep as u64]);
            let picked = index::sample(&mut rng, universe.len(), size);
            out.push(GeneSet::new(
                format!("random_{size}_{rep}"),
                picked.into_iter().map(|i| universe[i].clone()),
            )?);
        }
    }
    Ok(out)
}

/// Union of the named sets as a new set.
pub fn union_gene_set(data: &GenomicData, names: &[String], union_name: &str) -> Result<GeneSet> {
    let mut genes = BTreeSet::new();
    for n in names {
        let s = data.gene_sets.get(n).ok_or_else(|| Error::UnknownGeneSet(n.clone()))?;
        genes.extend(s.genes().iter().cloned());
    }
    GeneSet::new(union_name, genes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneSetComparison {
    pub drug_id: String,
    pub gene_set: String,
    pub with_set: Vec<f64>,
    pub without_set: Vec<f64>,
    pub p_value: f64,
    /// Slots filled by the set among the top combos of every algorithm.
    pub usage: usize,
}

/// Mean-R² values of combos with and without `set_name`, their rank-sum
/// p-value, and how often the set fills a slot in each algorithm's top
/// `top_n` combos.
pub fn compare_gene_set(result: &MasDrugResult, set_name: &str, top_n: usize) -> Result<GeneSetComparison> {
    let (mut with_set, mut without_set) = (Vec::new(), Vec::new());
    for e in result.evaluations.iter().filter(|e| e.usable()) {
        let r = e.result.mean_r2.expect("usable");
        if e.combo.uses_set(set_name) {
            with_set.push(r);
        } else {
            without_set.push(r);
        }
    }
    if with_set.is_empty() {
        return Err(Error::invalid(format!(
            "drug {}: no evaluated combo uses gene set `{set_name}`",
            result.drug_id
        )));
    }
    if without_set.is_empty() {
        return Err(Error::invalid(format!(
            "drug {}: every evaluated combo uses gene set `{set_name}`",
            result.drug_id
        )));
    }
    let p_value = ranksum_test(&with_set, &without_set)?;
    let usage = top_combos_per_algorithm(result, top_n)
        .iter()
        .map(|e| e.combo.slots_using(set_name))
        .sum();
    Ok(GeneSetComparison {
        drug_id: result.drug_id.clone(),
        gene_set: set_name.to_string(),
        with_set,
        without_set,
        p_value,
        usage,
    })
}

fn top_combos_per_algorithm(result: &MasDrugResult, top_n: usize) -> Vec<&ComboEvaluation> {
    let mut out = Vec::new();
    for a in Algorithm::ALL {
        let r = ranked(result.evaluations.iter().enumerate().filter(|(_, e)| e.algorithm == a));
        out.extend(r.into_iter().take(top_n).map(|(_, e)| e));
    }
    out
}

/// Importances of `algorithm` averaged over outer loops per combo, then with
/// equal weight over its `top_k` combos by mean R², renormalized. `None` for
/// algorithms without importances or when nothing was evaluated.
pub fn aggregate_importances(result: &MasDrugResult, algorithm: Algorithm, top_k: usize) -> Option<FeatureImportances> {
    if !algorithm.has_importances() {
        return None;
    }
    let top = ranked(result.evaluations.iter().enumerate().filter(|(_, e)| e.algorithm == algorithm));
    let mut total: BTreeMap<String, f64> = BTreeMap::new();
    let mut used = 0usize;
    for (_, e) in top.into_iter().take(top_k) {
        let loops: Vec<&FeatureImportances> = e.result.loops.iter().filter_map(|l| l.importances.as_ref()).collect();
        if loops.is_empty() {
            continue;
        }
        let mut combo_avg: BTreeMap<String, f64> = BTreeMap::new();
        for imp in &loops {
            for (k, v) in &imp.weights {
                *combo_avg.entry(k.clone()).or_default() += v / loops.len() as f64;
            }
        }
        for (k, v) in combo_avg {
            *total.entry(k).or_default() += v;
        }
        used += 1;
    }
    if used == 0 {
        return None;
    }
    let names: Vec<String> = total.keys().cloned().collect();
    let raw: Vec<f64> = total.values().copied().collect();
    Some(FeatureImportances::from_raw(&names, &raw))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn create_csv(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// `mas_results.csv`: one row per drug, algorithm, combo and outer loop.
pub fn write_results_csv(path: impl AsRef<Path>, outcome: &MasOutcome) -> Result<()> {
    let mut w = create_csv(path.as_ref())?;
    w.write_record(["drug", "algorithm", "combo", "loop", "r2", "hyperparameters"])?;
    for d in &outcome.drugs {
        for e in &d.evaluations {
            for l in &e.result.loops {
                w.write_record([
                    d.drug_id.clone(),
                    e.algorithm.to_string(),
                    e.combo.id(),
                    l.index.to_string(),
                    fmt_opt(l.r2),
                    l.hyperparameters.as_ref().map(Hyperparameters::to_json).unwrap_or_default(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// `mas_best.json`: drug → best configuration.
pub fn best_configs(outcome: &MasOutcome) -> BTreeMap<String, BestConfig> {
    outcome
        .drugs
        .iter()
        .filter_map(|d| d.best.clone().map(|b| (d.drug_id.clone(), b)))
        .collect()
}

pub fn write_best_json(path: impl AsRef<Path>, best: &BTreeMap<String, BestConfig>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(best)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_best_json(path: impl AsRef<Path>) -> Result<BTreeMap<String, BestConfig>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

/// Comparisons for every drug and every set appearing in its combos.
pub fn compare_all_gene_sets(outcome: &MasOutcome, set_names: &[String], top_n: usize) -> Vec<GeneSetComparison> {
    let mut out = Vec::new();
    for d in &outcome.drugs {
        for s in set_names {
            match compare_gene_set(d, s, top_n) {
                Ok(c) => out.push(c),
                Err(e) => log::debug!("{e}"),
            }
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn write_gene_set_comparison(path: impl AsRef<Path>, comparisons: &[GeneSetComparison]) -> Result<()> {
    let mut w = create_csv(path.as_ref())?;
    w.write_record([
        "drug",
        "gene_set",
        "n_with",
        "n_without",
        "mean_r2_with",
        "mean_r2_without",
        "p_value",
        "significant",
        "usage",
    ])?;
    for c in comparisons {
        w.write_record([
            c.drug_id.clone(),
            c.gene_set.clone(),
            c.with_set.len().to_string(),
            c.without_set.len().to_string(),
            mean(&c.with_set).to_string(),
            mean(&c.without_set).to_string(),
            c.p_value.to_string(),
            (c.p_value < SIGNIFICANCE).to_string(),
            c.usage.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Total top-combo usage per gene set over all drugs (pie-chart data).
pub fn write_gene_set_usage(path: impl AsRef<Path>, comparisons: &[GeneSetComparison]) -> Result<()> {
    let mut usage: BTreeMap<&str, usize> = BTreeMap::new();
    for c in comparisons {
        *usage.entry(c.gene_set.as_str()).or_default() += c.usage;
    }
    let mut w = create_csv(path.as_ref())?;
    w.write_record(["gene_set", "usage"])?;
    for (s, u) in usage {
        w.write_record([s.to_string(), u.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_feature_importances(path: impl AsRef<Path>, outcome: &MasOutcome, top_k: usize) -> Result<()> {
    let mut w = create_csv(path.as_ref())?;
    w.write_record(["drug", "algorithm", "rank", "column", "importance"])?;
    for d in &outcome.drugs {
        for a in Algorithm::ALL {
            let Some(imp) = aggregate_importances(d, a, top_k) else { continue };
            for (rank, (col, v)) in imp.ranked().into_iter().enumerate() {
                w.write_record([
                    d.drug_id.clone(),
                    a.to_string(),
                    (rank + 1).to_string(),
                    col.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Best configuration per drug, sorted by increasing mean R².
pub fn write_r2_summary(path: impl AsRef<Path>, outcome: &MasOutcome) -> Result<()> {
    let mut rows: Vec<(&str, &BestConfig)> = outcome
        .drugs
        .iter()
        .filter_map(|d| d.best.as_ref().map(|b| (d.drug_id.as_str(), b)))
        .collect();
    rows.sort_by(|a, b| a.1.mean_r2.total_cmp(&b.1.mean_r2).then_with(|| a.0.cmp(b.0)));
    let mut w = create_csv(path.as_ref())?;
    w.write_record(["drug", "algorithm", "combo", "mean_r2", "r2_sd"])?;
    for (d, b) in rows {
        w.write_record([
            d.to_string(),
            b.algorithm.to_string(),
            b.combo.id(),
            b.mean_r2.to_string(),
            b.r2_variance.sqrt().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{LoopResult, MAX_FAILED_LOOPS};
    use ndarray::Array2;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i:02}")).collect()
    }

    fn matrix(ft: FeatureType, cols: Vec<Vec<f64>>) -> FeatureMatrix {
        let n = cols[0].len();
        let genes = (0..cols.len()).map(|j| format!("g{j}")).collect();
        let flat: Vec<f64> = (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
        FeatureMatrix::new(ft, ids(n), genes, Array2::from_shape_vec((n, cols.len()), flat).unwrap()).unwrap()
    }

    #[test]
    fn univariate_ranks_monotone_gene_first() {
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = matrix(
            FeatureType::Expression,
            vec![
                vec![0.3, 0.1, 0.2, 0.6, 0.5, 0.4],
                vec![5.0, 5.0, 5.0, 5.0, 5.0, 5.0],
                vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            ],
        );
        let rows = ids(6);
        let top = univariate_select(FeatureType::Expression, &m, &rows, &y, 1).unwrap();
        assert_eq!(top, vec!["g2"]);
        let all = univariate_select(FeatureType::Expression, &m, &rows, &y, 3).unwrap();
        assert_eq!(all, vec!["g2", "g0", "g1"]);
        assert_eq!(univariate_select(FeatureType::Expression, &m, &rows, &y, 10).unwrap().len(), 3);
    }

    #[test]
    fn univariate_mutation_uses_rank_sum() {
        let y = vec![5.0, 6.0, 7.0, 1.0, 2.0, 3.0];
        let m = matrix(
            FeatureType::Mutation,
            vec![
                vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                vec![2.0, 0.0, 3.0, 0.0, 1.0, 0.0],
                vec![1.0, 4.0, 6.0, 0.0, 0.0, 0.0],
            ],
        );
        let top = univariate_select(FeatureType::Mutation, &m, &ids(6), &y, 3).unwrap();
        assert_eq!(top, vec!["g2", "g1", "g0"]);
        assert!((mutation_p_value(m.values().column(2), &y).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn univariate_ignores_rows_outside_partition() {
        let n = 30;
        let cols: Vec<Vec<f64>> = (0..8)
            .map(|j| (0..n).map(|i| ((i * (j + 3)) % 11) as f64).collect())
            .collect();
        let m = matrix(FeatureType::Expression, cols.clone());
        let train: Vec<String> = ids(n).into_iter().take(20).collect();
        let y: Vec<f64> = (0..20).map(|i| cols[3][i] + 0.1 * i as f64).collect();
        let a = univariate_select(FeatureType::Expression, &m, &train, &y, 3).unwrap();
        let mut perturbed = cols;
        for c in perturbed.iter_mut() {
            for v in c.iter_mut().skip(20) {
                *v = -*v * 7.0 + 1.0;
            }
        }
        let m2 = matrix(FeatureType::Expression, perturbed);
        assert_eq!(a, univariate_select(FeatureType::Expression, &m2, &train, &y, 3).unwrap());
    }

    #[test]
    fn random_sets_are_seeded_and_sized() {
        let u: Vec<String> = (0..50).map(|i| format!("g{i}")).collect();
        let a = generate_random_gene_sets(&u, &[20, 50], 2, 3).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a[0].name(), "random_20_1");
        assert_eq!(a[0].len(), 20);
        assert_ne!(a[0], a[1]);
        assert_eq!(a[2].len(), 50);
        assert_eq!(a, generate_random_gene_sets(&u, &[20, 50], 2, 3).unwrap());
        assert!(generate_random_gene_sets(&u, &[51], 1, 3).is_err());
    }

    fn eval(algorithm: Algorithm, combo: &str, r2s: &[f64]) -> ComboEvaluation {
        let loops = r2s
            .iter()
            .enumerate()
            .map(|(i, &r)| LoopResult {
                index: i,
                r2: Some(r),
                hyperparameters: None,
                inner_scores: Vec::new(),
                predictions: Vec::new(),
                importances: None,
                model: None,
                error: None,
            })
            .collect();
        ComboEvaluation {
            algorithm,
            combo: combo.parse().unwrap(),
            result: EvaluationResult::from_loops(loops),
        }
    }

    fn drug(evaluations: Vec<ComboEvaluation>) -> MasDrugResult {
        MasDrugResult {
            drug_id: "d".into(),
            n_cell_lines: 0,
            evaluations,
            best: None,
        }
    }

    #[test]
    fn comparison_separates_and_counts() {
        let mut evals = Vec::new();
        for i in 0..6 {
            let hi = 0.5 + i as f64 * 0.01;
            evals.push(eval(Algorithm::ElasticNet, &format!("expr:A|mut:S{i}|cnv:-"), &[hi]));
            evals.push(eval(Algorithm::ElasticNet, &format!("expr:B|mut:S{i}|cnv:-"), &[hi - 0.4]));
        }
        let d = drug(evals);
        let c = compare_gene_set(&d, "A", 5).unwrap();
        assert_eq!(c.with_set.len(), 6);
        assert_eq!(c.without_set.len(), 6);
        assert!(c.p_value < 0.01);
        assert_eq!(c.usage, 5);
        assert!(compare_gene_set(&d, "Z", 5).is_err());

        let same = drug(vec![
            eval(Algorithm::ElasticNet, "expr:A", &[0.1]),
            eval(Algorithm::ElasticNet, "expr:B", &[0.1]),
        ]);
        assert!((compare_gene_set(&same, "A", 5).unwrap().p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn usage_counts_slots_in_top_five_per_algorithm() {
        let mut evals = Vec::new();
        for a in Algorithm::ALL {
            for i in 0..6 {
                let combo = if i == 0 { "expr:S|mut:-|cnv:-".to_string() } else { format!("expr:T{i}") };
                evals.push(eval(a, &combo, &[1.0 - i as f64 * 0.1]));
            }
        }
        assert_eq!(compare_gene_set(&drug(evals), "S", 5).unwrap().usage, 3);
    }

    #[test]
    fn ranking_tie_breaks() {
        let d = drug(vec![
            eval(Algorithm::RandomForest, "expr:A", &[0.5, 0.5]),
            eval(Algorithm::ElasticNet, "expr:B", &[0.4, 0.6]),
            eval(Algorithm::SvrRbf, "expr:C", &[0.5, 0.5]),
            eval(Algorithm::SvrRbf, "expr:D", &[0.5, 0.5]),
        ]);
        let order: Vec<String> = ranked(d.evaluations.iter().enumerate())
            .into_iter()
            .map(|(_, e)| e.combo.get(FeatureType::Expression).unwrap().to_string())
            .collect();
        assert_eq!(order, vec!["C", "D", "A", "B"]);
        assert_eq!(MAX_FAILED_LOOPS, 2);
    }

    fn with_importances(combo: &str, r2: f64, loops: &[&[(&str, f64)]]) -> ComboEvaluation {
        let mut e = eval(Algorithm::ElasticNet, combo, &vec![r2; loops.len()]);
        for (l, imp) in e.result.loops.iter_mut().zip(loops) {
            let names: Vec<String> = imp.iter().map(|(n, _)| n.to_string()).collect();
            let raw: Vec<f64> = imp.iter().map(|(_, v)| *v).collect();
            l.importances = Some(FeatureImportances::from_raw(&names, &raw));
        }
        e
    }

    #[test]
    fn importance_aggregation() {
        let one = drug(vec![with_importances("expr:A", 0.3, &[&[("x", 3.0), ("y", 1.0)]])]);
        let agg = aggregate_importances(&one, Algorithm::ElasticNet, 10).unwrap();
        assert!((agg.get("x") - 0.75).abs() < 1e-15 && (agg.get("y") - 0.25).abs() < 1e-15);

        let two = drug(vec![
            with_importances("expr:A", 0.3, &[&[("x", 1.0)]]),
            with_importances("expr:B", 0.2, &[&[("z", 1.0)]]),
        ]);
        let agg = aggregate_importances(&two, Algorithm::ElasticNet, 10).unwrap();
        assert_eq!(agg.get("x"), 0.5);
        assert_eq!(agg.get("z"), 0.5);
        assert!(aggregate_importances(&two, Algorithm::SvrRbf, 10).is_none());
    }

    #[test]
    fn seven_evaluations_for_one_set_three_types() {
        let n = 40;
        let mut rng = seed::rng(1, &[]);
        use rand::Rng;
        let cols = |rng: &mut rand_chacha::ChaCha8Rng, mutation: bool| -> Vec<Vec<f64>> {
            (0..3)
                .map(|_| {
                    (0..n)
                        .map(|_| if mutation { f64::from(rng.gen_range(0u8..2)) } else { rng.gen_range(-1.0..1.0) })
                        .collect()
                })
                .collect()
        };
        let data = GenomicData::new(
            [
                matrix(FeatureType::Expression, cols(&mut rng, false)),
                matrix(FeatureType::Mutation, cols(&mut rng, true)),
                matrix(FeatureType::CopyNumber, cols(&mut rng, false)),
            ],
            [GeneSet::new("S", ["g0".to_string(), "g1".to_string()]).unwrap()],
            None,
        )
        .unwrap();
        let e = data.matrix(FeatureType::Expression).unwrap();
        let y: BTreeMap<String, f64> = ids(n)
            .into_iter()
            .map(|c| {
                let v = e.get(&c, "g0").unwrap();
                (c, v)
            })
            .collect();
        let responses = Responses::from([("d1".to_string(), y)]);
        let config = MasRunConfig {
            grids: vec![HyperparameterGrid::ElasticNet {
                penalty: vec![0.01],
                mixing: vec![1.0],
            }],
            plan: SplitPlan {
                n_outer: 3,
                n_inner: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = run_mas(&config, &data, &responses).unwrap();
        assert_eq!(out.drugs.len(), 1);
        assert_eq!(out.drugs[0].evaluations.len(), 7);
        let best = out.drugs[0].best.as_ref().unwrap();
        assert_eq!(best.combo.get(FeatureType::Expression), Some("S"));

        let short = Responses::from([("d2".to_string(), BTreeMap::from([("c00".to_string(), 1.0)]))]);
        let out = run_mas(&config, &data, &short).unwrap();
        assert!(out.drugs.is_empty());
        assert_eq!(out.warnings.len(), 1);

        let none = MasRunConfig {
            grids: Vec::new(),
            ..config
        };
        assert!(matches!(run_mas(&none, &data, &responses), Err(Error::Config(_))));
    }
}
