//! Leave-one-out drug recommendation.
//!
//! For a cell line L, every drug tested on L is modelled with its MAS
//! configuration trained on all other cell lines tested with that drug,
//! and drugs are ranked by predicted viability at their calibrated levels.
//! Two baselines (same-tissue mean viability and a seeded random pick) are
//! evaluated with the same metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dose::{normalize_viabilities, true_rank};
use crate::error::{Error, Result};
use crate::genomic::{GenomicData, TissueLabels};
use crate::harness::DesignBuilder;
use crate::learners;
use crate::mas::{BestConfig, ComboDesign, Responses};
use crate::seed;

/// Width of the N = 1 viability-gap histogram bins.
pub const GAP_BIN_WIDTH: f64 = 0.02;

/// ε used when reporting the share of cell lines with a small ε*.
pub const REPORT_EPSILON: f64 = 0.025;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// The N drugs with the lowest predicted viability.
    TopN { n: usize },
    /// Every drug within ε of the lowest predicted viability.
    Epsilon { epsilon: f64 },
}

impl Default for Policy {
    fn default() -> Self {
        Policy::TopN { n: 1 }
    }
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Policy::TopN { n } if n == 0 => Err(Error::Config("top-N policy needs N ≥ 1".into())),
            Policy::Epsilon { epsilon } if !(epsilon >= 0.0) => {
                Err(Error::Config("ε policy needs ε ≥ 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, ranking: &[RankedDrug]) -> Vec<String> {
        match *self {
            Policy::TopN { n } => policy_top_n(ranking, n),
            Policy::Epsilon { epsilon } => policy_epsilon(ranking, epsilon),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrsConfig {
    pub min_drugs_per_cell_line: usize,
    /// Drugs with fewer training cell lines (after leaving one out) are skipped.
    pub min_training_cell_lines: usize,
    pub policy: Policy,
    pub seed: u64,
}

impl Default for DrsConfig {
    fn default() -> Self {
        DrsConfig {
            min_drugs_per_cell_line: 15,
            min_training_cell_lines: 30,
            policy: Policy::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedDrug {
    pub drug: String,
    /// Predicted viability for Dr.S; the ranking score for baselines.
    pub score: f64,
}

fn sort_ranking(v: &mut [RankedDrug]) {
    v.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.drug.cmp(&b.drug)));
}

/// First `min(n, len)` drugs of the ranking.
pub fn policy_top_n(ranking: &[RankedDrug], n: usize) -> Vec<String> {
    ranking.iter().take(n).map(|r| r.drug.clone()).collect()
}

/// Drugs scoring at most the minimum score plus `epsilon`.
pub fn policy_epsilon(ranking: &[RankedDrug], epsilon: f64) -> Vec<String> {
    let Some(lo) = ranking.iter().map(|r| r.score).min_by(f64::total_cmp) else {
        return Vec::new();
    };
    ranking
        .iter()
        .filter(|r| r.score <= lo + epsilon)
        .map(|r| r.drug.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub cell_line: String,
    /// Ascending by score, ties by drug id.
    pub ranking: Vec<RankedDrug>,
    pub recommended: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueRanking {
    pub ranking: Vec<RankedDrug>,
    /// Some drug had no other same-tissue cell line and used the global mean.
    pub fallback: bool,
}

/// Drugs ranked by mean true viability over the other cell lines of the
/// same tissue. A drug without such cell lines uses its mean over all other
/// cell lines, which sets `fallback`.
pub fn baseline_tissue(
    cell_line: &str,
    drugs: &[String],
    truth: &Responses,
    tissues: &TissueLabels,
) -> Result<TissueRanking> {
    let tissue = tissues
        .get(cell_line)
        .ok_or_else(|| Error::invalid(format!("cell line `{cell_line}` has no tissue label")))?;
    let mut fallback = false;
    let mut ranking = Vec::with_capacity(drugs.len());
    for d in drugs {
        let by_cell = truth
            .get(d)
            .ok_or_else(|| Error::invalid(format!("no viabilities for drug `{d}`")))?;
        let (mut same, mut all) = ((0.0, 0usize), (0.0, 0usize));
        for (c, &v) in by_cell {
            if c == cell_line {
                continue;
            }
            all.0 += v;
            all.1 += 1;
            if tissues.get(c) == Some(tissue) {
                same.0 += v;
                same.1 += 1;
            }
        }
        let score = if same.1 > 0 {
            same.0 / same.1 as f64
        } else if all.1 > 0 {
            fallback = true;
            all.0 / all.1 as f64
        } else {
            return Err(Error::invalid(format!("drug `{d}` was tested on no other cell line")));
        };
        ranking.push(RankedDrug { drug: d.clone(), score });
    }
    sort_ranking(&mut ranking);
    Ok(TissueRanking { ranking, fallback })
}

/// Seeded uniform permutation of `drugs`; the first entry is the random
/// pick. Scores are the positions 0, 1, 2, ...
pub fn baseline_random(cell_line: &str, drugs: &[String], seed: u64) -> Vec<RankedDrug> {
    let mut order: Vec<String> = drugs.to_vec();
    order.sort();
    order.shuffle(&mut seed::rng(seed, &[seed::hash_str(cell_line)]));
    order
        .into_iter()
        .enumerate()
        .map(|(i, drug)| RankedDrug { drug, score: i as f64 })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DrsOutcome {
    pub recommendations: BTreeMap<String, Recommendation>,
    pub tissue: BTreeMap<String, TissueRanking>,
    pub random: BTreeMap<String, Recommendation>,
    pub warnings: Vec<String>,
}

/// Cell lines with at least `min_drugs_per_cell_line` in-scope drugs tested.
pub fn eligible_cell_lines(
    config: &DrsConfig,
    data: &GenomicData,
    best: &BTreeMap<String, BestConfig>,
    truth: &Responses,
) -> BTreeMap<String, Vec<String>> {
    let common: BTreeSet<String> = data.common_cell_lines().into_iter().collect();
    let mut tested: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (d, by_cell) in truth {
        if !best.contains_key(d) {
            continue;
        }
        for c in by_cell.keys().filter(|c| common.contains(*c)) {
            tested.entry(c.clone()).or_default().push(d.clone());
        }
    }
    tested.retain(|_, ds| ds.len() >= config.min_drugs_per_cell_line);
    tested
}

/// Prediction of drug `drug` for `cell_line`, trained on every other cell
/// line tested with the drug. `None` when too few training cell lines remain.
pub fn predict_left_out(
    config: &DrsConfig,
    data: &GenomicData,
    drug: &str,
    best: &BestConfig,
    responses: &BTreeMap<String, f64>,
    usable: &BTreeSet<String>,
    cell_line: &str,
) -> Result<Option<f64>> {
    let train: Vec<String> = responses
        .keys()
        .filter(|c| c.as_str() != cell_line && usable.contains(*c))
        .cloned()
        .collect();
    if train.len() < config.min_training_cell_lines {
        return Ok(None);
    }
    let builder = ComboDesign::new(data, &best.combo, best.encoding, best.univariate_k, responses)?;
    let (xf, xl) = builder.build(&train, &[cell_line.to_string()])?;
    let y: Vec<f64> = train.iter().map(|c| responses[c]).collect();
    let s = seed::derive(config.seed, &[seed::hash_str(drug), seed::hash_str(cell_line)]);
    let model = learners::fit(&xf, &y, &best.hyperparameters, s)?;
    Ok(Some(learners::predict(&model, &xl)?[0]))
}

/// Leave-one-out recommendations for every eligible cell line, plus both
/// baselines over the same drug lists. `truth` holds viabilities at the
/// calibrated levels, which are also the training responses.
pub fn recommend_loo(
    config: &DrsConfig,
    data: &GenomicData,
    best: &BTreeMap<String, BestConfig>,
    truth: &Responses,
) -> Result<DrsOutcome> {
    config.policy.validate()?;
    let mut warnings = Vec::new();
    for d in truth.keys().filter(|d| !best.contains_key(*d)) {
        warnings.push(format!("drug {d}: no MAS configuration, excluded"));
    }
    let eligible = eligible_cell_lines(config, data, best, truth);
    if eligible.is_empty() {
        warnings.push(format!(
            "no cell line was tested on {} drugs with a MAS configuration",
            config.min_drugs_per_cell_line
        ));
    }
    let usable: BTreeSet<String> = data.common_cell_lines().into_iter().collect();

    let cells: Vec<(&String, &Vec<String>)> = eligible.iter().collect();
    let per_cell: Vec<Result<(Vec<RankedDrug>, Vec<String>)>> = cells
        .par_iter()
        .map(|(cell, drugs)| {
            let mut ranking = Vec::with_capacity(drugs.len());
            let mut skipped = Vec::new();
            for d in drugs.iter() {
                match predict_left_out(config, data, d, &best[d], &truth[d], &usable, cell)? {
                    Some(score) => ranking.push(RankedDrug { drug: d.clone(), score }),
                    None => skipped.push(format!(
                        "cell line {cell}: drug {d} has fewer than {} training cell lines, skipped",
                        config.min_training_cell_lines
                    )),
                }
            }
            sort_ranking(&mut ranking);
            Ok((ranking, skipped))
        })
        .collect();

    let mut out = DrsOutcome::default();
    for ((cell, _), res) in cells.into_iter().zip(per_cell) {
        let (ranking, skipped) = res?;
        warnings.extend(skipped);
        if ranking.is_empty() {
            continue;
        }
        let drugs: Vec<String> = ranking.iter().map(|r| r.drug.clone()).collect();
        if let Some(t) = &data.tissues {
            let tr = baseline_tissue(cell, &drugs, truth, t)?;
            if tr.fallback {
                warnings.push(format!("cell line {cell}: tissue baseline fell back to global means"));
            }
            out.tissue.insert(cell.clone(), tr);
        }
        let random = baseline_random(cell, &drugs, config.seed);
        out.random.insert(
            cell.clone(),
            Recommendation {
                cell_line: cell.clone(),
                recommended: config.policy.apply(&random),
                ranking: random,
            },
        );
        out.recommendations.insert(
            cell.clone(),
            Recommendation {
                cell_line: cell.clone(),
                recommended: config.policy.apply(&ranking),
                ranking,
            },
        );
    }
    if data.tissues.is_none() {
        warnings.push("no tissue labels loaded, tissue baseline not evaluated".into());
    }
    out.warnings = warnings;
    Ok(out)
}

/// Metrics of one ranking method over a set of cell lines.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodEvaluation {
    pub n_cell_lines: usize,
    /// Count of cell lines whose top pick has true rank `i + 1`.
    pub rank_histogram: Vec<usize>,
    pub rank_cdf: Vec<f64>,
    pub mean_true_rank: f64,
    /// Share of cell lines whose true best drug is among the top N, N = 1, 2, ...
    pub inclusion: Vec<f64>,
    /// Mean over cell lines of (mean true viability of the top N picks minus
    /// mean true viability of the N truly best drugs), N = 1, 2, ...
    pub mean_gap: Vec<f64>,
    /// N = 1 gaps in bins of [`GAP_BIN_WIDTH`].
    pub gap_histogram: Vec<usize>,
    /// ε* per cell line for the recommended sets, ascending.
    pub epsilon_star: Vec<f64>,
    pub top1: f64,
    pub top5: f64,
    pub epsilon_star_within_report: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub top_true_rank: usize,
    /// Smallest N whose top N contains a true best drug.
    pub best_position: usize,
    /// Gap at N = 1, 2, ..., number of ranked drugs.
    pub gaps: Vec<f64>,
    pub epsilon_star: f64,
}

/// Per-cell-line metrics of a ranking and recommended set against truth.
pub fn cell_metrics(ranking: &[RankedDrug], recommended: &[String], truth: &BTreeMap<String, f64>) -> Result<CellMetrics> {
    if ranking.is_empty() {
        return Err(Error::invalid("empty ranking"));
    }
    let v: BTreeMap<String, f64> = ranking
        .iter()
        .map(|r| {
            truth
                .get(&r.drug)
                .map(|&x| (r.drug.clone(), x))
                .ok_or_else(|| Error::invalid(format!("no true viability for drug `{}`", r.drug)))
        })
        .collect::<Result<_>>()?;
    let best = v.values().copied().fold(f64::INFINITY, f64::min);
    let mut sorted_true: Vec<f64> = v.values().copied().collect();
    sorted_true.sort_by(f64::total_cmp);
    let picked: Vec<f64> = ranking.iter().map(|r| v[&r.drug]).collect();
    let best_position = 1 + picked.iter().position(|&x| x == best).expect("best is ranked");
    let mut gaps = Vec::with_capacity(picked.len());
    let (mut sp, mut st) = (0.0, 0.0);
    for n in 0..picked.len() {
        sp += picked[n];
        st += sorted_true[n];
        gaps.push(((sp - st) / (n + 1) as f64).max(0.0));
    }
    let epsilon_star = recommended
        .iter()
        .map(|d| v.get(d).map(|x| x - best).unwrap_or(0.0))
        .fold(0.0, f64::max);
    Ok(CellMetrics {
        top_true_rank: true_rank(&v, &ranking[0].drug)?,
        best_position,
        gaps,
        epsilon_star,
    })
}

/// Aggregates per-cell-line metrics of one method. Curves run to the
/// largest number of drugs ranked for any cell line; cell lines with fewer
/// drugs count their full list for larger N.
pub fn evaluate_method(recs: &BTreeMap<String, Recommendation>, truth: &Responses) -> Result<MethodEvaluation> {
    let mut cells = Vec::with_capacity(recs.len());
    for (c, r) in recs {
        let t: BTreeMap<String, f64> = r
            .ranking
            .iter()
            .filter_map(|d| truth.get(&d.drug).and_then(|m| m.get(c)).map(|&x| (d.drug.clone(), x)))
            .collect();
        cells.push(cell_metrics(&r.ranking, &r.recommended, &t)?);
    }
    let n = cells.len();
    if n == 0 {
        return Ok(MethodEvaluation::default());
    }
    let max_drugs = cells.iter().map(|m| m.gaps.len()).max().unwrap_or(0);
    let mut rank_histogram = vec![0usize; max_drugs];
    for m in &cells {
        rank_histogram[m.top_true_rank - 1] += 1;
    }
    let mut acc = 0;
    let rank_cdf = rank_histogram
        .iter()
        .map(|&h| {
            acc += h;
            acc as f64 / n as f64
        })
        .collect();
    let inclusion: Vec<f64> = (1..=max_drugs)
        .map(|k| cells.iter().filter(|m| m.best_position <= k).count() as f64 / n as f64)
        .collect();
    let mean_gap = (0..max_drugs)
        .map(|k| cells.iter().map(|m| m.gaps[k.min(m.gaps.len() - 1)]).sum::<f64>() / n as f64)
        .collect();
    let top_gap = cells.iter().map(|m| m.gaps[0]).fold(0.0, f64::max);
    let mut gap_histogram = vec![0usize; (top_gap / GAP_BIN_WIDTH).floor() as usize + 1];
    for m in &cells {
        gap_histogram[(m.gaps[0] / GAP_BIN_WIDTH).floor() as usize] += 1;
    }
    let mut epsilon_star: Vec<f64> = cells.iter().map(|m| m.epsilon_star).collect();
    epsilon_star.sort_by(f64::total_cmp);
    let at = |v: &[f64], k: usize| v.get(k).or(v.last()).copied().unwrap_or(0.0);
    Ok(MethodEvaluation {
        n_cell_lines: n,
        mean_true_rank: cells.iter().map(|m| m.top_true_rank as f64).sum::<f64>() / n as f64,
        top1: at(&inclusion, 0),
        top5: at(&inclusion, 4),
        epsilon_star_within_report: epsilon_star.iter().filter(|&&e| e <= REPORT_EPSILON).count() as f64 / n as f64,
        rank_histogram,
        rank_cdf,
        inclusion,
        mean_gap,
        gap_histogram,
        epsilon_star,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrsEvaluation {
    pub policy: Policy,
    pub drs: MethodEvaluation,
    pub tissue: Option<MethodEvaluation>,
    pub random: MethodEvaluation,
}

/// Evaluates Dr.S and both baselines. Tissue rankings get the same policy.
pub fn evaluate(outcome: &DrsOutcome, truth: &Responses, policy: Policy) -> Result<DrsEvaluation> {
    let tissue = if outcome.tissue.is_empty() {
        None
    } else {
        let recs: BTreeMap<String, Recommendation> = outcome
            .tissue
            .iter()
            .map(|(c, t)| {
                (
                    c.clone(),
                    Recommendation {
                        cell_line: c.clone(),
                        recommended: policy.apply(&t.ranking),
                        ranking: t.ranking.clone(),
                    },
                )
            })
            .collect();
        Some(evaluate_method(&recs, truth)?)
    };
    Ok(DrsEvaluation {
        policy,
        drs: evaluate_method(&outcome.recommendations, truth)?,
        tissue,
        random: evaluate_method(&outcome.random, truth)?,
    })
}

fn create_csv(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// `drs_recommendations.csv`: every ranked drug of every cell line.
pub fn write_recommendations(path: impl AsRef<Path>, outcome: &DrsOutcome, truth: &Responses) -> Result<()> {
    let mut w = create_csv(path.as_ref())?;
    w.write_record([
        "cell_line",
        "rank",
        "drug",
        "predicted_viability",
        "true_viability",
        "true_rank",
        "recommended",
    ])?;
    for (c, r) in &outcome.recommendations {
        let t: BTreeMap<String, f64> = r.ranking.iter().map(|d| (d.drug.clone(), truth[&d.drug][c])).collect();
        for (i, d) in r.ranking.iter().enumerate() {
            w.write_record([
                c.clone(),
                (i + 1).to_string(),
                d.drug.clone(),
                d.score.to_string(),
                t[&d.drug].to_string(),
                true_rank(&t, &d.drug)?.to_string(),
                r.recommended.contains(&d.drug).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Normalized true viability of every ranked drug per cell line, with the
/// Dr.S pick marked.
pub fn write_normalized_viability(path: impl AsRef<Path>, outcome: &DrsOutcome, truth: &Responses) -> Result<()> {
    let mut w = create_csv(path.as_ref())?;
    w.write_record(["cell_line", "drug", "normalized_viability", "recommended"])?;
    for (c, r) in &outcome.recommendations {
        let t: BTreeMap<String, f64> = r.ranking.iter().map(|d| (d.drug.clone(), truth[&d.drug][c])).collect();
        if t.len() < 2 {
            continue;
        }
        for (d, v) in normalize_viabilities(&t)?.values {
            w.write_record([c.clone(), d.clone(), v.to_string(), r.recommended.contains(&d).to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_evaluation(path: impl AsRef<Path>, eval: &DrsEvaluation) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(eval)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_evaluation(path: impl AsRef<Path>) -> Result<DrsEvaluation> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}
