//! Command-line orchestration: config files, the `synth`, `mas`, `drs` and
//! `report` commands, and run manifests.
//!
//! Exit codes: 0 on success, 1 when results were written but are invalid
//! (for example too many failed outer loops), 2 on input or config errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dose::{self, DEFAULT_TARGET_VIABILITY};
use crate::drs::{self, DrsConfig, DrsEvaluation, MethodEvaluation, Policy, GAP_BIN_WIDTH};
use crate::error::{Error, Result};
use crate::genomic::{load_feature_matrix, load_gene_set, load_tissue_labels, FeatureType, GenomicData};
use crate::mas::{self, BestConfig, MasRunConfig, Responses};
use crate::synthetic::{self, SyntheticSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub expression: Option<PathBuf>,
    pub mutation: Option<PathBuf>,
    pub copy_number: Option<PathBuf>,
    pub tissues: Option<PathBuf>,
    /// Directory of `<name>.txt` gene set files.
    pub gene_sets: Option<PathBuf>,
    pub dose_response: Option<PathBuf>,
    pub auc: Option<PathBuf>,
}

impl InputPaths {
    fn matrix(&self, ft: FeatureType) -> Option<&PathBuf> {
        match ft {
            FeatureType::Expression => self.expression.as_ref(),
            FeatureType::Mutation => self.mutation.as_ref(),
            FeatureType::CopyNumber => self.copy_number.as_ref(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.expression,
            &mut self.mutation,
            &mut self.copy_number,
            &mut self.tissues,
            &mut self.gene_sets,
            &mut self.dose_response,
            &mut self.auc,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// What MAS models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResponseKind {
    Auc,
    /// Viability at each drug's calibrated level.
    CalibratedViability {
        #[serde(default = "default_target")]
        target: f64,
    },
    ViabilityAtLevel {
        level: usize,
    },
}

fn default_target() -> f64 {
    DEFAULT_TARGET_VIABILITY
}

impl Default for ResponseKind {
    fn default() -> Self {
        ResponseKind::Auc
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSetsConfig {
    pub sizes: Vec<usize>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnionSetConfig {
    pub name: String,
    /// Sets to merge; empty means every loaded curated set.
    #[serde(default)]
    pub sets: Vec<String>,
}

/// The whole run configuration. The top-level `seed` overrides the seeds of
/// every section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub inputs: InputPaths,
    pub response: ResponseKind,
    /// Viability target of the dose calibration used by `drs`.
    pub target_viability: Option<f64>,
    pub mas: MasRunConfig,
    pub random_gene_sets: Option<RandomSetsConfig>,
    pub union_gene_set: Option<UnionSetConfig>,
    pub drs: DrsConfig,
    pub synth: SyntheticSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, resolves input paths and applies `seed`.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<(Self, Vec<u8>)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.inputs.resolve(path.parent().unwrap_or(Path::new(".")));
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.mas.seed = cfg.seed;
        cfg.drs.seed = cfg.seed;
        cfg.synth.seed = cfg.seed;
        Ok((cfg, bytes))
    }

    fn target(&self) -> f64 {
        self.target_viability.unwrap_or(DEFAULT_TARGET_VIABILITY)
    }
}

/// Provenance record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    pub config_sha256: Option<String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_seconds: f64,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

struct Run {
    command: &'static str,
    seed: u64,
    started: Instant,
    config_sha256: Option<String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    warnings: Vec<String>,
    out_dir: PathBuf,
}

impl Run {
    fn new(command: &'static str, out_dir: &Path, seed: u64, config: Option<&[u8]>) -> Result<Self> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(Run {
            command,
            seed,
            started: Instant::now(),
            config_sha256: config.map(sha256_hex),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            out_dir: out_dir.to_path_buf(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        log::warn!("{w}");
        self.warnings.push(w);
    }

    fn finish(self) -> Result<RunManifest> {
        let mut outputs = BTreeMap::new();
        for p in &self.outputs {
            let name = p.strip_prefix(&self.out_dir).unwrap_or(p).display().to_string();
            outputs.insert(name, hash_file(p)?);
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            seed: self.seed,
            workers: rayon::current_num_threads(),
            config_sha256: self.config_sha256,
            inputs: self.inputs,
            outputs,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            warnings: self.warnings,
        };
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

fn load_data(cfg: &RunConfig, run: &mut Run, needed: &[FeatureType]) -> Result<GenomicData> {
    let mut matrices = Vec::new();
    for ft in FeatureType::ALL {
        match cfg.inputs.matrix(ft) {
            Some(p) => {
                run.input(p)?;
                matrices.push(load_feature_matrix(p, ft)?);
            }
            None if needed.contains(&ft) => {
                return Err(Error::Config(format!("inputs.{} is required", ft.as_str())));
            }
            None => {}
        }
    }
    let mut sets = Vec::new();
    if let Some(dir) = &cfg.inputs.gene_sets {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        for f in files {
            run.input(&f)?;
            sets.push(load_gene_set(&f)?);
        }
    }
    let tissues = match &cfg.inputs.tissues {
        Some(p) => {
            run.input(p)?;
            Some(load_tissue_labels(p)?)
        }
        None => None,
    };
    let data = GenomicData::new(matrices, sets, tissues)?;
    for s in data.gene_sets.values() {
        for ft in needed {
            let (_, dropped) = data.resolve_genes(s.name(), *ft)?;
            if dropped > 0 {
                run.warn(format!("gene set {}: {dropped} genes absent from the {ft} matrix", s.name()));
            }
        }
    }
    Ok(data)
}

fn load_dose(cfg: &RunConfig, run: &mut Run) -> Result<BTreeMap<String, dose::DoseResponseTable>> {
    let p = cfg
        .inputs
        .dose_response
        .as_ref()
        .ok_or_else(|| Error::Config("inputs.dose_response is required".into()))?;
    run.input(p)?;
    dose::load_dose_response(p)
}

fn mas_responses(cfg: &RunConfig, run: &mut Run) -> Result<Responses> {
    match &cfg.response {
        ResponseKind::Auc => {
            let p = cfg
                .inputs
                .auc
                .as_ref()
                .ok_or_else(|| Error::Config("inputs.auc is required for AUC responses".into()))?;
            run.input(p)?;
            dose::load_auc(p)
        }
        ResponseKind::CalibratedViability { target } => {
            let tables = load_dose(cfg, run)?;
            Ok(dose::calibrated_viabilities(&tables, *target)?.1)
        }
        ResponseKind::ViabilityAtLevel { level } => load_dose(cfg, run)?
            .iter()
            .map(|(d, t)| Ok((d.clone(), t.responses_at(*level)?)))
            .collect(),
    }
}

/// Adds the configured union and random gene sets. Both `mas` and `drs`
/// call this so a `mas_best.json` naming them resolves in either command.
fn add_derived_sets(cfg: &RunConfig, data: &mut GenomicData) -> Result<()> {
    let curated: Vec<String> = data.gene_sets.keys().cloned().collect();
    if let Some(u) = &cfg.union_gene_set {
        let names = if u.sets.is_empty() { curated.clone() } else { u.sets.clone() };
        let set = mas::union_gene_set(&data, &names, &u.name)?;
        data.add_gene_set(set)?;
    }
    if let Some(r) = &cfg.random_gene_sets {
        let universe: Vec<String> = cfg
            .mas
            .feature_types
            .iter()
            .map(|ft| data.matrix(*ft).map(|m| m.gene_ids().to_vec()))
            .collect::<Result<Vec<_>>>()?
            .concat();
        for s in mas::generate_random_gene_sets(&universe, &r.sizes, r.count, cfg.seed)? {
            data.add_gene_set(s)?;
        }
    }
    Ok(())
}

/// Generates a synthetic world into `out`.
pub fn cmd_synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<i32> {
    let (cfg, bytes) = match config {
        Some(p) => {
            let (c, b) = RunConfig::load(p, seed)?;
            (c, Some(b))
        }
        None => {
            let mut c = RunConfig::default();
            c.seed = seed.unwrap_or(0);
            c.synth.seed = c.seed;
            (c, None)
        }
    };
    let mut run = Run::new("synth", out, cfg.seed, bytes.as_deref())?;
    let world = synthetic::generate(&cfg.synth)?;
    let files = world.write(out)?;
    for p in [
        &files.expression,
        &files.mutation,
        &files.copy_number,
        &files.tissues,
        &files.dose_response,
        &files.auc,
        &files.truth,
    ] {
        run.outputs.push(p.clone());
    }
    for s in world.data.gene_sets.values() {
        run.outputs.push(files.gene_sets.join(format!("{}.txt", s.name())));
    }
    run.finish()?;
    Ok(EXIT_OK)
}

/// Runs MAS and writes its tables, `mas_best.json` and plot data.
pub fn cmd_mas(config: &Path, seed: Option<u64>, out: &Path) -> Result<i32> {
    let (cfg, bytes) = RunConfig::load(config, seed)?;
    cfg.mas.validate_settings()?;
    let mut run = Run::new("mas", out, cfg.seed, Some(&bytes))?;
    let mut data = load_data(&cfg, &mut run, &cfg.mas.feature_types)?;
    let responses = mas_responses(&cfg, &mut run)?;

    add_derived_sets(&cfg, &mut data)?;

    let outcome = mas::run_mas(&cfg.mas, &data, &responses)?;
    for w in &outcome.warnings {
        run.warn(w.clone());
    }
    let best = mas::best_configs(&outcome);
    mas::write_results_csv(run.output("mas_results.csv"), &outcome)?;
    mas::write_best_json(run.output("mas_best.json"), &best)?;
    let comparisons = mas::compare_all_gene_sets(&outcome, &cfg.mas.set_names(&data), cfg.mas.top_n_usage);
    mas::write_gene_set_comparison(run.output("gene_set_comparison.csv"), &comparisons)?;
    mas::write_feature_importances(run.output("feature_importances.csv"), &outcome, cfg.mas.top_k_importances)?;
    mas::write_r2_summary(run.output("drug_r2_summary.csv"), &outcome)?;
    mas::write_gene_set_usage(run.output("gene_set_usage.csv"), &comparisons)?;

    let invalid = outcome
        .drugs
        .iter()
        .any(|d| d.best.is_none() || d.evaluations.iter().any(|e| !e.result.valid));
    if outcome.drugs.is_empty() {
        run.warn("no drug had enough cell lines to analyze");
    }
    run.finish()?;
    Ok(if invalid || outcome.drugs.is_empty() {
        EXIT_INVALID
    } else {
        EXIT_OK
    })
}

/// Calibrates doses, runs leave-one-out recommendation and writes the
/// evaluation for Dr.S and both baselines.
pub fn cmd_drs(config: &Path, mas_best: &Path, seed: Option<u64>, policy: Option<Policy>, out: &Path) -> Result<i32> {
    let (mut cfg, bytes) = RunConfig::load(config, seed)?;
    if let Some(p) = policy {
        cfg.drs.policy = p;
    }
    cfg.drs.policy.validate()?;
    let mut run = Run::new("drs", out, cfg.seed, Some(&bytes))?;
    run.input(mas_best)?;
    let best = mas::load_best_json(mas_best)?;
    let needed: Vec<FeatureType> = {
        let mut v: Vec<FeatureType> = best
            .values()
            .flat_map(|b| b.combo.assignment().keys().copied().collect::<Vec<_>>())
            .collect();
        v.sort();
        v.dedup();
        v
    };
    let mut data = load_data(&cfg, &mut run, &needed)?;
    add_derived_sets(&cfg, &mut data)?;
    let tables = load_dose(&cfg, &mut run)?;
    for d in best.keys().filter(|d| !tables.contains_key(*d)) {
        run.warn(format!("drug {d}: in mas_best but has no dose response, ignored"));
    }
    let (doses, truth) = dose::calibrated_viabilities(&tables, cfg.target())?;

    let outcome = drs::recommend_loo(&cfg.drs, &data, &best, &truth)?;
    for w in &outcome.warnings {
        run.warn(w.clone());
    }
    let eval = drs::evaluate(&outcome, &truth, cfg.drs.policy)?;

    let mut w = csv::Writer::from_path(run.output("calibration.csv"))?;
    w.write_record(["drug", "level", "mean_viability"])?;
    for c in doses.values() {
        w.write_record([c.drug_id.clone(), c.level.to_string(), c.mean_viability.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    drs::write_recommendations(run.output("drs_recommendations.csv"), &outcome, &truth)?;
    drs::write_normalized_viability(run.output("normalized_viability.csv"), &outcome, &truth)?;
    drs::write_evaluation(run.output("drs_eval.json"), &eval)?;
    let empty = outcome.recommendations.is_empty();
    run.finish()?;
    Ok(if empty { EXIT_INVALID } else { EXIT_OK })
}

fn methods(eval: &DrsEvaluation) -> Vec<(&'static str, &MethodEvaluation)> {
    let mut v = vec![("drs", &eval.drs)];
    if let Some(t) = &eval.tissue {
        v.push(("tissue", t));
    }
    v.push(("random", &eval.random));
    v
}

/// Turns one or more results directories into plot-data tables. Each input
/// file is taken from the first directory that has it.
pub fn cmd_report(results: &[PathBuf], out: Option<&Path>) -> Result<i32> {
    let first = results
        .first()
        .ok_or_else(|| Error::Config("report needs at least one results directory".into()))?;
    let default_out = first.join("report");
    let out = out.unwrap_or(&default_out);
    let find = |name: &str| {
        results
            .iter()
            .map(|d| d.join(name))
            .find(|p| p.is_file())
            .unwrap_or_else(|| first.join(name))
    };
    let best_path = find("mas_best.json");
    let cmp_path = find("gene_set_comparison.csv");
    let eval_path = find("drs_eval.json");
    if !best_path.is_file() && !eval_path.is_file() {
        return Err(Error::invalid(format!(
            "{}: neither mas_best.json nor drs_eval.json found",
            first.display()
        )));
    }
    let mut run = Run::new("report", out, 0, None)?;

    if best_path.is_file() {
        run.input(&best_path)?;
        let best = mas::load_best_json(&best_path)?;
        let mut rows: Vec<(&String, &BestConfig)> = best.iter().collect();
        rows.sort_by(|a, b| a.1.mean_r2.total_cmp(&b.1.mean_r2).then_with(|| a.0.cmp(b.0)));
        let mut w = csv::Writer::from_path(run.output("drug_r2_summary.csv"))?;
        w.write_record(["drug", "algorithm", "combo", "mean_r2", "r2_sd"])?;
        for (d, b) in rows {
            w.write_record([
                d.clone(),
                b.algorithm.to_string(),
                b.combo.id(),
                b.mean_r2.to_string(),
                b.r2_variance.sqrt().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(out, e))?;
    }
    if cmp_path.is_file() {
        run.input(&cmp_path)?;
        let mut usage: BTreeMap<String, usize> = BTreeMap::new();
        let mut r = csv::Reader::from_path(&cmp_path)?;
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MalformedHeader {
                    path: cmp_path.clone(),
                    message: format!("no `{name}` column"),
                })
        };
        let (si, ui) = (col("gene_set")?, col("usage")?);
        for rec in r.records() {
            let rec = rec?;
            let u: usize = rec[ui]
                .parse()
                .map_err(|_| Error::invalid(format!("{}: bad usage `{}`", cmp_path.display(), &rec[ui])))?;
            *usage.entry(rec[si].to_string()).or_default() += u;
        }
        let mut w = csv::Writer::from_path(run.output("gene_set_usage.csv"))?;
        w.write_record(["gene_set", "usage"])?;
        for (s, u) in usage {
            w.write_record([s, u.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(out, e))?;
    }
    if eval_path.is_file() {
        run.input(&eval_path)?;
        let eval = drs::load_evaluation(&eval_path)?;
        let mut cdf = csv::Writer::from_path(run.output("rank_cdf.csv"))?;
        let mut inc = csv::Writer::from_path(run.output("inclusion_curve.csv"))?;
        let mut gap = csv::Writer::from_path(run.output("gap_curve.csv"))?;
        let mut hist = csv::Writer::from_path(run.output("gap_histogram.csv"))?;
        let mut eps = csv::Writer::from_path(run.output("epsilon_star_cdf.csv"))?;
        cdf.write_record(["method", "rank", "count", "cdf"])?;
        inc.write_record(["method", "n", "fraction"])?;
        gap.write_record(["method", "n", "mean_gap"])?;
        hist.write_record(["method", "bin_start", "bin_end", "count"])?;
        eps.write_record(["method", "epsilon_star", "cdf"])?;
        for (name, m) in methods(&eval) {
            for (i, (&h, &c)) in m.rank_histogram.iter().zip(&m.rank_cdf).enumerate() {
                cdf.write_record([name.to_string(), (i + 1).to_string(), h.to_string(), c.to_string()])?;
            }
            for (i, f) in m.inclusion.iter().enumerate() {
                inc.write_record([name.to_string(), (i + 1).to_string(), f.to_string()])?;
            }
            for (i, g) in m.mean_gap.iter().enumerate() {
                gap.write_record([name.to_string(), (i + 1).to_string(), g.to_string()])?;
            }
            for (i, h) in m.gap_histogram.iter().enumerate() {
                hist.write_record([
                    name.to_string(),
                    (i as f64 * GAP_BIN_WIDTH).to_string(),
                    ((i + 1) as f64 * GAP_BIN_WIDTH).to_string(),
                    h.to_string(),
                ])?;
            }
            let n = m.epsilon_star.len() as f64;
            for (i, e) in m.epsilon_star.iter().enumerate() {
                eps.write_record([name.to_string(), e.to_string(), ((i + 1) as f64 / n).to_string()])?;
            }
        }
        for w in [&mut cdf, &mut inc, &mut gap, &mut hist, &mut eps] {
            w.flush().map_err(|e| Error::io(out, e))?;
        }
    }
    run.finish()?;
    Ok(EXIT_OK)
}

#[derive(Debug, Parser)]
#[command(name = "cla", version, about = "Per-drug model selection and leave-one-out drug recommendation")]
pub struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world from the `[synth]` section.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every algorithm x combo per drug and pick the best.
    Mas {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out drug recommendation from a `mas_best.json`.
    Drs {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mas_best: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Recommend every drug within this much of the best prediction.
        #[arg(long, conflicts_with = "top_n")]
        epsilon: Option<f64>,
        /// Recommend the N best-predicted drugs.
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write plot-data tables from results directories (default output: `<first>/report`).
    Report {
        /// Directory holding MAS and/or Dr.S outputs; may be repeated.
        #[arg(long, required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Synth { config, seed, out } => cmd_synth(config.as_deref(), *seed, out),
        Command::Mas { config, seed, out } => cmd_mas(config, *seed, out),
        Command::Drs {
            config,
            mas_best,
            seed,
            epsilon,
            top_n,
            out,
        } => {
            let policy = match (epsilon, top_n) {
                (Some(e), _) => Some(Policy::Epsilon { epsilon: *e }),
                (None, Some(n)) => Some(Policy::TopN { n: *n }),
                _ => None,
            };
            cmd_drs(config, mas_best, *seed, policy, out)
        }
        Command::Report { results, out } => cmd_report(results, out.as_deref()),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
