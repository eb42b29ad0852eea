//! Dose-response tables, concentration calibration and per-cell-line drug
//! rankings by viability.
//!
//! Every drug is prescribed at its own calibrated level, where the mean
//! viability over the cell lines it was tested on is closest to 0.75. This
//! treats all drugs as equally toxic at their calibrated levels.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of normalized concentration levels (0 through 9).
pub const N_LEVELS: usize = 10;

/// Default mean viability a calibrated level should reach.
pub const DEFAULT_TARGET_VIABILITY: f64 = 0.75;

/// Minimum fraction of a drug's cell lines a level must cover to be eligible.
pub const MIN_LEVEL_COVERAGE: f64 = 0.5;

pub type Curve = [Option<f64>; N_LEVELS];

/// Viabilities of one drug over the cell lines it was tested on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseTable {
    pub drug_id: String,
    curves: BTreeMap<String, Curve>,
}

impl DoseResponseTable {
    pub fn new(drug_id: impl Into<String>) -> Self {
        DoseResponseTable {
            drug_id: drug_id.into(),
            curves: BTreeMap::new(),
        }
    }

    /// Adds one cell line. Values must lie in [0, 1].
    pub fn insert(&mut self, cell_line: impl Into<String>, curve: Curve) -> Result<()> {
        let cell_line = cell_line.into();
        for v in curve.iter().flatten() {
            if !v.is_finite() || !(0.0..=1.0).contains(v) {
                return Err(Error::invalid(format!(
                    "viability {v} for ({}, {cell_line}) outside [0, 1]",
                    self.drug_id
                )));
            }
        }
        if self.curves.insert(cell_line.clone(), curve).is_some() {
            return Err(Error::DuplicateId {
                context: format!("dose response of {}", self.drug_id),
                id: cell_line,
            });
        }
        Ok(())
    }

    pub fn cell_lines(&self) -> impl Iterator<Item = &String> {
        self.curves.keys()
    }

    pub fn curve(&self, cell_line: &str) -> Option<&Curve> {
        self.curves.get(cell_line)
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Measured viabilities at `level`, keyed by cell line.
    pub fn responses_at(&self, level: usize) -> Result<BTreeMap<String, f64>> {
        check_level(level)?;
        Ok(self
            .curves
            .iter()
            .filter_map(|(c, curve)| curve[level].map(|v| (c.clone(), v)))
            .collect())
    }
}

fn check_level(level: usize) -> Result<()> {
    if level >= N_LEVELS {
        return Err(Error::invalid(format!("concentration level {level} outside 0..=9")));
    }
    Ok(())
}

/// Measured viability, or `None` when the pair was not measured.
pub fn viability_at(table: &DoseResponseTable, cell_line: &str, level: usize) -> Result<Option<f64>> {
    check_level(level)?;
    Ok(table.curve(cell_line).and_then(|c| c[level]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedDose {
    pub drug_id: String,
    pub level: usize,
    pub mean_viability: f64,
}

/// Picks the level whose mean viability is closest to `target`, among
/// levels measured on at least half the tested cell lines. Ties go to the
/// lower level.
pub fn calibrate_concentration(table: &DoseResponseTable, target: f64) -> Result<CalibratedDose> {
    let n = table.len();
    let mut best: Option<(usize, f64)> = None;
    for level in 0..N_LEVELS {
        let vals: Vec<f64> = table.curves.values().filter_map(|c| c[level]).collect();
        if vals.is_empty() || (vals.len() as f64) < MIN_LEVEL_COVERAGE * n as f64 {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if best.map_or(true, |(_, m)| (mean - target).abs() < (m - target).abs()) {
            best = Some((level, mean));
        }
    }
    let (level, mean_viability) = best.ok_or_else(|| {
        Error::invalid(format!(
            "{}: no concentration level is measured on half of its cell lines",
            table.drug_id
        ))
    })?;
    Ok(CalibratedDose {
        drug_id: table.drug_id.clone(),
        level,
        mean_viability,
    })
}

/// Calibrates every drug and returns, per drug, the calibration and the
/// viabilities measured at the calibrated level (drug → cell line → value).
pub fn calibrated_viabilities(
    tables: &BTreeMap<String, DoseResponseTable>,
    target: f64,
) -> Result<(BTreeMap<String, CalibratedDose>, BTreeMap<String, BTreeMap<String, f64>>)> {
    let mut doses = BTreeMap::new();
    let mut responses = BTreeMap::new();
    for (d, t) in tables {
        let c = calibrate_concentration(t, target)?;
        responses.insert(d.clone(), t.responses_at(c.level)?);
        doses.insert(d.clone(), c);
    }
    Ok((doses, responses))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedViabilities {
    pub values: BTreeMap<String, f64>,
    /// All drugs had the same viability, so everything maps to 0.
    pub degenerate: bool,
}

/// Maps the best drug to 0 and the worst to 1.
pub fn normalize_viabilities(v: &BTreeMap<String, f64>) -> Result<NormalizedViabilities> {
    if v.len() < 2 {
        return Err(Error::invalid("normalizing viabilities needs at least two drugs"));
    }
    let lo = v.values().copied().fold(f64::INFINITY, f64::min);
    let hi = v.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = hi <= lo;
    let values = v
        .iter()
        .map(|(d, &x)| (d.clone(), if degenerate { 0.0 } else { (x - lo) / (hi - lo) }))
        .collect();
    Ok(NormalizedViabilities { values, degenerate })
}

/// 1 + the number of drugs with strictly lower viability.
pub fn true_rank(v: &BTreeMap<String, f64>, drug: &str) -> Result<usize> {
    let x = *v
        .get(drug)
        .ok_or_else(|| Error::invalid(format!("drug `{drug}` has no viability")))?;
    Ok(1 + v.values().filter(|&&o| o < x).count())
}

/// Reads `drug_id,cell_line_id,level_0,...,level_9`; an empty cell is a
/// missing measurement.
pub fn load_dose_response(path: impl AsRef<Path>) -> Result<BTreeMap<String, DoseResponseTable>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let expected: Vec<String> = ["drug_id".to_string(), "cell_line_id".to_string()]
        .into_iter()
        .chain((0..N_LEVELS).map(|l| format!("level_{l}")))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::MalformedHeader {
            path: path.into(),
            message: format!("expected `{}`", expected.join(",")),
        });
    }
    let mut tables: BTreeMap<String, DoseResponseTable> = BTreeMap::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let bad = |col: usize, message: String| Error::BadCell {
            path: path.into(),
            row,
            col,
            message,
        };
        let mut curve = [None; N_LEVELS];
        for (l, slot) in curve.iter_mut().enumerate() {
            let cell = rec.get(l + 2).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| bad(l + 3, format!("non-numeric viability `{cell}`")))?;
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(bad(l + 3, format!("viability {v} outside [0, 1]")));
            }
            *slot = Some(v);
        }
        let drug = rec.get(0).unwrap_or("");
        let cell_line = rec.get(1).unwrap_or("");
        if drug.is_empty() || cell_line.is_empty() {
            return Err(bad(1, "empty drug or cell line id".into()));
        }
        tables
            .entry(drug.to_string())
            .or_insert_with(|| DoseResponseTable::new(drug))
            .insert(cell_line, curve)?;
    }
    Ok(tables)
}

pub fn write_dose_response(path: impl AsRef<Path>, tables: &BTreeMap<String, DoseResponseTable>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("drug_id,cell_line_id");
    for l in 0..N_LEVELS {
        out.push_str(&format!(",level_{l}"));
    }
    out.push('\n');
    for t in tables.values() {
        for (c, curve) in &t.curves {
            out.push_str(&format!("{},{c}", t.drug_id));
            for v in curve {
                out.push(',');
                if let Some(v) = v {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// AUC per drug and cell line.
pub type AucTable = BTreeMap<String, BTreeMap<String, f64>>;

/// Reads `drug_id,cell_line_id,auc`.
pub fn load_auc(path: impl AsRef<Path>) -> Result<AucTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(["drug_id", "cell_line_id", "auc"]) {
        return Err(Error::MalformedHeader {
            path: path.into(),
            message: "expected `drug_id,cell_line_id,auc`".into(),
        });
    }
    let mut out = AucTable::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(2).unwrap_or("");
        let v: f64 = cell.parse().ok().filter(|v: &f64| (0.0..=1.0).contains(v)).ok_or_else(|| Error::BadCell {
            path: path.into(),
            row: r + 1,
            col: 3,
            message: format!("AUC `{cell}` is not a number in [0, 1]"),
        })?;
        let (d, c) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        if out.entry(d.to_string()).or_default().insert(c.to_string(), v).is_some() {
            return Err(Error::DuplicateId {
                context: format!("AUC of {d}"),
                id: c.to_string(),
            });
        }
    }
    Ok(out)
}

pub fn write_auc(path: impl AsRef<Path>, auc: &AucTable) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("drug_id,cell_line_id,auc\n");
    for (d, m) in auc {
        for (c, v) in m {
            out.push_str(&format!("{d},{c},{v}\n"));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
