//! Feature matrices, gene sets, tissue labels, combos and design matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Genomic feature families measured per cell line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureType {
    Expression,
    Mutation,
    CopyNumber,
}

impl FeatureType {
    pub const ALL: [FeatureType; 3] = [
        FeatureType::Expression,
        FeatureType::Mutation,
        FeatureType::CopyNumber,
    ];

    /// Short prefix used in design-matrix column names.
    pub fn prefix(self) -> &'static str {
        match self {
            FeatureType::Expression => "expr",
            FeatureType::Mutation => "mut",
            FeatureType::CopyNumber => "cnv",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureType::Expression => "expression",
            FeatureType::Mutation => "mutation",
            FeatureType::CopyNumber => "copy_number",
        }
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expression" | "expr" => Ok(FeatureType::Expression),
            "mutation" | "mut" => Ok(FeatureType::Mutation),
            "copy_number" | "cnv" => Ok(FeatureType::CopyNumber),
            other => Err(Error::invalid(format!("unknown feature type `{other}`"))),
        }
    }
}

/// Highest mutation category code; 0 is wild type.
pub const MAX_MUTATION_CODE: u8 = 6;

/// Cell lines × genes for one feature type.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    feature_type: FeatureType,
    cell_line_ids: Vec<String>,
    gene_ids: Vec<String>,
    values: Array2<f64>,
    row_index: HashMap<String, usize>,
    col_index: HashMap<String, usize>,
}

fn index_unique(ids: &[String], context: &str) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if index.insert(id.clone(), i).is_some() {
            return Err(Error::DuplicateId {
                context: context.to_string(),
                id: id.clone(),
            });
        }
    }
    Ok(index)
}

impl FeatureMatrix {
    pub fn new(
        feature_type: FeatureType,
        cell_line_ids: Vec<String>,
        gene_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.nrows() != cell_line_ids.len() || values.ncols() != gene_ids.len() {
            return Err(Error::invalid(format!(
                "{feature_type} matrix is {}x{} but has {} cell lines and {} genes",
                values.nrows(),
                values.ncols(),
                cell_line_ids.len(),
                gene_ids.len()
            )));
        }
        let row_index = index_unique(&cell_line_ids, &format!("{feature_type} cell lines"))?;
        let col_index = index_unique(&gene_ids, &format!("{feature_type} genes"))?;
        for ((r, c), &v) in values.indexed_iter() {
            validate_value(feature_type, v).map_err(|message| {
                Error::invalid(format!("{message} at (row {}, col {})", r + 1, c + 1))
            })?;
        }
        Ok(FeatureMatrix {
            feature_type,
            cell_line_ids,
            gene_ids,
            values,
            row_index,
            col_index,
        })
    }

    pub fn feature_type(&self) -> FeatureType {
        self.feature_type
    }

    pub fn cell_line_ids(&self) -> &[String] {
        &self.cell_line_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row_of(&self, cell_line: &str) -> Option<usize> {
        self.row_index.get(cell_line).copied()
    }

    pub fn col_of(&self, gene: &str) -> Option<usize> {
        self.col_index.get(gene).copied()
    }

    pub fn contains_gene(&self, gene: &str) -> bool {
        self.col_index.contains_key(gene)
    }

    pub fn get(&self, cell_line: &str, gene: &str) -> Option<f64> {
        Some(self.values[[self.row_of(cell_line)?, self.col_of(gene)?]])
    }

    /// Writes the matrix in the CSV ingestion format. Values use the
    /// shortest round-tripping decimal form, so reloading is bit-exact.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        out.push_str("cell_line_id");
        for g in &self.gene_ids {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for (r, id) in self.cell_line_ids.iter().enumerate() {
            out.push_str(id);
            for v in self.values.row(r) {
                out.push(',');
                if self.feature_type == FeatureType::Mutation {
                    out.push_str(&format!("{}", *v as u8));
                } else {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn validate_value(ft: FeatureType, v: f64) -> std::result::Result<(), String> {
    if !v.is_finite() {
        return Err("non-finite value".into());
    }
    if ft == FeatureType::Mutation
        && (v.fract() != 0.0 || v < 0.0 || v > f64::from(MAX_MUTATION_CODE))
    {
        return Err("mutation code out of range".into());
    }
    Ok(())
}

/// Reads a feature matrix CSV: header `cell_line_id,<gene>,...`, one row per
/// cell line. Row and column numbers in errors are 1-based over data cells.
pub fn load_feature_matrix(path: impl AsRef<Path>, feature_type: FeatureType) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::MalformedHeader {
        path: path.into(),
        message: "file is empty".into(),
    })?;
    let mut head = header.split(',').map(str::trim);
    if head.next() != Some("cell_line_id") {
        return Err(Error::MalformedHeader {
            path: path.into(),
            message: "first header cell must be `cell_line_id`".into(),
        });
    }
    let gene_ids: Vec<String> = head.map(str::to_string).collect();
    if gene_ids.is_empty() || gene_ids.iter().any(String::is_empty) {
        return Err(Error::MalformedHeader {
            path: path.into(),
            message: "missing or empty gene id".into(),
        });
    }
    let mut seen = BTreeSet::new();
    for g in &gene_ids {
        if !seen.insert(g.as_str()) {
            return Err(Error::DuplicateId {
                context: format!("{} genes", path.display()),
                id: g.clone(),
            });
        }
    }

    let mut cell_line_ids = Vec::new();
    let mut seen_rows = BTreeSet::new();
    let mut data = Vec::new();
    for (r, line) in lines.enumerate() {
        let row = r + 1;
        let mut cells = line.split(',').map(str::trim);
        let id = cells.next().unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::BadCell {
                path: path.into(),
                row,
                col: 0,
                message: "empty cell line id".into(),
            });
        }
        if !seen_rows.insert(id.clone()) {
            return Err(Error::DuplicateId {
                context: format!("{} cell lines", path.display()),
                id,
            });
        }
        let mut n = 0;
        for (c, cell) in cells.enumerate() {
            let col = c + 1;
            if col > gene_ids.len() {
                return Err(Error::BadCell {
                    path: path.into(),
                    row,
                    col,
                    message: "more cells than header columns".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::BadCell {
                path: path.into(),
                row,
                col,
                message: format!("non-numeric value `{cell}`"),
            })?;
            validate_value(feature_type, v).map_err(|message| Error::BadCell {
                path: path.into(),
                row,
                col,
                message,
            })?;
            data.push(v);
            n += 1;
        }
        if n != gene_ids.len() {
            return Err(Error::BadCell {
                path: path.into(),
                row,
                col: n + 1,
                message: format!("expected {} values, found {n}", gene_ids.len()),
            });
        }
        cell_line_ids.push(id);
    }
    let values = Array2::from_shape_vec((cell_line_ids.len(), gene_ids.len()), data)
        .expect("row lengths checked");
    FeatureMatrix::new(feature_type, cell_line_ids, gene_ids, values)
}

/// A named, non-empty set of gene ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSet {
    name: String,
    genes: BTreeSet<String>,
}

impl GeneSet {
    pub fn new(name: impl Into<String>, genes: impl IntoIterator<Item = String>) -> Result<Self> {
        let name = name.into();
        let mut set = BTreeSet::new();
        for g in genes {
            if !set.insert(g.clone()) {
                return Err(Error::DuplicateId {
                    context: format!("gene set {name}"),
                    id: g,
                });
            }
        }
        if set.is_empty() {
            return Err(Error::invalid(format!("gene set `{name}` is empty")));
        }
        Ok(GeneSet { name, genes: set })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn genes(&self) -> &BTreeSet<String> {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn contains(&self, gene: &str) -> bool {
        self.genes.contains(gene)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join(format!("{}.txt", self.name));
        let mut body = String::new();
        for g in &self.genes {
            body.push_str(g);
            body.push('\n');
        }
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }
}

/// One gene id per line; the file stem names the set.
pub fn load_gene_set(path: impl AsRef<Path>) -> Result<GeneSet> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid(format!("{}: no file stem", path.display())))?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let genes = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string);
    GeneSet::new(name, genes)
}

/// Cell line → tissue type.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TissueLabels {
    labels: BTreeMap<String, String>,
}

impl TissueLabels {
    pub fn new(labels: BTreeMap<String, String>) -> Self {
        TissueLabels { labels }
    }

    pub fn get(&self, cell_line: &str) -> Option<&str> {
        self.labels.get(cell_line).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.labels.iter()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Checks that every labeled cell line appears in at least one matrix.
    pub fn validate_against<'a>(&self, matrices: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<()> {
        let matrices: Vec<_> = matrices.into_iter().collect();
        for id in self.labels.keys() {
            if !matrices.iter().any(|m| m.row_of(id).is_some()) {
                return Err(Error::invalid(format!(
                    "tissue label for `{id}`, which is in no feature matrix"
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = String::from("cell_line_id,tissue_type\n");
        for (c, t) in &self.labels {
            body.push_str(&format!("{c},{t}\n"));
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

pub fn load_tissue_labels(path: impl AsRef<Path>) -> Result<TissueLabels> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("cell_line_id") || headers.get(1) != Some("tissue_type") {
        return Err(Error::MalformedHeader {
            path: path.into(),
            message: "expected `cell_line_id,tissue_type`".into(),
        });
    }
    let mut labels = BTreeMap::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let (Some(c), Some(t)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::BadCell {
                path: path.into(),
                row: r + 1,
                col: 1,
                message: "missing field".into(),
            });
        };
        if labels.insert(c.to_string(), t.to_string()).is_some() {
            return Err(Error::DuplicateId {
                context: format!("{} cell lines", path.display()),
                id: c.to_string(),
            });
        }
    }
    Ok(TissueLabels { labels })
}

/// Assignment of a gene set (or none) to each feature type.
///
/// Only assigned feature types are stored; an absent key means "none".
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Combo {
    assignment: BTreeMap<FeatureType, String>,
}

impl Combo {
    pub fn new(assignment: BTreeMap<FeatureType, String>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::invalid("combo assigns no gene set to any feature type"));
        }
        Ok(Combo { assignment })
    }

    pub fn single(feature_type: FeatureType, set: impl Into<String>) -> Self {
        Combo {
            assignment: BTreeMap::from([(feature_type, set.into())]),
        }
    }

    pub fn get(&self, feature_type: FeatureType) -> Option<&str> {
        self.assignment.get(&feature_type).map(String::as_str)
    }

    pub fn assignment(&self) -> &BTreeMap<FeatureType, String> {
        &self.assignment
    }

    pub fn uses_set(&self, name: &str) -> bool {
        self.assignment.values().any(|s| s == name)
    }

    /// Number of feature-type slots that use `name`.
    pub fn slots_using(&self, name: &str) -> usize {
        self.assignment.values().filter(|s| *s == name).count()
    }

    /// Stable identifier such as `expr:S1|mut:-|cnv:S2`.
    pub fn id(&self) -> String {
        FeatureType::ALL
            .iter()
            .map(|ft| format!("{}:{}", ft.prefix(), self.get(*ft).unwrap_or("-")))
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Combo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut assignment = BTreeMap::new();
        for part in s.split('|') {
            let (ft, set) = part
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("bad combo id `{s}`")))?;
            if set != "-" {
                assignment.insert(ft.parse()?, set.to_string());
            }
        }
        Combo::new(assignment)
    }
}

/// Every assignment of (each gene set or none) to each feature type,
/// excluding the all-none assignment.
///
/// Order is odometer-style: the first feature type is the most significant
/// digit, set names are sorted with none last.
pub fn enumerate_combos(gene_sets: &[GeneSet], feature_types: &[FeatureType]) -> Result<Vec<Combo>> {
    let names: Vec<String> = gene_sets.iter().map(|g| g.name().to_string()).collect();
    enumerate_combos_by_name(&names, feature_types)
}

pub fn enumerate_combos_by_name(set_names: &[String], feature_types: &[FeatureType]) -> Result<Vec<Combo>> {
    if set_names.is_empty() || feature_types.is_empty() {
        return Err(Error::invalid("combo enumeration needs at least one gene set and one feature type"));
    }
    let names: Vec<&String> = set_names.iter().collect::<BTreeSet<_>>().into_iter().collect();
    if names.len() != set_names.len() {
        return Err(Error::invalid("duplicate gene set names"));
    }
    let types: Vec<FeatureType> = feature_types.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    // option index names.len() means "none"
    let base = names.len() + 1;
    let total = base.pow(types.len() as u32);
    let mut combos = Vec::with_capacity(total - 1);
    for code in 0..total {
        let mut assignment = BTreeMap::new();
        let mut rest = code;
        for ft in types.iter().rev() {
            let digit = rest % base;
            rest /= base;
            if digit < names.len() {
                assignment.insert(*ft, names[digit].clone());
            }
        }
        if !assignment.is_empty() {
            combos.push(Combo { assignment });
        }
    }
    Ok(combos)
}

/// Feature matrices, gene sets and (optional) tissue labels.
#[derive(Clone, Debug, Default)]
pub struct GenomicData {
    pub matrices: BTreeMap<FeatureType, FeatureMatrix>,
    pub gene_sets: BTreeMap<String, GeneSet>,
    pub tissues: Option<TissueLabels>,
}

impl GenomicData {
    pub fn new(
        matrices: impl IntoIterator<Item = FeatureMatrix>,
        gene_sets: impl IntoIterator<Item = GeneSet>,
        tissues: Option<TissueLabels>,
    ) -> Result<Self> {
        let mut data = GenomicData {
            tissues,
            ..Default::default()
        };
        for m in matrices {
            if data.matrices.insert(m.feature_type(), m).is_some() {
                return Err(Error::invalid("two matrices for the same feature type"));
            }
        }
        for g in gene_sets {
            data.add_gene_set(g)?;
        }
        if let Some(t) = &data.tissues {
            t.validate_against(data.matrices.values())?;
        }
        Ok(data)
    }

    pub fn add_gene_set(&mut self, set: GeneSet) -> Result<()> {
        let name = set.name().to_string();
        if self.gene_sets.insert(name.clone(), set).is_some() {
            return Err(Error::DuplicateId {
                context: "gene sets".into(),
                id: name,
            });
        }
        Ok(())
    }

    pub fn matrix(&self, ft: FeatureType) -> Result<&FeatureMatrix> {
        self.matrices
            .get(&ft)
            .ok_or_else(|| Error::invalid(format!("no {ft} matrix loaded")))
    }

    /// Cell lines present in every loaded matrix, in sorted order.
    pub fn common_cell_lines(&self) -> Vec<String> {
        let mut iter = self.matrices.values();
        let Some(first) = iter.next() else {
            return Vec::new();
        };
        let rest: Vec<_> = iter.collect();
        let mut ids: Vec<String> = first
            .cell_line_ids()
            .iter()
            .filter(|id| rest.iter().all(|m| m.row_of(id).is_some()))
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Genes of `set` present in the `ft` matrix, sorted, plus how many were dropped.
    pub fn resolve_genes(&self, set: &str, ft: FeatureType) -> Result<(Vec<String>, usize)> {
        let gs = self
            .gene_sets
            .get(set)
            .ok_or_else(|| Error::UnknownGeneSet(set.to_string()))?;
        let m = self.matrix(ft)?;
        let kept: Vec<String> = gs.genes().iter().filter(|g| m.contains_gene(g)).cloned().collect();
        let dropped = gs.len() - kept.len();
        Ok((kept, dropped))
    }

    /// Resolves every slot of a combo to the genes it contributes.
    pub fn combo_genes(&self, combo: &Combo) -> Result<BTreeMap<FeatureType, Vec<String>>> {
        combo
            .assignment()
            .iter()
            .map(|(ft, set)| Ok((*ft, self.resolve_genes(set, *ft)?.0)))
            .collect()
    }
}

/// Design-matrix encoding switches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingOptions {
    /// Collapse mutation codes to mutated / not mutated.
    #[serde(default)]
    pub binary_mutation: bool,
    /// Append one-hot tissue indicators.
    #[serde(default)]
    pub include_tissue: bool,
}

/// Where a design-matrix column comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnSource {
    Gene { feature_type: FeatureType, gene: String },
    MutationCode { gene: String, code: u8 },
    MutationAny { gene: String },
    Tissue(String),
}

impl ColumnSource {
    fn name(&self) -> String {
        match self {
            ColumnSource::Gene { feature_type, gene } => format!("{}:{gene}", feature_type.prefix()),
            ColumnSource::MutationCode { gene, code } => format!("mut:{gene}={code}"),
            ColumnSource::MutationAny { gene } => format!("mut:{gene}"),
            ColumnSource::Tissue(t) => format!("tissue:{t}"),
        }
    }

    pub fn feature_type(&self) -> Option<FeatureType> {
        match self {
            ColumnSource::Gene { feature_type, .. } => Some(*feature_type),
            ColumnSource::MutationCode { .. } | ColumnSource::MutationAny { .. } => Some(FeatureType::Mutation),
            ColumnSource::Tissue(_) => None,
        }
    }

    pub fn gene(&self) -> Option<&str> {
        match self {
            ColumnSource::Gene { gene, .. }
            | ColumnSource::MutationCode { gene, .. }
            | ColumnSource::MutationAny { gene } => Some(gene),
            ColumnSource::Tissue(_) => None,
        }
    }
}

/// Column layout fixed from a set of fitting rows and then applied to any rows.
///
/// Observed mutation codes and tissue levels come only from the fitting rows,
/// so encoding never looks at held-out cell lines.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignLayout {
    columns: Vec<ColumnSource>,
}

impl DesignLayout {
    pub fn plan(
        genes: &BTreeMap<FeatureType, Vec<String>>,
        data: &GenomicData,
        fit_rows: &[String],
        encoding: EncodingOptions,
    ) -> Result<Self> {
        let mut columns = Vec::new();
        for (&ft, gene_list) in genes {
            let m = data.matrix(ft)?;
            let rows = rows_in(m, fit_rows)?;
            let mut sorted: Vec<&String> = gene_list.iter().collect();
            sorted.sort();
            sorted.dedup();
            for g in sorted {
                let c = m.col_of(g).ok_or_else(|| {
                    Error::invalid(format!("gene `{g}` not in the {ft} matrix"))
                })?;
                match ft {
                    FeatureType::Mutation if encoding.binary_mutation => {
                        columns.push(ColumnSource::MutationAny { gene: g.clone() });
                    }
                    FeatureType::Mutation => {
                        let codes: BTreeSet<u8> = rows.iter().map(|&r| m.values()[[r, c]] as u8).collect();
                        columns.extend(codes.into_iter().map(|code| ColumnSource::MutationCode {
                            gene: g.clone(),
                            code,
                        }));
                    }
                    _ => columns.push(ColumnSource::Gene {
                        feature_type: ft,
                        gene: g.clone(),
                    }),
                }
            }
        }
        if encoding.include_tissue {
            let labels = data
                .tissues
                .as_ref()
                .ok_or_else(|| Error::invalid("tissue features requested but no tissue labels loaded"))?;
            let levels: BTreeSet<&str> = fit_rows.iter().filter_map(|c| labels.get(c)).collect();
            columns.extend(levels.into_iter().map(|t| ColumnSource::Tissue(t.to_string())));
        }
        Ok(DesignLayout { columns })
    }

    pub fn columns(&self) -> &[ColumnSource] {
        &self.columns
    }

    pub fn encode(&self, data: &GenomicData, rows: &[String]) -> Result<DesignMatrix> {
        let mut values = Array2::zeros((rows.len(), self.columns.len()));
        let mut cached: BTreeMap<FeatureType, Vec<usize>> = BTreeMap::new();
        for (j, col) in self.columns.iter().enumerate() {
            match col {
                ColumnSource::Tissue(t) => {
                    let labels = data.tissues.as_ref().ok_or_else(|| Error::invalid("no tissue labels loaded"))?;
                    for (i, id) in rows.iter().enumerate() {
                        if labels.get(id) == Some(t.as_str()) {
                            values[[i, j]] = 1.0;
                        }
                    }
                }
                _ => {
                    let ft = col.feature_type().expect("gene column");
                    let m = data.matrix(ft)?;
                    if !cached.contains_key(&ft) {
                        cached.insert(ft, rows_in(m, rows)?);
                    }
                    let idx = &cached[&ft];
                    let c = m.col_of(col.gene().expect("gene column")).ok_or_else(|| {
                        Error::invalid(format!("gene `{}` not in the {ft} matrix", col.gene().unwrap_or("")))
                    })?;
                    for (i, &r) in idx.iter().enumerate() {
                        let v = m.values()[[r, c]];
                        values[[i, j]] = match col {
                            ColumnSource::MutationAny { .. } => f64::from(u8::from(v != 0.0)),
                            ColumnSource::MutationCode { code, .. } => f64::from(u8::from(v as u8 == *code)),
                            _ => v,
                        };
                    }
                }
            }
        }
        Ok(DesignMatrix {
            cell_line_ids: rows.to_vec(),
            column_names: self.columns.iter().map(ColumnSource::name).collect(),
            columns: self.columns.clone(),
            values,
        })
    }
}

fn rows_in(m: &FeatureMatrix, ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            m.row_of(id).ok_or_else(|| Error::MissingCellLine {
                cell_line: id.clone(),
                feature_type: m.feature_type().to_string(),
            })
        })
        .collect()
}

/// Encoded real-valued matrix ready for a learner.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub cell_line_ids: Vec<String>,
    pub column_names: Vec<String>,
    pub columns: Vec<ColumnSource>,
    pub values: Array2<f64>,
}

impl DesignMatrix {
    /// Builds a design matrix straight from named columns (mostly for tests and examples).
    pub fn from_columns(cell_line_ids: Vec<String>, column_names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != cell_line_ids.len() || values.ncols() != column_names.len() {
            return Err(Error::invalid("design matrix shape does not match its labels"));
        }
        let columns = column_names
            .iter()
            .map(|n| ColumnSource::Gene {
                feature_type: FeatureType::Expression,
                gene: n.clone(),
            })
            .collect();
        Ok(DesignMatrix {
            cell_line_ids,
            column_names,
            columns,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            cell_line_ids: rows.iter().map(|&r| self.cell_line_ids[r].clone()).collect(),
            column_names: self.column_names.clone(),
            columns: self.columns.clone(),
            values: self.values.select(ndarray::Axis(0), rows),
        }
    }
}

/// Builds the design matrix for `combo` over `cell_lines` (row order kept).
///
/// Genes of an assigned set that the matrix lacks are dropped; the dropped
/// count is logged.
pub fn build_design_matrix(
    combo: &Combo,
    data: &GenomicData,
    cell_lines: &[String],
    encoding: EncodingOptions,
) -> Result<DesignMatrix> {
    let mut genes = BTreeMap::new();
    for (ft, set) in combo.assignment() {
        let (kept, dropped) = data.resolve_genes(set, *ft)?;
        if dropped > 0 {
            log::debug!("{combo}: {dropped} genes of `{set}` absent from the {ft} matrix");
        }
        genes.insert(*ft, kept);
    }
    DesignLayout::plan(&genes, data, cell_lines, encoding)?.encode(data, cell_lines)
}
