//! Dataset ingestion, attribute encoding, standardization and stratified
//! cross-validation splits.
//!
//! CSV files carry one instance per row and a single label column. Numeric
//! columns are parsed as reals; a column whose first value is not numeric is
//! treated as nominal and one-hot encoded in place. Class labels are mapped to
//! `0..C` in order of first appearance.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KrvError, Result};

/// Dense row-major matrix of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl RowMatrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(KrvError::DimensionMismatch {
                expected: n_rows * n_cols,
                found: data.len(),
            });
        }
        Ok(RowMatrix {
            data,
            n_rows,
            n_cols,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(KrvError::DimensionMismatch {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(RowMatrix {
            data,
            n_rows: rows.len(),
            n_cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select_rows(&self, indices: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        RowMatrix {
            data,
            n_rows: indices.len(),
            n_cols: self.n_cols,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttributeKind {
    Real,
    Integer,
    Nominal,
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributeKind::Real => "real",
            AttributeKind::Integer => "integer",
            AttributeKind::Nominal => "nominal",
        })
    }
}

/// One raw (pre-encoding) feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub kind: AttributeKind,
    /// Nominal levels in first-appearance order; empty for numeric columns.
    pub levels: Vec<String>,
}

/// Describes how raw CSV feature fields map to encoded columns, so that
/// held-out files can be encoded exactly like the training file.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub columns: Vec<RawColumn>,
}

impl Schema {
    pub fn encoded_dim(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c.kind {
                AttributeKind::Nominal => c.levels.len(),
                _ => 1,
            })
            .sum()
    }

    pub fn encoded_kinds(&self) -> Vec<AttributeKind> {
        let mut kinds = Vec::with_capacity(self.encoded_dim());
        for c in &self.columns {
            match c.kind {
                AttributeKind::Nominal => kinds.extend(c.levels.iter().map(|_| c.kind)),
                k => kinds.push(k),
            }
        }
        kinds
    }

    /// Encodes the feature fields of one row. Unknown nominal levels encode
    /// as an all-zero block.
    pub fn encode(&self, fields: &[&str], row: usize) -> Result<Vec<f64>> {
        if fields.len() != self.columns.len() {
            return Err(KrvError::RaggedRow {
                row,
                expected: self.columns.len(),
                found: fields.len(),
            });
        }
        let mut out = Vec::with_capacity(self.encoded_dim());
        for (column, (spec, field)) in self.columns.iter().zip(fields).enumerate() {
            if is_missing(field) {
                return Err(KrvError::MissingValue { row, column });
            }
            match spec.kind {
                AttributeKind::Nominal => {
                    out.extend(spec.levels.iter().map(|l| f64::from(u8::from(l == field))));
                }
                _ => {
                    let v = parse_number(field).ok_or_else(|| KrvError::NonNumeric {
                        row,
                        column,
                        value: field.to_string(),
                    })?;
                    out.push(v);
                }
            }
        }
        Ok(out)
    }
}

/// A labelled classification dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    instances: RowMatrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
    attribute_kinds: Vec<AttributeKind>,
    schema: Option<Schema>,
}

impl Dataset {
    /// Builds a dataset from in-memory rows; the class count is one more
    /// than the largest label.
    pub fn from_rows<R: AsRef<[f64]>>(
        name: impl Into<String>,
        rows: &[R],
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::with_classes(name, RowMatrix::from_rows(rows)?, labels, class_names)
    }

    pub fn with_classes(
        name: impl Into<String>,
        instances: RowMatrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if instances.n_rows() == 0 {
            return Err(KrvError::NoInstances);
        }
        if instances.n_cols() == 0 {
            return Err(KrvError::invalid("dataset has no attributes"));
        }
        if labels.len() != instances.n_rows() {
            return Err(KrvError::DimensionMismatch {
                expected: instances.n_rows(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(KrvError::invalid(format!(
                "label {bad} outside 0..{}",
                class_names.len()
            )));
        }
        if instances.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(KrvError::Numerical("non-finite attribute value".into()));
        }
        let attribute_kinds = vec![AttributeKind::Real; instances.n_cols()];
        Ok(Dataset {
            name: name.into(),
            instances,
            labels,
            class_names,
            attribute_kinds,
            schema: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn instances(&self) -> &RowMatrix {
        &self.instances
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.instances.row(i)
    }

    pub fn n_instances(&self) -> usize {
        self.instances.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.instances.n_cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn attribute_kinds(&self) -> &[AttributeKind] {
        &self.attribute_kinds
    }

    pub fn schema(&self) -> Option<&Schema> {
        self.schema.as_ref()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, keeping the parent's class list (a subset may be
    /// missing some classes).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            instances: self.instances.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            attribute_kinds: self.attribute_kinds.clone(),
            schema: self.schema.clone(),
        }
    }

    fn with_instances(&self, instances: RowMatrix) -> Dataset {
        Dataset {
            instances,
            ..self.clone()
        }
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("last") {
            LabelColumn::Last
        } else if let Ok(i) = s.parse() {
            LabelColumn::Index(i)
        } else {
            LabelColumn::Name(s.to_string())
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Last => f.write_str("last"),
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// The first row is a header when none of its fields is numeric and some
    /// later row has a numeric field.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub header: HeaderMode,
    /// Feature columns (raw CSV index) forced to nominal.
    pub nominal_columns: Vec<usize>,
}

impl CsvOptions {
    pub fn with_label(label: LabelColumn) -> Self {
        CsvOptions {
            label,
            ..Default::default()
        }
    }
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "?"
}

fn parse_number(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a dataset from a CSV file.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| KrvError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(file, &name, options)
}

fn read_records(reader: impl Read) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| KrvError::invalid(format!("malformed csv: {e}")))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push(rec.iter().map(str::to_string).collect());
    }
    Ok(records)
}

/// Parses CSV text from any reader. See the module docs for the encoding
/// rules.
pub fn parse_csv(reader: impl Read, name: &str, options: &CsvOptions) -> Result<Dataset> {
    let mut records = read_records(reader)?;
    if records.is_empty() {
        return Err(KrvError::NoInstances);
    }
    let width = records[0].len();
    for (row, rec) in records.iter().enumerate() {
        if rec.len() != width {
            return Err(KrvError::RaggedRow {
                row,
                expected: width,
                found: rec.len(),
            });
        }
    }
    let header = match options.header {
        HeaderMode::Present => true,
        HeaderMode::Absent => false,
        HeaderMode::Auto => {
            let first_numeric = records[0].iter().any(|f| parse_number(f).is_some());
            let later_numeric = records[1..]
                .iter()
                .any(|r| r.iter().any(|f| parse_number(f).is_some()));
            !first_numeric && (later_numeric || records.len() == 1)
        }
    };
    let header_row = if header {
        Some(records.remove(0))
    } else {
        None
    };
    if records.is_empty() {
        return Err(KrvError::NoInstances);
    }
    if width < 2 {
        return Err(KrvError::invalid("need at least one attribute and a label"));
    }

    let label_idx = match &options.label {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(KrvError::LabelColumn(i.to_string())),
        LabelColumn::Name(n) => header_row
            .as_ref()
            .and_then(|h| h.iter().position(|f| f == n))
            .ok_or_else(|| KrvError::LabelColumn(n.clone()))?,
    };
    let feature_cols: Vec<usize> = (0..width).filter(|&c| c != label_idx).collect();

    // Column kinds come from the first data row; integer-ness from all rows.
    let mut columns = Vec::with_capacity(feature_cols.len());
    for (j, &c) in feature_cols.iter().enumerate() {
        let first = &records[0][c];
        if is_missing(first) {
            return Err(KrvError::MissingValue { row: 0, column: j });
        }
        let nominal = options.nominal_columns.contains(&c) || parse_number(first).is_none();
        let column = if nominal {
            let mut levels: Vec<String> = Vec::new();
            for (row, rec) in records.iter().enumerate() {
                let f = &rec[c];
                if is_missing(f) {
                    return Err(KrvError::MissingValue { row, column: j });
                }
                if !levels.iter().any(|l| l == f) {
                    levels.push(f.clone());
                }
            }
            RawColumn {
                kind: AttributeKind::Nominal,
                levels,
            }
        } else {
            let integral = records
                .iter()
                .all(|r| parse_number(&r[c]).is_some_and(|v| v.fract() == 0.0));
            RawColumn {
                kind: if integral {
                    AttributeKind::Integer
                } else {
                    AttributeKind::Real
                },
                levels: Vec::new(),
            }
        };
        columns.push(column);
    }
    let schema = Schema { columns };

    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut labels = Vec::with_capacity(records.len());
    let mut data = Vec::with_capacity(records.len() * schema.encoded_dim());
    for (row, rec) in records.iter().enumerate() {
        let fields: Vec<&str> = feature_cols.iter().map(|&c| rec[c].as_str()).collect();
        data.extend(schema.encode(&fields, row)?);
        let raw_label = &rec[label_idx];
        if is_missing(raw_label) {
            return Err(KrvError::MissingValue {
                row,
                column: label_idx,
            });
        }
        let next = class_names.len();
        let id = *class_index.entry(raw_label.clone()).or_insert_with(|| {
            class_names.push(raw_label.clone());
            next
        });
        labels.push(id);
    }
    if class_names.len() < 2 {
        return Err(KrvError::SingleClass);
    }
    let n = records.len();
    let instances = RowMatrix::new(data, n, schema.encoded_dim())?;
    let mut ds = Dataset::with_classes(name, instances, labels, class_names)?;
    ds.attribute_kinds = schema.encoded_kinds();
    ds.schema = Some(schema);
    Ok(ds)
}

/// How attributes are rescaled before kernel expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Zero mean, unit (population) standard deviation.
    ZScore,
    /// Training minimum to 0 and maximum to 1.
    #[default]
    UnitRange,
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaling::ZScore => "z_score",
            Scaling::UnitRange => "unit_range",
        })
    }
}

impl std::str::FromStr for Scaling {
    type Err = KrvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "z_score" | "zscore" => Ok(Scaling::ZScore),
            "unit_range" | "minmax" | "min_max" => Ok(Scaling::UnitRange),
            other => Err(KrvError::Config(format!("unknown scaling {other:?}"))),
        }
    }
}

/// Per-column affine transform `(v - means[j]) / stds[j]`, fitted by
/// [`standardize`] or [`rescale`]. For unit-range scaling the two fields
/// hold the column minimum and range.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Zero marks a constant column, which maps to 0.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &RowMatrix) -> Standardizer {
        let n = rows.n_rows() as f64;
        let d = rows.n_cols();
        let mut means = vec![0.0; d];
        for row in rows.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for row in rows.rows() {
            for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars
            .iter()
            .zip(&means)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                // constant up to round-off relative to the column's scale
                if sd <= 1e-12 * m.abs().max(1.0) {
                    0.0
                } else {
                    sd
                }
            })
            .collect();
        Standardizer { means, stds }
    }

    /// Minimum and range of every column.
    pub fn fit_unit_range(rows: &RowMatrix) -> Standardizer {
        let d = rows.n_cols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in rows.rows() {
            for ((l, h), v) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
                *l = l.min(*v);
                *h = h.max(*v);
            }
        }
        let stds = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| {
                let r = h - l;
                if r <= 1e-12 * l.abs().max(h.abs()).max(1.0) {
                    0.0
                } else {
                    r
                }
            })
            .collect();
        Standardizer { means: lo, stds }
    }

    pub fn fit_with(rows: &RowMatrix, scaling: Scaling) -> Standardizer {
        match scaling {
            Scaling::ZScore => Standardizer::fit(rows),
            Scaling::UnitRange => Standardizer::fit_unit_range(rows),
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.stds) {
            *v = if *s == 0.0 { 0.0 } else { (*v - m) / s };
        }
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.dim() != self.dim() {
            return Err(KrvError::DimensionMismatch {
                expected: self.dim(),
                found: d.dim(),
            });
        }
        let mut inst = d.instances.clone();
        for i in 0..inst.n_rows() {
            self.apply_row(inst.row_mut(i));
        }
        Ok(d.with_instances(inst))
    }
}

/// Z-scores every column (population standard deviation). Returns the
/// transformed dataset and the statistics needed to transform held-out rows.
pub fn standardize(d: &Dataset) -> (Dataset, Standardizer) {
    let st = Standardizer::fit(&d.instances);
    let out = st.apply(d).expect("dimension matches by construction");
    (out, st)
}

/// Rescales every column with `scaling`, fitted on `d` alone.
pub fn rescale(d: &Dataset, scaling: Scaling) -> (Dataset, Standardizer) {
    let st = Standardizer::fit_with(&d.instances, scaling);
    let out = st.apply(d).expect("dimension matches by construction");
    (out, st)
}

/// Assignment of every instance to one of `n_folds` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Stratified k-fold assignment. Each class is shuffled with a ChaCha8
/// stream seeded by `seed` and dealt round-robin, continuing the rotation
/// from the previous class so total fold sizes also stay balanced.
pub fn stratified_kfold(d: &Dataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    let n = d.n_instances();
    if n_folds < 2 || n_folds > n {
        return Err(KrvError::invalid(format!(
            "n_folds must lie in 2..={n}, got {n_folds}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; n];
    let mut offset = 0;
    for class in 0..d.n_classes() {
        let mut members: Vec<usize> = (0..n).filter(|&i| d.label(i) == class).collect();
        members.shuffle(&mut rng);
        for (p, &i) in members.iter().enumerate() {
            assignments[i] = (offset + p) % n_folds;
        }
        offset = (offset + members.len()) % n_folds;
    }
    Ok(FoldPlan {
        n_folds,
        assignments,
        seed,
    })
}
