//! Tabular data loading, leakage-safe preprocessing and deterministic folds.
//!
//! Continuous columns are standardized with population statistics fitted on
//! a caller-chosen subset of rows; categorical columns expand into one-hot
//! blocks whose category order is the order of first appearance in the fit
//! rows. The encoded column order is the source column order, so indices in
//! refinement scripts stay stable across runs.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

/// Column-kind declaration for a CSV file. Columns not listed as categorical
/// are parsed as continuous.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Schema {
    pub target: String,
    #[serde(default)]
    pub categorical: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
}

impl ColumnData {
    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Continuous(_) => ColumnKind::Continuous,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    fn len(&self) -> usize {
        match self {
            ColumnData::Continuous(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TabularDataset {
    column_names: Vec<String>,
    columns: Vec<ColumnData>,
    target_column: usize,
    n_rows: usize,
}

impl TabularDataset {
    pub fn new(column_names: Vec<String>, columns: Vec<ColumnData>, target_column: usize) -> Result<Self> {
        if column_names.len() != columns.len() {
            return Err(Error::Data(format!(
                "{} column names for {} columns",
                column_names.len(),
                columns.len()
            )));
        }
        if target_column >= columns.len() {
            return Err(Error::Data(format!(
                "target column {target_column} out of range for {} columns",
                columns.len()
            )));
        }
        let n_rows = columns.first().map(ColumnData::len).unwrap_or(0);
        if n_rows == 0 {
            return Err(Error::Data("no data rows".into()));
        }
        if let Some((i, _)) = columns.iter().enumerate().find(|(_, c)| c.len() != n_rows) {
            return Err(Error::Data(format!(
                "column '{}' has {} rows, expected {n_rows}",
                column_names[i],
                columns[i].len()
            )));
        }
        Ok(Self {
            column_names,
            columns,
            target_column,
            n_rows,
        })
    }

    /// Dataset built from an all-continuous numeric matrix (rows = samples).
    pub fn from_matrix(names: Vec<String>, data: &DMatrix<f64>, target_column: usize) -> Result<Self> {
        let columns = (0..data.ncols())
            .map(|j| ColumnData::Continuous(data.column(j).iter().copied().collect()))
            .collect();
        Self::new(names, columns, target_column)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_kinds(&self) -> Vec<ColumnKind> {
        self.columns.iter().map(ColumnData::kind).collect()
    }

    pub fn column(&self, j: usize) -> &ColumnData {
        &self.columns[j]
    }

    pub fn target_column(&self) -> usize {
        self.target_column
    }
}

/// Parse a CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<TabularDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(Error::Data("empty header".into()));
    }
    for cat in &schema.categorical {
        if !header.contains(cat) {
            return Err(Error::Data(format!("categorical column '{cat}' not in header")));
        }
    }
    let target_column = header
        .iter()
        .position(|h| *h == schema.target)
        .ok_or_else(|| Error::Data(format!("target column '{}' not in header", schema.target)))?;

    let kinds: Vec<ColumnKind> = header
        .iter()
        .map(|h| {
            if schema.categorical.contains(h) {
                ColumnKind::Categorical
            } else {
                ColumnKind::Continuous
            }
        })
        .collect();
    let mut columns: Vec<ColumnData> = kinds
        .iter()
        .map(|k| match k {
            ColumnKind::Continuous => ColumnData::Continuous(Vec::new()),
            ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
        })
        .collect();

    let mut problems = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // 1-based line number in the file, header is line 1.
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                return Err(Error::Data(format!("line {line}: {e}")));
            }
        };
        if record.len() != header.len() {
            return Err(Error::Data(format!(
                "line {line}: ragged row with {} fields, expected {}",
                record.len(),
                header.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                problems.push(format!("line {line}, column '{}': missing value", header[j]));
                continue;
            }
            match &mut columns[j] {
                ColumnData::Continuous(v) => match cell.parse::<f64>() {
                    Ok(x) if x.is_finite() => v.push(x),
                    _ => problems.push(format!(
                        "line {line}, column '{}': cannot parse '{cell}' as a number",
                        header[j]
                    )),
                },
                ColumnData::Categorical(v) => v.push(cell.to_string()),
            }
        }
    }
    if !problems.is_empty() {
        let shown: Vec<_> = problems.iter().take(10).cloned().collect();
        let more = problems.len().saturating_sub(shown.len());
        let mut msg = shown.join("; ");
        if more > 0 {
            msg.push_str(&format!("; and {more} more"));
        }
        return Err(Error::Data(msg));
    }
    if columns[0].len() == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    TabularDataset::new(header, columns, target_column)
}

/// How continuous columns are rescaled by a fitted plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// (x - mean) / std with the population standard deviation.
    #[default]
    Standardize,
    /// x - mean, raw units.
    Center,
    /// Raw values.
    None,
}

/// Behaviour for categories absent from the fitted vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnseenCategory {
    /// Emit an all-zero one-hot block.
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnTransform {
    Continuous { mean: f64, std: f64 },
    Categorical { vocabulary: Vec<String> },
}

impl ColumnTransform {
    fn width(&self) -> usize {
        match self {
            ColumnTransform::Continuous { .. } => 1,
            ColumnTransform::Categorical { vocabulary } => vocabulary.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub transforms: Vec<ColumnTransform>,
    pub source_names: Vec<String>,
    pub target_source: usize,
    pub unseen: UnseenCategory,
}

impl PreprocessPlan {
    pub fn n_encoded(&self) -> usize {
        self.transforms.iter().map(ColumnTransform::width).sum()
    }

    /// Names of the encoded columns: continuous columns keep their name,
    /// one-hot columns become `name=category`.
    pub fn encoded_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_encoded());
        for (name, t) in self.source_names.iter().zip(&self.transforms) {
            match t {
                ColumnTransform::Continuous { .. } => out.push(name.clone()),
                ColumnTransform::Categorical { vocabulary } => {
                    out.extend(vocabulary.iter().map(|c| format!("{name}={c}")))
                }
            }
        }
        out
    }

    /// Encoded column index of the target. The target must be continuous.
    pub fn target_encoded(&self) -> Result<usize> {
        if !matches!(self.transforms[self.target_source], ColumnTransform::Continuous { .. }) {
            return Err(Error::Data("target column must be continuous".into()));
        }
        Ok(self.transforms[..self.target_source]
            .iter()
            .map(ColumnTransform::width)
            .sum())
    }

    pub fn with_unseen(mut self, unseen: UnseenCategory) -> Self {
        self.unseen = unseen;
        self
    }
}

pub fn fit_preprocess(data: &TabularDataset, fit_indices: &[usize]) -> Result<PreprocessPlan> {
    fit_preprocess_with(data, fit_indices, Scaling::Standardize)
}

pub fn fit_preprocess_with(data: &TabularDataset, fit_indices: &[usize], scaling: Scaling) -> Result<PreprocessPlan> {
    if fit_indices.is_empty() {
        return Err(Error::Data("cannot fit preprocessing on zero rows".into()));
    }
    if let Some(&bad) = fit_indices.iter().find(|&&i| i >= data.n_rows()) {
        return Err(Error::Data(format!("row index {bad} out of range")));
    }
    let mut transforms = Vec::with_capacity(data.n_columns());
    for (j, col) in data.columns.iter().enumerate() {
        let t = match col {
            ColumnData::Continuous(v) => {
                let n = fit_indices.len() as f64;
                let mean = fit_indices.iter().map(|&i| v[i]).sum::<f64>() / n;
                let var = fit_indices.iter().map(|&i| (v[i] - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                match scaling {
                    Scaling::Standardize => {
                        if std <= 1e-12 * mean.abs().max(1.0) {
                            return Err(Error::Data(format!(
                                "column '{}' is constant over the fit rows",
                                data.column_names[j]
                            )));
                        }
                        ColumnTransform::Continuous { mean, std }
                    }
                    Scaling::Center => ColumnTransform::Continuous { mean, std: 1.0 },
                    Scaling::None => ColumnTransform::Continuous { mean: 0.0, std: 1.0 },
                }
            }
            ColumnData::Categorical(v) => {
                let mut seen = HashSet::new();
                let mut vocabulary = Vec::new();
                for &i in fit_indices {
                    if seen.insert(v[i].as_str()) {
                        vocabulary.push(v[i].clone());
                    }
                }
                ColumnTransform::Categorical { vocabulary }
            }
        };
        transforms.push(t);
    }
    Ok(PreprocessPlan {
        transforms,
        source_names: data.column_names.clone(),
        target_source: data.target_column,
        unseen: UnseenCategory::default(),
    })
}

/// Refit the continuous-column statistics on `fit_indices` while keeping
/// the reference plan's category vocabularies, so the encoded column layout
/// stays fixed across folds.
pub fn refit_preprocess(
    reference: &PreprocessPlan,
    data: &TabularDataset,
    fit_indices: &[usize],
    scaling: Scaling,
) -> Result<PreprocessPlan> {
    let mut plan = fit_preprocess_with(data, fit_indices, scaling)?;
    if plan.transforms.len() != reference.transforms.len() {
        return Err(Error::Shape("reference plan does not match the dataset".into()));
    }
    for (t, r) in plan.transforms.iter_mut().zip(&reference.transforms) {
        if let (ColumnTransform::Categorical { .. }, ColumnTransform::Categorical { vocabulary }) = (&*t, r) {
            *t = ColumnTransform::Categorical {
                vocabulary: vocabulary.clone(),
            };
        }
    }
    plan.unseen = reference.unseen;
    Ok(plan)
}

/// Encode the selected rows into a dense matrix (rows = `indices` order).
pub fn apply_preprocess(plan: &PreprocessPlan, data: &TabularDataset, indices: &[usize]) -> Result<DMatrix<f64>> {
    if plan.transforms.len() != data.n_columns() {
        return Err(Error::Shape(format!(
            "plan has {} columns, dataset has {}",
            plan.transforms.len(),
            data.n_columns()
        )));
    }
    let mut out = DMatrix::zeros(indices.len(), plan.n_encoded());
    let mut offset = 0;
    for (j, (t, col)) in plan.transforms.iter().zip(&data.columns).enumerate() {
        match (t, col) {
            (ColumnTransform::Continuous { mean, std }, ColumnData::Continuous(v)) => {
                for (r, &i) in indices.iter().enumerate() {
                    out[(r, offset)] = (v[i] - mean) / std;
                }
            }
            (ColumnTransform::Categorical { vocabulary }, ColumnData::Categorical(v)) => {
                for (r, &i) in indices.iter().enumerate() {
                    match vocabulary.iter().position(|c| *c == v[i]) {
                        Some(k) => out[(r, offset + k)] = 1.0,
                        None if plan.unseen == UnseenCategory::Strict => {
                            return Err(Error::Data(format!(
                                "unseen category '{}' in column '{}'",
                                v[i], data.column_names[j]
                            )))
                        }
                        None => {}
                    }
                }
            }
            _ => {
                return Err(Error::Shape(format!(
                    "column '{}' kind does not match the plan",
                    data.column_names[j]
                )))
            }
        }
        offset += t.width();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Fraction of the non-test rows held out for validation in each fold.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// K-fold partition: each row lands in exactly one test set; within each fold
/// a validation subset is carved from the remaining rows.
pub fn make_folds(n_rows: usize, n_folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if n_folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {n_folds}")));
    }
    if n_folds > n_rows {
        return Err(Error::Config(format!("{n_folds} folds requested for {n_rows} rows")));
    }
    let mut rng = stream_rng(seed, Stream::Folds);
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut rng);

    let base = n_rows / n_folds;
    let extra = n_rows % n_folds;
    let mut bounds = Vec::with_capacity(n_folds + 1);
    bounds.push(0);
    for k in 0..n_folds {
        let size = base + usize::from(k < extra);
        bounds.push(bounds[k] + size);
    }

    let mut folds = Vec::with_capacity(n_folds);
    for k in 0..n_folds {
        let test: Vec<usize> = order[bounds[k]..bounds[k + 1]].to_vec();
        let mut rest: Vec<usize> = order[..bounds[k]]
            .iter()
            .chain(&order[bounds[k + 1]..])
            .copied()
            .collect();
        rest.shuffle(&mut rng);
        let n_val = ((rest.len() as f64) * VALIDATION_FRACTION).round() as usize;
        let n_val = n_val.clamp(usize::from(rest.len() > 1), rest.len().saturating_sub(1));
        let val = rest[..n_val].to_vec();
        let train = rest[n_val..].to_vec();
        folds.push(FoldSplit {
            fold_index: k,
            train_indices: train,
            val_indices: val,
            test_indices: test,
            seed,
        });
    }
    Ok(folds)
}

/// Seeded holdout split; returns (train, test) with `round(train_fraction * n)` train rows.
pub fn holdout_split(n_rows: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) || n_rows == 0 {
        return Err(Error::Config(format!(
            "invalid holdout split: fraction {train_fraction}, {n_rows} rows"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Holdout);
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut rng);
    let n_train = ((n_rows as f64) * train_fraction).round() as usize;
    let test = order.split_off(n_train);
    Ok((order, test))
}
