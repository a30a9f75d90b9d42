//! Mixed-type tabular data: CSV ingestion, category consolidation, dummy
//! coding, complete-case filtering, and per-column statistics.
//!
//! The preprocessing pipeline is `load_csv` -> `consolidate_categories` ->
//! `dummy_encode` -> `drop_incomplete_rows` -> `finalize`. A finalized
//! [`Dataset`] has only numeric and binary columns, no missing cells, and
//! valid per-column statistics (mean, sample variance, min/max/range).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Column kind after ingestion. `Categorical` only exists between `load_csv`
/// and `dummy_encode`; finalized datasets contain `Numeric` and `Binary`
/// columns only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Binary,
    Categorical,
}

impl ColumnKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Binary => "binary",
            ColumnKind::Categorical => "categorical",
        }
    }
}

/// Per-column metadata. The statistics fields are NaN until [`Dataset::finalize`]
/// computes them; `range = max - min` exactly.
#[derive(Debug, Clone)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    /// Source feature name before dummy coding (the column's own name for
    /// columns that were not derived from a categorical).
    pub origin: String,
    /// Category levels, in order of first appearance; cell values of a
    /// categorical column are indices into this list. Empty for numeric and
    /// binary columns.
    pub levels: Vec<String>,
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
}

impl ColumnMeta {
    fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnMeta {
            name: name.to_string(),
            kind,
            origin: name.to_string(),
            levels: Vec::new(),
            mean: f64::NAN,
            variance: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
            range: f64::NAN,
        }
    }
}

/// Declared kind for a CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Numeric,
    Categorical,
    Binary,
}

/// Column-kind declarations for `load_csv`, read from a TOML document:
///
/// ```toml
/// id = "patient"            # optional row-id column
/// [columns]
/// heart_rate = "numeric"
/// injury_mechanism = "categorical"
/// abnormal_ct = "binary"
/// ```
#[derive(Debug, Clone, Deserialize)]
pub struct Schema {
    /// Name of the row-id column, if any. Without it rows are numbered.
    pub id: Option<String>,
    pub columns: BTreeMap<String, SchemaKind>,
}

impl Schema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(format!("cannot parse schema: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Ingestion options beyond the schema.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Merge rows that share a row id: numeric cells become the mean of the
    /// non-missing duplicates, binary and categorical cells take the first
    /// non-missing value. Requires an id column in the schema.
    pub average_duplicates: bool,
}

/// A table of rows by columns with a missing-cell mask. Categorical cells
/// hold level indices; numeric and binary cells hold their values directly.
#[derive(Debug, Clone)]
pub struct Dataset {
    row_ids: Vec<String>,
    columns: Vec<ColumnMeta>,
    values: Array2<f64>,
    missing_mask: Array2<bool>,
    /// Structured records of columns dropped or merged during preprocessing.
    warnings: Vec<String>,
}

fn is_missing_token(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

impl Dataset {
    /// Build a dataset from raw parts. Statistics are left uncomputed; call
    /// [`Dataset::finalize`] before handing the result to numeric code that
    /// relies on them.
    pub fn from_parts(
        row_ids: Vec<String>,
        columns: Vec<ColumnMeta>,
        values: Array2<f64>,
        missing_mask: Array2<bool>,
    ) -> Result<Self> {
        let (m, n) = values.dim();
        if row_ids.len() != m {
            return Err(Error::Shape(format!(
                "{} row ids for {m} value rows",
                row_ids.len()
            )));
        }
        if columns.len() != n {
            return Err(Error::Shape(format!(
                "{} column metas for {n} value columns",
                columns.len()
            )));
        }
        if missing_mask.dim() != (m, n) {
            return Err(Error::Shape("missing mask does not match values".into()));
        }
        let mut seen = HashMap::new();
        for c in &columns {
            if seen.insert(c.name.clone(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        Ok(Dataset {
            row_ids,
            columns,
            values,
            missing_mask,
            warnings: Vec::new(),
        })
    }

    /// Load a CSV file (RFC 4180 quoting, header row required) against a
    /// schema declaring each column numeric, categorical, or binary.
    pub fn load_csv(path: &Path, schema: &Schema) -> Result<Self> {
        Self::load_csv_with(path, schema, &LoadOptions::default())
    }

    pub fn load_csv_with(path: &Path, schema: &Schema, opts: &LoadOptions) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_path(path)?;
        let header: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();

        let mut seen = HashMap::new();
        for h in &header {
            if seen.insert(h.clone(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate column `{h}` in header")));
            }
        }
        for name in schema.columns.keys() {
            if !header.iter().any(|h| h == name) {
                return Err(Error::Schema(format!(
                    "schema declares unknown column `{name}`"
                )));
            }
        }
        if let Some(id) = &schema.id {
            if !header.iter().any(|h| h == id) {
                return Err(Error::Schema(format!("id column `{id}` not in header")));
            }
        }
        if opts.average_duplicates && schema.id.is_none() {
            return Err(Error::Schema(
                "average_duplicates requires an id column".into(),
            ));
        }

        // Map header positions to dataset columns, skipping the id column.
        let mut col_names = Vec::new();
        let mut col_kinds = Vec::new();
        let mut col_positions = Vec::new();
        let mut id_position = None;
        for (pos, name) in header.iter().enumerate() {
            if schema.id.as_deref() == Some(name.as_str()) {
                id_position = Some(pos);
                continue;
            }
            let kind = schema.columns.get(name).ok_or_else(|| {
                Error::Schema(format!("column `{name}` is not declared in the schema"))
            })?;
            col_names.push(name.clone());
            col_kinds.push(*kind);
            col_positions.push(pos);
        }

        let n = col_names.len();
        let mut level_maps: Vec<HashMap<String, usize>> = vec![HashMap::new(); n];
        let mut levels: Vec<Vec<String>> = vec![Vec::new(); n];
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut mask_rows: Vec<Vec<bool>> = Vec::new();
        let mut row_ids: Vec<String> = Vec::new();

        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2; // header is line 1
            let record = record.map_err(|e| {
                if matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. }) {
                    Error::Ingest {
                        line,
                        message: "row width does not match header".into(),
                    }
                } else {
                    Error::Csv(e)
                }
            })?;
            let mut row = vec![0.0; n];
            let mut mask = vec![false; n];
            for (j, &pos) in col_positions.iter().enumerate() {
                let raw = record.get(pos).unwrap_or("");
                if is_missing_token(raw) {
                    mask[j] = true;
                    continue;
                }
                let token = raw.trim();
                match col_kinds[j] {
                    SchemaKind::Numeric => {
                        let v: f64 = token.parse().map_err(|_| Error::Ingest {
                            line,
                            message: format!(
                                "non-numeric token `{token}` in numeric column `{}`",
                                col_names[j]
                            ),
                        })?;
                        if !v.is_finite() {
                            return Err(Error::Ingest {
                                line,
                                message: format!(
                                    "non-finite value in numeric column `{}`",
                                    col_names[j]
                                ),
                            });
                        }
                        row[j] = v;
                    }
                    SchemaKind::Binary => {
                        let v: f64 = token.parse().map_err(|_| Error::Ingest {
                            line,
                            message: format!(
                                "binary column `{}` expects 0 or 1, got `{token}`",
                                col_names[j]
                            ),
                        })?;
                        if v != 0.0 && v != 1.0 {
                            return Err(Error::Ingest {
                                line,
                                message: format!(
                                    "binary column `{}` expects 0 or 1, got `{token}`",
                                    col_names[j]
                                ),
                            });
                        }
                        row[j] = v;
                    }
                    SchemaKind::Categorical => {
                        let next = levels[j].len();
                        let entry = *level_maps[j].entry(token.to_string()).or_insert(next);
                        if entry == next {
                            levels[j].push(token.to_string());
                        }
                        row[j] = entry as f64;
                    }
                }
            }
            let rid = match id_position {
                Some(pos) => {
                    let raw = record.get(pos).unwrap_or("").trim();
                    if raw.is_empty() {
                        return Err(Error::Ingest {
                            line,
                            message: "empty row id".into(),
                        });
                    }
                    raw.to_string()
                }
                None => idx.to_string(),
            };
            row_ids.push(rid);
            rows.push(row);
            mask_rows.push(mask);
        }

        let mut columns: Vec<ColumnMeta> = col_names
            .iter()
            .zip(&col_kinds)
            .map(|(name, kind)| {
                let k = match kind {
                    SchemaKind::Numeric => ColumnKind::Numeric,
                    SchemaKind::Binary => ColumnKind::Binary,
                    SchemaKind::Categorical => ColumnKind::Categorical,
                };
                ColumnMeta::new(name, k)
            })
            .collect();
        for (j, lv) in levels.into_iter().enumerate() {
            columns[j].levels = lv;
        }

        let mut warnings = Vec::new();
        if opts.average_duplicates {
            let merged = merge_duplicate_rows(&row_ids, &rows, &mask_rows, &col_kinds);
            let (ids, vals, masks, n_merged) = merged;
            if n_merged > 0 {
                warnings.push(format!(
                    "merged {n_merged} duplicate row ids by averaging numeric cells"
                ));
            }
            row_ids = ids;
            rows = vals;
            mask_rows = masks;
        }

        let m = rows.len();
        let values = Array2::from_shape_fn((m, n), |(i, j)| rows[i][j]);
        let missing_mask = Array2::from_shape_fn((m, n), |(i, j)| mask_rows[i][j]);
        let mut ds = Dataset::from_parts(row_ids, columns, values, missing_mask)?;
        ds.warnings = warnings;
        Ok(ds)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn missing_mask(&self) -> &Array2<bool> {
        &self.missing_mask
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// True once every column is numeric or binary, no cell is missing, and
    /// column statistics have been computed.
    pub fn is_finalized(&self) -> bool {
        self.columns
            .iter()
            .all(|c| c.kind != ColumnKind::Categorical && c.variance.is_finite())
            && !self.missing_mask.iter().any(|&b| b)
    }

    /// Keep the `max_categories - 1` most frequent levels of a categorical
    /// column and merge every other level into `"other"`. Frequency ties are
    /// broken by lexicographic level name. Columns that already have at most
    /// `max_categories` levels are returned unchanged.
    pub fn consolidate_categories(&self, column: &str, max_categories: usize) -> Result<Dataset> {
        if max_categories < 2 {
            return Err(Error::Parameter(format!(
                "max_categories must be at least 2, got {max_categories}"
            )));
        }
        let j = self
            .column_index(column)
            .ok_or_else(|| Error::Parameter(format!("no column named `{column}`")))?;
        if self.columns[j].kind != ColumnKind::Categorical {
            return Err(Error::Type(format!(
                "column `{column}` is {}, not categorical",
                self.columns[j].kind.as_str()
            )));
        }
        let old_levels = &self.columns[j].levels;
        if old_levels.len() <= max_categories {
            return Ok(self.clone());
        }

        let mut counts = vec![0usize; old_levels.len()];
        for i in 0..self.n_rows() {
            if !self.missing_mask[(i, j)] {
                counts[self.values[(i, j)] as usize] += 1;
            }
        }
        let mut order: Vec<usize> = (0..old_levels.len()).collect();
        order.sort_by(|&a, &b| {
            counts[b]
                .cmp(&counts[a])
                .then_with(|| old_levels[a].cmp(&old_levels[b]))
        });
        let kept: Vec<usize> = order[..max_categories - 1].to_vec();

        // Rebuild levels: kept ones in their original appearance order, then
        // the merged "other" level.
        let mut new_levels: Vec<String> = Vec::new();
        let mut remap = vec![usize::MAX; old_levels.len()];
        for (idx, name) in old_levels.iter().enumerate() {
            if kept.contains(&idx) {
                remap[idx] = new_levels.len();
                new_levels.push(name.clone());
            }
        }
        let other_idx = new_levels.len();
        new_levels.push("other".to_string());
        for r in remap.iter_mut() {
            if *r == usize::MAX {
                *r = other_idx;
            }
        }

        let mut out = self.clone();
        for i in 0..out.n_rows() {
            if !out.missing_mask[(i, j)] {
                let old = out.values[(i, j)] as usize;
                out.values[(i, j)] = remap[old] as f64;
            }
        }
        out.columns[j].levels = new_levels;
        Ok(out)
    }

    /// Consolidate every categorical column. Convenience wrapper used by the
    /// CLI preprocessing stage.
    pub fn consolidate_all_categories(&self, max_categories: usize) -> Result<Dataset> {
        let names: Vec<String> = self
            .columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Categorical)
            .map(|c| c.name.clone())
            .collect();
        let mut out = self.clone();
        for name in names {
            out = out.consolidate_categories(&name, max_categories)?;
        }
        Ok(out)
    }

    /// Replace each categorical column with `L - 1` binary indicator columns,
    /// one per non-reference level. The reference level is the most frequent
    /// (ties lexicographic); indicator columns are named `column=level` and
    /// carry the source column name in `origin`.
    pub fn dummy_encode(&self) -> Result<Dataset> {
        let m = self.n_rows();
        let mut new_cols: Vec<ColumnMeta> = Vec::new();
        let mut new_vals: Vec<Vec<f64>> = Vec::new();
        let mut new_mask: Vec<Vec<bool>> = Vec::new();

        for (j, meta) in self.columns.iter().enumerate() {
            match meta.kind {
                ColumnKind::Numeric | ColumnKind::Binary => {
                    new_cols.push(meta.clone());
                    new_vals.push((0..m).map(|i| self.values[(i, j)]).collect());
                    new_mask.push((0..m).map(|i| self.missing_mask[(i, j)]).collect());
                }
                ColumnKind::Categorical => {
                    let mut counts = vec![0usize; meta.levels.len()];
                    for i in 0..m {
                        if !self.missing_mask[(i, j)] {
                            counts[self.values[(i, j)] as usize] += 1;
                        }
                    }
                    let mut order: Vec<usize> = (0..meta.levels.len()).collect();
                    order.sort_by(|&a, &b| {
                        counts[b]
                            .cmp(&counts[a])
                            .then_with(|| meta.levels[a].cmp(&meta.levels[b]))
                    });
                    // order[0] is the reference level and gets no column.
                    for &lvl in &order[1..] {
                        let mut cm = ColumnMeta::new(
                            &format!("{}={}", meta.name, meta.levels[lvl]),
                            ColumnKind::Binary,
                        );
                        cm.origin = meta.name.clone();
                        new_cols.push(cm);
                        new_vals.push(
                            (0..m)
                                .map(|i| {
                                    if self.values[(i, j)] as usize == lvl {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                })
                                .collect(),
                        );
                        new_mask.push((0..m).map(|i| self.missing_mask[(i, j)]).collect());
                    }
                }
            }
        }

        let n = new_cols.len();
        let values = Array2::from_shape_fn((m, n), |(i, j)| new_vals[j][i]);
        let missing_mask = Array2::from_shape_fn((m, n), |(i, j)| new_mask[j][i]);
        let mut out = Dataset::from_parts(self.row_ids.clone(), new_cols, values, missing_mask)?;
        out.warnings = self.warnings.clone();
        Ok(out)
    }

    /// Keep exactly the rows with no missing cell, preserving order.
    pub fn drop_incomplete_rows(&self) -> Result<Dataset> {
        let keep: Vec<usize> = (0..self.n_rows())
            .filter(|&i| !self.missing_mask.row(i).iter().any(|&b| b))
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyDataset(
                "every row has at least one missing cell".into(),
            ));
        }
        let mut out = self.take_rows(&keep);
        let dropped = self.n_rows() - keep.len();
        if dropped > 0 {
            out.warnings
                .push(format!("dropped {dropped} incomplete rows"));
        }
        Ok(out)
    }

    /// Row subset in the given order. Column statistics are reset; call
    /// `finalize` to recompute them on the subset.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Dataset> {
        for &r in rows {
            if r >= self.n_rows() {
                return Err(Error::Parameter(format!(
                    "row index {r} out of range for {} rows",
                    self.n_rows()
                )));
            }
        }
        let mut out = self.take_rows(rows);
        for c in out.columns.iter_mut() {
            c.mean = f64::NAN;
            c.variance = f64::NAN;
            c.min = f64::NAN;
            c.max = f64::NAN;
            c.range = f64::NAN;
        }
        Ok(out)
    }

    fn take_rows(&self, rows: &[usize]) -> Dataset {
        let n = self.n_cols();
        let values = Array2::from_shape_fn((rows.len(), n), |(i, j)| self.values[(rows[i], j)]);
        let missing_mask =
            Array2::from_shape_fn((rows.len(), n), |(i, j)| self.missing_mask[(rows[i], j)]);
        Dataset {
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            values,
            missing_mask,
            warnings: self.warnings.clone(),
        }
    }

    /// Copy of the dataset with one column's values rearranged by `perm`
    /// (new row i takes the old value at `perm[i]`). Column statistics are
    /// unchanged: a permutation preserves them.
    pub fn with_permuted_column(&self, col: usize, perm: &[usize]) -> Result<Dataset> {
        if col >= self.n_cols() {
            return Err(Error::Parameter(format!("column {col} out of range")));
        }
        if perm.len() != self.n_rows() {
            return Err(Error::Parameter("permutation length mismatch".into()));
        }
        let mut out = self.clone();
        for (i, &src) in perm.iter().enumerate() {
            out.values[(i, col)] = self.values[(src, col)];
            out.missing_mask[(i, col)] = self.missing_mask[(src, col)];
        }
        Ok(out)
    }

    /// Compute per-column statistics (mean, sample variance with `m - 1`
    /// denominator, min, max, range) and drop constant columns with a warning
    /// record. Requires complete rows and no categorical columns.
    pub fn finalize(&self) -> Result<Dataset> {
        let m = self.n_rows();
        if m < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 rows to finalize, got {m}"
            )));
        }
        if let Some(c) = self
            .columns
            .iter()
            .find(|c| c.kind == ColumnKind::Categorical)
        {
            return Err(Error::Type(format!(
                "categorical column `{}` must be dummy coded before finalize",
                c.name
            )));
        }
        if self.missing_mask.iter().any(|&b| b) {
            return Err(Error::Type(
                "dataset has missing cells; drop incomplete rows first".into(),
            ));
        }

        let mut keep = Vec::new();
        let mut metas = Vec::new();
        let mut warnings = self.warnings.clone();
        for (j, meta) in self.columns.iter().enumerate() {
            let col = self.values.column(j);
            if meta.kind == ColumnKind::Binary {
                if let Some(bad) = col.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Type(format!(
                        "binary column `{}` holds value {bad}",
                        meta.name
                    )));
                }
            }
            let mean = col.sum() / m as f64;
            let ss: f64 = col.iter().map(|&v| (v - mean) * (v - mean)).sum();
            let variance = ss / (m as f64 - 1.0);
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if variance == 0.0 {
                let w = format!("dropped constant column `{}` (variance = 0)", meta.name);
                log::warn!("{w}");
                warnings.push(w);
                continue;
            }
            let mut cm = meta.clone();
            cm.mean = mean;
            cm.variance = variance;
            cm.min = min;
            cm.max = max;
            cm.range = max - min;
            metas.push(cm);
            keep.push(j);
        }
        if metas.is_empty() {
            return Err(Error::EmptyDataset("all columns were constant".into()));
        }

        let values = Array2::from_shape_fn((m, keep.len()), |(i, j)| self.values[(i, keep[j])]);
        let missing_mask = Array2::from_elem((m, keep.len()), false);
        Ok(Dataset {
            row_ids: self.row_ids.clone(),
            columns: metas,
            values,
            missing_mask,
            warnings,
        })
    }

    /// Write the dataset as a CSV with an `id` column, loadable again with
    /// the schema produced by [`Dataset::schema_toml`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.row_ids[i].clone()];
            for j in 0..self.n_cols() {
                if self.missing_mask[(i, j)] {
                    rec.push(String::new());
                } else if self.columns[j].kind == ColumnKind::Categorical {
                    rec.push(self.columns[j].levels[self.values[(i, j)] as usize].clone());
                } else {
                    rec.push(format!("{}", self.values[(i, j)]));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Schema document matching [`Dataset::write_csv`] output.
    pub fn schema_toml(&self) -> String {
        let mut s = String::from("id = \"id\"\n\n[columns]\n");
        for c in &self.columns {
            let _ = writeln!(s, "\"{}\" = \"{}\"", c.name.replace('"', "\\\""), c.kind.as_str());
        }
        s
    }
}

type MergedRows = (Vec<String>, Vec<Vec<f64>>, Vec<Vec<bool>>, usize);

fn merge_duplicate_rows(
    row_ids: &[String],
    rows: &[Vec<f64>],
    masks: &[Vec<bool>],
    kinds: &[SchemaKind],
) -> MergedRows {
    let n = kinds.len();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for id in row_ids {
        if !index.contains_key(id.as_str()) {
            index.insert(id.as_str(), order.len());
            order.push(id.as_str());
        }
    }
    let mut sums = vec![vec![0.0; n]; order.len()];
    let mut counts = vec![vec![0usize; n]; order.len()];
    let mut firsts = vec![vec![f64::NAN; n]; order.len()];
    for (r, id) in row_ids.iter().enumerate() {
        let g = index[id.as_str()];
        for j in 0..n {
            if masks[r][j] {
                continue;
            }
            sums[g][j] += rows[r][j];
            counts[g][j] += 1;
            if counts[g][j] == 1 {
                firsts[g][j] = rows[r][j];
            }
        }
    }
    let mut out_rows = Vec::with_capacity(order.len());
    let mut out_masks = Vec::with_capacity(order.len());
    for g in 0..order.len() {
        let mut row = vec![0.0; n];
        let mut mask = vec![false; n];
        for j in 0..n {
            if counts[g][j] == 0 {
                mask[j] = true;
            } else if kinds[j] == SchemaKind::Numeric {
                row[j] = sums[g][j] / counts[g][j] as f64;
            } else {
                row[j] = firsts[g][j];
            }
        }
        out_rows.push(row);
        out_masks.push(mask);
    }
    let merged = row_ids.len() - order.len();
    (
        order.into_iter().map(String::from).collect(),
        out_rows,
        out_masks,
        merged,
    )
}
