//! Encoded datasets and delimited-text ingest.
//!
//! File layout: UTF-8, comma-delimited, an optional `#` comment line carrying
//! the format version, a header row with the schema feature names followed by
//! a final `label` column, then one row per patient. Labels are `0`/`1` or
//! `iMMD`/`hMMD`. Row identifiers are 1-based row numbers.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::{FeatureKind, FeatureSchema};

pub const DATASET_FORMAT: &str = "hemorisk-dataset/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    /// Row-major, `n_rows × width`.
    x: Vec<f64>,
    y: Vec<u8>,
    ids: Vec<String>,
}

/// Options for [`load_dataset`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Fill missing cells (mode for binary/ordinal, median for continuous)
    /// instead of failing.
    pub impute: bool,
}

/// A cell filled in by imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    /// 1-based data row.
    pub row: usize,
    pub feature: String,
    pub value: f64,
}

impl Dataset {
    pub fn new(
        schema: Arc<FeatureSchema>,
        x: Vec<f64>,
        y: Vec<u8>,
        ids: Vec<String>,
    ) -> Result<Self> {
        let width = schema.width();
        if y.is_empty() {
            return Err(Error::NoRecords);
        }
        if x.len() != y.len() * width || ids.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "dataset shape mismatch: {} values, {} labels, {} ids, width {width}",
                x.len(),
                y.len(),
                ids.len()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                pos / width + 1,
                schema.features()[pos % width].name
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidInput(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self { schema, x, y, ids })
    }

    /// Builds a dataset whose ids are 1-based row numbers.
    pub fn from_rows(schema: Arc<FeatureSchema>, rows: Vec<Vec<f64>>, y: Vec<u8>) -> Result<Self> {
        let width = schema.width();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::InvalidInput(format!(
                "row {} has {} values, expected {width}",
                bad + 1,
                rows[bad].len()
            )));
        }
        let ids = (1..=rows.len()).map(|i| i.to_string()).collect();
        Self::new(schema, rows.concat(), y, ids)
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.x[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.x.chunks_exact(self.width())
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&l| l == 1).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.positives();
        pos > 0 && pos < self.n_rows()
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.has_both_classes() {
            Ok(())
        } else {
            Err(Error::SingleClass)
        }
    }

    /// Rows at `indices`, in that order. May be empty.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let w = self.width();
        let mut x = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            schema: Arc::clone(&self.schema),
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Same rows and labels with replaced feature values.
    pub(crate) fn with_values(&self, x: Vec<f64>) -> Dataset {
        debug_assert_eq!(x.len(), self.x.len());
        Dataset {
            schema: Arc::clone(&self.schema),
            x,
            y: self.y.clone(),
            ids: self.ids.clone(),
        }
    }

    /// Writes the dataset in the delimited format read by [`load_dataset`].
    /// Values use the shortest representation that parses back bit-exactly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# format: {DATASET_FORMAT}")?;
        let mut writer = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self
            .schema
            .features()
            .iter()
            .map(|f| f.name.as_str())
            .collect();
        header.push(self.schema.label_name());
        writer.write_record(&header)?;
        let mut record = Vec::with_capacity(self.width() + 1);
        for (row, label) in self.rows().zip(&self.y) {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(label.to_string());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "N/A" | "?")
}

fn parse_label(cell: &str) -> Option<u8> {
    match cell.to_ascii_lowercase().as_str() {
        "0" | "immd" => Some(0),
        "1" | "hmmd" => Some(1),
        _ => None,
    }
}

/// Reads a dataset encoded against `schema`.
///
/// Returns the dataset and the list of imputed cells (always empty unless
/// `options.impute` is set).
pub fn load_dataset<R: Read>(
    source: R,
    schema: Arc<FeatureSchema>,
    options: &LoadOptions,
) -> Result<(Dataset, Vec<Imputation>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let header = reader.headers()?.clone();
    let expected: Vec<&str> = schema
        .features()
        .iter()
        .map(|f| f.name.as_str())
        .chain(std::iter::once(schema.label_name()))
        .collect();
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        let detail = match expected.iter().zip(&found).position(|(a, b)| a != b) {
            Some(i) => format!("column {} is `{}`, expected `{}`", i + 1, found[i], expected[i]),
            None => format!("{} columns, expected {}", found.len(), expected.len()),
        };
        return Err(Error::Header(detail));
    }

    let width = schema.width();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut missing: Vec<(usize, usize)> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != width + 1 {
            return Err(Error::Cell {
                row,
                column: "*".into(),
                message: format!("expected {} cells, found {}", width + 1, record.len()),
            });
        }
        for (j, def) in schema.features().iter().enumerate() {
            let cell = &record[j];
            if is_missing(cell) {
                if !options.impute {
                    return Err(Error::Cell {
                        row,
                        column: def.name.clone(),
                        message: "missing value".into(),
                    });
                }
                missing.push((r, j));
                x.push(f64::NAN);
                continue;
            }
            let value = def.encode(cell).map_err(|e| Error::Cell {
                row,
                column: def.name.clone(),
                message: e.to_string(),
            })?;
            x.push(value);
        }
        let label = parse_label(&record[width]).ok_or_else(|| Error::Cell {
            row,
            column: schema.label_name().to_owned(),
            message: format!("`{}` is not a label (0/1 or iMMD/hMMD)", &record[width]),
        })?;
        y.push(label);
    }
    if y.is_empty() {
        return Err(Error::NoRecords);
    }

    let imputations = impute(&schema, &mut x, width, &missing)?;
    let ids = (1..=y.len()).map(|i| i.to_string()).collect();
    Ok((Dataset::new(schema, x, y, ids)?, imputations))
}

fn impute(
    schema: &FeatureSchema,
    x: &mut [f64],
    width: usize,
    missing: &[(usize, usize)],
) -> Result<Vec<Imputation>> {
    let mut columns: Vec<usize> = missing.iter().map(|&(_, j)| j).collect();
    columns.sort_unstable();
    columns.dedup();

    let mut fills = vec![f64::NAN; width];
    for &j in &columns {
        let def = &schema.features()[j];
        let observed: Vec<f64> = x
            .chunks_exact(width)
            .map(|row| row[j])
            .filter(|v| !v.is_nan())
            .collect();
        if observed.is_empty() {
            return Err(Error::InvalidInput(format!(
                "column `{}` has no observed values to impute from",
                def.name
            )));
        }
        fills[j] = match def.kind {
            FeatureKind::Continuous => median(observed),
            FeatureKind::Binary | FeatureKind::Ordinal => mode(observed),
        };
    }

    Ok(missing
        .iter()
        .map(|&(r, j)| {
            let value = fills[j];
            x[r * width + j] = value;
            let feature = schema.features()[j].name.clone();
            log::warn!("row {}: imputed `{feature}` = {value}", r + 1);
            Imputation {
                row: r + 1,
                feature,
                value,
            }
        })
        .collect())
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Most frequent value; ties go to the smallest value.
fn mode(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let mut best = values[0];
    let mut best_count = 0;
    let mut i = 0;
    while i < values.len() {
        let mut j = i;
        while j < values.len() && values[j] == values[i] {
            j += 1;
        }
        if j - i > best_count {
            best_count = j - i;
            best = values[i];
        }
        i = j;
    }
    best
}
