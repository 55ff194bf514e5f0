//! CSV ingestion and train/test splitting.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Example};
use crate::error::{FairError, Result};

/// Which columns hold the label, the group and the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSchema {
    pub label_column: String,
    pub group_column: String,
    /// `None` uses every remaining column.
    pub feature_columns: Option<Vec<String>>,
    /// Min-max scale the label and features to `[0, 1]`.
    pub normalize: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    /// Original group values, indexed by group id.
    pub group_names: Vec<String>,
    pub feature_names: Vec<String>,
    /// Feature columns removed because they were constant.
    pub dropped: Vec<String>,
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

fn rescale(values: &mut [f64]) {
    let (lo, hi) = min_max(values);
    if hi > lo {
        values.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Reads a headed CSV file. Group values are numbered in order of first
/// appearance; constant feature columns are dropped.
pub fn load_csv(path: &Path, schema: &DataSchema) -> Result<LoadedData> {
    let reader = csv::Reader::from_path(path)?;
    load_csv_reader(reader, schema)
}

pub fn load_csv_reader<R: std::io::Read>(mut reader: csv::Reader<R>, schema: &DataSchema) -> Result<LoadedData> {
    if schema.label_column == schema.group_column {
        return Err(FairError::Dataset("label and group columns must differ".into()));
    }
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FairError::Dataset(format!("column '{name}' not found in header")))
    };
    let label_idx = find(&schema.label_column)?;
    let group_idx = find(&schema.group_column)?;
    let feature_idx: Vec<usize> = match &schema.feature_columns {
        Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&i| i != label_idx && i != group_idx).collect(),
    };
    if feature_idx.iter().any(|&i| i == label_idx || i == group_idx) {
        return Err(FairError::Dataset("feature columns may not include the label or group".into()));
    }

    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); feature_idx.len()];
    let mut group_ids: HashMap<String, usize> = HashMap::new();
    let mut group_names = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let parse = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("").trim();
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| FairError::Data {
                row,
                message: format!("line {line}, column '{}': cannot parse '{raw}' as a number", header[i]),
            })
        };
        labels.push(parse(label_idx)?);
        for (col, &i) in columns.iter_mut().zip(&feature_idx) {
            col.push(parse(i)?);
        }
        let g = record.get(group_idx).unwrap_or("").trim().to_string();
        let next = group_ids.len();
        let id = *group_ids.entry(g.clone()).or_insert_with(|| {
            group_names.push(g);
            next
        });
        groups.push(id);
    }
    if labels.is_empty() {
        return Err(FairError::Dataset("file has no data rows".into()));
    }

    let (lo, hi) = min_max(&labels);
    if schema.normalize {
        rescale(&mut labels);
    } else if lo < 0.0 || hi > 1.0 {
        log::warn!("labels span [{lo}, {hi}]; rescaling to [0, 1]");
        rescale(&mut labels);
    }

    let mut feature_names = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (mut col, &i) in columns.into_iter().zip(&feature_idx) {
        let (lo, hi) = min_max(&col);
        if hi <= lo {
            log::warn!("dropping constant feature column '{}'", header[i]);
            dropped.push(header[i].clone());
            continue;
        }
        if schema.normalize {
            rescale(&mut col);
        }
        feature_names.push(header[i].clone());
        kept.push(col);
    }

    let examples = (0..labels.len())
        .map(|r| Example::new(kept.iter().map(|c| c[r]).collect(), groups[r], labels[r]))
        .collect();
    let dataset = Dataset::new(examples, group_names.len())?;
    Ok(LoadedData { dataset, group_names, feature_names, dropped })
}

/// Seeded shuffle followed by a cut at `fraction`. If a group is missing
/// from either side the shuffle is redrawn with the next seed, up to 20
/// attempts.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(FairError::InvalidArgument(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let n = data.len();
    if n < 2 {
        return Err(FairError::Dataset("need at least two rows to split".into()));
    }
    let cut = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    for attempt in 0..20u64 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt)));
        let (a, b) = idx.split_at(cut);
        let covers = |rows: &[usize]| {
            let mut seen = vec![false; data.group_count()];
            rows.iter().for_each(|&r| seen[data.examples()[r].group] = true);
            seen.into_iter().all(|s| s)
        };
        if covers(a) && covers(b) {
            return Ok((data.subset(a)?, data.subset(b)?));
        }
    }
    Err(FairError::Dataset("could not split so that every group appears on both sides".into()))
}
