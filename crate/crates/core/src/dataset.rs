//! Training examples grouped by protected attribute.

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};

/// One `(features, group, label)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub group: usize,
    pub label: f64,
}

impl Example {
    pub fn new(features: Vec<f64>, group: usize, label: f64) -> Self {
        Example { features, group, label }
    }
}

/// A validated dataset with per-group bookkeeping.
///
/// Every declared group must be non-empty, labels lie in `[0, 1]` and all
/// examples share one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    group_count: usize,
    dim: usize,
    group_sizes: Vec<usize>,
    group_freqs: Vec<f64>,
    group_members: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, group_count: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(FairError::Dataset("dataset has no examples".into()));
        }
        if group_count == 0 {
            return Err(FairError::Dataset("at least one group is required".into()));
        }
        let dim = examples[0].features.len();
        let mut group_members = vec![Vec::new(); group_count];
        for (row, ex) in examples.iter().enumerate() {
            if ex.features.len() != dim {
                return Err(FairError::Data {
                    row,
                    message: format!("expected {dim} features, found {}", ex.features.len()),
                });
            }
            if let Some(bad) = ex.features.iter().find(|v| !v.is_finite()) {
                return Err(FairError::Data { row, message: format!("non-finite feature {bad}") });
            }
            if !(0.0..=1.0).contains(&ex.label) {
                return Err(FairError::Data {
                    row,
                    message: format!("label {} outside [0, 1]", ex.label),
                });
            }
            if ex.group >= group_count {
                return Err(FairError::Data {
                    row,
                    message: format!("group id {} >= group count {group_count}", ex.group),
                });
            }
            group_members[ex.group].push(row);
        }
        if let Some(empty) = group_members.iter().position(Vec::is_empty) {
            return Err(FairError::Dataset(format!("group {empty} has no examples")));
        }
        let n = examples.len() as f64;
        let group_sizes: Vec<usize> = group_members.iter().map(Vec::len).collect();
        let group_freqs = group_sizes.iter().map(|&s| s as f64 / n).collect();
        Ok(Dataset { examples, group_count, dim, group_sizes, group_freqs, group_members })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn group_count(&self) -> usize {
        self.group_count
    }

    /// `n_a` for every group.
    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    /// `p_a = n_a / n` for every group.
    pub fn group_freqs(&self) -> &[f64] {
        &self.group_freqs
    }

    /// Row indices of the examples in group `a`, in dataset order.
    pub fn group_members(&self, a: usize) -> &[usize] {
        &self.group_members[a]
    }

    pub fn labels(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn groups(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.group).collect()
    }

    /// A new dataset made of the given rows, keeping the group count.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let examples = rows.iter().map(|&i| self.examples[i].clone()).collect();
        Dataset::new(examples, self.group_count)
    }
}
