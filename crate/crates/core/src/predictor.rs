//! Base predictors and finite mixtures of them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FairError, Result};

/// Affine score clipped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        LinearModel { weights, intercept }
    }

    /// A model predicting `value` everywhere.
    pub fn constant(dim: usize, value: f64) -> Self {
        LinearModel { weights: vec![0.0; dim], intercept: value }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `<w, x> + b` without clipping.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(FairError::Dimension { expected: self.weights.len(), actual: x.len() });
        }
        Ok(self.score_unchecked(x))
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.intercept
    }

    /// `clip(<w, x> + b, 0, 1)`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.score(x).map(clip_unit)
    }

    /// Clipped predictions for every example of `data`.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.dim() != self.dim() {
            return Err(FairError::Dimension { expected: self.dim(), actual: data.dim() });
        }
        Ok(data.examples().iter().map(|e| clip_unit(self.score_unchecked(&e.features))).collect())
    }
}

#[inline]
pub fn clip_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// A finite distribution over base predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedPredictor {
    atoms: Vec<(f64, LinearModel)>,
}

impl RandomizedPredictor {
    /// Weights must be non-negative and sum to one within `1e-12`.
    pub fn new(atoms: Vec<(f64, LinearModel)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(FairError::InvalidArgument("randomized predictor needs an atom".into()));
        }
        if atoms.iter().any(|(w, _)| !(*w >= 0.0)) {
            return Err(FairError::InvalidArgument("atom weights must be non-negative".into()));
        }
        let total: f64 = atoms.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FairError::InvalidArgument(format!("atom weights sum to {total}, not 1")));
        }
        Ok(RandomizedPredictor { atoms })
    }

    pub fn point_mass(model: LinearModel) -> Self {
        RandomizedPredictor { atoms: vec![(1.0, model)] }
    }

    /// The uniform distribution over `models`, merging identical ones.
    pub fn uniform(models: &[LinearModel]) -> Result<Self> {
        if models.is_empty() {
            return Err(FairError::InvalidArgument("randomized predictor needs an atom".into()));
        }
        let mut counts: Vec<(usize, &LinearModel)> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for m in models {
            // +0.0 and -0.0 compare equal, so normalize before hashing
            let key: Vec<u64> =
                m.weights.iter().chain(std::iter::once(&m.intercept)).map(|v| (v + 0.0).to_bits()).collect();
            match index.get(&key) {
                Some(&k) => counts[k].0 += 1,
                None => {
                    index.insert(key, counts.len());
                    counts.push((1, m));
                }
            }
        }
        let t = models.len() as f64;
        let atoms = counts.into_iter().map(|(c, m)| (c as f64 / t, m.clone())).collect();
        Ok(RandomizedPredictor { atoms })
    }

    pub fn atoms(&self) -> &[(f64, LinearModel)] {
        &self.atoms
    }

    /// Mixture `w * self + (1 - w) * other`.
    pub fn mix(&self, other: &RandomizedPredictor, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(FairError::InvalidArgument(format!("mixing weight {w} outside [0, 1]")));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|(q, m)| (q * w, m.clone()))
            .chain(other.atoms.iter().map(|(q, m)| (q * (1.0 - w), m.clone())))
            .collect();
        RandomizedPredictor::new(atoms)
    }
}

/// Expectation of `per_atom` under the mixture weights.
pub fn q_expectation<F>(q: &RandomizedPredictor, mut per_atom: F) -> f64
where
    F: FnMut(&LinearModel) -> f64,
{
    q.atoms.iter().map(|(w, m)| w * per_atom(m)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn predict_clips() {
        assert_eq!(LinearModel::new(vec![0.0], 0.7).predict(&[123.0]).unwrap(), 0.7);
        let m = LinearModel::new(vec![1.0], 0.0);
        assert_eq!(m.predict(&[2.5]).unwrap(), 1.0);
        assert_eq!(m.predict(&[-1.0]).unwrap(), 0.0);
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(FairError::Dimension { .. })));
    }

    fn constant(v: f64) -> LinearModel {
        LinearModel::constant(0, v)
    }

    #[test]
    fn expectation_examples() {
        let value = |m: &LinearModel| m.intercept;
        let q = RandomizedPredictor::point_mass(constant(0.4));
        assert_eq!(q_expectation(&q, value), 0.4);
        let q = RandomizedPredictor::new(vec![(0.5, constant(0.0)), (0.5, constant(1.0))]).unwrap();
        assert_eq!(q_expectation(&q, value), 0.5);
        let q = RandomizedPredictor::new(vec![(0.25, constant(0.2)), (0.75, constant(0.6))]).unwrap();
        assert!((q_expectation(&q, value) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation_and_dedup() {
        assert!(RandomizedPredictor::new(vec![]).is_err());
        assert!(RandomizedPredictor::new(vec![(0.6, constant(0.0))]).is_err());
        assert!(RandomizedPredictor::new(vec![(-0.5, constant(0.0)), (1.5, constant(1.0))]).is_err());
        let q = RandomizedPredictor::uniform(&[constant(0.1), constant(0.2), constant(0.1)]).unwrap();
        assert_eq!(q.atoms().len(), 2);
        assert!((q.atoms()[0].0 - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn expectation_is_linear_under_mixing(
            a in prop::collection::vec(0.0f64..1.0, 1..5),
            b in prop::collection::vec(0.0f64..1.0, 1..5),
            w in 0.0f64..=1.0,
        ) {
            let mk = |v: &[f64]| {
                let models: Vec<_> = v.iter().map(|&x| constant(x)).collect();
                RandomizedPredictor::uniform(&models).unwrap()
            };
            let (qa, qb) = (mk(&a), mk(&b));
            let value = |m: &LinearModel| m.intercept * m.intercept;
            let mixed = q_expectation(&qa.mix(&qb, w).unwrap(), value);
            let expected = w * q_expectation(&qa, value) + (1.0 - w) * q_expectation(&qb, value);
            prop_assert!((mixed - expected).abs() < 1e-12);
        }
    }
}
