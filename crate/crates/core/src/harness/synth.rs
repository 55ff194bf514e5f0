//! Seeded synthetic regression data with a group-dependent label shift.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Example};
use crate::error::{FairError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    /// Number of standard-normal features.
    pub d: usize,
    pub group_weights: Vec<f64>,
    /// Added to the latent score once per unit of group id.
    pub mean_shift: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { n: 2000, d: 3, group_weights: vec![0.5, 0.5], mean_shift: 2.0, noise_sd: 0.2, seed: 0 }
    }
}

/// Features are `d` standard normals followed by one indicator column per
/// group beyond the first. Labels are the latent
/// `<w*, x> + shift * group + noise` with `w* = 1/sqrt(d)`, min-max scaled
/// to `[0, 1]`.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    if spec.n < 2 || spec.d == 0 || spec.group_weights.is_empty() {
        return Err(FairError::InvalidArgument("synthetic data needs n >= 2, d >= 1 and a group".into()));
    }
    if !(spec.noise_sd >= 0.0) || !spec.mean_shift.is_finite() {
        return Err(FairError::InvalidArgument("noise sd must be >= 0 and the shift finite".into()));
    }
    let picker = WeightedIndex::new(&spec.group_weights)
        .map_err(|e| FairError::InvalidArgument(format!("group weights: {e}")))?;
    let groups = spec.group_weights.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = 1.0 / (spec.d as f64).sqrt();
    let mut rows = Vec::with_capacity(spec.n);
    let mut latent = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x: Vec<f64> = (0..spec.d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let g = picker.sample(&mut rng);
        let noise: f64 = StandardNormal.sample(&mut rng);
        latent.push(w * x.iter().sum::<f64>() + spec.mean_shift * g as f64 + spec.noise_sd * noise);
        let mut features = x;
        features.extend((1..groups).map(|a| if a == g { 1.0 } else { 0.0 }));
        rows.push((features, g));
    }
    let lo = latent.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = latent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let examples: Vec<Example> = rows
        .into_iter()
        .zip(&latent)
        .map(|((f, g), l)| Example::new(f, g, ((l - lo) / span).clamp(0.0, 1.0)))
        .collect();
    let mut present = vec![false; groups];
    examples.iter().for_each(|e| present[e.group] = true);
    if present.iter().any(|p| !p) {
        return Err(FairError::Dataset("a group received no examples; increase n".into()));
    }
    Dataset::new(examples, groups)
}
