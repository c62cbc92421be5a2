use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A finite multiset of real spectral values, kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSet(Vec<f64>);

impl SpectrumSet {
    /// Sorts `values` ascending. Panics on non-finite input.
    pub fn new(mut values: Vec<f64>) -> Self {
        assert!(values.iter().all(|v| v.is_finite()), "spectrum values must be finite");
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> Option<f64> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<f64> {
        self.0.last().copied()
    }

    /// Distance from `x` to the nearest element; `None` when empty.
    pub fn distance_to(&self, x: f64) -> Option<f64> {
        if self.0.is_empty() {
            return None;
        }
        let k = self.0.partition_point(|&v| v < x);
        let mut best = f64::INFINITY;
        if k < self.0.len() {
            best = best.min((self.0[k] - x).abs());
        }
        if k > 0 {
            best = best.min((x - self.0[k - 1]).abs());
        }
        Some(best)
    }

    pub fn scaled(&self, s: f64) -> SpectrumSet {
        SpectrumSet::new(self.0.iter().map(|v| v * s).collect())
    }
}

/// Hausdorff distance between two finite sets of reals: the larger of the
/// two directed distances `max_a min_b |a − b|`.
pub fn hausdorff_distance(a: &SpectrumSet, b: &SpectrumSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let directed = |x: &SpectrumSet, y: &SpectrumSet| x.values().iter().map(|&v| y.distance_to(v).unwrap()).fold(0.0, f64::max);
    Ok(directed(a, b).max(directed(b, a)))
}
