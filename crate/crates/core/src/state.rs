use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Absolute slack on the sum of weights that is silently renormalized.
pub const RENORMALIZE_SLACK: f64 = 1e-9;

/// A point on the probability simplex: the share of the population playing
/// each action.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    weights: Vec<f64>,
}

impl PopulationState {
    /// Validates `weights` as a population state.
    ///
    /// Entries must be finite and nonnegative, there must be at least two of
    /// them, and their sum must be within [`RENORMALIZE_SLACK`] of one; such
    /// inputs are rescaled to sum to one exactly (up to rounding).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidState(format!(
                "need at least two actions, got {}",
                weights.len()
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidState(format!("entry {i} is {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_SLACK {
            return Err(Error::InvalidState(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let mut weights = weights;
        if total != 1.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        Ok(Self { weights })
    }

    /// Clamps negative entries to zero and rescales to unit sum. Used on
    /// numerical iterates that may drift off the simplex by rounding.
    pub fn project(mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidState(format!(
                "need at least two actions, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("state projection"));
        }
        weights.iter_mut().for_each(|w| *w = w.max(0.0));
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidState("all entries vanish".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { weights })
    }

    pub fn barycenter(n: usize) -> Self {
        assert!(n >= 2, "population state needs at least two actions");
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// The pure state `e_i`.
    pub fn vertex(n: usize, i: usize) -> Self {
        assert!(n >= 2 && i < n, "vertex {i} out of range for {n} actions");
        let mut weights = vec![0.0; n];
        weights[i] = 1.0;
        Self { weights }
    }

    /// Two-action state `(x1, 1 - x1)`.
    pub fn two_action(x1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x1) {
            return Err(Error::InvalidState(format!("x1 = {x1} outside [0, 1]")));
        }
        Ok(Self {
            weights: vec![x1, 1.0 - x1],
        })
    }

    /// Mixes `self` with `other`: `(1 - t)·self + t·other`.
    pub fn mix(&self, other: &PopulationState, t: f64) -> Self {
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        Self { weights }
    }

    pub fn num_actions(&self) -> usize {
        self.weights.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    pub fn min_entry(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_interior(&self) -> bool {
        self.min_entry() > 0.0
    }

    /// Index of the largest entry (lowest index on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.weights)
    }

    pub fn distance_inf(&self, other: &PopulationState) -> f64 {
        max_abs_diff(&self.weights, &other.weights)
    }

    /// Index of the closest vertex in the max norm.
    pub fn nearest_vertex(&self) -> usize {
        self.argmax()
    }
}

impl core::ops::Index<usize> for PopulationState {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

impl AsRef<[f64]> for PopulationState {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |d, (x, y)| d.max((x - y).abs()))
}

/// Barycentric lattice `{z / m : z ∈ Z^m}` in reverse-lexicographic order of
/// `z`. With `interior` set, only points with every `z_i ≥ 1` are kept.
pub fn lattice(n: usize, m: usize, interior: bool) -> Vec<PopulationState> {
    let mut out = Vec::new();
    let mut z = vec![0u32; n];
    crate::sampling::for_each_composition(n, m as u32, &mut z, &mut |z| {
        if interior && z.contains(&0) {
            return;
        }
        let weights = z.iter().map(|&c| c as f64 / m as f64).collect();
        out.push(PopulationState { weights });
    });
    out
}
