//! Probability / entropy / sampling kernels.
//!
//! Everything in here is a pure function over its inputs. Entropy is
//! always base-2 (bits), and is always measured on the distribution of
//! the *raw* logits — temperature is applied afterwards, only for
//! sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unnormalized next-token scores over a vocabulary.
///
/// Invariants: length >= 2, every element finite. Non-finite scores are
/// rejected at construction so corrupted backends fail loudly instead
/// of poisoning the entropy signal.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "logit vector needs at least 2 entries, got {}",
                scores.len()
            )));
        }
        if let Some(idx) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite logit {} at index {idx}",
                scores[idx]
            )));
        }
        Ok(Self(scores))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A normalized probability distribution: entries in [0, 1] summing to
/// 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "distribution needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        if let Some(idx) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput(format!(
                "probability {} at index {idx} outside [0, 1]",
                probs[idx]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1 within {}",
                Self::SUM_TOLERANCE
            )));
        }
        Ok(Self(probs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Shannon entropy in bits (base-2). Non-negative by construction.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntropyBits(f64);

impl EntropyBits {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidInput(format!(
                "entropy must be finite and >= 0, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Divisor applied to logits before sampling. Strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "temperature must be finite and > 0, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Temperature::new(value)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature(1.0)
    }
}

/// Numerically stable softmax: max-subtraction, so any finite input is
/// safe from overflow.
pub fn softmax(logits: &LogitVector) -> ProbDist {
    let scores = logits.as_slice();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    // By construction: entries in [0, 1], sum within rounding of 1.
    ProbDist(probs)
}

/// Shannon entropy in bits, with the 0 * log2(0) = 0 convention so
/// one-hot distributions measure exactly zero.
pub fn entropy_bits(dist: &ProbDist) -> EntropyBits {
    let mut h = 0.0f64;
    for &p in dist.as_slice() {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    // Rounding can leave a tiny negative residue for near-one-hot input.
    EntropyBits(h.max(0.0))
}

/// Divide every logit by `t`. `t = 1` is the identity.
pub fn apply_temperature(logits: &LogitVector, t: Temperature) -> LogitVector {
    LogitVector(logits.as_slice().iter().map(|&s| s / t.value()).collect())
}

/// Draw one index from `dist` by inverse-CDF over a single uniform
/// draw. Exactly one `f64` is consumed from the RNG per call, which is
/// what makes traces replayable from the stream seed alone.
pub fn sample<R: Rng>(dist: &ProbDist, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in dist.as_slice().iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // Rounding may leave the total a hair under 1; attribute the
    // leftover mass to the last supported index.
    last_nonzero
}

/// Index of the largest logit, lowest index winning ties.
pub fn argmax(logits: &LogitVector) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &s) in logits.as_slice().iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}
