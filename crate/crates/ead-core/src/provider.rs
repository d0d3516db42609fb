//! Token-scoring providers behind one uniform interface.
//!
//! A provider is given the *full* context on every call and returns a
//! finite logit vector over its vocabulary. That contract is what makes
//! mid-sequence model switching trivial: the newly active model scores
//! prompt + everything generated so far, and any incremental caching a
//! backend does internally is invisible here.
//!
//! Three implementations ship: a synthetic model with a configurable
//! entropy profile (the desk-scale stand-in for a real model), a
//! recorded-logits replayer, and an HTTP client in [`crate::remote`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logits::LogitVector;
use crate::serde_util::hex_u64;

/// Identity and size of a scoring model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub name: String,
    pub vocab_size: usize,
    /// Parameter count in billions.
    pub param_count_b: f64,
    /// Hash of the vocabulary definition; two providers can only form a
    /// switching pair when these match.
    #[serde(with = "hex_u64")]
    pub vocab_fingerprint: u64,
}

impl ModelMeta {
    pub fn new(
        name: impl Into<String>,
        vocab_size: usize,
        param_count_b: f64,
        vocab_fingerprint: u64,
    ) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "vocab_size must be >= 2, got {vocab_size}"
            )));
        }
        if !param_count_b.is_finite() || param_count_b <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "param_count_b must be > 0, got {param_count_b}"
            )));
        }
        Ok(ModelMeta {
            name: name.into(),
            vocab_size,
            param_count_b,
            vocab_fingerprint,
        })
    }
}

/// Stable 64-bit FNV-1a over a vocabulary tag and size. Hand-rolled so
/// fingerprints do not move across toolchain upgrades.
pub fn vocab_fingerprint(tag: &str, vocab_size: usize) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for byte in tag.bytes().chain((vocab_size as u64).to_le_bytes()) {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// SplitMix64 step; the fixed mixing function behind synthetic token
/// identities and sweep seed derivation.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A token-id context. Ids must be below the vocabulary size of the
/// model being queried.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Context(Vec<u32>);

impl Context {
    pub fn new(token_ids: Vec<u32>) -> Self {
        Context(token_ids)
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, token_id: u32) {
        self.0.push(token_id);
    }

    pub fn validate_for(&self, vocab_size: usize) -> Result<()> {
        if let Some(&bad) = self.0.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(Error::InvalidInput(format!(
                "token id {bad} out of range for vocab of {vocab_size}"
            )));
        }
        Ok(())
    }
}

impl From<Vec<u32>> for Context {
    fn from(ids: Vec<u32>) -> Self {
        Context(ids)
    }
}

/// Uniform scoring interface. Implementations must be callable from
/// many generation streams at once.
pub trait ScoreProvider: Send + Sync {
    fn meta(&self) -> &ModelMeta;

    /// Score the full context; returns a finite logit vector of length
    /// `meta().vocab_size`.
    fn score(&self, ctx: &Context) -> Result<LogitVector>;
}

/// A switching pair needs one shared vocabulary and a genuinely smaller
/// small model.
pub fn validate_pair(small: &ModelMeta, large: &ModelMeta) -> Result<()> {
    if small.vocab_size != large.vocab_size || small.vocab_fingerprint != large.vocab_fingerprint {
        return Err(Error::IncompatiblePair(format!(
            "vocab mismatch: {} (V={}, fp={:016x}) vs {} (V={}, fp={:016x})",
            small.name,
            small.vocab_size,
            small.vocab_fingerprint,
            large.name,
            large.vocab_size,
            large.vocab_fingerprint
        )));
    }
    if small.param_count_b >= large.param_count_b {
        return Err(Error::MisconfiguredPair(format!(
            "small model {} ({}B) is not smaller than large model {} ({}B)",
            small.name, small.param_count_b, large.name, large.param_count_b
        )));
    }
    Ok(())
}

/// One stretch of positions with a target entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub len: usize,
    pub entropy_bits: f64,
}

/// Plan for a synthetic model: per-position target entropies plus a
/// seed that decides which token carries the probability mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub segments: Vec<Segment>,
    pub seed: u64,
}

/// Deterministic test double for a scoring model.
///
/// For a context of length `pos` it emits the distribution
/// `(1 - lambda) * one_hot + lambda * uniform`, with `lambda` solved by
/// bisection so the softmax entropy hits the active segment's target to
/// within [`SyntheticProvider::LAMBDA_TOLERANCE_BITS`]. The hot token
/// is `splitmix64(seed, pos) mod V`, so two providers with the same
/// profile but different seeds agree on entropy while disagreeing on
/// token identities. Positions wrap around the plan, so any number of
/// tokens can be generated.
pub struct SyntheticProvider {
    meta: ModelMeta,
    profile: SyntheticProfile,
    /// Pre-solved mixing weight per segment.
    lambdas: Vec<f64>,
    plan_len: usize,
}

impl SyntheticProvider {
    /// Bisection tolerance when solving the mixture weight, in bits.
    pub const LAMBDA_TOLERANCE_BITS: f64 = 1e-4;

    /// Probability floor applied before taking logs, so one-hot targets
    /// still produce finite logits. Contributes under 1e-7 bits even at
    /// V = 1024.
    const PROB_FLOOR: f64 = 1e-12;

    pub fn new(profile: SyntheticProfile, meta: ModelMeta) -> Result<Self> {
        let v = meta.vocab_size;
        let max_bits = (v as f64).log2();
        if profile.segments.is_empty() {
            return Err(Error::InvalidConfig("profile needs at least one segment".into()));
        }
        for seg in &profile.segments {
            if seg.len < 1 {
                return Err(Error::InvalidConfig("segment length must be >= 1".into()));
            }
            if !seg.entropy_bits.is_finite()
                || seg.entropy_bits < 0.0
                || seg.entropy_bits > max_bits
            {
                return Err(Error::InvalidConfig(format!(
                    "target entropy {} outside [0, log2({v}) = {max_bits:.4}]",
                    seg.entropy_bits
                )));
            }
        }
        let lambdas = profile
            .segments
            .iter()
            .map(|seg| solve_lambda(seg.entropy_bits, v))
            .collect();
        let plan_len = profile.segments.iter().map(|s| s.len).sum();
        Ok(SyntheticProvider {
            meta,
            profile,
            lambdas,
            plan_len,
        })
    }

    fn lambda_at(&self, pos: usize) -> f64 {
        let mut offset = pos % self.plan_len;
        for (seg, &lambda) in self.profile.segments.iter().zip(&self.lambdas) {
            if offset < seg.len {
                return lambda;
            }
            offset -= seg.len;
        }
        unreachable!("offset reduced below plan length")
    }

    /// Which token carries the mass at `pos`.
    pub fn hot_token(&self, pos: usize) -> u32 {
        (splitmix64(self.profile.seed ^ splitmix64(pos as u64)) % self.meta.vocab_size as u64)
            as u32
    }
}

impl ScoreProvider for SyntheticProvider {
    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn score(&self, ctx: &Context) -> Result<LogitVector> {
        ctx.validate_for(self.meta.vocab_size)?;
        let v = self.meta.vocab_size;
        let pos = ctx.len();
        let lambda = self.lambda_at(pos);
        let hot = self.hot_token(pos) as usize;
        let p_cold = lambda / v as f64;
        let p_hot = (1.0 - lambda) + p_cold;
        let logit_cold = p_cold.max(Self::PROB_FLOOR).ln();
        let logit_hot = p_hot.max(Self::PROB_FLOOR).ln();
        let mut scores = vec![logit_cold; v];
        scores[hot] = logit_hot;
        LogitVector::new(scores)
    }
}

/// Entropy in bits of the one-hot/uniform mixture at weight `lambda`.
fn mixture_entropy_bits(lambda: f64, vocab_size: usize) -> f64 {
    let v = vocab_size as f64;
    let p_cold = lambda / v;
    let p_hot = (1.0 - lambda) + p_cold;
    let mut h = 0.0;
    if p_hot > 0.0 {
        h -= p_hot * p_hot.log2();
    }
    if p_cold > 0.0 {
        h -= (v - 1.0) * p_cold * p_cold.log2();
    }
    h
}

/// Monotone bisection for the mixture weight hitting `target` bits.
fn solve_lambda(target: f64, vocab_size: usize) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let h = mixture_entropy_bits(mid, vocab_size);
        if (h - target).abs() <= SyntheticProvider::LAMBDA_TOLERANCE_BITS {
            return mid;
        }
        if h < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Header + per-position logit vectors, replayable as a provider.
///
/// File layout is JSON lines: the model meta on line 1, then one
/// `{"logits": [...]}` object per position. Line `i + 1` holds the
/// logits returned for any context of length `i`.
pub struct RecordedProvider {
    meta: ModelMeta,
    logits: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RecordedLine {
    logits: Vec<f64>,
}

impl RecordedProvider {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot open recorded logits {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty recording".into(),
        })?;
        let meta: ModelMeta = serde_json::from_str(header).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let mut logits = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: RecordedLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            if row.logits.len() != meta.vocab_size {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!(
                        "logit vector of length {} does not match vocab_size {}",
                        row.logits.len(),
                        meta.vocab_size
                    ),
                });
            }
            logits.push(row.logits);
        }
        Ok(RecordedProvider { meta, logits })
    }

    pub fn positions(&self) -> usize {
        self.logits.len()
    }

    /// Serialize a recording; the inverse of [`RecordedProvider::parse`].
    pub fn render(meta: &ModelMeta, rows: &[LogitVector]) -> String {
        let mut out = serde_json::to_string(meta).expect("meta serializes");
        out.push('\n');
        for row in rows {
            out.push_str(
                &serde_json::to_string(&RecordedLine {
                    logits: row.as_slice().to_vec(),
                })
                .expect("logits serialize"),
            );
            out.push('\n');
        }
        out
    }
}

impl ScoreProvider for RecordedProvider {
    fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn score(&self, ctx: &Context) -> Result<LogitVector> {
        ctx.validate_for(self.meta.vocab_size)?;
        let pos = ctx.len();
        let scores = self.logits.get(pos).ok_or_else(|| {
            Error::InvalidInput(format!(
                "recording holds {} positions, none for context length {pos}",
                self.logits.len()
            ))
        })?;
        LogitVector::new(scores.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logits::{entropy_bits, softmax};

    fn meta(v: usize, params: f64) -> ModelMeta {
        ModelMeta::new("test", v, params, vocab_fingerprint("test", v)).unwrap()
    }

    fn measured_entropy(p: &SyntheticProvider, pos: usize) -> f64 {
        let ctx = Context::new(vec![0; pos]);
        entropy_bits(&softmax(&p.score(&ctx).unwrap())).value()
    }

    #[test]
    fn one_hot_profile_near_zero_entropy() {
        let profile = SyntheticProfile {
            segments: vec![Segment { len: 10, entropy_bits: 0.0 }],
            seed: 3,
        };
        let p = SyntheticProvider::new(profile, meta(64, 1.0)).unwrap();
        for pos in 0..10 {
            assert!(measured_entropy(&p, pos) < 1e-6);
        }
    }

    #[test]
    fn uniform_profile_hits_log2_v() {
        let profile = SyntheticProfile {
            segments: vec![Segment { len: 4, entropy_bits: 4.0 }],
            seed: 3,
        };
        let p = SyntheticProvider::new(profile, meta(16, 1.0)).unwrap();
        for pos in 0..4 {
            assert!((measured_entropy(&p, pos) - 4.0).abs() < 1e-6);
        }
    }

    #[test]
    fn segments_hit_targets_and_cycle() {
        let profile = SyntheticProfile {
            segments: vec![
                Segment { len: 50, entropy_bits: 0.2 },
                Segment { len: 10, entropy_bits: 3.0 },
            ],
            seed: 9,
        };
        let p = SyntheticProvider::new(profile, meta(256, 1.0)).unwrap();
        for pos in 0..50 {
            assert!(measured_entropy(&p, pos) <= 0.25, "pos {pos}");
        }
        for pos in 50..60 {
            let h = measured_entropy(&p, pos);
            assert!((h - 3.0).abs() <= 0.05, "pos {pos}: {h}");
        }
        // Wraps: position 60 is position 0 of the next cycle.
        assert!(measured_entropy(&p, 60) <= 0.25);
    }

    #[test]
    fn deterministic_per_seed() {
        let profile = SyntheticProfile {
            segments: vec![Segment { len: 8, entropy_bits: 1.5 }],
            seed: 42,
        };
        let a = SyntheticProvider::new(profile.clone(), meta(32, 1.0)).unwrap();
        let b = SyntheticProvider::new(profile, meta(32, 1.0)).unwrap();
        let ctx = Context::new(vec![1, 2, 3]);
        assert_eq!(a.score(&ctx).unwrap(), a.score(&ctx).unwrap());
        assert_eq!(a.score(&ctx).unwrap(), b.score(&ctx).unwrap());
    }

    #[test]
    fn different_seeds_same_entropy_different_argmax() {
        let mk = |seed| {
            let profile = SyntheticProfile {
                segments: vec![Segment { len: 1000, entropy_bits: 2.0 }],
                seed,
            };
            SyntheticProvider::new(profile, meta(256, 1.0)).unwrap()
        };
        let (a, b) = (mk(1), mk(2));
        let mut differing = 0;
        for pos in 0..1000 {
            let ha = measured_entropy(&a, pos);
            let hb = measured_entropy(&b, pos);
            assert!((ha - hb).abs() <= 0.05);
            if a.hot_token(pos) != b.hot_token(pos) {
                differing += 1;
            }
        }
        assert!(differing >= 500, "only {differing}/1000 positions differ");
    }

    #[test]
    fn entropy_target_above_log2_v_rejected() {
        let profile = SyntheticProfile {
            segments: vec![Segment { len: 1, entropy_bits: 5.0 }],
            seed: 0,
        };
        assert!(matches!(
            SyntheticProvider::new(profile, meta(16, 1.0)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn out_of_range_token_rejected() {
        let profile = SyntheticProfile {
            segments: vec![Segment { len: 1, entropy_bits: 1.0 }],
            seed: 0,
        };
        let p = SyntheticProvider::new(profile, meta(16, 1.0)).unwrap();
        let err = p.score(&Context::new(vec![16])).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn pair_validation() {
        let fp = vocab_fingerprint("x", 128);
        let small = ModelMeta::new("s", 128, 1.0, fp).unwrap();
        let large = ModelMeta::new("l", 128, 3.0, fp).unwrap();
        assert!(validate_pair(&small, &large).is_ok());

        let other = ModelMeta::new("o", 256, 3.0, vocab_fingerprint("y", 256)).unwrap();
        assert!(matches!(
            validate_pair(&small, &other),
            Err(Error::IncompatiblePair(_))
        ));

        assert!(matches!(
            validate_pair(&large, &small),
            Err(Error::MisconfiguredPair(_))
        ));
    }

    #[test]
    fn recorded_provider_roundtrip_and_exhaustion() {
        let m = meta(4, 1.0);
        let rows = vec![
            LogitVector::new(vec![0.5, -1.0, 2.0, 0.0]).unwrap(),
            LogitVector::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap(),
        ];
        let text = RecordedProvider::render(&m, &rows);
        let p = RecordedProvider::parse(&text).unwrap();
        assert_eq!(p.positions(), 2);
        assert_eq!(p.score(&Context::new(vec![])).unwrap(), rows[0]);
        assert_eq!(p.score(&Context::new(vec![3])).unwrap(), rows[1]);
        assert!(matches!(
            p.score(&Context::new(vec![0, 1])),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn recorded_parse_errors_name_line() {
        let m = meta(4, 1.0);
        let rows = vec![LogitVector::new(vec![0.0; 4]).unwrap()];
        let mut text = RecordedProvider::render(&m, &rows);
        text.push_str("{\"logits\": [0.0, 1.0]}\n");
        match RecordedProvider::parse(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        // Pinned: a fingerprint change would silently break every pair
        // configured from older files.
        assert_eq!(vocab_fingerprint("byte-level", 256), vocab_fingerprint("byte-level", 256));
        assert_ne!(vocab_fingerprint("byte-level", 256), vocab_fingerprint("byte-level", 128));
        assert_ne!(vocab_fingerprint("a", 16), vocab_fingerprint("b", 16));
    }
}
