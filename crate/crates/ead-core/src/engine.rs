//! The generation loop: score with the active model, measure entropy on
//! the raw logits, update the rolling window, apply temperature, sample,
//! then evaluate the switch rule — once per token, with every step
//! recorded in the trace.
//!
//! There is no verification or rollback: a token sampled from the small
//! model stands, and the large model only sees it as context.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::controller::{ControllerState, ModelRole, SwitchConfig};
use crate::error::{Error, Result};
use crate::logits::{self, Temperature};
use crate::provider::{validate_pair, Context, ModelMeta, ScoreProvider};

/// Everything a generation run needs beyond the providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub switch: SwitchConfig,
    #[serde(default)]
    pub temperature: Temperature,
    pub max_tokens: usize,
    #[serde(default)]
    pub stop_token: Option<u32>,
    pub seed: u64,
    /// Replace sampling with argmax (lowest index wins ties). Removes
    /// sampling noise; everything else is unchanged.
    #[serde(default)]
    pub greedy: bool,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        self.switch.validate()?;
        if self.max_tokens < 1 {
            return Err(Error::InvalidConfig("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// One generated token and the controller view that produced it.
///
/// `role` is the model that scored this step; `switched` means the
/// decision *after* this token flipped the active model, so a switched
/// event always has `c_after == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEvent {
    pub step: usize,
    pub token_id: u32,
    pub role: ModelRole,
    pub entropy_bits: f64,
    pub rolling_mean_bits: f64,
    pub c_after: usize,
    pub switched: bool,
}

/// Full record of a generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationTrace {
    pub prompt: Context,
    pub config: GenerationConfig,
    pub meta_small: ModelMeta,
    pub meta_large: ModelMeta,
    /// False when a backend failure cut the run short; the events up to
    /// that point are kept so long sweeps stay resumable.
    pub complete: bool,
    #[serde(default)]
    pub abort_reason: Option<String>,
    #[serde(skip)]
    pub events: Vec<TokenEvent>,
}

impl GenerationTrace {
    /// Per-step entropies, in order.
    pub fn entropies(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.entropy_bits).collect()
    }

    /// Per-step roles, in order.
    pub fn roles(&self) -> Vec<ModelRole> {
        self.events.iter().map(|e| e.role).collect()
    }

    /// Token ids generated, in order.
    pub fn token_ids(&self) -> Vec<u32> {
        self.events.iter().map(|e| e.token_id).collect()
    }
}

/// Run the adaptive generation loop.
///
/// Preconditions (pair compatibility, prompt validity, config ranges)
/// fail fast with an error. A provider failure *mid-run* instead
/// returns the partial trace with `complete = false` and the failure
/// recorded in `abort_reason`.
pub fn generate(
    prompt: &Context,
    small: &dyn ScoreProvider,
    large: &dyn ScoreProvider,
    cfg: &GenerationConfig,
) -> Result<GenerationTrace> {
    cfg.validate()?;
    validate_pair(small.meta(), large.meta())?;
    prompt.validate_for(small.meta().vocab_size)?;

    let mut trace = GenerationTrace {
        prompt: prompt.clone(),
        config: cfg.clone(),
        meta_small: small.meta().clone(),
        meta_large: large.meta().clone(),
        complete: true,
        abort_reason: None,
        events: Vec::with_capacity(cfg.max_tokens),
    };

    let mut ctx = prompt.clone();
    let mut state = ControllerState::new(&cfg.switch);
    // Fixed RNG algorithm (ChaCha8) so a (seed, config, providers)
    // triple replays to the identical trace.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for step in 0..cfg.max_tokens {
        let provider = match state.active() {
            ModelRole::Small => small,
            ModelRole::Large => large,
        };
        let raw = match provider.score(&ctx) {
            Ok(logits) => logits,
            Err(err) => {
                trace.complete = false;
                trace.abort_reason = Some(format!("step {step} ({}): {err}", state.active()));
                return Ok(trace);
            }
        };

        // Entropy on the raw logits, before temperature touches them.
        let entropy = logits::entropy_bits(&logits::softmax(&raw));

        let tempered = logits::apply_temperature(&raw, cfg.temperature);
        let token_id = if cfg.greedy {
            logits::argmax(&tempered) as u32
        } else {
            logits::sample(&logits::softmax(&tempered), &mut rng) as u32
        };

        let role = state.active();
        let (decision, mean) = state.step(entropy, &cfg.switch);

        trace.events.push(TokenEvent {
            step,
            token_id,
            role,
            entropy_bits: entropy.value(),
            rolling_mean_bits: mean.value(),
            c_after: state.tokens_since_switch(),
            switched: decision.is_switch(),
        });

        ctx.push(token_id);
        if cfg.stop_token == Some(token_id) {
            break;
        }
    }

    Ok(trace)
}

/// Write a trace as JSON lines: one header object, then one event per
/// line. Floats are emitted in shortest round-trip form, so a read of
/// the file reproduces the trace bit-for-bit.
pub fn write_trace(trace: &GenerationTrace, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    out.write_all(render_trace(trace).as_bytes())?;
    out.flush()?;
    Ok(())
}

/// In-memory form of [`write_trace`].
pub fn render_trace(trace: &GenerationTrace) -> String {
    let mut text = serde_json::to_string(trace).expect("trace header serializes");
    text.push('\n');
    for event in &trace.events {
        text.push_str(&serde_json::to_string(event).expect("event serializes"));
        text.push('\n');
    }
    text
}

/// Read a trace written by [`write_trace`]. Parse failures name the
/// 1-based line.
pub fn read_trace(path: &Path) -> Result<GenerationTrace> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = Vec::new();
    for line in reader.lines() {
        lines.push(line?);
    }
    parse_trace_lines(&lines)
}

/// In-memory form of [`read_trace`].
pub fn parse_trace(text: &str) -> Result<GenerationTrace> {
    let lines: Vec<String> = text.lines().map(str::to_owned).collect();
    parse_trace_lines(&lines)
}

fn parse_trace_lines(lines: &[String]) -> Result<GenerationTrace> {
    let header = lines.first().ok_or(Error::Parse {
        line: 1,
        message: "empty trace file".into(),
    })?;
    let mut trace: GenerationTrace = serde_json::from_str(header).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    for (idx, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let event: TokenEvent = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        trace.events.push(event);
    }
    Ok(trace)
}
