//! HTTP transport for scoring: a JSON protocol, a blocking client that
//! implements [`ScoreProvider`](crate::provider::ScoreProvider), and a
//! server that exposes any local provider over the same protocol.
//!
//! Protocol:
//!
//! | Endpoint         | Method | Body                      | Response |
//! |------------------|--------|---------------------------|----------|
//! | `/v1/meta`       | GET    | —                         | `{"name", "vocab_size", "param_count_b", "vocab_fingerprint"}` |
//! | `/v1/logits`     | POST   | `{"token_ids": [int...]}` | `{"logits": [float x V]}` |
//!
//! The fingerprint travels as a hex string; floats are plain JSON
//! numbers and the server only ever echoes finite values.

mod client;
mod server;

pub use client::{RemoteProvider, RetryPolicy};
pub use server::{bind, router, serve_listener_blocking, MockServer};

use serde::{Deserialize, Serialize};

/// Body of `POST /v1/logits`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogitsRequest {
    pub token_ids: Vec<u32>,
}

/// Response of `POST /v1/logits`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogitsResponse {
    pub logits: Vec<f64>,
}
