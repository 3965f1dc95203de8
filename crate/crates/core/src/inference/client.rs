use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{InferenceError, LogitsSource, OpenRequest, OpenResponse, StepRequest, StepResponse};
use crate::guided::{parse_output_with, GenerationRecord, SchemaConfig, SchemaMode};

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: usize,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(200),
            timeout: Duration::from_secs(30),
        }
    }
}

/// Client for the `/open` + `/step` protocol.
pub struct HttpSource {
    base: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

#[derive(Serialize)]
struct PassthroughRequest<'a> {
    prompt: &'a str,
    regex: &'a str,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct PassthroughResponse {
    text: String,
}

enum Failure {
    Retry(String),
    Fatal(InferenceError),
}

impl HttpSource {
    pub fn new(endpoint: &str, retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(retry.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpSource {
            base: endpoint.trim_end_matches('/').to_owned(),
            agent,
            retry,
        }
    }

    fn post_once<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, Failure> {
        let url = format!("{}{path}", self.base);
        let mut response = match self.agent.post(&url).send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Err(match e {
                    ureq::Error::Io(_)
                    | ureq::Error::Timeout(_)
                    | ureq::Error::HostNotFound
                    | ureq::Error::ConnectionFailed
                    | ureq::Error::BodyStalled => Failure::Retry(e.to_string()),
                    other => Failure::Fatal(InferenceError::Protocol(other.to_string())),
                })
            }
        };
        let status = response.status().as_u16();
        if status >= 500 {
            return Err(Failure::Retry(format!("{url}: HTTP {status}")));
        }
        if status != 200 {
            return Err(Failure::Fatal(InferenceError::Protocol(format!("{url}: HTTP {status}"))));
        }
        response
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_json::<T>()
            .map_err(|e| Failure::Fatal(InferenceError::Protocol(format!("{url}: {e}"))))
    }

    /// POST with exponential backoff on transport failures and 5xx.
    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, InferenceError> {
        let attempts = self.retry.attempts.max(1);
        let mut delay = self.retry.base_delay;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.post_once(path, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => {
                    last = msg;
                    if attempt < attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(InferenceError::Transport {
            attempts,
            message: last,
        })
    }

    /// For servers with native guided decoding: send the schema regex and let
    /// the server constrain generation; no local masking happens.
    pub fn generate_passthrough(
        &self,
        prompt: &str,
        regex: &str,
        max_tokens: usize,
        mode: SchemaMode,
        schema: &SchemaConfig,
    ) -> Result<GenerationRecord, InferenceError> {
        let started = std::time::Instant::now();
        let response: PassthroughResponse = self.post(
            "/generate",
            &PassthroughRequest {
                prompt,
                regex,
                max_tokens,
            },
        )?;
        let mut record = parse_output_with(&response.text, mode, schema);
        record.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
        Ok(record)
    }
}

impl LogitsSource for HttpSource {
    fn open(&self, prompt: &str) -> Result<OpenResponse, InferenceError> {
        self.post(
            "/open",
            &OpenRequest {
                prompt: prompt.to_owned(),
            },
        )
    }

    fn step(&self, request: &StepRequest) -> Result<StepResponse, InferenceError> {
        if request.token_ids.len() > super::MAX_STEP_TOKENS {
            return Err(InferenceError::Protocol(format!(
                "{} tokens exceed the step limit",
                request.token_ids.len()
            )));
        }
        self.post("/step", request)
    }
}
