use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ProviderConfig;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    candidates: Vec<String>,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embedding: Vec<f64>,
}

#[derive(Clone)]
pub(super) struct HttpClient {
    agent: ureq::Agent,
    endpoint: String,
    max_retries: u32,
}

impl HttpClient {
    pub(super) fn new(config: &ProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        HttpClient {
            agent,
            endpoint: config.endpoint.clone().unwrap_or_default(),
            max_retries: config.max_retries,
        }
    }

    pub(super) fn complete(&self, prompt: &str) -> Result<Vec<String>> {
        let resp: CompletionResponse = self.post(&CompletionRequest { prompt })?;
        Ok(resp.candidates)
    }

    pub(super) fn embed(&self, input: &str) -> Result<Vec<f64>> {
        let resp: EmbeddingResponse = self.post(&EmbeddingRequest { input })?;
        Ok(resp.embedding)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, body: &B) -> Result<T> {
        let attempts = self.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.agent.post(&self.endpoint).send_json(body) {
                Ok(mut resp) => {
                    return resp
                        .body_mut()
                        .read_json::<T>()
                        .map_err(|e| Error::Transport {
                            attempts: attempt,
                            message: format!("undecodable response: {e}"),
                        });
                }
                Err(e) => {
                    log::debug!("provider request attempt {attempt}/{attempts} failed: {e}");
                    last = e.to_string();
                }
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }
}
