use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use crate::datamodel::SamplingConfig;

use super::{ClientError, ModelEndpoint, RetryPolicy};

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

pub(super) struct HttpBackend {
    client: Client,
    retry: RetryPolicy,
}

enum Attempt {
    Done(String),
    Transient(String),
}

fn is_transient(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

impl HttpBackend {
    pub(super) fn new(retry: RetryPolicy) -> Self {
        let client = Client::builder()
            .timeout(retry.timeout)
            .build()
            .expect("reqwest client builds with default TLS-free config");
        HttpBackend { client, retry }
    }

    /// One chat completion with `n = 1`, retrying transport errors, 429 and
    /// 5xx with exponential backoff.
    pub(super) fn chat(
        &self,
        endpoint: &ModelEndpoint,
        prompt: &str,
        sampling: &SamplingConfig,
        requests: &AtomicU64,
    ) -> Result<String, ClientError> {
        let url = format!("{}/v1/chat/completions", endpoint.base_url);
        let body = json!({
            "model": endpoint.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": sampling.temperature,
            "top_p": sampling.nucleus,
            "n": 1,
            "max_tokens": sampling.max_tokens,
        });
        let mut last = String::new();
        let attempts = self.retry.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            requests.fetch_add(1, Ordering::Relaxed);
            match self.attempt(endpoint, &url, &body)? {
                Attempt::Done(text) => return Ok(text),
                Attempt::Transient(reason) => last = reason,
            }
        }
        Err(ClientError::Unreachable {
            endpoint: endpoint.name.clone(),
            attempts,
            last,
        })
    }

    fn attempt(&self, endpoint: &ModelEndpoint, url: &str, body: &serde_json::Value) -> Result<Attempt, ClientError> {
        let mut request = self.client.post(url).json(body);
        if let Some(token) = &endpoint.auth_token {
            request = request.bearer_auth(token);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Transient(e.to_string())),
        };
        let status = response.status();
        let raw = match response.text() {
            Ok(t) => t,
            Err(e) => return Ok(Attempt::Transient(e.to_string())),
        };
        if is_transient(status) {
            return Ok(Attempt::Transient(format!("HTTP {}: {}", status.as_u16(), raw)));
        }
        if !status.is_success() {
            return Err(ClientError::Status {
                endpoint: endpoint.name.clone(),
                status: status.as_u16(),
                body: raw,
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&raw).map_err(|e| ClientError::Malformed {
            endpoint: endpoint.name.clone(),
            reason: e.to_string(),
            raw: raw.clone(),
        })?;
        match parsed.choices.into_iter().next() {
            Some(choice) => Ok(Attempt::Done(choice.message.content)),
            None => Err(ClientError::Malformed {
                endpoint: endpoint.name.clone(),
                reason: "no choices".into(),
                raw,
            }),
        }
    }
}
