//! Chat-completions client for OpenAI-compatible HTTP providers.
//!
//! Credentials come from an environment variable named in the provider
//! config, never from the config file itself.

use std::time::Duration;

use base64::Engine;
use serde::Deserialize;
use serde_json::json;

use super::{BackendFailure, BackendReply, ChatBackend, ChatRequest, FailureClass, ImageLocator, Usage};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, BackendFailure> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendFailure {
                class: FailureClass::Client,
                message: format!("building http client: {e}"),
            })?;
        Ok(HttpBackend {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
        })
    }

    fn user_content(request: &ChatRequest) -> Result<serde_json::Value, BackendFailure> {
        let Some(image) = &request.image else {
            return Ok(json!(request.prompt));
        };
        let url = match &image.locator {
            ImageLocator::Url(url) => url.clone(),
            ImageLocator::Path(path) => {
                let bytes = std::fs::read(path).map_err(|e| BackendFailure {
                    class: FailureClass::Client,
                    message: format!("reading image {}: {e}", path.display()),
                })?;
                let mime = match path.extension().and_then(|e| e.to_str()) {
                    Some("png") => "image/png",
                    Some("gif") => "image/gif",
                    Some("webp") => "image/webp",
                    _ => "image/jpeg",
                };
                format!(
                    "data:{mime};base64,{}",
                    base64::engine::general_purpose::STANDARD.encode(bytes)
                )
            }
        };
        Ok(json!([
            { "type": "text", "text": request.prompt },
            { "type": "image_url", "image_url": { "url": url } },
        ]))
    }
}

#[derive(Deserialize)]
struct ApiResponse {
    choices: Vec<ApiChoice>,
    #[serde(default)]
    usage: Option<ApiUsage>,
}

#[derive(Deserialize)]
struct ApiChoice {
    message: ApiMessage,
}

#[derive(Deserialize)]
struct ApiMessage {
    #[serde(default)]
    content: String,
}

#[derive(Deserialize)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub(super) fn classify_status(status: u16) -> FailureClass {
    match status {
        429 => FailureClass::RateLimited,
        500..=599 => FailureClass::Server,
        _ => FailureClass::Client,
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, model_id: &str, request: &ChatRequest) -> Result<BackendReply, BackendFailure> {
        let mut body = json!({
            "model": model_id,
            "messages": [{ "role": "user", "content": Self::user_content(request)? }],
            "n": request.n,
            "temperature": request.temperature,
            "top_p": request.top_p,
        });
        if let Some(max_tokens) = request.max_tokens {
            body["max_tokens"] = json!(max_tokens);
        }
        if let Some(stop) = &request.stop {
            body["stop"] = json!(stop);
        }

        let mut builder = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }

        let response = builder.send().map_err(|e| BackendFailure {
            class: FailureClass::Transport,
            message: format!("transport: {e}"),
        })?;

        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(BackendFailure {
                class: classify_status(status.as_u16()),
                message: format!("http {status}: {}", body.chars().take(300).collect::<String>()),
            });
        }

        let parsed: ApiResponse = response.json().map_err(|e| BackendFailure {
            class: FailureClass::Server,
            message: format!("malformed provider response: {e}"),
        })?;
        if parsed.choices.len() != request.n as usize {
            return Err(BackendFailure {
                class: FailureClass::Server,
                message: format!(
                    "provider returned {} completions for n={}",
                    parsed.choices.len(),
                    request.n
                ),
            });
        }
        let usage = parsed.usage.unwrap_or(ApiUsage {
            prompt_tokens: 0,
            completion_tokens: 0,
        });
        Ok(BackendReply {
            completions: parsed.choices.into_iter().map(|c| c.message.content).collect(),
            usage: Usage {
                input_tokens: usage.prompt_tokens,
                output_tokens: usage.completion_tokens,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classification() {
        assert_eq!(classify_status(429), FailureClass::RateLimited);
        assert_eq!(classify_status(500), FailureClass::Server);
        assert_eq!(classify_status(503), FailureClass::Server);
        assert_eq!(classify_status(401), FailureClass::Client);
        assert_eq!(classify_status(404), FailureClass::Client);
    }
}
