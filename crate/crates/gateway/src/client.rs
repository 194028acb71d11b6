use std::time::Instant;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use mdbench_core::runner::DocStatus;
use reqwest::StatusCode;
use serde_json::{json, Value};

use crate::config::ConvertConfig;

/// Outcome of converting one page image.
#[derive(Debug, Clone, PartialEq)]
pub struct PageConversion {
    pub markdown: String,
    pub status: DocStatus,
    /// Wall-clock time of the final attempt.
    pub elapsed_seconds: Option<f64>,
    pub attempts: u32,
    pub error: Option<String>,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

fn request_body(png: &[u8], config: &ConvertConfig) -> Value {
    let data_url = format!("data:image/png;base64,{}", STANDARD.encode(png));
    let mut body = json!({
        "model": config.model,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": config.prompt},
                {"type": "image_url", "image_url": {"url": data_url}},
            ],
        }],
    });
    if let Some(t) = config.temperature {
        body["temperature"] = json!(t);
    }
    if let Some(effort) = config.reasoning_effort {
        body["reasoning_effort"] = json!(effort);
    }
    body
}

/// Message text of the first choice; content may be a string or a list of parts.
fn message_text(response: &Value) -> Option<String> {
    let content = response.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            Some(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join(""))
        }
        Value::Null => Some(String::new()),
        _ => None,
    }
}

/// Drops a single code fence wrapping the whole answer.
fn unwrap_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return text;
    };
    let Some(body_start) = rest.find('\n') else {
        return text;
    };
    let info = &rest[..body_start];
    if !info.trim().chars().all(|c| c.is_ascii_alphanumeric()) {
        return text;
    }
    match rest[body_start + 1..].strip_suffix("```") {
        Some(body) if !body.contains("\n```") => body.trim_end_matches('\n'),
        _ => text,
    }
}

async fn attempt(client: &reqwest::Client, url: &str, body: &Value, api_key: Option<&str>) -> Result<String, Failure> {
    let mut request = client.post(url).json(body);
    if let Some(key) = api_key {
        request = request.bearer_auth(key);
    }
    let response = request.send().await.map_err(|e| Failure::Retryable(format!("request failed: {e}")))?;
    let status = response.status();
    let text = response.text().await.map_err(|e| Failure::Retryable(format!("reading body: {e}")))?;
    if !status.is_success() {
        let message = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
        let retryable = status.is_server_error()
            || status == StatusCode::TOO_MANY_REQUESTS
            || status == StatusCode::REQUEST_TIMEOUT;
        return Err(if retryable { Failure::Retryable(message) } else { Failure::Fatal(message) });
    }
    let parsed: Value =
        serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("response is not JSON: {e}")))?;
    message_text(&parsed)
        .map(|m| unwrap_fence(&m).to_owned())
        .ok_or_else(|| Failure::Fatal("response has no choices[0].message.content".into()))
}

/// Sends one page to the chat-completions endpoint.
///
/// Never fails: timeouts and exhausted retries are reported through
/// [`PageConversion::status`]. A timed-out attempt is not retried.
pub async fn convert_page(
    client: &reqwest::Client,
    png: &[u8],
    config: &ConvertConfig,
    api_key: Option<&str>,
) -> PageConversion {
    let url = config.completions_url();
    let body = request_body(png, config);
    let mut attempts = 0;
    loop {
        attempts += 1;
        let started = Instant::now();
        let outcome = tokio::time::timeout(config.timeout(), attempt(client, &url, &body, api_key)).await;
        let elapsed = started.elapsed().as_secs_f64();
        let failed = |status, error: String| PageConversion {
            markdown: String::new(),
            status,
            elapsed_seconds: Some(elapsed),
            attempts,
            error: Some(error),
        };
        match outcome {
            Ok(Ok(markdown)) => {
                return PageConversion {
                    markdown,
                    status: DocStatus::Ok,
                    elapsed_seconds: Some(elapsed),
                    attempts,
                    error: None,
                }
            }
            Err(_) => {
                return failed(DocStatus::Timeout, format!("no answer within {}s", config.timeout_seconds));
            }
            Ok(Err(Failure::Fatal(message))) => return failed(DocStatus::Error, message),
            Ok(Err(Failure::Retryable(message))) => {
                if attempts > config.max_retries {
                    return failed(DocStatus::Error, message);
                }
                let delay = config.backoff(attempts - 1);
                log::debug!("attempt {attempts} failed ({message}); retrying in {delay:?}");
                tokio::time::sleep(delay).await;
            }
        }
    }
}
