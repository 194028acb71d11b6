//! In-process OpenAI-compatible endpoint with programmable behaviour.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use base64::Engine as _;
use serde_json::{json, Value};

#[derive(Clone, Debug)]
pub enum Behaviour {
    /// Answer after the delay.
    Reply { text: String, delay: Duration },
    /// Hold the connection for this long, then answer.
    Stall(Duration),
    /// Respond with this status code.
    Status(u16),
}

#[derive(Default)]
pub struct Stub {
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    /// Image widths seen, one entry per request.
    pub hits: Mutex<Vec<u32>>,
    pub auth: Mutex<Vec<Option<String>>>,
    /// Behaviour per image width; widths absent here get the default reply.
    pub script: Mutex<HashMap<u32, Behaviour>>,
    pub default_delay: Mutex<Duration>,
}

impl Stub {
    pub fn set(&self, width: u32, behaviour: Behaviour) {
        self.script.lock().unwrap().insert(width, behaviour);
    }

    pub fn hits_for(&self, width: u32) -> usize {
        self.hits.lock().unwrap().iter().filter(|&&w| w == width).count()
    }

    pub fn total_hits(&self) -> usize {
        self.hits.lock().unwrap().len()
    }

    pub fn max_concurrency(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

fn image_width(body: &Value) -> u32 {
    let url = body.pointer("/messages/0/content/1/image_url/url").and_then(Value::as_str).unwrap_or("");
    let b64 = url.split_once("base64,").map(|(_, b)| b).unwrap_or("");
    let bytes = base64::engine::general_purpose::STANDARD.decode(b64).unwrap_or_default();
    mdbench_gateway::png_dimensions(&bytes).map(|(w, _)| w).unwrap_or(0)
}

async fn completions(
    State(stub): State<Arc<Stub>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let now = stub.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stub.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let width = image_width(&body);
    stub.hits.lock().unwrap().push(width);
    stub.auth.lock().unwrap().push(headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_owned));
    let behaviour = stub.script.lock().unwrap().get(&width).cloned().unwrap_or_else(|| Behaviour::Reply {
        text: format!("page {width}"),
        delay: *stub.default_delay.lock().unwrap(),
    });
    let reply = |text: String| Json(json!({"choices": [{"message": {"role": "assistant", "content": text}}]}));
    let response = match behaviour {
        Behaviour::Reply { text, delay } => {
            tokio::time::sleep(delay).await;
            (StatusCode::OK, reply(text))
        }
        Behaviour::Stall(delay) => {
            tokio::time::sleep(delay).await;
            (StatusCode::OK, reply("late".into()))
        }
        Behaviour::Status(code) => {
            (StatusCode::from_u16(code).unwrap(), Json(json!({"error": {"message": "stub failure"}})))
        }
    };
    stub.in_flight.fetch_sub(1, Ordering::SeqCst);
    response
}

/// Starts the stub on an ephemeral port and returns its `/v1` base URL.
pub async fn serve(stub: Arc<Stub>) -> String {
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(stub);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1")
}

/// Minimal grayscale PNG of the given size.
pub fn png_bytes(width: u32, height: u32) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().unwrap();
        writer.write_image_data(&vec![255u8; (width * height) as usize]).unwrap();
    }
    out
}

/// Writes `n` fake "PDFs" that are PNGs of width `10 + i`, for a `cp` rasterizer.
pub fn fake_pdfs(dir: &Path, n: usize) -> Vec<PathBuf> {
    (0..n)
        .map(|i| {
            let path = dir.join(format!("doc{i:02}.pdf"));
            std::fs::write(&path, png_bytes(10 + i as u32, 4)).unwrap();
            path
        })
        .collect()
}
