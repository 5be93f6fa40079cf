//! A minimal in-process HTTP server speaking the remote scorer protocol.
//!
//! Used by the client's contract tests and the examples, and handy for
//! checking a real scoring service against the same expectations via
//! [`check_conformance`].

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

/// What the stub sends back for one `/score` request.
#[derive(Debug, Clone, PartialEq)]
pub struct StubReply {
    pub status: u16,
    pub body: String,
}

impl StubReply {
    pub fn scores(scores: &[f64]) -> StubReply {
        StubReply { status: 200, body: json!({ "scores": scores }).to_string() }
    }

    pub fn error(status: u16, message: &str) -> StubReply {
        StubReply { status, body: json!({ "error": message }).to_string() }
    }
}

type Handler = dyn Fn(usize, &[String]) -> StubReply + Send + Sync;

/// Serves `POST /score` and `GET /health` on `127.0.0.1` until dropped.
pub struct StubServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    /// `handler` receives the zero-based request number and the sentences.
    pub fn start<F>(handler: F) -> std::io::Result<StubServer>
    where
        F: Fn(usize, &[String]) -> StubReply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let requests = Arc::clone(&requests);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let handler = Arc::clone(&handler);
                    let requests = Arc::clone(&requests);
                    std::thread::spawn(move || {
                        let _ = serve_connection(stream, &*handler, &requests);
                    });
                }
            })
        };
        Ok(StubServer { addr, requests, stop, thread: Some(thread) })
    }

    /// Scores each sentence with `f`.
    pub fn scoring<F>(f: F) -> std::io::Result<StubServer>
    where
        F: Fn(&str) -> f64 + Send + Sync + 'static,
    {
        Self::start(move |_, sentences| StubReply::scores(&sentences.iter().map(|s| f(s)).collect::<Vec<_>>()))
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Number of `/score` requests received so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve_connection(stream: TcpStream, handler: &Handler, requests: &AtomicUsize) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line)? == 0 {
            return Ok(());
        }
        let mut parts = request_line.split_whitespace();
        let method = parts.next().unwrap_or("").to_string();
        let path = parts.next().unwrap_or("").to_string();

        let mut content_length = 0usize;
        let mut close = false;
        loop {
            let mut header = String::new();
            if reader.read_line(&mut header)? == 0 {
                return Ok(());
            }
            let header = header.trim_end();
            if header.is_empty() {
                break;
            }
            if let Some((name, value)) = header.split_once(':') {
                let name = name.trim().to_ascii_lowercase();
                if name == "content-length" {
                    content_length = value.trim().parse().unwrap_or(0);
                } else if name == "connection" && value.trim().eq_ignore_ascii_case("close") {
                    close = true;
                }
            }
        }
        let mut body = vec![0u8; content_length];
        reader.read_exact(&mut body)?;

        let reply = match (method.as_str(), path.as_str()) {
            ("GET", "/health") => StubReply { status: 200, body: json!({"model": "stub", "ready": true}).to_string() },
            ("POST", "/score") => match parse_sentences(&body) {
                Ok(sentences) => {
                    let n = requests.fetch_add(1, Ordering::SeqCst);
                    handler(n, &sentences)
                }
                Err(msg) => StubReply::error(400, &msg),
            },
            _ => StubReply::error(404, "not found"),
        };
        let status_text = match reply.status {
            200 => "OK",
            400 => "Bad Request",
            404 => "Not Found",
            413 => "Payload Too Large",
            500 => "Internal Server Error",
            503 => "Service Unavailable",
            _ => "Status",
        };
        write!(
            writer,
            "HTTP/1.1 {} {}\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
            reply.status,
            status_text,
            reply.body.len(),
            reply.body
        )?;
        writer.flush()?;
        if close {
            return Ok(());
        }
    }
}

fn parse_sentences(body: &[u8]) -> Result<Vec<String>, String> {
    let v: Value = serde_json::from_slice(body).map_err(|e| format!("invalid JSON: {e}"))?;
    let arr = v
        .get("sentences")
        .and_then(Value::as_array)
        .ok_or_else(|| "body must be an object with a `sentences` array".to_string())?;
    arr.iter()
        .map(|s| s.as_str().map(String::from).ok_or_else(|| "sentences must be strings".to_string()))
        .collect()
}

/// Runs the protocol contract against a live service.
///
/// Checks that a batch of two gets two finite scores, that an empty batch
/// gets an empty list, that a malformed body gets a 4xx with a JSON
/// `error` field, and that `/health` answers 200 with JSON.
pub fn check_conformance(base_url: &str) -> Result<(), String> {
    let base = base_url.trim_end_matches('/');
    let agent_config = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .http_status_as_error(false)
        .build();
    let agent = ureq::Agent::new_with_config(agent_config);
    let post = |body: &str| -> Result<(u16, String), String> {
        let mut resp = agent
            .post(&format!("{base}/score"))
            .header("content-type", "application/json")
            .send(body.as_bytes())
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok((status, text))
    };
    let scores_of = |text: &str| -> Result<Vec<f64>, String> {
        let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        v.get("scores")
            .and_then(Value::as_array)
            .ok_or("response lacks `scores`")?
            .iter()
            .map(|x| x.as_f64().filter(|f| f.is_finite()).ok_or_else(|| "non-finite score".to_string()))
            .collect()
    };

    let (status, text) = post(r#"{"sentences": ["hello world", "I don't have anything ."]}"#)?;
    if status != 200 {
        return Err(format!("batch of two: HTTP {status}"));
    }
    if scores_of(&text)?.len() != 2 {
        return Err("batch of two: expected two scores".into());
    }
    let (status, text) = post(r#"{"sentences": []}"#)?;
    if status != 200 || !scores_of(&text)?.is_empty() {
        return Err("empty batch: expected 200 and []".into());
    }
    let (status, text) = post("{not json")?;
    if !(400..500).contains(&status) {
        return Err(format!("malformed body: expected 4xx, got {status}"));
    }
    let v: Value = serde_json::from_str(&text).map_err(|e| format!("error body is not JSON: {e}"))?;
    if v.get("error").and_then(Value::as_str).is_none() {
        return Err("error body lacks `error` string".into());
    }
    let mut resp = agent.get(&format!("{base}/health")).call().map_err(|e| e.to_string())?;
    if resp.status().as_u16() != 200 {
        return Err("health: expected 200".into());
    }
    let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
    serde_json::from_str::<Value>(&text).map_err(|e| format!("health body is not JSON: {e}"))?;
    Ok(())
}
