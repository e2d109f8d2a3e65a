//! Shared test support: an independent agreement oracle implemented straight
//! from the pairwise definition (no coincidence matrix), and a bare-bones
//! scripted HTTP server for exercising the chat client over a real socket.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleScale {
    Nominal,
    Interval,
}

fn distance(scale: OracleScale, a: &str, b: &str) -> f64 {
    match scale {
        OracleScale::Nominal => {
            if a == b {
                0.0
            } else {
                1.0
            }
        }
        OracleScale::Interval => {
            let x: f64 = a.parse().expect("oracle interval label");
            let y: f64 = b.parse().expect("oracle interval label");
            (x - y) * (x - y)
        }
    }
}

/// Agreement coefficient computed directly from the definition: observed
/// disagreement is the per-unit average over all ordered rating pairs (each
/// unit weighted by 1/(m-1)); expected disagreement is the average over all
/// ordered pairs of the pooled ratings. Units with fewer than two ratings are
/// dropped. Returns `None` when no unit is pairable; `1.0` when the pooled
/// ratings carry no expected disagreement.
pub fn oracle_alpha(rows: &[Vec<Option<String>>], scale: OracleScale) -> Option<f64> {
    let pairable: Vec<Vec<&String>> = rows
        .iter()
        .map(|r| r.iter().flatten().collect::<Vec<_>>())
        .filter(|r| r.len() >= 2)
        .collect();
    if pairable.is_empty() {
        return None;
    }
    let n: usize = pairable.iter().map(|r| r.len()).sum();

    let mut observed = 0.0;
    for unit in &pairable {
        let m = unit.len();
        let mut unit_sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    unit_sum += distance(scale, unit[i], unit[j]);
                }
            }
        }
        observed += unit_sum / (m as f64 - 1.0);
    }
    let d_o = observed / n as f64;

    let pooled: Vec<&String> = pairable.iter().flatten().copied().collect();
    let mut expected = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                expected += distance(scale, pooled[i], pooled[j]);
            }
        }
    }
    let d_e = expected / (n as f64 * (n as f64 - 1.0));
    if d_e == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - d_o / d_e)
}

/// Builds a library reliability table from the same row layout the oracle
/// consumes, so both implementations see identical data.
pub fn table_from_rows(
    rows: &[Vec<Option<String>>],
    scale: prompt_stability::Scale,
) -> prompt_stability::ReliabilityTable {
    let mut t = prompt_stability::ReliabilityTable::new(scale);
    let coders = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    for c in 0..coders {
        t.add_coder(&format!("c{c}"));
    }
    for (u, row) in rows.iter().enumerate() {
        t.add_unit(&format!("u{u}"));
        for (c, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                t.set(&format!("u{u}"), &format!("c{c}"), v).unwrap();
            }
        }
    }
    t
}

// ---------------------------------------------------------------------------
// Scripted HTTP server
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MockResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl MockResponse {
    pub fn chat_reply(content: &str) -> Self {
        Self {
            status: 200,
            headers: vec![],
            body: serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": content}}]
            })
            .to_string(),
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            headers: vec![],
            body: "{}".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CapturedRequest {
    pub path: String,
    pub authorization: Option<String>,
    pub body: serde_json::Value,
}

/// One-thread HTTP/1.1 server replaying a fixed response script; once the
/// script is exhausted the final entry repeats. Every request body is
/// captured for inspection.
pub struct MockServer {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<CapturedRequest>>>,
}

impl MockServer {
    pub fn start(script: Vec<MockResponse>) -> Self {
        assert!(!script.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let captured = Arc::clone(&requests);
        std::thread::spawn(move || {
            let mut served = 0usize;
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let response = script[served.min(script.len() - 1)].clone();
                served += 1;
                if let Some(req) = handle(stream, &response) {
                    captured.lock().unwrap().push(req);
                }
            }
        });
        Self { addr, requests }
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<CapturedRequest> {
        self.requests.lock().unwrap().clone()
    }
}

fn handle(mut stream: TcpStream, response: &MockResponse) -> Option<CapturedRequest> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
    };
    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let mut lines = head.lines();
    let request_line = lines.next().unwrap_or_default();
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut content_length = 0usize;
    let mut authorization = None;
    for line in lines {
        let Some((name, value)) = line.split_once(':') else { continue };
        match name.to_ascii_lowercase().as_str() {
            "content-length" => content_length = value.trim().parse().unwrap_or(0),
            "authorization" => authorization = Some(value.trim().to_string()),
            _ => {}
        }
    }
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    let body_bytes = &buf[header_end..(header_end + content_length).min(buf.len())];
    let body: serde_json::Value =
        serde_json::from_slice(body_bytes).unwrap_or(serde_json::Value::Null);

    let mut headers = String::new();
    for (name, value) in &response.headers {
        headers.push_str(&format!("{name}: {value}\r\n"));
    }
    let reply = format!(
        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n{}Connection: close\r\n\r\n{}",
        response.status,
        response.body.len(),
        headers,
        response.body
    );
    stream.write_all(reply.as_bytes()).ok()?;
    stream.flush().ok()?;
    Some(CapturedRequest {
        path,
        authorization,
        body,
    })
}
