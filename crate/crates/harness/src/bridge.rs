//! Logit-stream bridge: JSON lines over stdio or TCP.
//!
//! An exporter that owns a real model opens a session with `hello`, sends
//! one `step` per decode position and closes with `end`. In sliced mode it
//! sends temperature-softmaxed posteriors already gathered at the final
//! layer's top-k ids; in full mode it sends raw logits for `depth` layers.
//! Step `id` draws from counter slot `id` of the session stream, so a
//! recorded session replays to identical tokens.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use led_core::led::{
    law_from_stack, led_step, sample_law, Branch, FilteredStack, LedConfig, LedDecision, StepLogits,
};
use led_core::prob::{LogitRow, RandomStream};
use led_core::sampler::step_stream;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sliced,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub version: u32,
    pub mode: Mode,
    pub vocab: usize,
    pub depth: usize,
    pub k: usize,
    pub temperature: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub id: u64,
    pub think: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topk_ids: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_probs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_top1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits_b64: Option<String>,
}

/// Client-to-server messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Hello(Hello),
    Step(Step),
    End,
}

/// Server-to-client messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Ready,
    Token {
        id: u64,
        token: usize,
        branch: Branch,
        depth: usize,
    },
    Bye {
        steps: u64,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        code: String,
        message: String,
    },
}

fn error(id: Option<u64>, code: &str, message: impl Into<String>) -> Response {
    Response::Error {
        id,
        code: code.into(),
        message: message.into(),
    }
}

/// Encodes final-first `rows` of f32 logits for a full-mode step.
pub fn encode_logits(rows: &[Vec<f32>]) -> String {
    let bytes: Vec<u8> = rows
        .iter()
        .flatten()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    STANDARD.encode(bytes)
}

struct Active {
    hello: Hello,
    config: LedConfig,
    rng: RandomStream,
    last_id: Option<u64>,
}

/// Protocol state for one connection.
pub struct Session {
    base: LedConfig,
    active: Option<Active>,
    steps: u64,
    closed: bool,
}

impl Session {
    /// `base` supplies every LED option the hello message does not carry.
    pub fn new(base: LedConfig) -> Self {
        Self {
            base,
            active: None,
            steps: 0,
            closed: false,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn handle_line(&mut self, line: &str) -> Response {
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return error(None, "parse", e.to_string()),
        };
        let id = value.get("id").and_then(Value::as_u64);
        match value.get("type").and_then(Value::as_str) {
            Some("hello" | "step" | "end") => {}
            Some(other) => {
                return error(
                    id,
                    "unknown_type",
                    format!("unknown message type {other:?}"),
                )
            }
            None => return error(id, "parse", "message has no type"),
        }
        match serde_json::from_value::<Request>(value) {
            Ok(req) => self.handle(req),
            Err(e) => error(id, "invalid", e.to_string()),
        }
    }

    pub fn handle(&mut self, request: Request) -> Response {
        if self.closed {
            return error(None, "closed", "session is closed");
        }
        match request {
            Request::Hello(h) => self.hello(h),
            Request::Step(s) => {
                let id = s.id;
                match self.step(s) {
                    Ok(d) => {
                        self.steps += 1;
                        Response::Token {
                            id,
                            token: d.token_id,
                            branch: d.branch,
                            depth: d.selected_depth,
                        }
                    }
                    Err((code, msg)) => error(Some(id), code, msg),
                }
            }
            Request::End => {
                self.closed = true;
                Response::Bye { steps: self.steps }
            }
        }
    }

    fn hello(&mut self, h: Hello) -> Response {
        if self.active.is_some() {
            return error(None, "protocol", "session already started");
        }
        if h.version != PROTOCOL_VERSION {
            self.closed = true;
            return error(
                None,
                "version",
                format!(
                    "protocol version {} is not supported (expected {PROTOCOL_VERSION})",
                    h.version
                ),
            );
        }
        if h.vocab == 0 || h.depth == 0 {
            return error(None, "invalid", "vocab and depth must be positive");
        }
        if h.k > h.vocab {
            return error(
                None,
                "invalid",
                format!("k = {} exceeds vocab {}", h.k, h.vocab),
            );
        }
        let config = LedConfig {
            k: h.k,
            depth: h.depth,
            temperature: h.temperature,
            ..self.base.clone()
        };
        if let Err(e) = config.validate() {
            return error(None, "invalid", e.to_string());
        }
        self.active = Some(Active {
            rng: RandomStream::new(h.seed, 0),
            hello: h,
            config,
            last_id: None,
        });
        Response::Ready
    }

    fn step(&mut self, s: Step) -> Result<LedDecision, (&'static str, String)> {
        let a = self
            .active
            .as_mut()
            .ok_or(("protocol", "step before hello".to_string()))?;
        if a.last_id.is_some_and(|last| s.id <= last) {
            return Err((
                "order",
                format!("step id {} does not follow {}", s.id, a.last_id.unwrap()),
            ));
        }
        let mut rng = step_stream(a.rng, s.id);
        let decision = match a.hello.mode {
            Mode::Sliced => sliced(a, &s, &mut rng),
            Mode::Full => full(a, &s, &mut rng),
        }?;
        a.last_id = Some(s.id);
        Ok(decision)
    }
}

fn invalid(msg: impl Into<String>) -> (&'static str, String) {
    ("invalid", msg.into())
}

fn sliced(
    a: &Active,
    s: &Step,
    rng: &mut RandomStream,
) -> Result<LedDecision, (&'static str, String)> {
    if s.logits_b64.is_some() {
        return Err(invalid("logits_b64 is not accepted in sliced mode"));
    }
    let ids = s
        .topk_ids
        .clone()
        .ok_or_else(|| invalid("missing topk_ids"))?;
    let rows = s
        .layer_probs
        .clone()
        .ok_or_else(|| invalid("missing layer_probs"))?;
    let top1 = s.final_top1.ok_or_else(|| invalid("missing final_top1"))?;
    let k = a.config.k;
    if ids.len() != k {
        return Err(invalid(format!("expected {k} topk_ids, got {}", ids.len())));
    }
    if let Some(id) = ids.iter().find(|&&id| id >= a.hello.vocab) {
        return Err(invalid(format!(
            "token id {id} outside vocab {}",
            a.hello.vocab
        )));
    }
    let mut seen = ids.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != k {
        return Err(invalid("topk_ids repeat a token"));
    }
    if rows.is_empty() || rows.len() > a.hello.depth {
        return Err(invalid(format!(
            "expected 1..={} layer rows, got {}",
            a.hello.depth,
            rows.len()
        )));
    }
    if !(0.0..=1.0).contains(&top1) {
        return Err(invalid(format!("final_top1 {top1} outside [0, 1]")));
    }
    let stack = FilteredStack::from_gathered(ids, rows, a.config.eps)
        .map_err(|e| invalid(e.to_string()))?;
    let law = law_from_stack(&stack, top1, s.think, a.config.depth, &a.config);
    Ok(sample_law(law, s.id, s.think, &a.config, rng))
}

fn full(
    a: &Active,
    s: &Step,
    rng: &mut RandomStream,
) -> Result<LedDecision, (&'static str, String)> {
    if s.topk_ids.is_some() || s.layer_probs.is_some() || s.final_top1.is_some() {
        return Err(invalid("sliced fields are not accepted in full mode"));
    }
    let encoded = s
        .logits_b64
        .as_deref()
        .ok_or_else(|| invalid("missing logits_b64"))?;
    let bytes = STANDARD
        .decode(encoded)
        .map_err(|e| invalid(format!("bad base64: {e}")))?;
    let row_bytes = 4 * a.hello.vocab;
    if bytes.is_empty() || bytes.len() % row_bytes != 0 || bytes.len() / row_bytes > a.hello.depth {
        return Err(invalid(format!(
            "logits hold {} bytes, expected 1..={} rows of {row_bytes}",
            bytes.len(),
            a.hello.depth
        )));
    }
    let rows = bytes
        .chunks(row_bytes)
        .map(|chunk| {
            let vals: Vec<f32> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            LogitRow::from_f32(&vals)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| invalid(e.to_string()))?;
    let step = StepLogits::new(rows, s.think, s.id).map_err(|e| invalid(e.to_string()))?;
    led_step(&step, &a.config, rng).map_err(|e| invalid(e.to_string()))
}

/// Runs one session to completion; returns the number of answered steps.
pub fn run_session<R: BufRead, W: Write>(
    base: &LedConfig,
    reader: R,
    mut writer: W,
) -> io::Result<u64> {
    let mut session = Session::new(base.clone());
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = session.handle_line(&line);
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(session.steps())
}

fn handle_connection(base: &LedConfig, stream: TcpStream) -> io::Result<u64> {
    let reader = BufReader::new(stream.try_clone()?);
    run_session(base, reader, stream)
}

/// Accepts connections, one thread per session. Stops accepting after
/// `max_sessions` connections when given, and waits for those sessions.
pub fn serve_tcp(
    listener: TcpListener,
    base: LedConfig,
    max_sessions: Option<usize>,
) -> io::Result<()> {
    let mut handles = Vec::new();
    for (n, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let base = base.clone();
        handles.push(thread::spawn(move || {
            if let Err(e) = handle_connection(&base, stream) {
                eprintln!("session ended with an i/o error: {e}");
            }
        }));
        if max_sessions.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}
