//! Newline-delimited JSON wire protocol for out-of-process backends.
//!
//! Requests are one JSON object per line: {op, text, params, seed};
//! responses are {ok: true, payload} or {ok: false, error_kind, message}.
//! Vectors travel as arrays of decimal floats. `serve` drives any
//! in-process backend over a byte stream; `RemoteBackend` is the matching
//! client over a Unix socket or a child process's stdio.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{
    Backend, ContextualEncoding, PieceSpan, RawCandidateList, TokenAlignment, Window,
};
use crate::error::{Error, Result};
use crate::substitution::Candidate;
use crate::Scalar;

#[derive(Debug, Serialize, Deserialize)]
struct WireRequest {
    op: String,
    text: String,
    #[serde(default)]
    params: serde_json::Value,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireResponse {
    ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct EncodeParams {
    targets: Vec<usize>,
    #[serde(default)]
    window: Option<Window>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProposeParams {
    target: usize,
    dropout_p: f64,
    k: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GenerateParams {
    max_prompt_tokens: usize,
    max_new_tokens: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireAlignment {
    pieces: Vec<String>,
    spans: Vec<(usize, usize)>,
    continuation: Vec<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodePayload {
    alignment: WireAlignment,
    vectors: Vec<Vec<f64>>,
    attention: BTreeMap<String, Vec<f64>>,
    window_start: usize,
    truncated: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireCandidate {
    surface: String,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProposePayload {
    position: usize,
    candidates: Vec<WireCandidate>,
    backed_off: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct GeneratePayload {
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ToxicityPayload {
    logits: Vec<f64>,
}

fn error_kind(err: &Error) -> &'static str {
    match err.class() {
        crate::ErrorClass::Config => "config",
        crate::ErrorClass::Backend => match err {
            Error::Capability { .. } => "capability",
            _ => "transport",
        },
        crate::ErrorClass::Data => "data",
    }
}

fn to_f64<F: Scalar>(x: F) -> f64 {
    num_traits::ToPrimitive::to_f64(&x).expect("scalar converts to f64")
}

fn from_f64<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("f64 converts to scalar")
}

/// Serves a backend over a byte stream until EOF. Every request line gets
/// exactly one response line; malformed requests produce error responses
/// rather than terminating the loop.
pub fn serve<F: Scalar>(
    backend: &mut dyn Backend<F>,
    reader: impl Read,
    mut writer: impl Write,
) -> Result<()> {
    let reader = BufReader::new(reader);
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Transport(format!("read request: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<WireRequest>(&line) {
            Ok(req) => dispatch(backend, &req),
            Err(e) => WireResponse {
                ok: false,
                payload: None,
                error_kind: Some("data".to_string()),
                message: Some(format!("malformed request: {e}")),
            },
        };
        let mut out = serde_json::to_string(&response)
            .map_err(|e| Error::Transport(format!("encode response: {e}")))?;
        out.push('\n');
        writer
            .write_all(out.as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|e| Error::Transport(format!("write response: {e}")))?;
    }
    Ok(())
}

fn dispatch<F: Scalar>(backend: &mut dyn Backend<F>, req: &WireRequest) -> WireResponse {
    let result: Result<serde_json::Value> = (|| match req.op.as_str() {
        "encode" => {
            let params: EncodeParams = parse_params(&req.params)?;
            let (alignment, enc) = backend.encode(&req.text, &params.targets, params.window)?;
            let payload = EncodePayload {
                alignment: WireAlignment {
                    pieces: alignment.pieces,
                    spans: alignment.spans.iter().map(|s| (s.start, s.end)).collect(),
                    continuation: alignment.continuation,
                },
                vectors: enc
                    .vectors
                    .iter()
                    .map(|v| v.iter().map(|x| to_f64(*x)).collect())
                    .collect(),
                attention: enc
                    .attention
                    .iter()
                    .map(|(t, v)| (t.to_string(), v.iter().map(|x| to_f64(*x)).collect()))
                    .collect(),
                window_start: enc.window_start,
                truncated: enc.truncated,
            };
            Ok(serde_json::to_value(payload).expect("payload serializes"))
        }
        "propose" => {
            let params: ProposeParams = parse_params(&req.params)?;
            let raw = backend.propose(&req.text, params.target, params.dropout_p, params.k, req.seed)?;
            let payload = ProposePayload {
                position: raw.position,
                candidates: raw
                    .candidates
                    .iter()
                    .map(|c| WireCandidate {
                        surface: c.surface.clone(),
                        score: to_f64(c.score),
                    })
                    .collect(),
                backed_off: raw.backed_off,
            };
            Ok(serde_json::to_value(payload).expect("payload serializes"))
        }
        "generate" => {
            let params: GenerateParams = parse_params(&req.params)?;
            let text = backend.generate(
                &req.text,
                params.max_prompt_tokens,
                params.max_new_tokens,
                req.seed,
            )?;
            Ok(serde_json::to_value(GeneratePayload { text }).expect("payload serializes"))
        }
        "score_toxicity" => {
            let logits = backend.score_toxicity(&req.text)?;
            let payload = ToxicityPayload {
                logits: logits.iter().map(|x| to_f64(*x)).collect(),
            };
            Ok(serde_json::to_value(payload).expect("payload serializes"))
        }
        other => Err(Error::Config(format!("unknown wire op {other:?}"))),
    })();
    match result {
        Ok(payload) => WireResponse {
            ok: true,
            payload: Some(payload),
            error_kind: None,
            message: None,
        },
        Err(err) => WireResponse {
            ok: false,
            payload: None,
            error_kind: Some(error_kind(&err).to_string()),
            message: Some(err.to_string()),
        },
    }
}

fn parse_params<T: serde::de::DeserializeOwned>(value: &serde_json::Value) -> Result<T> {
    serde_json::from_value(value.clone())
        .map_err(|e| Error::Domain(format!("bad wire params: {e}")))
}

/// Client half of the wire protocol: drives a remote backend over any
/// request/response byte stream.
pub struct RemoteBackend {
    name: String,
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    /// Keeps an exec-spawned child alive (and reaps it on drop).
    child: Option<std::process::Child>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("name", &self.name)
            .finish()
    }
}

impl RemoteBackend {
    /// Connects to a wire server on a Unix-domain socket.
    pub fn connect_unix(path: &Path) -> Result<Self> {
        let stream = std::os::unix::net::UnixStream::connect(path)
            .map_err(|e| Error::Transport(format!("connect {}: {e}", path.display())))?;
        let write_half = stream
            .try_clone()
            .map_err(|e| Error::Transport(format!("clone socket: {e}")))?;
        Ok(RemoteBackend {
            name: format!("unix:{}", path.display()),
            reader: Box::new(BufReader::new(stream)),
            writer: Box::new(write_half),
            child: None,
        })
    }

    /// Spawns `command` (whitespace-split, no shell) and speaks the wire
    /// protocol over its stdin/stdout.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty exec endpoint".to_string()))?;
        let mut child = std::process::Command::new(program)
            .args(parts)
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .spawn()
            .map_err(|e| Error::Transport(format!("spawn {command:?}: {e}")))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| Error::Transport("child stdin unavailable".to_string()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::Transport("child stdout unavailable".to_string()))?;
        Ok(RemoteBackend {
            name: format!("exec:{command}"),
            reader: Box::new(BufReader::new(stdout)),
            writer: Box::new(stdin),
            child: Some(child),
        })
    }

    /// Builds a client over explicit reader/writer halves (tests).
    pub fn over_stream(
        name: &str,
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Self {
        RemoteBackend {
            name: name.to_string(),
            reader: Box::new(BufReader::new(reader)),
            writer: Box::new(writer),
            child: None,
        }
    }

    fn call(&mut self, req: &WireRequest) -> Result<serde_json::Value> {
        let mut line =
            serde_json::to_string(req).map_err(|e| Error::Transport(format!("encode: {e}")))?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Transport(format!("send to {}: {e}", self.name)))?;
        let mut response_line = String::new();
        let n = self
            .reader
            .read_line(&mut response_line)
            .map_err(|e| Error::Transport(format!("receive from {}: {e}", self.name)))?;
        if n == 0 {
            return Err(Error::Transport(format!(
                "backend {} closed the connection",
                self.name
            )));
        }
        let response: WireResponse = serde_json::from_str(&response_line)
            .map_err(|e| Error::Transport(format!("malformed response: {e}")))?;
        if response.ok {
            response
                .payload
                .ok_or_else(|| Error::Transport("ok response without payload".to_string()))
        } else {
            let message = response.message.unwrap_or_default();
            Err(match response.error_kind.as_deref() {
                Some("config") => Error::Config(message),
                Some("capability") => Error::Capability {
                    backend: self.name.clone(),
                    op: message,
                },
                Some("data") => Error::Domain(message),
                _ => Error::Transport(message),
            })
        }
    }
}

impl Drop for RemoteBackend {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl<F: Scalar> Backend<F> for RemoteBackend {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn encode(
        &mut self,
        text: &str,
        targets: &[usize],
        window: Option<Window>,
    ) -> Result<(TokenAlignment, ContextualEncoding<F>)> {
        let payload = self.call(&WireRequest {
            op: "encode".to_string(),
            text: text.to_string(),
            params: serde_json::to_value(EncodeParams {
                targets: targets.to_vec(),
                window,
            })
            .expect("params serialize"),
            seed: 0,
        })?;
        let payload: EncodePayload = serde_json::from_value(payload)
            .map_err(|e| Error::Transport(format!("bad encode payload: {e}")))?;
        let alignment = TokenAlignment {
            pieces: payload.alignment.pieces,
            spans: payload
                .alignment
                .spans
                .iter()
                .map(|&(start, end)| PieceSpan { start, end })
                .collect(),
            continuation: payload.alignment.continuation,
        };
        let mut attention = BTreeMap::new();
        for (t, profile) in payload.attention {
            let t: usize = t
                .parse()
                .map_err(|_| Error::Transport(format!("bad attention key {t:?}")))?;
            attention.insert(t, profile.into_iter().map(from_f64).collect());
        }
        Ok((
            alignment,
            ContextualEncoding {
                vectors: payload
                    .vectors
                    .into_iter()
                    .map(|v| v.into_iter().map(from_f64).collect())
                    .collect(),
                attention,
                window_start: payload.window_start,
                truncated: payload.truncated,
            },
        ))
    }

    fn propose(
        &mut self,
        text: &str,
        target: usize,
        dropout_p: f64,
        k: usize,
        seed: u64,
    ) -> Result<RawCandidateList<F>> {
        let payload = self.call(&WireRequest {
            op: "propose".to_string(),
            text: text.to_string(),
            params: serde_json::to_value(ProposeParams {
                target,
                dropout_p,
                k,
            })
            .expect("params serialize"),
            seed,
        })?;
        let payload: ProposePayload = serde_json::from_value(payload)
            .map_err(|e| Error::Transport(format!("bad propose payload: {e}")))?;
        Ok(RawCandidateList {
            position: payload.position,
            candidates: payload
                .candidates
                .into_iter()
                .map(|c| Candidate {
                    surface: c.surface,
                    score: from_f64(c.score),
                })
                .collect(),
            backed_off: payload.backed_off,
        })
    }

    fn generate(
        &mut self,
        prompt: &str,
        max_prompt_tokens: usize,
        max_new_tokens: usize,
        seed: u64,
    ) -> Result<String> {
        let payload = self.call(&WireRequest {
            op: "generate".to_string(),
            text: prompt.to_string(),
            params: serde_json::to_value(GenerateParams {
                max_prompt_tokens,
                max_new_tokens,
            })
            .expect("params serialize"),
            seed,
        })?;
        let payload: GeneratePayload = serde_json::from_value(payload)
            .map_err(|e| Error::Transport(format!("bad generate payload: {e}")))?;
        Ok(payload.text)
    }

    fn score_toxicity(&mut self, text: &str) -> Result<Vec<F>> {
        let payload = self.call(&WireRequest {
            op: "score_toxicity".to_string(),
            text: text.to_string(),
            params: serde_json::Value::Null,
            seed: 0,
        })?;
        let payload: ToxicityPayload = serde_json::from_value(payload)
            .map_err(|e| Error::Transport(format!("bad toxicity payload: {e}")))?;
        Ok(payload.logits.into_iter().map(from_f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::stub::StubBackend;

    /// Stub served over a socketpair in a thread; client on the other end.
    fn remote_stub(flavor: Option<&'static str>) -> RemoteBackend {
        let (server, client) = std::os::unix::net::UnixStream::pair().unwrap();
        std::thread::spawn(move || {
            let mut backend = StubBackend::with_flavor(flavor);
            let write_half = server.try_clone().unwrap();
            let _ = serve::<f64>(&mut backend, server, write_half);
        });
        let write_half = client.try_clone().unwrap();
        RemoteBackend::over_stream("test-remote", client, write_half)
    }

    #[test]
    fn remote_encode_equals_in_process_stub() {
        let mut remote = remote_stub(None);
        let mut local = StubBackend::new();
        let text = "you are a stupid dweeb .";
        let (ra, re): (_, ContextualEncoding<f64>) = remote.encode(text, &[3, 4], None).unwrap();
        let (la, le) = local.encode(text, &[3, 4], None).unwrap();
        assert_eq!(ra, la);
        assert_eq!(re, le);
    }

    #[test]
    fn remote_propose_and_generate_and_toxicity_roundtrip() {
        let mut remote = remote_stub(None);
        let mut local = StubBackend::new();
        let rp: RawCandidateList<f64> = remote.propose("you are so stupid", 3, 0.2, 8, 5).unwrap();
        let lp = local.propose("you are so stupid", 3, 0.2, 8, 5).unwrap();
        assert_eq!(rp, lp);
        let rg = Backend::<f64>::generate(&mut remote, "You are a fool", 30, 70, 1).unwrap();
        let lg = Backend::<f64>::generate(&mut local, "You are a fool", 30, 70, 1).unwrap();
        assert_eq!(rg, lg);
        let rt: Vec<f64> = remote.score_toxicity("you stupid fool").unwrap();
        let lt: Vec<f64> = local.score_toxicity("you stupid fool").unwrap();
        assert_eq!(rt, lt);
    }

    #[test]
    fn remote_errors_map_back_to_kinds() {
        let mut remote = remote_stub(Some("nogen"));
        let err = Backend::<f64>::generate(&mut remote, "x y", 30, 70, 1).unwrap_err();
        assert!(matches!(err, Error::Capability { .. }), "{err:?}");
        let err = Backend::<f64>::encode(&mut remote, "a b", &[9], None).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err:?}");
    }

    #[test]
    fn serve_answers_malformed_lines_without_dying() {
        let (server, client) = std::os::unix::net::UnixStream::pair().unwrap();
        std::thread::spawn(move || {
            let mut backend = StubBackend::new();
            let write_half = server.try_clone().unwrap();
            let _ = serve::<f64>(&mut backend, server, write_half);
        });
        let mut writer = client.try_clone().unwrap();
        let mut reader = BufReader::new(client);
        writer.write_all(b"this is not json\n").unwrap();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let resp: WireResponse = serde_json::from_str(&line).unwrap();
        assert!(!resp.ok);
        assert_eq!(resp.error_kind.as_deref(), Some("data"));
        // and the next request still works
        writer
            .write_all(b"{\"op\":\"score_toxicity\",\"text\":\"you fool\"}\n")
            .unwrap();
        line.clear();
        reader.read_line(&mut line).unwrap();
        let resp: WireResponse = serde_json::from_str(&line).unwrap();
        assert!(resp.ok);
    }

    #[test]
    fn unknown_op_is_config_error() {
        let mut remote = remote_stub(None);
        let err = remote
            .call(&WireRequest {
                op: "dance".to_string(),
                text: "x".to_string(),
                params: serde_json::Value::Null,
                seed: 0,
            })
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unix_socket_endpoint_connects() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backend.sock");
        let listener = std::os::unix::net::UnixListener::bind(&path).unwrap();
        std::thread::spawn(move || {
            if let Ok((stream, _)) = listener.accept() {
                let mut backend = StubBackend::new();
                let write_half = stream.try_clone().unwrap();
                let _ = serve::<f64>(&mut backend, stream, write_half);
            }
        });
        let mut remote: Box<dyn Backend<f64>> =
            crate::backend::connect(&format!("unix:{}", path.display())).unwrap();
        let logits = remote.score_toxicity("you stupid fool").unwrap();
        assert_eq!(logits.len(), 2);
    }
}
