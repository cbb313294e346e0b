//! Newline-delimited JSON scorer protocol.
//!
//! Request lines are `{"id": int, "a": str, "la": str, "b": str, "lb": str}`,
//! response lines `{"id": int, "score": float}` or `{"id": int, "error": str}`.
//! Responses may arrive in any order; ids carry the correlation. Unknown
//! fields are ignored on both sides.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PairInput, Scorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: u64,
    pub a: String,
    pub la: String,
    pub b: String,
    pub lb: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Client for a scoring service speaking the JSON-lines protocol over TCP.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    addr: String,
    timeout: Duration,
    batch_size: usize,
    max_in_flight: usize,
}

impl RemoteScorer {
    pub fn new(addr: impl Into<String>) -> Self {
        RemoteScorer {
            addr: addr.into(),
            timeout: Duration::from_secs(30),
            batch_size: 64,
            max_in_flight: 1,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    fn connect(&self, ids: &[u64]) -> Result<TcpStream> {
        let transport = |message: String| Error::Transport {
            ids: ids.to_vec(),
            message,
        };
        let addrs = self
            .addr
            .to_socket_addrs()
            .map_err(|e| transport(format!("cannot resolve {}: {e}", self.addr)))?;
        let mut last = None;
        for a in addrs {
            match TcpStream::connect_timeout(&a, self.timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(self.timeout))
                        .and_then(|_| s.set_write_timeout(Some(self.timeout)))
                        .map_err(|e| transport(e.to_string()))?;
                    return Ok(s);
                }
                Err(e) => last = Some(e),
            }
        }
        Err(transport(match last {
            Some(e) => format!("cannot connect to {}: {e}", self.addr),
            None => format!("no addresses for {}", self.addr),
        }))
    }

    fn score_chunk(&self, first_id: u64, pairs: &[PairInput]) -> Result<Vec<f64>> {
        let ids: Vec<u64> = (first_id..first_id + pairs.len() as u64).collect();
        let transport = |message: String| Error::Transport {
            ids: ids.clone(),
            message,
        };
        let stream = self.connect(&ids)?;
        let mut writer = BufWriter::new(stream.try_clone().map_err(|e| transport(e.to_string()))?);
        for (id, p) in ids.iter().zip(pairs) {
            let req = ScoreRequest {
                id: *id,
                a: p.a.clone(),
                la: p.la.clone(),
                b: p.b.clone(),
                lb: p.lb.clone(),
            };
            serde_json::to_writer(&mut writer, &req).map_err(|e| transport(e.to_string()))?;
            writer.write_all(b"\n").map_err(|e| transport(e.to_string()))?;
        }
        writer.flush().map_err(|e| transport(e.to_string()))?;

        let mut pending: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut scores = vec![0.0; pairs.len()];
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        while !pending.is_empty() {
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| transport(e.to_string()))?;
            if n == 0 {
                let mut missing: Vec<u64> = pending.keys().copied().collect();
                missing.sort_unstable();
                return Err(Error::Transport {
                    ids: missing,
                    message: "connection closed before all responses arrived".into(),
                });
            }
            if line.trim().is_empty() {
                continue;
            }
            let resp: ScoreResponse =
                serde_json::from_str(&line).map_err(|e| transport(format!("malformed response: {e}")))?;
            let Some(id) = resp.id else {
                return Err(transport(format!(
                    "service error: {}",
                    resp.error.unwrap_or_else(|| "response without id".into())
                )));
            };
            let Some(slot) = pending.remove(&id) else {
                continue;
            };
            match (resp.score, resp.error) {
                (_, Some(err)) => {
                    return Err(Error::Transport {
                        ids: vec![id],
                        message: format!("service error: {err}"),
                    })
                }
                (Some(s), None) if (0.0..=1.0).contains(&s) => scores[slot] = s,
                (s, None) => {
                    return Err(Error::Transport {
                        ids: vec![id],
                        message: format!("invalid score {s:?}"),
                    })
                }
            }
        }
        Ok(scores)
    }
}

impl Scorer for RemoteScorer {
    fn id(&self) -> String {
        format!("remote:{}", self.addr)
    }

    fn score_batch(&self, pairs: &[PairInput]) -> Result<Vec<f64>> {
        let chunks: Vec<(u64, &[PairInput])> = pairs
            .chunks(self.batch_size)
            .enumerate()
            .map(|(i, c)| ((i * self.batch_size) as u64, c))
            .collect();
        let mut out = Vec::with_capacity(pairs.len());
        for wave in chunks.chunks(self.max_in_flight) {
            if wave.len() == 1 {
                out.extend(self.score_chunk(wave[0].0, wave[0].1)?);
                continue;
            }
            let results: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|(first, chunk)| s.spawn(move || self.score_chunk(*first, chunk)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("scorer thread panicked"))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}

/// Answers one request line with one response line using `scorer`.
/// Malformed input yields an error response rather than a failure.
pub fn handle_request_line(line: &str, scorer: &dyn Scorer) -> ScoreResponse {
    let req: ScoreRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64));
            return ScoreResponse {
                id,
                score: None,
                error: Some(format!("malformed request: {e}")),
            };
        }
    };
    let pair = PairInput {
        a: req.a,
        la: req.la,
        b: req.b,
        lb: req.lb,
    };
    match scorer.score_batch(std::slice::from_ref(&pair)) {
        Ok(s) => ScoreResponse {
            id: Some(req.id),
            score: s.first().copied(),
            error: None,
        },
        Err(e) => ScoreResponse {
            id: Some(req.id),
            score: None,
            error: Some(e.to_string()),
        },
    }
}

/// Serves the protocol on one stream until the peer closes it.
pub fn serve_stream<R: BufRead, W: Write>(reader: R, mut writer: W, scorer: &dyn Scorer) -> Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_request_line(&line, scorer);
        serde_json::to_writer(&mut writer, &resp)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
