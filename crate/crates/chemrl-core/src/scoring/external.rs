//! External scoring over a line-delimited child-process protocol.
//!
//! Requests are one JSON object per line, `{"id": <integer>, "smiles":
//! <string>}`; a blank line flushes a batch. Responses are `{"id":
//! <integer>, "score": <number>}` in any order. Timeouts and protocol
//! violations abort the run with a diagnostic.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ScoringError;

pub const DEFAULT_TIMEOUT_SECS: u64 = 30;

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    smiles: &'a str,
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    score: f64,
}

pub struct ExternalSession {
    child: Child,
    stdin: std::process::ChildStdin,
    lines: Receiver<Result<String, String>>,
    timeout: Duration,
    command: String,
}

impl ExternalSession {
    pub fn spawn(command: &[String], timeout: Duration) -> Result<ExternalSession, ScoringError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ScoringError::Config("external scorer command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| ScoringError::Config(format!("spawn `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                let msg = line.map_err(|e| e.to_string());
                if tx.send(msg).is_err() {
                    break;
                }
            }
        });
        Ok(ExternalSession {
            child,
            stdin,
            lines: rx,
            timeout,
            command: command.join(" "),
        })
    }

    /// Score a batch; the result vector is ordered by the input ids.
    pub fn score_batch(&mut self, items: &[(u64, &str)]) -> Result<Vec<f64>, ScoringError> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let mut payload = String::new();
        for (id, smiles) in items {
            payload.push_str(
                &serde_json::to_string(&Request { id: *id, smiles })
                    .expect("request serializes"),
            );
            payload.push('\n');
        }
        payload.push('\n'); // blank line flushes the batch
        self.stdin
            .write_all(payload.as_bytes())
            .and_then(|()| self.stdin.flush())
            .map_err(|e| {
                ScoringError::ExternalScorerProtocol(format!("{}: write: {e}", self.command))
            })?;

        let mut scores: HashMap<u64, f64> = HashMap::new();
        let deadline = std::time::Instant::now() + self.timeout;
        while scores.len() < items.len() {
            let remaining = deadline.saturating_duration_since(std::time::Instant::now());
            let line = match self.lines.recv_timeout(remaining) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => {
                    return Err(ScoringError::ExternalScorerProtocol(format!(
                        "{}: read: {e}",
                        self.command
                    )))
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(ScoringError::ExternalScorerTimeout {
                        secs: self.timeout.as_secs(),
                    })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ScoringError::ExternalScorerProtocol(format!(
                        "{}: scorer exited with {} of {} responses outstanding",
                        self.command,
                        items.len() - scores.len(),
                        items.len()
                    )))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let resp: Response = serde_json::from_str(&line).map_err(|e| {
                ScoringError::ExternalScorerProtocol(format!(
                    "{}: bad response line `{line}`: {e}",
                    self.command
                ))
            })?;
            if !items.iter().any(|(id, _)| *id == resp.id) {
                return Err(ScoringError::ExternalScorerProtocol(format!(
                    "{}: response for unknown id {}",
                    self.command, resp.id
                )));
            }
            scores.insert(resp.id, resp.score);
        }
        Ok(items
            .iter()
            .map(|(id, _)| scores[id].clamp(0.0, 1.0))
            .collect())
    }
}

impl Drop for ExternalSession {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
