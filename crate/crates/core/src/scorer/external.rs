//! Client side of the external-scorer protocol: a child process that speaks
//! [`protocol`](super::protocol) records over its standard input and output.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{Request, Response, ScoreItem, TrainItem, PROTOCOL_VERSION};
use super::{Prompt, Scorer};
use crate::corpus::QaInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExternalOptions {
    pub handshake_timeout: Duration,
    /// Per score/train/save/load round trip.
    pub batch_timeout: Duration,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        ExternalOptions {
            handshake_timeout: Duration::from_secs(60),
            batch_timeout: Duration::from_secs(300),
        }
    }
}

pub struct ExternalScorer {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    trainable: bool,
    options: ExternalOptions,
    next_id: u64,
}

impl std::fmt::Debug for ExternalScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalScorer")
            .field("command", &self.command)
            .field("pid", &self.child.id())
            .field("trainable", &self.trainable)
            .finish()
    }
}

/// Spawns `command_line` through `sh -c` and performs the handshake.
pub fn external_connect(command_line: &str, options: ExternalOptions) -> Result<ExternalScorer> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command_line)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|source| Error::Spawn {
            command: command_line.to_string(),
            source,
        })?;
    let stdin = child.stdin.take();
    let stdout = child.stdout.take().expect("stdout is piped");

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    let mut scorer = ExternalScorer {
        command: command_line.to_string(),
        child,
        stdin,
        lines: rx,
        trainable: false,
        options,
        next_id: 0,
    };
    scorer.send(&Request::Hello {
        version: PROTOCOL_VERSION,
    })?;
    match scorer.recv(options.handshake_timeout, "handshake")? {
        Response::Hello { version, trainable } => {
            if version != u64::from(PROTOCOL_VERSION) {
                return Err(Error::VersionMismatch {
                    expected: PROTOCOL_VERSION,
                    got: version,
                });
            }
            scorer.trainable = trainable;
            Ok(scorer)
        }
        other => Err(Error::Protocol(format!(
            "expected hello reply, got {:?}",
            other.kind()
        ))),
    }
}

impl ExternalScorer {
    pub fn command(&self) -> &str {
        &self.command
    }

    fn send(&mut self, req: &Request) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Protocol("adapter input already closed".into()))?;
        let mut line = serde_json::to_vec(req).expect("requests serialize");
        line.push(b'\n');
        stdin
            .write_all(&line)
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::Protocol(format!("writing to adapter: {e}")))
    }

    fn recv(&mut self, timeout: Duration, what: &'static str) -> Result<Response> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(left) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(Error::Protocol(format!("reading from adapter: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Timeout {
                        what,
                        secs: timeout.as_secs(),
                    })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Protocol("adapter closed its output".into()))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return match serde_json::from_str::<Response>(&line) {
                Ok(Response::Error { message }) => Err(Error::Adapter(message)),
                Ok(resp) => Ok(resp),
                Err(e) => Err(Error::Protocol(format!("malformed reply {line:?}: {e}"))),
            };
        }
    }

    fn round_trip(&mut self, req: &Request, what: &'static str) -> Result<Response> {
        self.send(req)?;
        self.recv(self.options.batch_timeout, what)
    }

    fn fresh_ids(&mut self, n: usize) -> Vec<String> {
        let ids = (self.next_id..self.next_id + n as u64).map(|i| i.to_string()).collect();
        self.next_id += n as u64;
        ids
    }

    fn expect_ok(&mut self, req: Request) -> Result<()> {
        match self.round_trip(&req, "checkpoint")? {
            Response::Ok => Ok(()),
            other => Err(Error::Protocol(format!("expected ok, got {:?}", other.kind()))),
        }
    }
}

impl Scorer for ExternalScorer {
    fn score_batch(&mut self, prompts: &[Prompt<'_>]) -> Result<Vec<f64>> {
        if prompts.is_empty() {
            return Ok(Vec::new());
        }
        let ids = self.fresh_ids(prompts.len());
        let items = ids
            .iter()
            .zip(prompts)
            .map(|(id, p)| ScoreItem {
                id: id.clone(),
                context: p.context.to_string(),
                question: p.question.to_string(),
            })
            .collect();
        let results = match self.round_trip(&Request::Score { items }, "scores")? {
            Response::Scores { items } => items,
            other => return Err(Error::Protocol(format!("expected scores, got {:?}", other.kind()))),
        };
        if results.len() != ids.len() {
            return Err(Error::Protocol(format!(
                "sent {} items, received {} scores",
                ids.len(),
                results.len()
            )));
        }
        ids.iter()
            .zip(results)
            .map(|(id, r)| {
                let got = r.id.ok_or_else(|| Error::Protocol("missing id in score reply".into()))?;
                if &got != id {
                    return Err(Error::Protocol(format!("id mismatch: expected {id:?}, got {got:?}")));
                }
                match r.p_yes {
                    Some(p) if (0.0..=1.0).contains(&p) => Ok(p),
                    Some(p) => Err(Error::Protocol(format!("probability out of range: {p} for id {id:?}"))),
                    None => Err(Error::Protocol(format!("missing p_yes for id {id:?}"))),
                }
            })
            .collect()
    }

    fn train_batch(&mut self, batch: &[QaInstance]) -> Result<f64> {
        if !self.trainable {
            return Err(Error::Adapter("adapter declared itself not trainable".into()));
        }
        let ids = self.fresh_ids(batch.len());
        let items = ids
            .into_iter()
            .zip(batch)
            .map(|(id, q)| TrainItem {
                id,
                context: q.context.clone(),
                question: q.question.clone(),
                answer: q.answer,
            })
            .collect();
        match self.round_trip(&Request::Train { items }, "train reply")? {
            Response::Trained { loss } => Ok(loss),
            other => Err(Error::Protocol(format!("expected trained, got {:?}", other.kind()))),
        }
    }

    fn save(&mut self, path: &Path) -> Result<()> {
        self.expect_ok(Request::Save {
            path: path.to_string_lossy().into_owned(),
        })
    }

    fn load(&mut self, path: &Path) -> Result<()> {
        self.expect_ok(Request::Load {
            path: path.to_string_lossy().into_owned(),
        })
    }

    fn is_trainable(&self) -> bool {
        self.trainable
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        // Closing stdin asks the adapter to exit; give it a moment, then kill.
        self.stdin.take();
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(_) => break,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
