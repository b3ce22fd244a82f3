//! Deterministic stand-in for an external scorer, used to exercise the
//! harness side of the protocol. `ok` scores by question/context token overlap.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, Write};

use clap::{Parser, ValueEnum};

use metatune::scorer::native::tokenize;
use metatune::scorer::protocol::{Request, Response, ScoreItem, ScoreResult, PROTOCOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ok,
    /// Always 0.5.
    Constant,
    /// Answers the handshake with a non-JSON line.
    Garbage,
    /// Claims protocol version 99.
    Version99,
    /// Reports p_yes = 1.3.
    OutOfRange,
    /// Returns score items in reverse order.
    Permute,
    /// Omits ids from score items.
    MissingId,
    /// Never replies to anything.
    Silent,
    /// Completes the handshake, then never replies.
    HangAfterHello,
    /// Replies to every score request with an error record.
    Error,
    /// Declares itself not trainable.
    Untrainable,
}

#[derive(Debug, Parser)]
struct Cli {
    #[arg(long, value_enum, default_value = "ok")]
    mode: Mode,
}

fn overlap(item: &ScoreItem) -> f64 {
    let q: HashSet<String> = tokenize(&item.question).into_iter().collect();
    if q.is_empty() {
        return 0.5;
    }
    let c: HashSet<String> = tokenize(&item.context).into_iter().collect();
    q.intersection(&c).count() as f64 / q.len() as f64
}

struct Stub {
    mode: Mode,
    train_calls: u64,
}

impl Stub {
    fn p_yes(&self, item: &ScoreItem) -> f64 {
        match self.mode {
            Mode::Constant => 0.5,
            Mode::OutOfRange => 1.3,
            _ => overlap(item),
        }
    }

    fn handle(&mut self, req: Request) -> Response {
        match req {
            Request::Hello { .. } => Response::Hello {
                version: if self.mode == Mode::Version99 {
                    99
                } else {
                    u64::from(PROTOCOL_VERSION)
                },
                trainable: self.mode != Mode::Untrainable,
            },
            Request::Score { .. } if self.mode == Mode::Error => Response::Error {
                message: "stub refuses to score".into(),
            },
            Request::Score { items } => {
                let mut out: Vec<ScoreResult> = items
                    .iter()
                    .map(|it| ScoreResult {
                        id: (self.mode != Mode::MissingId).then(|| it.id.clone()),
                        p_yes: Some(self.p_yes(it)),
                    })
                    .collect();
                if self.mode == Mode::Permute {
                    out.reverse();
                }
                Response::Scores { items: out }
            }
            Request::Train { items } => {
                if self.mode == Mode::Untrainable {
                    return Response::Error {
                        message: "not trainable".into(),
                    };
                }
                self.train_calls += 1;
                let loss = items
                    .iter()
                    .map(|it| {
                        let p = overlap(&ScoreItem {
                            id: it.id.clone(),
                            context: it.context.clone(),
                            question: it.question.clone(),
                        })
                        .clamp(1e-6, 1.0 - 1e-6);
                        if it.answer.is_yes() {
                            -p.ln()
                        } else {
                            -(1.0 - p).ln()
                        }
                    })
                    .sum::<f64>()
                    / items.len().max(1) as f64;
                Response::Trained { loss }
            }
            Request::Save { path } => match fs::write(&path, format!("{}\n", self.train_calls)) {
                Ok(()) => Response::Ok,
                Err(e) => Response::Error {
                    message: format!("{path}: {e}"),
                },
            },
            Request::Load { path } => match fs::read_to_string(&path).map(|s| s.trim().parse::<u64>()) {
                Ok(Ok(n)) => {
                    self.train_calls = n;
                    Response::Ok
                }
                Ok(Err(e)) => Response::Error {
                    message: format!("{path}: {e}"),
                },
                Err(e) => Response::Error {
                    message: format!("{path}: {e}"),
                },
            },
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let mut stub = Stub {
        mode: cli.mode,
        train_calls: 0,
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    let mut greeted = false;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if stub.mode == Mode::Silent || (stub.mode == Mode::HangAfterHello && greeted) {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                if matches!(req, Request::Hello { .. }) {
                    greeted = true;
                    if stub.mode == Mode::Garbage {
                        let _ = writeln!(stdout, "hello there, not json");
                        let _ = stdout.flush();
                        continue;
                    }
                }
                stub.handle(req)
            }
            Err(e) => Response::Error {
                message: format!("malformed request: {e}"),
            },
        };
        let text = serde_json::to_string(&reply).expect("replies serialize");
        if writeln!(stdout, "{text}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
}
