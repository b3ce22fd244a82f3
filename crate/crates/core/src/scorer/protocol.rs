//! Line-delimited JSON records exchanged with an external scorer process.
//!
//! ```text
//! -> {"type":"hello","version":1}
//! <- {"type":"hello","version":1,"trainable":true}
//! -> {"type":"score","items":[{"id","context","question"}]}
//! <- {"type":"scores","items":[{"id","p_yes"}]}
//! -> {"type":"train","items":[{"id","context","question","answer":"Yes"|"No"}]}
//! <- {"type":"trained","loss":0.69}
//! -> {"type":"save","path":"..."} / {"type":"load","path":"..."}
//! <- {"type":"ok"}
//! <- {"type":"error","message":"..."}   (in reply to anything)
//! ```

use serde::{Deserialize, Serialize};

use crate::corpus::Answer;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Hello { version: u32 },
    Score { items: Vec<ScoreItem> },
    Train { items: Vec<TrainItem> },
    Save { path: String },
    Load { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreItem {
    pub id: String,
    pub context: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainItem {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answer: Answer,
}

/// Replies are parsed leniently (optional fields) so that a missing id or
/// probability surfaces as a specific protocol error rather than a parse failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Hello {
        version: u64,
        #[serde(default)]
        trainable: bool,
    },
    Scores {
        items: Vec<ScoreResult>,
    },
    Trained {
        loss: f64,
    },
    Ok,
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_yes: Option<f64>,
}

impl Response {
    pub fn kind(&self) -> &'static str {
        match self {
            Response::Hello { .. } => "hello",
            Response::Scores { .. } => "scores",
            Response::Trained { .. } => "trained",
            Response::Ok => "ok",
            Response::Error { .. } => "error",
        }
    }
}
