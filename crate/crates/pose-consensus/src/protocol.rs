//! Line-delimited JSON protocol between the host and an estimator process.
//!
//! The estimator speaks first:
//!
//! ```text
//! backend -> {"type":"hello","protocol":1,"backend":"dust3r","version":"..."}
//! host    -> {"type":"hello-ack","protocol":1}
//! host    -> {"type":"estimate","id":"...","frames":["a.png","b.png",...]}
//! backend -> {"type":"result","id":"...","status":"ok","rotation":[9],"translation":[3]}
//! ```
//!
//! Requests and responses strictly alternate. `frames[0]` and `frames[1]` are
//! the two input images; the result is the relative pose from the first to
//! the second.

use nalgebra::{Matrix3, Vector3};
use pose_consensus_core::{EstimateOutcome, RelativePose, Rotation};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

/// Rotations further than this (Frobenius) from SO(3) are rejected.
pub const ROTATION_RESIDUAL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMessage {
    pub id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<[f64; 3]>,
}

impl ResultMessage {
    pub fn ok(id: impl Into<String>, pose: &RelativePose) -> Self {
        let t = pose.translation;
        ResultMessage {
            id: id.into(),
            status: Status::Ok,
            rotation: Some(pose.rotation.to_row_major()),
            translation: Some([t.x, t.y, t.z]),
        }
    }

    pub fn failed(id: impl Into<String>) -> Self {
        ResultMessage {
            id: id.into(),
            status: Status::Failed,
            rotation: None,
            translation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Message {
    Hello {
        protocol: u32,
        backend: String,
        version: String,
    },
    HelloAck {
        protocol: u32,
    },
    Estimate {
        id: String,
        frames: Vec<String>,
    },
    Result(ResultMessage),
}

impl Message {
    /// One line of JSON, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages always serialize")
    }

    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
            .map_err(|e| Error::MalformedResponse(format!("{e}: {line:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatorRequest {
    pub request_id: String,
    /// Input images first (`A`, then `B`), then sampled frames in index order.
    pub frame_refs: Vec<String>,
}

impl EstimatorRequest {
    pub fn new(request_id: impl Into<String>, frame_refs: Vec<String>) -> Self {
        EstimatorRequest {
            request_id: request_id.into(),
            frame_refs,
        }
    }

    pub fn to_message(&self) -> Message {
        Message::Estimate {
            id: self.request_id.clone(),
            frames: self.frame_refs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResponse {
    pub request_id: String,
    pub outcome: EstimateOutcome,
}

/// Validates a result message and projects its rotation onto SO(3).
///
/// Rotations already orthonormal to 1e-9 are kept bit-for-bit; anything
/// within [`ROTATION_RESIDUAL`] is replaced by its nearest rotation.
pub fn ingest(msg: &ResultMessage) -> Result<EstimatorResponse> {
    let outcome = match msg.status {
        Status::Failed => EstimateOutcome::EstimatorFailed,
        Status::Ok => {
            let (Some(r), Some(t)) = (msg.rotation, msg.translation) else {
                return Err(Error::MalformedResponse(format!(
                    "result {} is ok but lacks rotation or translation",
                    msg.id
                )));
            };
            let m = Matrix3::from_row_slice(&r);
            let rotation = Rotation::from_matrix(m)
                .or_else(|_| Rotation::from_matrix_tolerant(m, ROTATION_RESIDUAL))
                .map_err(|e| Error::MalformedResponse(format!("result {}: {e}", msg.id)))?;
            if !t.iter().all(|v| v.is_finite()) {
                return Err(Error::MalformedResponse(format!(
                    "result {}: non-finite translation",
                    msg.id
                )));
            }
            EstimateOutcome::Ok(RelativePose::new(rotation, Vector3::from(t)))
        }
    };
    Ok(EstimatorResponse {
        request_id: msg.id.clone(),
        outcome,
    })
}
