//! Backend side of the line protocol, for in-process backends.
//!
//! `pose-consensus serve --backend echo` is the reference peer used by the
//! protocol fixtures; external bridges must produce the same transcript.

use std::io::{BufRead, Write};

use crate::backend::EstimatorBackend;
use crate::protocol::{EstimatorRequest, Message, ResultMessage, PROTOCOL_VERSION};
use crate::{Error, Result};

fn send(out: &mut dyn Write, msg: &Message) -> Result<()> {
    writeln!(out, "{}", msg.to_line())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Speaks the backend side of the protocol until `input` closes. Returns the
/// number of requests answered.
pub fn serve(backend: &mut dyn EstimatorBackend, input: impl BufRead, mut out: impl Write) -> Result<u64> {
    send(
        &mut out,
        &Message::Hello {
            protocol: PROTOCOL_VERSION,
            backend: backend.id().to_string(),
            version: backend.version().to_string(),
        },
    )?;
    let mut lines = input.lines();
    let mut acked = false;
    let mut answered = 0;
    while let Some(line) = lines.next() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let msg = match Message::parse(&line) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("ignoring unparseable line: {e}");
                continue;
            }
        };
        match msg {
            Message::HelloAck { protocol } if protocol == PROTOCOL_VERSION => acked = true,
            Message::HelloAck { protocol } => {
                return Err(Error::BackendUnavailable(format!(
                    "host requested protocol {protocol}"
                )))
            }
            Message::Estimate { id, frames } if acked => {
                let reply = if frames.len() < 2 {
                    Message::Result(ResultMessage::failed(id)).to_line()
                } else {
                    backend.call(&EstimatorRequest::new(id, frames))?
                };
                writeln!(out, "{reply}")
                    .and_then(|_| out.flush())
                    .map_err(|e| Error::io("<stdout>", e))?;
                answered += 1;
            }
            other => log::warn!("ignoring unexpected message {other:?}"),
        }
    }
    Ok(answered)
}
