//! Estimator backends.
//!
//! Every backend answers with a protocol response line, so in-process and
//! external estimators go through the same parsing, ingestion and caching
//! path.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use pose_consensus_core::synthetic::{synthetic_sample, SyntheticScenario};
use pose_consensus_core::{FrameSubset, RelativePose};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::protocol::{ingest, EstimatorRequest, EstimatorResponse, Message, ResultMessage, PROTOCOL_VERSION};
use crate::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

/// Prefix of the virtual frame references understood by [`SyntheticBackend`].
pub const SYNTH_SCHEME: &str = "synth://";

pub trait EstimatorBackend: Send {
    fn id(&self) -> &str;
    fn version(&self) -> &str;
    /// Runs one request and returns the raw response line.
    fn call(&mut self, request: &EstimatorRequest) -> Result<String>;
}

/// Runs `request` on `backend` and ingests the answer.
pub fn estimate(backend: &mut dyn EstimatorBackend, request: &EstimatorRequest) -> Result<EstimatorResponse> {
    let line = backend.call(request)?;
    let response = parse_response(&line)?;
    if response.request_id != request.request_id {
        return Err(Error::MalformedResponse(format!(
            "response id {:?} does not match request {:?}",
            response.request_id, request.request_id
        )));
    }
    Ok(response)
}

pub(crate) fn parse_response(line: &str) -> Result<EstimatorResponse> {
    match Message::parse(line)? {
        Message::Result(r) => ingest(&r),
        other => Err(Error::MalformedResponse(format!("expected a result, got {other:?}"))),
    }
}

/// Always answers with the identity pose.
#[derive(Debug, Default)]
pub struct EchoBackend;

impl EstimatorBackend for EchoBackend {
    fn id(&self) -> &str {
        "echo"
    }

    fn version(&self) -> &str {
        env!("CARGO_PKG_VERSION")
    }

    fn call(&mut self, request: &EstimatorRequest) -> Result<String> {
        Ok(Message::Result(ResultMessage::ok(&request.request_id, &RelativePose::identity())).to_line())
    }
}

/// Synthetic scenarios for every pair of a fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub schema_version: u32,
    pub scenarios: BTreeMap<String, SyntheticScenario>,
}

impl ScenarioSet {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != crate::manifest::SCHEMA_VERSION {
            return Err(Error::Scenario(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        for (id, s) in &self.scenarios {
            if &s.pair_id != id {
                return Err(Error::Scenario(format!("key {id} holds scenario for {}", s.pair_id)));
            }
            s.validate().map_err(|e| Error::Scenario(format!("{id}: {e}")))?;
        }
        Ok(())
    }
}

/// Virtual frame reference for frame `index` (1-based) of video `ordinal`.
pub fn synth_frame_ref(pair_id: &str, ordinal: usize, index: usize) -> String {
    format!("{SYNTH_SCHEME}{pair_id}/v{ordinal}/f{index}")
}

/// Virtual reference for input image `A` or `B` of a pair.
pub fn synth_image_ref(pair_id: &str, which: char) -> String {
    format!("{SYNTH_SCHEME}{pair_id}/{which}")
}

/// Answers from [`SyntheticScenario`]s, addressed through virtual frame
/// references (`synth://<pair>/a`, `synth://<pair>/v<ordinal>/f<index>`).
pub struct SyntheticBackend {
    scenarios: ScenarioSet,
    version: String,
}

impl SyntheticBackend {
    pub fn new(scenarios: ScenarioSet) -> Result<Self> {
        scenarios.validate()?;
        let bytes = serde_json::to_vec(&scenarios).expect("scenarios serialize");
        let digest = hex::encode(&Sha256::digest(&bytes)[..8]);
        Ok(SyntheticBackend {
            scenarios,
            version: format!("1+{digest}"),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let set: ScenarioSet = serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        Self::new(set)
    }

    fn respond(&self, request: &EstimatorRequest) -> std::result::Result<RelativePose, String> {
        let refs = &request.frame_refs;
        if refs.len() < 2 {
            return Err("fewer than two frames".into());
        }
        let (pair_a, a) = split_input(&refs[0])?;
        let (pair_b, b) = split_input(&refs[1])?;
        if pair_a != pair_b || a != "a" || b != "b" {
            return Err(format!("inputs {} / {} are not a pair's a/b images", refs[0], refs[1]));
        }
        let scenario = self
            .scenarios
            .scenarios
            .get(pair_a)
            .ok_or_else(|| format!("no scenario for pair {pair_a}"))?;
        let mut video = None;
        let mut interior = Vec::new();
        for r in &refs[2..] {
            let (pair, ordinal, index) = split_frame(r)?;
            if pair != pair_a || video.is_some_and(|v| v != ordinal) {
                return Err(format!("frame {r} does not belong to the request's video"));
            }
            video = Some(ordinal);
            interior.push(index);
        }
        synthetic_sample(scenario, video, &FrameSubset { interior }).map_err(|e| e.to_string())
    }
}

fn split_input(r: &str) -> std::result::Result<(&str, &str), String> {
    r.strip_prefix(SYNTH_SCHEME)
        .and_then(|rest| rest.rsplit_once('/'))
        .ok_or_else(|| format!("not a synthetic image reference: {r}"))
}

fn split_frame(r: &str) -> std::result::Result<(&str, usize, u32), String> {
    let bad = || format!("not a synthetic frame reference: {r}");
    let rest = r.strip_prefix(SYNTH_SCHEME).ok_or_else(bad)?;
    let (head, frame) = rest.rsplit_once('/').ok_or_else(bad)?;
    let (pair, video) = head.rsplit_once('/').ok_or_else(bad)?;
    let ordinal = video.strip_prefix('v').and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let index = frame.strip_prefix('f').and_then(|f| f.parse().ok()).ok_or_else(bad)?;
    Ok((pair, ordinal, index))
}

impl EstimatorBackend for SyntheticBackend {
    fn id(&self) -> &str {
        "synthetic"
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn call(&mut self, request: &EstimatorRequest) -> Result<String> {
        let msg = match self.respond(request) {
            Ok(pose) => ResultMessage::ok(&request.request_id, &pose),
            Err(why) => {
                log::warn!("synthetic backend cannot answer {}: {why}", request.request_id);
                ResultMessage::failed(&request.request_id)
            }
        };
        Ok(Message::Result(msg).to_line())
    }
}

/// External estimator speaking the line protocol over stdin/stdout.
pub struct ProcessBackend {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    id: String,
    version: String,
    broken: bool,
}

impl ProcessBackend {
    /// Starts `command` (split with shell quoting rules) and completes the
    /// handshake.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::BackendUnavailable(format!("cannot parse command {command:?}")))?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::BackendUnavailable(format!("{}: {e}", argv[0])))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut backend = ProcessBackend {
            child,
            stdin,
            lines,
            timeout,
            id: String::new(),
            version: String::new(),
            broken: false,
        };
        backend.handshake().inspect_err(|_| backend.shutdown())?;
        Ok(backend)
    }

    fn handshake(&mut self) -> Result<()> {
        let line = self.next_line()?;
        match Message::parse(&line) {
            Ok(Message::Hello {
                protocol,
                backend,
                version,
            }) if protocol == PROTOCOL_VERSION => {
                self.id = backend;
                self.version = version;
            }
            Ok(Message::Hello { protocol, .. }) => {
                return Err(Error::BackendUnavailable(format!(
                    "unsupported protocol version {protocol}"
                )))
            }
            _ => return Err(Error::BackendUnavailable(format!("expected hello, got {line:?}"))),
        }
        self.send(&Message::HelloAck {
            protocol: PROTOCOL_VERSION,
        })
    }

    fn send(&mut self, msg: &Message) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::BackendUnavailable("stdin closed".into()))?;
        let mut line = msg.to_line();
        line.push('\n');
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::BackendUnavailable(format!("write failed: {e}")))
    }

    fn next_line(&mut self) -> Result<String> {
        loop {
            match self.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return Ok(line),
                Ok(Err(e)) => return Err(Error::BackendUnavailable(format!("read failed: {e}"))),
                Err(RecvTimeoutError::Timeout) => return Err(Error::BackendTimeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::BackendUnavailable("process exited".into()))
                }
            }
        }
    }

    fn shutdown(&mut self) {
        self.broken = true;
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl EstimatorBackend for ProcessBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn version(&self) -> &str {
        &self.version
    }

    fn call(&mut self, request: &EstimatorRequest) -> Result<String> {
        if self.broken {
            return Err(Error::BackendUnavailable("backend was shut down after an error".into()));
        }
        let result = self.send(&request.to_message()).and_then(|_| self.next_line());
        // After a timeout or a dead pipe the stream can no longer be trusted to
        // stay in lockstep.
        if let Err(e) = &result {
            if e.is_backend_failure() {
                self.shutdown();
            }
        }
        result
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        if !self.broken {
            self.stdin.take();
            // Give a well-behaved backend a moment to exit on EOF.
            for _ in 0..20 {
                if matches!(self.child.try_wait(), Ok(Some(_))) {
                    return;
                }
                thread::sleep(Duration::from_millis(5));
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Parsed `--backend` argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Echo,
    Synthetic(std::path::PathBuf),
    Process(String),
}

impl std::str::FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "echo" {
            Ok(BackendSpec::Echo)
        } else if let Some(p) = s.strip_prefix("synthetic:") {
            Ok(BackendSpec::Synthetic(p.into()))
        } else if let Some(c) = s.strip_prefix("process:") {
            Ok(BackendSpec::Process(c.into()))
        } else {
            Err(Error::Config(format!(
                "backend must be echo, synthetic:<file> or process:<command>, got {s:?}"
            )))
        }
    }
}

impl BackendSpec {
    pub fn open(&self, timeout: Duration) -> Result<Box<dyn EstimatorBackend>> {
        Ok(match self {
            BackendSpec::Echo => Box::new(EchoBackend),
            BackendSpec::Synthetic(path) => Box::new(SyntheticBackend::load(path)?),
            BackendSpec::Process(cmd) => Box::new(ProcessBackend::spawn(cmd, timeout)?),
        })
    }
}
