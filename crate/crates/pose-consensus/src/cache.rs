//! Content-addressed store of estimator responses.
//!
//! One file per key under the cache root; the file name is the hex key and
//! the content is the response line. Writes go through a temporary file and a
//! rename, so concurrent readers never observe a partial entry.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::backend::{parse_response, EstimatorBackend};
use crate::protocol::{EstimatorRequest, EstimatorResponse};
use crate::{Error, Result};

const KEY_DOMAIN: &[u8] = b"pose-consensus-cache/v1";

/// Backend invocations and cache hits, for call-count accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallStats {
    pub requests: u64,
    pub backend_calls: u64,
    pub cache_hits: u64,
}

impl std::ops::AddAssign for CallStats {
    fn add_assign(&mut self, o: Self) {
        self.requests += o.requests;
        self.backend_calls += o.backend_calls;
        self.cache_hits += o.cache_hits;
    }
}

pub struct ResultCache {
    root: PathBuf,
    digests: Mutex<HashMap<String, [u8; 32]>>,
}

/// References with a URI scheme are opaque; their digest is the reference
/// itself. Anything else is a file whose content is hashed.
fn is_virtual(frame: &str) -> bool {
    frame.split_once("://").is_some_and(|(scheme, _)| {
        !scheme.is_empty() && scheme.chars().all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c))
    })
}

fn hash_file(path: &Path) -> io::Result<[u8; 32]> {
    let mut file = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            return Ok(h.finalize().into());
        }
        h.update(&buf[..n]);
    }
}

fn field(h: &mut Sha256, bytes: &[u8]) {
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
}

impl ResultCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(ResultCache {
            root,
            digests: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn frame_digest(&self, frame: &str) -> Result<[u8; 32]> {
        if is_virtual(frame) {
            return Ok(Sha256::digest(frame.as_bytes()).into());
        }
        if let Some(d) = self.digests.lock().unwrap().get(frame) {
            return Ok(*d);
        }
        let d = hash_file(Path::new(frame)).map_err(|e| Error::io(frame, e))?;
        self.digests.lock().unwrap().insert(frame.to_string(), d);
        Ok(d)
    }

    /// Key over backend identity and the ordered frame contents.
    pub fn key(&self, backend_id: &str, backend_version: &str, frames: &[String]) -> Result<String> {
        let mut h = Sha256::new();
        field(&mut h, KEY_DOMAIN);
        field(&mut h, backend_id.as_bytes());
        field(&mut h, backend_version.as_bytes());
        h.update((frames.len() as u64).to_le_bytes());
        for f in frames {
            h.update(self.frame_digest(f)?);
        }
        Ok(hex::encode(h.finalize()))
    }

    fn path(&self, key: &str) -> PathBuf {
        self.root.join(key)
    }

    /// Stored response line, if present.
    pub fn get(&self, key: &str) -> Option<String> {
        match fs::read_to_string(self.path(key)) {
            Ok(s) => Some(s.trim_end_matches(['\r', '\n']).to_string()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => {
                log::warn!("cache entry {key} unreadable, recomputing: {e}");
                None
            }
        }
    }

    pub fn put(&self, key: &str, line: &str) -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(|e| Error::io(&self.root, e))?;
        writeln!(tmp, "{line}").map_err(|e| Error::io(tmp.path(), e))?;
        let dest = self.path(key);
        tmp.persist(&dest).map_err(|e| Error::io(&dest, e.error))?;
        Ok(())
    }
}

/// [`crate::backend::estimate`] behind the cache. A hit answers without
/// touching the backend; the stored response is reported under the current
/// request id. Malformed backend answers are never stored.
pub fn cached_estimate(
    cache: Option<&ResultCache>,
    backend: &mut dyn EstimatorBackend,
    request: &EstimatorRequest,
    stats: &mut CallStats,
) -> Result<EstimatorResponse> {
    stats.requests += 1;
    let Some(cache) = cache else {
        stats.backend_calls += 1;
        return crate::backend::estimate(backend, request);
    };
    let key = cache.key(backend.id(), backend.version(), &request.frame_refs)?;
    if let Some(line) = cache.get(&key) {
        match parse_response(&line) {
            Ok(mut r) => {
                stats.cache_hits += 1;
                r.request_id.clone_from(&request.request_id);
                return Ok(r);
            }
            Err(e) => log::warn!("cache entry {key} is corrupt, recomputing: {e}"),
        }
    }
    stats.backend_calls += 1;
    let line = backend.call(request)?;
    let response = parse_response(&line)?;
    if response.request_id != request.request_id {
        return Err(Error::MalformedResponse(format!(
            "response id {:?} does not match request {:?}",
            response.request_id, request.request_id
        )));
    }
    cache.put(&key, line.trim_end_matches(['\r', '\n']))?;
    Ok(response)
}
