//! JSON-lines cassettes of `{fingerprint, request, response}` records.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use autoguide_core::lm::BackendKind;
use autoguide_core::{ChatRequest, ChatResponse, LanguageModel, LmError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

/// Forwards every request to `inner` and appends the exchange to a cassette.
pub struct RecordingBackend<M> {
    inner: M,
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl<M: LanguageModel> RecordingBackend<M> {
    /// Opens the cassette at `path` for appending, creating it if needed.
    pub fn open(inner: M, path: &Path) -> Result<Self, LmError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_error(path, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_error(path, e))?;
        Ok(Self { inner, path: path.to_path_buf(), writer: Mutex::new(BufWriter::new(file)) })
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: LanguageModel> LanguageModel for RecordingBackend<M> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        let response = self.inner.complete(request)?;
        let entry = CassetteEntry {
            fingerprint: request.fingerprint(),
            request: request.clone(),
            response: response.clone(),
        };
        let mut line = serde_json::to_string(&entry).map_err(|e| LmError::Io(e.to_string()))?;
        line.push('\n');
        let mut writer = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        writer
            .write_all(line.as_bytes())
            .and_then(|()| writer.flush())
            .map_err(|e| io_error(&self.path, e))?;
        Ok(response)
    }
}

/// Answers requests from a recorded cassette.
#[derive(Debug)]
pub struct ReplayBackend {
    entries: HashMap<String, CassetteEntry>,
}

impl ReplayBackend {
    /// Loads and verifies a cassette. Every stored request must hash to its
    /// fingerprint. When a fingerprint repeats, the first record wins.
    pub fn load(path: &Path) -> Result<Self, LmError> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LmError> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(line)
                .map_err(|e| LmError::Io(format!("cassette line {}: {e}", i + 1)))?;
            if entry.request.fingerprint() != entry.fingerprint {
                return Err(LmError::CassetteTampered { line: i + 1, fingerprint: entry.fingerprint });
            }
            entries.entry(entry.fingerprint.clone()).or_insert(entry);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl LanguageModel for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        let fingerprint = request.fingerprint();
        let entry = self.entries.get(&fingerprint).ok_or_else(|| LmError::ReplayMiss { fingerprint: fingerprint.clone() })?;
        if entry.request != *request {
            return Err(LmError::FingerprintCollision { fingerprint });
        }
        Ok(ChatResponse { backend: BackendKind::Replay, ..entry.response.clone() })
    }
}

fn io_error(path: &Path, e: std::io::Error) -> LmError {
    LmError::Io(format!("{}: {e}", path.display()))
}
