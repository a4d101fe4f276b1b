use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const RECORD_SCHEMA: &str = "grauert.record/1";
pub const ERROR_SCHEMA: &str = "grauert.error/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Io,
    InvalidConfig,
    NoParametrix,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Io => 1,
            ErrorKind::InvalidConfig => 2,
            ErrorKind::NoParametrix => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::InvalidConfig, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError { kind: ErrorKind::Io, message: format!("{}: {e}", path.display()) }
    }
}

impl From<grauert::Error> for CliError {
    fn from(e: grauert::Error) -> Self {
        let kind = match e {
            grauert::Error::NoParametrix(_) => ErrorKind::NoParametrix,
            grauert::Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::InvalidConfig,
        };
        CliError { kind, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::config(e.to_string())
    }
}

/// Every file read by a run, kept for the inputs digest.
#[derive(Default)]
pub struct Inputs {
    files: BTreeMap<PathBuf, Vec<u8>>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        // a missing referenced file is a configuration error
        let bytes = fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        self.files.insert(path.to_path_buf(), bytes.clone());
        Ok(bytes)
    }

    /// sha256 over the resolved configuration and the contents of every file
    /// read, in path order.
    pub fn digest(&self, config: &Value) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(config).expect("config serializes"));
        for bytes in self.files.values() {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        format!("{:x}", h.finalize())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub name: &'static str,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Serialize)]
pub struct Record<'a> {
    pub schema: &'static str,
    pub op: &'a str,
    pub inputs_digest: String,
    pub value: Value,
    pub defect: Option<f64>,
    pub certificate: Certificate,
}

#[derive(Serialize)]
pub struct ErrorRecord<'a> {
    pub schema: &'static str,
    pub op: &'a str,
    pub kind: ErrorKind,
    pub exit_code: u8,
    pub message: &'a str,
}

/// What a command hands back: the record payload, the exit code to use when
/// the certificate fails, CSV tables and JSON artifacts to write next to the
/// record.
pub struct Outcome {
    pub value: Value,
    pub defect: Option<f64>,
    pub certificate: Certificate,
    pub failure_code: u8,
    pub tables: Vec<(&'static str, String)>,
    pub artifacts: Vec<(&'static str, Value)>,
}

impl Outcome {
    pub fn new(value: Value, defect: Option<f64>, certificate: Certificate) -> Self {
        Outcome { value, defect, certificate, failure_code: 3, tables: Vec::new(), artifacts: Vec::new() }
    }

    pub fn exit_code(&self) -> u8 {
        if self.certificate.passed {
            0
        } else {
            self.failure_code
        }
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
