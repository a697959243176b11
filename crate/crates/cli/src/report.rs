//! The JSON report envelope shared by every subcommand.
//!
//! Reports are reproducible by construction: the only field that varies
//! between identical runs is the timestamp, and `--no-timestamp` removes
//! it. Thread counts never appear.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliResult, Failure, OutputArgs};

/// Identity of the input file a report was computed from.
#[derive(Serialize)]
pub struct InputEcho {
    pub path: String,
    pub sha256: String,
}

pub fn input_echo(path: &Path, bytes: &[u8]) -> InputEcho {
    let digest = Sha256::digest(bytes);
    let mut sha256 = String::with_capacity(64);
    for byte in digest {
        let _ = write!(sha256, "{byte:02x}");
    }
    InputEcho {
        path: path.display().to_string(),
        sha256,
    }
}

#[derive(Serialize)]
pub struct Envelope<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<InputEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<&'static str>,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &'static str, output: &OutputArgs, body: T) -> Self {
        Envelope {
            tool: "lrtest",
            version: env!("CARGO_PKG_VERSION"),
            command,
            timestamp_unix: timestamp(output.no_timestamp),
            input: None,
            preset: None,
            seed: None,
            generator: None,
            body,
        }
    }

    /// Serialize to pretty JSON and write to `--out` when given.
    pub fn write(&self, output: &OutputArgs) -> CliResult<()> {
        if let Some(path) = &output.out {
            let resolved = resolve_out(path);
            let mut text = serde_json::to_string_pretty(self)
                .map_err(|e| Failure::Usage(format!("serializing report: {e}")))?;
            text.push('\n');
            fs::write(&resolved, text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", resolved.display())))?;
        }
        Ok(())
    }
}

fn timestamp(suppressed: bool) -> Option<u64> {
    if suppressed {
        return None;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

/// Relative output paths land in `$LRTEST_OUT_DIR` when it is set.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var("LRTEST_OUT_DIR") {
            if !dir.is_empty() {
                return Path::new(&dir).join(path);
            }
        }
    }
    path.to_path_buf()
}

pub fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}
