//! Run provenance embedded in every report.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Every setting that influences the report, in a fixed order.
    pub config: Vec<(String, String)>,
    pub inputs: Vec<InputDigest>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(role: &str, path: &Path) -> anyhow::Result<InputDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(InputDigest {
        role: role.to_string(),
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

fn now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config: Vec<(String, String)>, inputs: Vec<InputDigest>) -> Self {
        RunManifest {
            tool: "ctxbound".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            inputs,
            timestamp: now(),
        }
    }

    /// `#`-prefixed lines for the head of a CSV report.
    pub fn comment_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# {} {} {}", self.tool, self.version, self.command),
            format!(
                "# config: {}",
                self.config
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
        ];
        for i in &self.inputs {
            lines.push(format!(
                "# input {}: {} sha256={}",
                i.role, i.path, i.sha256
            ));
        }
        lines.push(format!("# timestamp: {}", self.timestamp));
        lines
    }
}
