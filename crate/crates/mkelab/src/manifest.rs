//! Append-only record of the invocations that produced an output
//! directory's artifacts.
//!
//! One line per invocation: timestamp, tool version, command, config
//! hash, seed range. Append-only by construction; nothing here is ever
//! rewritten, so the history of a directory survives reruns.

use std::io::Write;
use std::path::Path;

use crate::error::{write_err, AppResult};

pub const MANIFEST_FILE: &str = "manifest.txt";

/// RFC 3339 UTC timestamp of now.
pub fn timestamp() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_else(|_| "unknown-time".to_string())
}

/// Appends one invocation line to `manifest.txt` in `out_dir`.
pub fn append(out_dir: &Path, command: &str, config_hash: &str, seeds: &[u64]) -> AppResult<()> {
    let path = out_dir.join(MANIFEST_FILE);
    let seeds_text = match (seeds.first(), seeds.last()) {
        (None, _) => "-".to_string(),
        (Some(first), Some(last)) if seeds.len() as u64 == last - first + 1 => {
            format!("{first}..={last}")
        }
        _ => seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    };
    let line = format!(
        "[{}] mkelab {} command={command} config={config_hash} seeds={seeds_text}\n",
        timestamp(),
        env!("CARGO_PKG_VERSION"),
    );
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| write_err(&path, e))?;
    file.write_all(line.as_bytes())
        .map_err(|e| write_err(&path, e))
}
