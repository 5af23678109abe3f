//! Optional download helper with checksum verification. Nothing in the
//! test suites touches the network; this exists so a run config can point
//! at the full official datasets.

use std::path::Path;
use std::process::ExitCode;

use sha2::{Digest, Sha256};

use qpmel_core::{Error, Result};

/// Lower-case hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Checks a digest against an expected hex string, case-insensitively.
pub fn verify_sha256(bytes: &[u8], expected: &str) -> Result<()> {
    let actual = sha256_hex(bytes);
    if actual != expected.to_lowercase() {
        return Err(Error::Inconsistent(format!(
            "checksum mismatch: expected {expected}, got {actual}"
        )));
    }
    Ok(())
}

pub fn fetch(url: &str, sha256: &str, output: &Path) -> Result<ExitCode> {
    let response = reqwest::blocking::get(url)
        .and_then(reqwest::blocking::Response::error_for_status)
        .map_err(|e| Error::Config(format!("download failed: {e}")))?;
    let bytes = response
        .bytes()
        .map_err(|e| Error::Config(format!("download failed: {e}")))?;
    verify_sha256(&bytes, sha256)?;
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(output, &bytes)?;
    println!("fetched {} bytes to {}", bytes.len(), output.display());
    Ok(ExitCode::SUCCESS)
}
