//! Small file helpers shared by the on-disk formats.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header comment stamped on every output file.
pub fn header(seed: u64) -> String {
    format!("rfdlc {VERSION} seed={seed}")
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `body` prefixed by `header` as `#` comment lines (valid in both
/// TOML and the CSV dialect used here).
pub fn write_with_header(path: &Path, header: &str, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut out = String::with_capacity(body.len() + header.len() + 4);
    for line in header.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(body);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
