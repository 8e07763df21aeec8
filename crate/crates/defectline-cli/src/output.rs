//! Self-describing output files. Every file starts with one JSON header line
//! carrying the artifact name and version, a stable hash of the resolved
//! configuration, and the configuration itself; the payload (CSV rows or
//! JSON records) follows. Newlines are `\n`, decimals use `.`, floats print
//! in Rust's shortest round-trip form.

use std::io;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;

/// FNV-1a, 64-bit. Stable across platforms and toolchain versions, unlike
/// the standard library's default hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Serialize)]
struct Header<'a> {
    artifact: &'static str,
    version: &'static str,
    config_hash: String,
    config: &'a ExperimentConfig,
}

pub fn header_line(config: &ExperimentConfig) -> String {
    let config_json = serde_json::to_string(config).expect("config serializes");
    let header = Header {
        artifact: "defectline",
        version: env!("CARGO_PKG_VERSION"),
        config_hash: format!("{:016x}", fnv1a(config_json.as_bytes())),
        config,
    };
    serde_json::to_string(&header).expect("header serializes")
}

/// Writes header + payload lines to `dir/name`, creating `dir` if needed.
pub fn write_file(
    dir: &Path,
    name: &str,
    config: &ExperimentConfig,
    lines: &[String],
) -> io::Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut body = header_line(config);
    body.push('\n');
    for line in lines {
        body.push_str(line);
        body.push('\n');
    }
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

/// `Display`-formats an optional value, printing `nan` when absent — keeps
/// CSV columns rectangular without inventing sentinel numbers.
pub fn opt_f64(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "nan".to_string(),
    }
}
