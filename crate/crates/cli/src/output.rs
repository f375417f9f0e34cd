//! Deterministic artifact emission. Floats are printed with a fixed 17
//! significant digit format so identical runs produce identical bytes, and
//! every data file lands in the manifest with its checksum.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureEntry {
    pub k: f64,
    pub message: String,
}

/// Collects files for one run directory and writes the manifest last.
pub struct Emitter {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Self, String> {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), String> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| format!("{}: {e}", path.display()))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: sha_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_manifest<C: Serialize>(
        &self,
        command: &str,
        config: &C,
        started_unix: u64,
        max_norm_drift: Option<f64>,
        warnings: &[String],
        failures: &[FailureEntry],
    ) -> Result<(), String> {
        #[derive(Serialize)]
        struct Manifest<'a, C: Serialize> {
            tool_version: &'static str,
            command: &'a str,
            config: &'a C,
            started_unix: u64,
            finished_unix: u64,
            #[serde(skip_serializing_if = "Option::is_none")]
            max_norm_drift: Option<f64>,
            warnings: &'a [String],
            failures: &'a [FailureEntry],
            files: &'a [FileEntry],
        }
        let manifest = Manifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            started_unix,
            finished_unix: unix_now(),
            max_norm_drift,
            warnings,
            failures,
            files: &self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| format!("manifest serialization: {e}"))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(())
    }
}

/// CSV assembly with a fixed header; rows are written in full 17 digit
/// precision and rendered to a single string before touching the disk.
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut buf = String::new();
        buf.push_str(header);
        buf.push('\n');
        Csv {
            buf,
            columns: header.split(',').count(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        debug_assert_eq!(fields.len(), self.columns);
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_matches_known_vector() {
        // sha256 of the empty string, a fixed reference value
        assert_eq!(
            sha_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn float_format_is_stable() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(-2.5e-3), "-2.5000000000000001e-3");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_rows_join_with_lf_only() {
        let mut csv = Csv::new("a,b");
        csv.row(&["1".into(), "2".into()]);
        csv.row(&["3".into(), "4".into()]);
        assert_eq!(csv.finish(), "a,b\n1,2\n3,4\n");
    }
}
