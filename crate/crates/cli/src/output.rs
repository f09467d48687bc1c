//! Atomic file output, manifests and float formatting.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    write_in(dir, name, bytes).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", dir.join(name).display())))
}

fn write_in(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serialises");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// The effective configuration after flag overrides.
    pub config: String,
    pub outputs: Vec<OutputFile>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub wall_time_s: f64,
}

/// Collects output files of one command and writes them with a manifest.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        write_atomic(&self.dir, name, bytes)?;
        self.files.push(OutputFile { file: name.into(), sha256: format!("{:x}", Sha256::digest(bytes)) });
        Ok(())
    }

    pub fn finish(self, mut manifest: Manifest) -> std::io::Result<PathBuf> {
        manifest.outputs = self.files;
        let name = format!("{}.manifest.json", manifest.command);
        write_atomic(&self.dir, &name, &json_bytes(&manifest))
    }
}

/// `r` followed by one column per profile, all on the same grid.
pub fn profile_csv(radii: &[f64], columns: &[(&str, &[f64])]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["r"];
    header.extend(columns.iter().map(|(n, _)| *n));
    w.write_record(&header).expect("in-memory write");
    for (i, r) in radii.iter().enumerate() {
        let mut row = vec![fmt_f64(*r)];
        row.extend(columns.iter().map(|(_, v)| fmt_f64(v[i])));
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1 + 0.2, 1e-300, -2.5e17, 1.0 / 3.0, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", b"one").unwrap();
        write_atomic(dir.path(), "a.txt", b"two").unwrap();
        assert_eq!(std::fs::read(dir.path().join("a.txt")).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn profile_csv_layout() {
        let text = String::from_utf8(profile_csv(&[0.5, 1.5], &[("u", &[1.0, 0.25])])).unwrap();
        assert_eq!(text, "r,u\n0.5,1.0\n1.5,0.25\n");
    }
}
