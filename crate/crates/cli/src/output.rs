//! Single-writer output directory: every file goes through [`OutputSet`]
//! so the manifest can list it with its size and digest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// CSV with `# schema` and `# units` comment lines ahead of the header.
pub struct CsvTable {
    schema: String,
    units: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(schema: &str, header: &[&str], units: &[&str]) -> Self {
        debug_assert_eq!(header.len(), units.len());
        let units = header.iter().zip(units).map(|(h, u)| format!("{h}[{u}]")).collect::<Vec<_>>().join(" ");
        Self {
            schema: format!("{schema} v{CSV_SCHEMA_VERSION}"),
            units,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = format!("# schema: {}\n# units: {}\n", self.schema, self.units).into_bytes();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        out.extend(w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?);
        Ok(out)
    }
}

/// Reads a CSV written by [`CsvTable`], skipping the comment lines.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub version: String,
    /// Digest of the effective config TOML with `output_dir` blanked.
    pub config_sha256: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

pub struct OutputSet {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputSet {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry { path: rel.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_csv(&mut self, rel: &str, table: &CsvTable) -> Result<()> {
        self.write(rel, &table.to_bytes()?)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    /// Writes the manifest itself (not listed in its own inventory).
    pub fn finish(self, name: &str, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.files = self.files;
        manifest.finished_unix = unix_now();
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.root.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, 168.4842, 1e-300, -2.5e17, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn csv_comments_are_skipped_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = CsvTable::new("demo", &["a", "b"], &["s", "J"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        let mut out = OutputSet::create(dir.path()).unwrap();
        out.write_csv("t.csv", &t).unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert!(text.starts_with("# schema: demo v1\n# units: a[s] b[J]\na,b\n"));
        let (h, rows) = read_csv(&dir.path().join("t.csv")).unwrap();
        assert_eq!(h, ["a", "b"]);
        assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.5);
    }
}
