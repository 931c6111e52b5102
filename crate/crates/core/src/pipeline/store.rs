//! Workdir bookkeeping: exclusive lock, atomic artifact writes and the
//! line-delimited JSON manifest.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const LOCK_FILE: &str = ".tsclv.lock";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// One manifest line: what a step read and wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub step: String,
    pub version: String,
    pub seed: u64,
    /// Hash of the step's configuration section.
    pub config: String,
    /// Input path (relative to the workdir when inside it) → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl ManifestEntry {
    /// Identity of everything the step depends on.
    pub fn input_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.version.as_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(self.config.as_bytes());
        for (k, v) in &self.inputs {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// An open, locked workdir.
#[derive(Debug)]
pub struct Workdir {
    root: PathBuf,
    lock: PathBuf,
}

impl Workdir {
    /// Create the directory if needed and take the lock.
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .map_err(|e| Error::Config(format!("workdir {} is not writable: {e}", root.display())))?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Constraint(format!(
                    "workdir {} is locked by another pipeline (delete {} if it is stale)",
                    root.display(),
                    lock.display()
                )));
            }
            Err(e) => return Err(Error::Config(format!("workdir {} is not writable: {e}", root.display()))),
        }
        Ok(Self { root: root.to_path_buf(), lock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Read an artifact produced by an earlier step.
    pub fn require(&self, name: &str, producer: &str) -> Result<Vec<u8>> {
        let p = self.path(name);
        match fs::read(&p) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(Error::Prerequisite { artifact: name.to_owned(), producer: producer.to_owned() })
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn manifest(&self) -> Result<Vec<ManifestEntry>> {
        let p = self.path(MANIFEST_FILE);
        let text = match fs::read_to_string(&p) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(format!("corrupt manifest line: {e}"))))
            .collect()
    }

    /// Replace the entry for `entry.step`, keeping the given step order.
    pub fn record(&self, entry: ManifestEntry, order: &[&str]) -> Result<()> {
        let mut entries: Vec<ManifestEntry> = self.manifest()?.into_iter().filter(|e| e.step != entry.step).collect();
        // A rewritten artifact belongs to the new entry only.
        for e in &mut entries {
            e.outputs.retain(|k, _| !entry.outputs.contains_key(k));
        }
        entries.push(entry);
        let rank = |s: &str| order.iter().position(|o| *o == s).unwrap_or(order.len());
        entries.sort_by(|a, b| rank(&a.step).cmp(&rank(&b.step)).then(a.step.cmp(&b.step)));
        let mut out = String::new();
        for e in &entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        write_atomic(&self.path(MANIFEST_FILE), out.as_bytes())
    }

    /// True when the step's recorded inputs match and its outputs are intact.
    pub fn up_to_date(&self, candidate: &ManifestEntry) -> Result<bool> {
        let Some(prev) = self.manifest()?.into_iter().find(|e| e.step == candidate.step) else {
            return Ok(false);
        };
        if prev.input_key() != candidate.input_key() || prev.outputs.is_empty() {
            return Ok(false);
        }
        for (name, hash) in &prev.outputs {
            match fs::read(self.path(name)) {
                Ok(b) if sha256_hex(&b) == *hash => {}
                _ => return Ok(false),
            }
        }
        Ok(true)
    }
}

impl Drop for Workdir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(step: &str, input: &str, outputs: &[(&str, &str)]) -> ManifestEntry {
        ManifestEntry {
            step: step.into(),
            version: "0".into(),
            seed: 1,
            config: "c".into(),
            inputs: BTreeMap::from([("in".to_owned(), input.to_owned())]),
            outputs: outputs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let w = Workdir::open(dir.path()).unwrap();
        assert!(matches!(Workdir::open(dir.path()), Err(Error::Constraint(_))));
        drop(w);
        assert!(Workdir::open(dir.path()).is_ok());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn manifest_keeps_one_entry_per_step_and_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let w = Workdir::open(dir.path()).unwrap();
        let order = ["a", "b"];
        w.record(entry("b", "x", &[("o2", "h")]), &order).unwrap();
        w.record(entry("a", "x", &[("o1", "h")]), &order).unwrap();
        w.record(entry("a", "y", &[("o1", "h2"), ("o2", "h3")]), &order).unwrap();
        let m = w.manifest().unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].step, "a");
        assert_eq!(m[0].inputs["in"], "y");
        assert!(m[1].outputs.is_empty());
    }

    #[test]
    fn up_to_date_checks_inputs_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let w = Workdir::open(dir.path()).unwrap();
        write_atomic(&w.path("o"), b"data").unwrap();
        let e = entry("a", "x", &[("o", &sha256_hex(b"data"))]);
        w.record(e.clone(), &["a"]).unwrap();
        assert!(w.up_to_date(&e).unwrap());
        assert!(!w.up_to_date(&entry("a", "z", &[])).unwrap());
        write_atomic(&w.path("o"), b"tampered").unwrap();
        assert!(!w.up_to_date(&e).unwrap());
    }

    #[test]
    fn missing_artifact_names_producer() {
        let dir = tempfile::tempdir().unwrap();
        let w = Workdir::open(dir.path()).unwrap();
        match w.require("dist_EUCL.csv", "distances") {
            Err(Error::Prerequisite { artifact, producer }) => {
                assert_eq!(artifact, "dist_EUCL.csv");
                assert_eq!(producer, "distances");
            }
            other => panic!("{other:?}"),
        }
    }
}
