//! Plain-text `key=value` manifests with SHA-256 digests of files.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use lrccs::{Error, Result};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.txt";

/// Ordered key/value pairs; keys are unique and keep insertion order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest::default();
        m.set("format", "lrccs-manifest-1");
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Records `sha256.<label>` for the file at `path`.
    pub fn hash_file(&mut self, label: &str, path: &Path) -> Result<()> {
        self.set(&format!("sha256.{label}"), sha256_file(path)?);
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("manifest line {}: expected key=value", i + 1))
            })?;
            m.set(k, v);
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(FILE_NAME), self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// The manifest stored next to `file`, if there is one.
    pub fn beside(file: &Path) -> Result<Option<Self>> {
        let path = file.parent().unwrap_or(Path::new(".")).join(FILE_NAME);
        if path.is_file() {
            Self::read(&path).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Warns on stderr when `file` no longer matches the digest its sibling manifest recorded.
pub fn check_recorded_hash(file: &Path) -> Result<()> {
    let Some(name) = file.file_name().and_then(|n| n.to_str()) else {
        return Ok(());
    };
    if let Some(manifest) = Manifest::beside(file)? {
        if let Some(recorded) = manifest.get(&format!("sha256.{name}")) {
            let actual = sha256_file(file)?;
            if recorded != actual {
                eprintln!(
                    "warning: {} does not match the digest in its manifest ({recorded} recorded, {actual} found)",
                    file.display()
                );
            }
        }
    }
    Ok(())
}

/// Warns when `file` differs from the digest stored under `key` in `manifest`.
pub fn check_bound_hash(manifest: &Manifest, key: &str, file: &Path) -> Result<()> {
    if let Some(recorded) = manifest.get(key) {
        let actual = sha256_file(file)?;
        if recorded != actual {
            eprintln!(
                "warning: {} differs from the file the measurements were taken with ({key} = {recorded})",
                file.display()
            );
        }
    }
    Ok(())
}
