//! Dataset manifests: one `<path>\t<label>\t<train|valid|test>` entry per line.
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the manifest's directory.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use duoauth_core::synth::Split;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub path: PathBuf,
    pub label: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, label, split] = fields[..] else {
                return Err(Error::Format(format!("manifest line {}: expected 3 tab-separated fields", i + 1)));
            };
            let split = Split::parse(split)
                .ok_or_else(|| Error::Format(format!("manifest line {}: unknown split `{split}`", i + 1)))?;
            if label.is_empty() || label.contains([',', '=', ' ']) {
                return Err(Error::Format(format!("manifest line {}: label must be non-empty without `,`, `=` or spaces", i + 1)));
            }
            let path = base.join(path);
            if !seen.insert(path.clone()) {
                return Err(Error::Format(format!("manifest line {}: duplicate path {}", i + 1, path.display())));
            }
            entries.push(Entry { path, label: label.to_string(), split });
        }
        Ok(Manifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.path.display(), e.label, e.split.as_str()))
            .collect()
    }

    /// Sorted distinct labels; a label's index is its class number.
    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Every label needs two training entries for triplets to exist.
    pub fn check_triplet_feasible(&self) -> Result<()> {
        let labels = self.labels();
        if labels.len() < 2 {
            return Err(Error::Format("triplet training needs at least two labels".into()));
        }
        for l in &labels {
            let n = self.split(Split::Train).filter(|e| &e.label == l).count();
            if n < 2 {
                return Err(Error::Format(format!("label `{l}` has {n} training entries, need at least 2")));
            }
        }
        Ok(())
    }
}
