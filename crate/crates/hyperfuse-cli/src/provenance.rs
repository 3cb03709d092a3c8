//! `run.json`: a deterministic record of what was executed.
//!
//! Every successful run writes the effective subcommand, global seed,
//! and flag values (after defaults) into the output directory. The
//! flags are stored as the exact strings one would pass on the command
//! line, so the file is sufficient to repeat the run.

use anyhow::Context;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Provenance {
    pub subcommand: String,
    pub seed: u64,
    pub flags: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            seed,
            flags: BTreeMap::new(),
        }
    }

    pub fn flag(mut self, name: &str, value: impl ToString) -> Self {
        self.flags.insert(name.to_string(), value.to_string());
        self
    }

    pub fn flag_opt(self, name: &str, value: Option<impl ToString>) -> Self {
        match value {
            Some(v) => self.flag(name, v),
            None => self,
        }
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<()> {
        let path = out_dir.join("run.json");
        let json = serde_json::to_string_pretty(self).context("serializing run.json")?;
        fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips_through_serde() {
        let dir = tempfile::tempdir().unwrap();
        let p = Provenance::new("store put", 9)
            .flag("file", "a.bin")
            .flag("chunk-size", 4096)
            .flag_opt("missing", None::<u64>);
        p.write(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("run.json")).unwrap();
        let back: Provenance = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        assert!(!back.flags.contains_key("missing"));
    }

    #[test]
    fn written_file_is_stable_across_writes() {
        let dir = tempfile::tempdir().unwrap();
        let p = Provenance::new("gen", 0).flag("rows", 32).flag("cols", 32);
        p.write(dir.path()).unwrap();
        let first = fs::read(dir.path().join("run.json")).unwrap();
        p.write(dir.path()).unwrap();
        let second = fs::read(dir.path().join("run.json")).unwrap();
        assert_eq!(first, second);
    }
}
