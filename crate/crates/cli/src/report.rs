//! The run summary written to `report.json`, and merging of several of them.

use crate::config::SCHEMA_VERSION;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub id: String,
    pub kind: String,
    pub seed: u64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config_hash: String,
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub entries: Vec<Entry>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Default for Report {
    fn default() -> Self {
        Self::new()
    }
}

impl Report {
    pub fn new() -> Self {
        Self { schema_version: SCHEMA_VERSION, entries: Vec::new(), warnings: Vec::new() }
    }

    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    /// 1 if anything errored, 2 if something ran but failed, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.entries.iter().any(|e| e.error.is_some()) {
            1
        } else if self.entries.iter().any(|e| !e.pass) {
            2
        } else {
            0
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if r.schema_version != SCHEMA_VERSION {
            bail!("{}: schema_version {} is not {}", path.display(), r.schema_version, SCHEMA_VERSION);
        }
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// Union by experiment id. The first occurrence of an id wins and every
    /// later one is dropped with a warning.
    pub fn merge(reports: &[Report]) -> Self {
        let mut out = Self::new();
        let mut seen = BTreeSet::new();
        for (i, r) in reports.iter().enumerate() {
            out.warnings.extend(r.warnings.iter().cloned());
            for e in &r.entries {
                if seen.insert(e.id.clone()) {
                    out.entries.push(e.clone());
                } else {
                    out.warnings.push(format!("duplicate id `{}` in input {} ignored", e.id, i + 1));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, pass: bool) -> Entry {
        Entry { id: id.into(), kind: "verify".into(), seed: 1, pass, error: None, config_hash: "h".into(), artifact: format!("{id}.json") }
    }

    #[test]
    fn merge_is_union_and_keeps_first_duplicate() {
        let a = Report { entries: vec![entry("a", true), entry("b", true)], ..Report::new() };
        let b = Report { entries: vec![entry("b", false), entry("c", true)], ..Report::new() };
        let m = Report::merge(&[a.clone(), b]);
        let ids: Vec<_> = m.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(m.entries[1].pass);
        assert_eq!(m.warnings.len(), 1);
        assert_eq!(Report::merge(&[a.clone()]), a);
    }

    #[test]
    fn exit_codes() {
        let mut r = Report::new();
        assert_eq!(r.exit_code(), 0);
        r.push(entry("a", false));
        assert_eq!(r.exit_code(), 2);
        r.push(Entry { error: Some("boom".into()), ..entry("b", false) });
        assert_eq!(r.exit_code(), 1);
    }
}
