//! The run manifest: one TOML file describing everything a run needs, so
//! that runs are reproducible and hashable. Relative paths are interpreted
//! relative to the manifest's own directory, which keeps bundled data sets
//! relocatable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use medkb_core::align::MergeConfig;
use medkb_core::model::SourceTag;

use crate::fail::{self, Fail};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// Directory all artifacts are written into (created on demand).
    pub output_dir: PathBuf,
    /// Rayon worker count; absent means all available cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// GeoNames-style gazetteer TSV (required: location linking and
    /// territory classification both need it).
    pub gazetteer: PathBuf,
    /// Blacklist file, one `source:id` per line; the built-in list applies
    /// when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blacklist: Option<PathBuf>,
    /// Trial-registry dump for `link-trials`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    /// Country population table for density metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PathBuf>,
    /// Per-source dump paths; at least one must be present.
    pub dumps: Dumps,
    #[serde(default)]
    pub merge: MergeConfig,
    #[serde(default)]
    pub export: ExportSettings,
    #[serde(default)]
    pub trials: TrialSettings,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dumps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wikidata: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geonames: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dbpedia: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yago: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub umls: Option<PathBuf>,
}

impl Dumps {
    pub fn present(&self) -> Vec<(SourceTag, &Path)> {
        [
            (SourceTag::Wikidata, &self.wikidata),
            (SourceTag::Geonames, &self.geonames),
            (SourceTag::Dbpedia, &self.dbpedia),
            (SourceTag::Yago, &self.yago),
            (SourceTag::Umls, &self.umls),
        ]
        .into_iter()
        .filter_map(|(tag, path)| path.as_deref().map(|p| (tag, p)))
        .collect()
    }

    fn slots(&mut self) -> [&mut Option<PathBuf>; 5] {
        [
            &mut self.wikidata,
            &mut self.geonames,
            &mut self.dbpedia,
            &mut self.yago,
            &mut self.umls,
        ]
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportSettings {
    /// Compatibility switch: write WKT points latitude-first.
    pub wkt_lat_first: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialSettings {
    /// Link acceptance threshold (cosine must be strictly above it).
    pub threshold: f64,
    /// Registry column delimiter.
    pub delimiter: String,
}

impl Default for TrialSettings {
    fn default() -> TrialSettings {
        TrialSettings { threshold: 0.7, delimiter: ",".to_string() }
    }
}

/// Artifact filenames inside `output_dir`.
pub const KB_FILE: &str = "kb.json";
pub const CSV_FILE: &str = "facilities.csv";
pub const TURTLE_FILE: &str = "facilities.ttl";
pub const MERGE_REPORT_FILE: &str = "merge_report.jsonl";
pub const METRICS_JSON_FILE: &str = "metrics.json";
pub const METRICS_TSV_FILE: &str = "metrics.tsv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LINKS_FILE: &str = "links.jsonl";
pub const LINK_SUMMARY_FILE: &str = "link_summary.json";

impl RunManifest {
    pub fn output_path(&self, file: &str) -> PathBuf {
        self.output_dir.join(file)
    }

    pub fn delimiter_byte(&self) -> Result<u8, Fail> {
        let bytes = self.trials.delimiter.as_bytes();
        if bytes.len() != 1 {
            return Err(fail::config(format!(
                "trials.delimiter must be a single byte, got {:?}",
                self.trials.delimiter
            )));
        }
        Ok(bytes[0])
    }

    fn rebase(&mut self, base: &Path) {
        let rebase_one = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        rebase_one(&mut self.output_dir);
        rebase_one(&mut self.gazetteer);
        for slot in [&mut self.blacklist, &mut self.registry, &mut self.population] {
            if let Some(p) = slot {
                rebase_one(p);
            }
        }
        for slot in self.dumps.slots() {
            if let Some(p) = slot {
                rebase_one(p);
            }
        }
    }

    fn validate(&self) -> Result<(), Fail> {
        if self.dumps.present().is_empty() {
            return Err(fail::config("manifest lists no source dumps"));
        }
        if self.workers == Some(0) {
            return Err(fail::config("workers must be at least 1"));
        }
        let mut referenced: BTreeMap<&str, &Path> =
            BTreeMap::from([("gazetteer", self.gazetteer.as_path())]);
        for (tag, path) in self.dumps.present() {
            referenced.insert(tag.label(), path);
        }
        if let Some(p) = &self.blacklist {
            referenced.insert("blacklist", p);
        }
        if let Some(p) = &self.registry {
            referenced.insert("registry", p);
        }
        if let Some(p) = &self.population {
            referenced.insert("population", p);
        }
        for (what, path) in referenced {
            if !path.exists() {
                return Err(fail::config(format!(
                    "{} file does not exist: {}",
                    what.to_lowercase(),
                    path.display()
                )));
            }
        }
        self.merge.validate().map_err(|e| fail::config(e.to_string()))?;
        self.delimiter_byte()?;
        if !(0.0..=1.0).contains(&self.trials.threshold) {
            return Err(fail::config("trials.threshold must be within [0, 1]"));
        }
        Ok(())
    }
}

/// Loads, rebases, validates, and hashes a manifest. The hash covers the
/// manifest exactly as written (canonical JSON serialization of the parsed
/// form, before path rebasing), so moving a bundle between machines keeps
/// its hash.
pub fn load(path: &Path) -> Result<(RunManifest, String), Fail> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail::config(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut manifest: RunManifest = toml::from_str(&text)
        .map_err(|e| fail::config(format!("cannot parse manifest {}: {e}", path.display())))?;
    let canonical = serde_json::to_string(&manifest).expect("manifest serializes");
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    manifest.rebase(base);
    manifest.validate()?;
    Ok((manifest, hash))
}
