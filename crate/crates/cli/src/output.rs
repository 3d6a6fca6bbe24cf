//! Output directories whose every file is recorded in a run manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Wall-clock timings live apart from the manifest so that manifests of
/// seeded runs compare byte for byte.
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    pub version: u32,
    pub command: String,
    pub tool_version: &'static str,
    pub config: Value,
    pub data_source: Option<String>,
    pub data_fingerprint: Option<String>,
    pub seeds: BTreeMap<String, Value>,
    /// Every file written by the run except this manifest, relative to the
    /// output directory, sorted.
    pub artifacts: Vec<String>,
    pub timings_file: &'static str,
}

#[derive(Debug, Serialize)]
struct Timings<'a> {
    command: &'a str,
    stages: &'a BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    items: &'a BTreeMap<String, f64>,
}

pub struct Output {
    dir: PathBuf,
    command: String,
    files: BTreeSet<String>,
    stages: BTreeMap<String, f64>,
    items: BTreeMap<String, f64>,
    started: Instant,
    pub seeds: BTreeMap<String, Value>,
    pub data_source: Option<String>,
    pub data_fingerprint: Option<String>,
}

impl Output {
    pub fn create(dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            files: BTreeSet::new(),
            stages: BTreeMap::new(),
            items: BTreeMap::new(),
            started: Instant::now(),
            seeds: BTreeMap::new(),
            data_source: None,
            data_fingerprint: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Registers `rel` as an artifact and returns its absolute path, creating
    /// parent directories.
    pub fn file(&mut self, rel: &str) -> Result<PathBuf> {
        if rel == MANIFEST_FILE || rel == TIMINGS_FILE {
            bail!("{rel} is reserved");
        }
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        self.files.insert(rel.to_string());
        Ok(path)
    }

    /// Registers files already written by a library call.
    pub fn record<I: IntoIterator<Item = String>>(&mut self, prefix: &str, names: I) {
        for n in names {
            self.files
                .insert(if prefix.is_empty() { n } else { format!("{prefix}/{n}") });
        }
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let path = self.file(rel)?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write_text(rel, &text)
    }

    pub fn seed(&mut self, name: &str, value: impl Serialize) {
        self.seeds
            .insert(name.to_string(), serde_json::to_value(value).expect("seed serializes"));
    }

    /// Times `f` under `stage`.
    pub fn stage<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        self.stages.insert(stage.to_string(), start.elapsed().as_secs_f64());
        Ok(out)
    }

    /// Records a per-item wall time (a search candidate, for example).
    pub fn item_time(&mut self, name: String, secs: f64) {
        self.items.insert(name, secs);
    }

    /// Writes the timings file and the manifest.
    pub fn finish(mut self, config: &impl Serialize) -> Result<PathBuf> {
        self.stages.insert("total".into(), self.started.elapsed().as_secs_f64());
        let timings = Timings {
            command: &self.command,
            stages: &self.stages,
            items: &self.items,
        };
        let text = serde_json::to_string_pretty(&timings)? + "\n";
        fs::write(self.dir.join(TIMINGS_FILE), text)?;
        self.files.insert(TIMINGS_FILE.into());
        for f in &self.files {
            if !self.dir.join(f).is_file() {
                bail!("artifact {f} was registered but not written");
            }
        }
        let manifest = RunManifest {
            format: "choicenet-run",
            version: 1,
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(config)?,
            data_source: self.data_source.clone(),
            data_fingerprint: self.data_fingerprint.clone(),
            seeds: std::mem::take(&mut self.seeds),
            artifacts: self.files.iter().cloned().collect(),
            timings_file: TIMINGS_FILE,
        };
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}
