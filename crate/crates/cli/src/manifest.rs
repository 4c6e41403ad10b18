//! Stage manifests and content-hash staleness checks.
//!
//! A stage directory holds its artifacts and a `manifest.toml` naming the
//! SHA-256 of every input it read and every file it wrote, plus the slice of
//! the configuration it depends on. A downstream stage trusts an upstream
//! directory only if those hashes still match what is on disk and the
//! upstream configuration slice is unchanged.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.toml";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Input locator (relative to the output root, or absolute) to hash.
    pub inputs: BTreeMap<String, String>,
    /// File name inside the stage directory to hash.
    pub outputs: BTreeMap<String, String>,
    pub config: toml::Table,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_bytes(&bytes))
}

pub fn config_hash(slice: &toml::Table) -> String {
    sha256_bytes(toml::to_string(slice).expect("config slice serializes").as_bytes())
}

/// The output tree of one run.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
    pub force: bool,
}

impl Workspace {
    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    fn resolve(&self, locator: &str) -> PathBuf {
        let p = Path::new(locator);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Locator under which `path` is recorded in a manifest.
    pub fn locator(&self, path: &Path) -> String {
        match path.strip_prefix(&self.root) {
            Ok(rel) => rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
            Err(_) => std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf()).display().to_string(),
        }
    }

    /// Loads an upstream manifest and checks that it is still current.
    ///
    /// A missing manifest is always an error. Hash or config mismatches are
    /// errors unless the workspace was opened with `force`, in which case
    /// they are reported on stderr.
    pub fn require(&self, stage: &str, current_slice: &toml::Table) -> Result<Manifest> {
        let dir = self.stage_dir(stage);
        let path = dir.join(MANIFEST);
        if !path.exists() {
            bail!("missing {stage} artifact: no {} (run `{stage}` first)", path.display());
        }
        let text = std::fs::read_to_string(&path)?;
        let manifest: Manifest = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut problems = Vec::new();
        if manifest.config_hash != config_hash(current_slice) {
            problems.push("configuration changed since it was produced".to_string());
        }
        for (name, hash) in &manifest.outputs {
            let file = dir.join(name);
            if !file.exists() {
                bail!("missing {stage} artifact: {}", file.display());
            }
            if &sha256_file(&file)? != hash {
                problems.push(format!("{name} was modified"));
            }
        }
        for (locator, hash) in &manifest.inputs {
            let file = self.resolve(locator);
            match sha256_file(&file) {
                Ok(h) if &h == hash => {}
                Ok(_) => problems.push(format!("its input {locator} changed")),
                Err(_) => problems.push(format!("its input {locator} is gone")),
            }
        }
        if !problems.is_empty() {
            let msg = format!("stale {stage} artifact: {}", problems.join("; "));
            if !self.force {
                bail!("{msg}; rerun `{stage}` or pass --force");
            }
            eprintln!("warning: {msg} (continuing because of --force)");
        }
        Ok(manifest)
    }
}

/// Collects a stage's outputs and writes its manifest last.
pub struct StageWriter<'a> {
    ws: &'a Workspace,
    stage: String,
    dir: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl<'a> StageWriter<'a> {
    /// Outputs are built in a scratch directory that replaces the stage
    /// directory only when [`StageWriter::finish`] succeeds, so a refused or
    /// failed run leaves the previous artifacts in place.
    pub fn begin(ws: &'a Workspace, stage: &str) -> Result<Self> {
        let dir = ws.root.join(format!(".{stage}.partial"));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(StageWriter {
            ws,
            stage: stage.to_string(),
            dir,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records a file this stage read.
    pub fn input(&mut self, path: &Path) -> Result<PathBuf> {
        self.inputs.insert(self.ws.locator(path), sha256_file(path)?);
        Ok(path.to_path_buf())
    }

    /// Path of an upstream artifact, recorded as an input.
    pub fn upstream(&mut self, stage: &str, name: &str) -> Result<PathBuf> {
        let path = self.ws.stage_dir(stage).join(name);
        if !path.exists() {
            bail!("missing {stage} artifact: {}", path.display());
        }
        self.input(&path)
    }

    /// Creates an output file and registers it for hashing.
    pub fn create(&mut self, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
        self.outputs.push(name.to_string());
        let path = self.dir.join(name);
        let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(std::io::BufWriter::new(f))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| anyhow!("serializing {name}: {e}"))?;
        self.write_text(name, &(text + "\n"))
    }

    /// Registers a file some other writer produced inside the stage directory.
    pub fn adopt(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn finish(self, seed: u64, slice: toml::Table) -> Result<Manifest> {
        let mut outputs = BTreeMap::new();
        for name in &self.outputs {
            outputs.insert(name.clone(), sha256_file(&self.dir.join(name))?);
        }
        let manifest = Manifest {
            stage: self.stage,
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: config_hash(&slice),
            inputs: self.inputs,
            outputs,
            config: slice,
        };
        let text = toml::to_string(&manifest).context("serializing manifest")?;
        std::fs::write(self.dir.join(MANIFEST), text)?;
        let target = self.ws.stage_dir(&manifest.stage);
        if target.exists() {
            std::fs::remove_dir_all(&target).with_context(|| format!("clearing {}", target.display()))?;
        }
        std::fs::rename(&self.dir, &target).with_context(|| format!("moving outputs into {}", target.display()))?;
        Ok(manifest)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
