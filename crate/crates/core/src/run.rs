//! Run configuration, append-only run directories and manifests used by the
//! command-line entry point.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cognitive::{archetype_profile, DriverProfile};
use crate::dataset::DemoAlerts;
use crate::env::ScenarioConfig;
use crate::error::{Error, Result};
use crate::intervention::StageConfig;
use crate::nn::Checkpoint;
use crate::seeding::derive_seed;
use crate::traits::TraitConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILED_FILE: &str = "FAILED";

/// Where demonstrations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Scripted,
    /// Stage-1 driver policies from a `train-driver` run.
    #[default]
    Trained,
}

/// What the HMI is told about its driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    /// The driver's profile parameters.
    #[default]
    Profile,
    /// The mean learned latent of the driver's pools.
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub steps_per_type: usize,
    pub labeled_fraction: f64,
    pub alerts: DemoAlerts,
    pub behavior: Behavior,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { steps_per_type: 300_000, labeled_fraction: 0.2, alerts: DemoAlerts::Never, behavior: Behavior::Trained }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct HmiConfig {
    pub stage: StageConfig,
    pub context: ContextSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Also evaluate driver-specific models on the other drivers.
    pub full_matrix: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 200, full_matrix: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub pools_per_driver: usize,
    pub probe_train_fraction: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { pools_per_driver: 20, probe_train_fraction: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Driver types of the population, by archetype name.
    pub profiles: Vec<String>,
    /// Archetype the baseline HMI is tuned for.
    pub average_profile: String,
    pub scenario: ScenarioConfig,
    pub data: DataConfig,
    pub traits: TraitConfig,
    /// Trait-learner checkpoint interval in rounds; the final round is always saved.
    pub checkpoint_every: usize,
    pub driver: StageConfig,
    pub hmi: HmiConfig,
    pub eval: EvalConfig,
    pub embed: EmbedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            profiles: ["Lisa", "Marge", "Bart", "Homer"].map(String::from).to_vec(),
            average_profile: "Avg".into(),
            scenario: ScenarioConfig::default(),
            data: DataConfig::default(),
            traits: TraitConfig::default(),
            checkpoint_every: 25,
            driver: StageConfig::default(),
            hmi: HmiConfig::default(),
            eval: EvalConfig::default(),
            embed: EmbedConfig::default(),
        }
    }
}

/// Seed streams of the individual commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Driver = 2,
    Hmi = 3,
    Traits = 4,
    Eval = 5,
    Embed = 6,
}

impl RunConfig {
    /// Reads a TOML config, or the config snapshot of a `manifest.json`,
    /// then applies `key.path=value` overrides and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let is_manifest = path.extension().is_some_and(|e| e == "json");
        let mut table: toml::Table = if is_manifest {
            let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Schema { line: e.line(), message: e.to_string() })?;
            toml::Table::try_from(&manifest.config).map_err(|e| Error::Config(e.to_string()))?
        } else {
            // deserialize once from text so that errors carry line numbers
            toml::from_str::<RunConfig>(&text).map_err(|e| toml_error(&text, &e))?;
            toml::from_str(&text).map_err(|e| toml_error(&text, &e))?
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.traits.validate()?;
        self.driver.ppo.validate()?;
        self.hmi.stage.ppo.validate()?;
        if self.profiles.is_empty() {
            return Err(Error::Config("at least one profile is required".into()));
        }
        self.population()?;
        self.average()?;
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be positive".into()));
        }
        if self.embed.pools_per_driver == 0 || !(self.embed.probe_train_fraction > 0.0 && self.embed.probe_train_fraction < 1.0) {
            return Err(Error::Config("embed.pools_per_driver must be positive and probe_train_fraction in (0, 1)".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        for stage in [&self.driver, &self.hmi.stage] {
            if stage.total_steps == 0 || stage.rollout_steps == 0 {
                return Err(Error::Config("stage budgets and rollout lengths must be positive".into()));
            }
        }
        if self.data.steps_per_type == 0 || !(0.0..=1.0).contains(&self.data.labeled_fraction) {
            return Err(Error::Config("data.steps_per_type must be positive and labeled_fraction in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn population(&self) -> Result<Vec<DriverProfile>> {
        self.profiles.iter().map(|n| archetype_profile(n)).collect()
    }

    pub fn average(&self) -> Result<DriverProfile> {
        archetype_profile(&self.average_profile)
    }

    pub fn seed_for(&self, stream: Stream) -> u64 {
        derive_seed(self.seed, &[stream as u64])
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    Error::Schema { line, message: e.message().to_string() }
}

/// Sets `a.b.c=value` in `table`; the value is parsed as TOML and falls back
/// to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A file of a run with its content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Logical name other commands look the file up by.
    pub role: String,
    /// Path relative to the run directory.
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

/// An upstream file a run consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Input {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Input>,
    pub artifacts: Vec<Artifact>,
    /// Command-specific facts about the outputs.
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("{}: {e} (not a completed run directory?)", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema { line: e.line(), message: e.to_string() })
    }

    pub fn artifact(&self, role: &str) -> Result<&Artifact> {
        self.artifacts
            .iter()
            .find(|a| a.role == role)
            .ok_or_else(|| Error::Config(format!("run has no `{role}` artifact")))
    }
}

/// Reads an artifact of a completed run and checks its hash.
pub fn read_artifact(dir: &Path, role: &str, inputs: &mut Vec<Input>) -> Result<Vec<u8>> {
    let manifest = Manifest::load(dir)?;
    let artifact = manifest.artifact(role)?;
    let path = dir.join(&artifact.file);
    let bytes = fs::read(&path)?;
    let hash = sha256_hex(&bytes);
    if hash != artifact.sha256 {
        return Err(Error::Config(format!("{} does not match its manifest hash", path.display())));
    }
    inputs.push(Input { path: path.display().to_string(), sha256: hash });
    Ok(bytes)
}

pub fn read_checkpoint(dir: &Path, role: &str, inputs: &mut Vec<Input>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&read_artifact(dir, role, inputs)?)
}

/// A new, append-only output directory. Files are never overwritten; the
/// manifest is written last and a `FAILED` marker replaces it on error.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        if root.exists() && fs::read_dir(root)?.next().is_some() {
            return Err(Error::Config(format!("run directory {} is not empty", root.display())));
        }
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    pub fn write(&mut self, role: &str, file: &str, bytes: &[u8]) -> Result<&Artifact> {
        if self.artifacts.iter().any(|a| a.role == role) {
            return Err(Error::Config(format!("artifact `{role}` written twice")));
        }
        let path = self.root.join(file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::OpenOptions::new().write(true).create_new(true).open(&path)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        self.artifacts.push(Artifact {
            role: role.to_string(),
            file: file.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(self.artifacts.last().expect("just pushed"))
    }

    /// Stores a checkpoint under a name derived from its content hash.
    pub fn write_checkpoint(&mut self, role: &str, stem: &str, ck: &Checkpoint) -> Result<&Artifact> {
        let bytes = ck.to_bytes()?;
        let file = format!("{stem}-{}.ckpt", &sha256_hex(&bytes)[..16]);
        self.write(role, &file, &bytes)
    }

    /// Writes a CSV produced by `f` into memory first, then to disk.
    pub fn write_with(&mut self, role: &str, file: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<&Artifact> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(role, file, &buf)
    }

    pub fn finish(self, manifest: Manifest) -> Result<()> {
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        let mut f = fs::OpenOptions::new().write(true).create_new(true).open(self.root.join(MANIFEST_FILE))?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Marks a run directory as failed with the error message.
pub fn mark_failed(root: &Path, message: &str) {
    if root.is_dir() {
        let _ = fs::write(root.join(FAILED_FILE), format!("{message}\n"));
    }
}
