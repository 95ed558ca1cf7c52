use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ParamBlock, Parameterized};

pub const CHECKPOINT_FORMAT: &str = "hmiway-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleParams {
    pub layout: Vec<ParamBlock>,
    pub params: Vec<f64>,
}

/// Named flat parameter vectors with their layouts, plus arbitrary
/// serializable extras (optimizer state, counters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub modules: BTreeMap<String, ModuleParams>,
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            modules: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, module: &dyn Parameterized) {
        self.modules
            .insert(name.to_string(), ModuleParams { layout: module.layout(), params: module.params().to_vec() });
    }

    /// Loads the named parameters into `module`, which must have the same layout.
    pub fn restore(&self, name: &str, module: &mut dyn Parameterized) -> Result<()> {
        let stored = self
            .modules
            .get(name)
            .ok_or_else(|| Error::Schema { line: 0, message: format!("checkpoint has no module `{name}`") })?;
        if stored.layout != module.layout() {
            return Err(Error::Schema { line: 0, message: format!("layout of `{name}` does not match the network") });
        }
        module.set_params(&stored.params)
    }

    pub fn insert_extra<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Schema { line: 0, message: e.to_string() })?;
        self.extra.insert(name.to_string(), v);
        Ok(())
    }

    pub fn extra<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let v = self
            .extra
            .get(name)
            .ok_or_else(|| Error::Schema { line: 0, message: format!("checkpoint has no entry `{name}`") })?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Schema { line: 0, message: e.to_string() })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(self).map_err(|e| Error::Schema { line: 0, message: e.to_string() })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::Schema { line: 1, message: e.to_string() })?;
        if value.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Schema { line: 1, message: "not a checkpoint file".into() });
        }
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::VersionMismatch { found: version as u32, expected: CHECKPOINT_VERSION });
        }
        serde_json::from_value(value).map_err(|e| Error::Schema { line: 1, message: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
