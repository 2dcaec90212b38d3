use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = concat!("gcnx ", env!("CARGO_PKG_VERSION"));

/// Identity stamped into every artifact: the effective configuration, its
/// hash and the seed.
#[derive(Debug, Clone, Serialize)]
pub struct RunStamp {
    pub tool_version: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub config: Value,
}

impl RunStamp {
    /// `config` must already exclude output locations.
    pub fn new(command: &str, config: &impl Serialize, extra: Value, seed: u64) -> CliResult<Self> {
        let mut value = serde_json::to_value(config)?;
        if let (Value::Object(map), Value::Object(more)) = (&mut value, extra) {
            map.extend(more);
        }
        let config = json!({ "command": command, "settings": value });
        let digest = Sha256::digest(serde_json::to_vec(&config)?);
        Ok(RunStamp {
            tool_version: TOOL_VERSION,
            config_hash: hex::encode(digest),
            seed,
            config,
        })
    }

    /// `# key=value` lines for CSV outputs.
    pub fn comment_lines(&self) -> CliResult<String> {
        Ok(format!(
            "# tool_version={}\n# config_hash={}\n# seed={}\n# config={}\n",
            self.tool_version,
            self.config_hash,
            self.seed,
            serde_json::to_string(&self.config)?
        ))
    }
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    let bytes = read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
