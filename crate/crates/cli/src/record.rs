use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::CliConfig;
use crate::error::CliResult;

/// One file read by a run; `partitions` names the split partitions taken
/// from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Access {
    pub role: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partitions: Vec<String>,
}

/// Written next to the outputs of every subcommand as `<command>.run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: CliConfig,
    pub data_access: Vec<Access>,
    pub outputs: Vec<PathBuf>,
}

impl RunRecord {
    pub fn new(command: &str, config: &CliConfig) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config: config.clone(),
            data_access: vec![],
            outputs: vec![],
        }
    }

    pub fn read(&mut self, role: &str, path: &Path) {
        self.read_partitions(role, path, &[]);
    }

    pub fn read_partitions(&mut self, role: &str, path: &Path, partitions: &[&str]) {
        self.data_access.push(Access {
            role: role.into(),
            path: path.to_path_buf(),
            partitions: partitions.iter().map(|p| p.to_string()).collect(),
        });
    }

    pub fn wrote(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(&self, out: &Path) -> CliResult<PathBuf> {
        let path = out.join(format!("{}.run.json", self.command));
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
