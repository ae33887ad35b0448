use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Provenance block carried by every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the effective settings as compact JSON.
    pub config_hash: String,
}

impl Meta {
    pub fn new(command: &str, effective: &serde_json::Value) -> Self {
        let bytes = serde_json::to_vec(effective).expect("JSON values serialize");
        Self {
            tool: "trimode".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: hex::encode(Sha256::digest(&bytes)),
        }
    }

    /// `# key: value` lines for the top of a CSV file.
    pub fn csv_lines(&self) -> String {
        format!(
            "# tool: {} {}\n# command: {}\n# config_hash: {}\n",
            self.tool, self.version, self.command, self.config_hash
        )
    }

    pub fn pairs(&self) -> Vec<(&str, String)> {
        vec![
            ("tool", format!("{} {}", self.tool, self.version)),
            ("command", self.command.clone()),
            ("config_hash", self.config_hash.clone()),
        ]
    }
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn write(&self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}
