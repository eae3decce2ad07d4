//! Layered configuration: built-in defaults, then a config file section,
//! then command-line flags.

use std::path::{Path, PathBuf};

use bdqsd::model::model_from_toml;
use bdqsd::BirthDeathModel;
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Sections of a config file: `[model]` plus one per command. JSON
/// artifacts written with `--out` are accepted too; their `config` object
/// has the same shape.
#[derive(Debug, Default)]
pub struct ConfigFile {
    sections: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let sections = if is_json {
            let mut value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if let Some(cfg) = value.get_mut("config") {
                value = cfg.take();
            }
            toml::Table::try_from(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        for (k, v) in &sections {
            if !v.is_table() {
                return Err(CliError::Config(format!(
                    "{}: top-level key `{k}` must be a section such as [model] or [fv]",
                    path.display()
                )));
            }
        }
        Ok(Self { sections })
    }

    fn section(&self, name: &str) -> toml::Table {
        self.sections
            .get(name)
            .and_then(|v| v.as_table())
            .cloned()
            .unwrap_or_default()
    }

    /// Merge the named section with flags from the command line, which win.
    pub fn resolve<T: Serialize + DeserializeOwned>(&self, name: &str, cli: &T) -> Result<T, CliError> {
        let mut table = self.section(name);
        let flags = toml::Table::try_from(cli).map_err(|e| CliError::Config(e.to_string()))?;
        table.extend(flags);
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("[{name}] {}", e.message())))
    }
}

/// Model selection shared by every command.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArgs {
    /// Built-in family: linear, power, logistic, constant_tail, example3.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    /// TOML file with `family = "table"` and `birth`/`death` arrays.
    #[arg(long, conflicts_with = "family")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d1: Option<f64>,
}

impl ModelArgs {
    pub fn build(&self) -> Result<BirthDeathModel, CliError> {
        if let Some(path) = &self.table {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let table: toml::Table = text
                .parse()
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok(model_from_toml(&table)?);
        }
        let family = self
            .family
            .as_ref()
            .ok_or_else(|| CliError::Config("no model given: pass --family or --table".into()))?;
        let mut table = toml::Table::new();
        table.insert("family".into(), family.clone().into());
        for (key, value) in [
            ("b", self.b),
            ("d", self.d),
            ("a", self.a),
            ("c", self.c),
            ("b1", self.b1),
            ("d1", self.d1),
        ] {
            if let Some(v) = value {
                table.insert(key.into(), v.into());
            }
        }
        Ok(model_from_toml(&table)?)
    }
}

pub fn require_positive(name: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {value}")))
    }
}
