//! Output artifacts. Each one records the toolkit version, the command, the
//! seed and the fully resolved configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::CliError;

#[derive(Serialize)]
pub struct Meta<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl<'a> Meta<'a> {
    pub fn new(command: &'a str, seed: Option<u64>, model: &impl Serialize, args: &impl Serialize) -> Self {
        let config = serde_json::json!({
            "model": model,
            command: args,
        });
        Self {
            tool: "bdqsd",
            version: bdqsd::VERSION,
            command,
            seed,
            config,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

/// JSON object `{tool, version, command, seed, config, result}`.
pub fn write_json(path: &Path, meta: &Meta, result: &impl Serialize) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Artifact<'a, R> {
        #[serde(flatten)]
        meta: &'a Meta<'a>,
        result: &'a R,
    }
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &Artifact { meta, result }).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::Io(e.to_string()))
}

/// CSV with `#` comment lines carrying the metadata, then the table written
/// by `body`.
pub fn write_csv(
    path: &Path,
    meta: &Meta,
    body: impl FnOnce(&mut BufWriter<File>) -> bdqsd::Result<()>,
) -> Result<(), CliError> {
    let mut out = create(path)?;
    let config = serde_json::to_string(&meta.config).map_err(|e| CliError::Io(e.to_string()))?;
    let seed = meta.seed.map_or("none".to_string(), |s| s.to_string());
    writeln!(out, "# {} {}", meta.tool, meta.version)
        .and_then(|_| writeln!(out, "# command: {}", meta.command))
        .and_then(|_| writeln!(out, "# seed: {seed}"))
        .and_then(|_| writeln!(out, "# config: {config}"))
        .map_err(|e| CliError::Io(e.to_string()))?;
    body(&mut out)?;
    out.flush().map_err(|e| CliError::Io(e.to_string()))
}

/// JSON when the path ends in `.json`, CSV otherwise.
pub fn write_artifact<R: Serialize>(
    path: &Path,
    meta: &Meta,
    result: &R,
    csv_body: impl FnOnce(&mut BufWriter<File>) -> bdqsd::Result<()>,
) -> Result<(), CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        write_json(path, meta, result)
    } else {
        write_csv(path, meta, csv_body)
    }
}
