//! Output directory handling and the per-run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::Scenario;
use crate::CliError;

pub struct OutputDir {
    dir: PathBuf,
    manifest: Map<String, Value>,
    tolerances: Map<String, Value>,
    results: Map<String, Value>,
    outputs: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path, command: &str, scenario: &Scenario) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", dir.display())))?;
        let g = &scenario.grid;
        let mut manifest = Map::new();
        manifest.insert("command".into(), json!(command));
        manifest.insert("config_sha256".into(), json!(scenario.sha256));
        manifest.insert("library_version".into(), json!(resonat_core::VERSION));
        manifest.insert("cli_version".into(), json!(env!("CARGO_PKG_VERSION")));
        manifest.insert("seed".into(), json!(scenario.seed));
        manifest.insert(
            "grid".into(),
            json!({
                "dim": g.dim(),
                "k": scenario.ctx.k(),
                "radius": g.shape.radius(),
                "cells_per_diameter": g.cells_per_diameter,
                "points": g.len(),
                "cell_size": g.cell_size,
            }),
        );
        Ok(Self { dir: dir.to_path_buf(), manifest, tolerances: Map::new(), results: Map::new(), outputs: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(BufWriter::new(f))
    }

    pub fn csv<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> resonat_core::Result<()>,
    {
        let mut w = self.open(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut w = self.open(name)?;
        write_json(&mut w, value)?;
        Ok(())
    }

    pub fn tolerance(&mut self, key: &str, value: impl Into<Value>) {
        self.tolerances.insert(key.into(), value.into());
    }

    pub fn result(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.into(), value.into());
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.outputs.sort();
        let mut m = std::mem::take(&mut self.manifest);
        m.insert("tolerances".into(), Value::Object(std::mem::take(&mut self.tolerances)));
        m.insert("results".into(), Value::Object(std::mem::take(&mut self.results)));
        m.insert("outputs".into(), json!(self.outputs));
        let mut w = self.open("manifest.json")?;
        write_json(&mut w, &Value::Object(m))
    }
}

/// Rebuilds every object with its keys in lexicographic order, whatever map
/// backing serde_json was compiled with.
fn sorted(value: &Value) -> Value {
    match value {
        Value::Object(m) => {
            let mut entries: Vec<(&String, &Value)> = m.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k.clone(), sorted(v))).collect())
        }
        Value::Array(a) => Value::Array(a.iter().map(sorted).collect()),
        other => other.clone(),
    }
}

fn write_json(w: &mut BufWriter<File>, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&sorted(value)).map_err(|e| CliError::Runtime(format!("json encoding failed: {e}")))?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
