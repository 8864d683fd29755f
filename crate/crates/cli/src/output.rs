//! Buffered report files, written together once a command succeeds.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Default)]
pub struct Outputs {
    json: bool,
    csv: bool,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(formats: &[String]) -> Self {
        Self {
            json: formats.iter().any(|f| f == "json"),
            csv: formats.iter().any(|f| f == "csv"),
            files: Vec::new(),
        }
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if self.json {
            let mut bytes = serde_json::to_vec_pretty(value).with_context(|| format!("serializing {name}"))?;
            bytes.push(b'\n');
            self.files.push((name.to_string(), bytes));
        }
        Ok(())
    }

    /// Header row plus one record per row.
    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        if self.csv {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).with_context(|| format!("serializing {name}"))?;
            }
            let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("flushing {name}: {e}"))?;
            self.files.push((name.to_string(), bytes));
        }
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|f| f.0.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}
