//! Output files: tables in CSV or JSON, JSON documents, and the run manifest
//! written next to every output set.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Num(x) => serde_json::Value::from(*x),
            Cell::Int(i) => serde_json::Value::from(*i),
            Cell::Text(s) => serde_json::Value::from(s.as_str()),
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // `{}` on f64 is the shortest string that parses back to the same value.
        match self {
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => {
                let mut out = self.columns.join(",");
                out.push('\n');
                for row in &self.rows {
                    let line: Vec<String> = row.iter().map(ToString::to_string).collect();
                    let _ = writeln!(out, "{}", line.join(","));
                }
                Ok(out)
            }
            Format::Json => {
                let rows: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj = self.columns.iter().cloned().zip(row.iter().map(Cell::to_json)).collect();
                        serde_json::Value::Object(obj)
                    })
                    .collect();
                Ok(serde_json::to_string_pretty(&rows)? + "\n")
            }
        }
    }
}

/// Collects the files one command writes into the output directory.
pub struct Outputs {
    dir: PathBuf,
    format: Format,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), format, written: Vec::new() })
    }

    fn write(&mut self, name: String, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(&name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name);
        Ok(())
    }

    pub fn table(&mut self, stem: &str, table: &Table) -> Result<()> {
        let text = table.render(self.format)?;
        self.write(format!("{stem}.{}", self.format.extension()), text.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name.to_string(), text.as_bytes())
    }

    pub fn bytes(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        self.write(name.to_string(), contents)
    }

    /// Writes `<command>.manifest.json` and returns the output file names.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<Vec<String>> {
        manifest.outputs = self.written.clone();
        let name = format!("{}.manifest.json", manifest.command);
        self.json(&name, &manifest)?;
        Ok(self.written)
    }
}

/// Everything needed to re-run a command and get byte-identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command line after the program name.
    pub args: Vec<String>,
    pub inputs: Vec<String>,
    pub params: serde_json::Value,
    pub seed: u64,
    pub out_dir: String,
    pub outputs: Vec<String>,
    pub tool_version: String,
}
