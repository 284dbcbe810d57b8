//! Report emission: JSON documents and CSV tables, written to a file or
//! stdout. Every report embeds the seed and settings that produced it,
//! and identical inputs produce byte-identical output.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Destination for one report document.
pub struct Output {
    path: Option<PathBuf>,
}

impl Output {
    pub fn new(path: Option<PathBuf>) -> Self {
        Output { path }
    }

    pub fn write(&self, content: &str) -> Result<()> {
        match &self.path {
            Some(p) => {
                if let Some(dir) = p.parent() {
                    if !dir.as_os_str().is_empty() {
                        fs::create_dir_all(dir)
                            .with_context(|| format!("creating {}", dir.display()))?;
                    }
                }
                fs::write(p, content).with_context(|| format!("writing {}", p.display()))
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(content.as_bytes())?;
                Ok(())
            }
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// A CSV table with a fixed header; all floats are written in Rust's
/// shortest round-trip form so reruns are byte-identical.
pub struct Csv {
    lines: Vec<String>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            lines: vec![header.join(",")],
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.lines.push(fields.join(","));
    }

    pub fn finish(self) -> String {
        let mut text = self.lines.join("\n");
        text.push('\n');
        text
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// The structured error record emitted on any failure path.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: String,
    pub detail: Vec<String>,
}

impl ErrorRecord {
    pub fn from_anyhow(err: &anyhow::Error) -> Self {
        ErrorRecord {
            error: err.to_string(),
            detail: err.chain().skip(1).map(|c| c.to_string()).collect(),
        }
    }
}
