//! Output plumbing: provenance stamping, JSON/CSV writers, exit codes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use tqme::Error;

pub const TOOL: &str = "tqme";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DimensionMismatch { .. } => 3,
        Error::Dataset { .. } => 4,
        Error::ResourceGuard(_) => 5,
        Error::Io(_) => 6,
        _ => 2,
    }
}

/// The invocation as typed, without the binary path so it is stable across installs.
pub fn command_line() -> String {
    std::iter::once(TOOL.to_string())
        .chain(std::env::args().skip(1))
        .collect::<Vec<_>>()
        .join(" ")
}

pub struct Provenance {
    pub command: &'static str,
    pub seed: u64,
    pub shots: Option<u64>,
}

impl Provenance {
    pub fn to_map(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("tool".into(), TOOL.into());
        m.insert("version".into(), VERSION.into());
        m.insert("command".into(), self.command.into());
        m.insert("command_line".into(), command_line().into());
        m.insert("seed".into(), self.seed.into());
        m.insert("shots".into(), self.shots.map_or(Value::Null, Value::from));
        m
    }

    /// Merges the provenance keys into a serialized result object.
    pub fn stamp(&self, body: impl Serialize) -> Value {
        let mut out = self.to_map();
        match serde_json::to_value(body).expect("report types serialize") {
            Value::Object(fields) => out.extend(fields),
            other => {
                out.insert("result".into(), other);
            }
        }
        Value::Object(out)
    }
}

pub fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

pub fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// CSV files cannot carry provenance inline, so it goes next to them.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn emit_csv(csv: &str, out: Option<&Path>, prov: &Provenance) -> Result<(), Error> {
    emit(csv, out)?;
    if let Some(p) = out {
        fs::write(meta_path(p), json_text(&Value::Object(prov.to_map())))?;
    }
    Ok(())
}

/// Minimal CSV builder; every field here is numeric or a plain identifier.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}
