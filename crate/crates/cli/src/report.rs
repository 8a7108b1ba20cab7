//! Deterministic report emission: JSON with sorted keys and floats at 17
//! significant digits, CSV tables in the same number format.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const TOOL: &str = "weakfock";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits; non-finite values become `null`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn emit(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => out.push_str(&u.to_string()),
            (None, Some(i)) => out.push_str(&i.to_string()),
            _ => out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                emit(x, indent + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push_str("{\n");
            let n = m.len();
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                emit(x, indent + 1, out);
                out.push_str(if i + 1 < n { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Serializes through `serde_json::Value` (keys sorted) and prints every
/// float with 17 significant digits.
pub fn to_json<T: Serialize>(x: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(x)?;
    let mut s = String::new();
    emit(&v, 0, &mut s);
    s.push('\n');
    Ok(s)
}

/// SHA-256 of the canonical JSON of the resolved configuration. The output
/// directory is blanked first: it does not affect results.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.run.out = Default::default();
    let text = to_json(&c).expect("config serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
}

impl Verdict {
    pub fn new(name: impl Into<String>, pass: bool) -> Self {
        Verdict { name: name.into(), pass }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub base: u64,
    pub algebra: u64,
    pub bounds: u64,
}

impl Seeds {
    pub fn from_base(base: u64) -> Self {
        Seeds { base, algebra: base, bounds: base.wrapping_add(1) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: String,
    pub seeds: Seeds,
    pub mode: weakfock::constants::Mode,
    pub verdicts: &'a [Verdict],
    pub pass: bool,
    pub result: &'a T,
}

pub enum Cell {
    F(f64),
    I(i64),
    U(usize),
    B(bool),
    S(String),
    Missing,
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::F(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::F(x) => format!("{x}"),
            Cell::I(i) => i.to_string(),
            Cell::U(u) => u.to_string(),
            Cell::B(b) => b.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::F)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::U(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::B(x)
    }
}

pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: Vec<&'static str>) -> Self {
        Table { name: name.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", self.name)))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::text))?;
        }
        w.flush()
    }
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_f64(f64::NAN), "null");
    }

    #[test]
    fn keys_sorted_and_ints_kept() {
        #[derive(Serialize)]
        struct S {
            z: u32,
            a: f64,
            m: Option<f64>,
        }
        let s = to_json(&S { z: 3, a: 0.5, m: None }).unwrap();
        assert_eq!(s, "{\n  \"a\": 5.0000000000000000e-1,\n  \"m\": null,\n  \"z\": 3\n}\n");
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.run.seed += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        b.run.seed -= 1;
        b.run.out = "elsewhere".into();
        assert_eq!(config_hash(&a), config_hash(&b));
    }

    proptest! {
        #[test]
        fn output_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = to_json(&vec![x]).unwrap();
            let back: Vec<f64> = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(back[0].to_bits(), x.to_bits());
        }
    }
}
