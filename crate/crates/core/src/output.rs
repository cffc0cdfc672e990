//! Result files: CSV, JSON lines and the run manifest.
//!
//! CSV columns are `experiment`, then every parameter name in order of first
//! appearance, then `estimate, stderr, n, reference, z, truncated, ci_lo,
//! ci_hi`. JSON lines carry the same names. Reals are written with 17
//! significant digits; a missing value is an empty CSV cell or JSON `null`.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{EstimateRecord, Value};

/// Columns after the parameters.
pub const FIXED_COLUMNS: [&str; 8] = [
    "estimate",
    "stderr",
    "n",
    "reference",
    "z",
    "truncated",
    "ci_lo",
    "ci_hi",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(Error::Config(format!("unknown format {s:?} (csv|jsonl)"))),
        }
    }
}

/// 17 significant digits, or `inf`, `-inf`, `NaN`.
pub fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn param_names(records: &[EstimateRecord]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        for (n, _) in &r.params {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    names
}

fn opt_real(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `records` as CSV.
pub fn write_csv<W: Write>(records: &[EstimateRecord], out: W) -> io::Result<()> {
    let names = param_names(records);
    let mut w = csv::Writer::from_writer(out);
    let header = std::iter::once("experiment")
        .chain(names.iter().map(String::as_str))
        .chain(FIXED_COLUMNS);
    w.write_record(header)?;
    for r in records {
        let mut row = vec![r.experiment.clone()];
        row.extend(names.iter().map(|n| r.get(n).map(Value::to_string).unwrap_or_default()));
        row.push(fmt_real(r.estimate));
        row.push(opt_real(r.stderr));
        row.push(r.n.to_string());
        row.push(opt_real(r.reference));
        row.push(opt_real(r.z));
        row.push(r.truncated.to_string());
        row.push(opt_real(r.interval.map(|i| i.0)));
        row.push(opt_real(r.interval.map(|i| i.1)));
        w.write_record(&row)?;
    }
    w.flush()
}

fn json_real(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => fmt_real(v),
        _ => "null".into(),
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Writes one JSON object per record.
pub fn write_jsonl<W: Write>(records: &[EstimateRecord], mut out: W) -> io::Result<()> {
    for r in records {
        let mut fields = vec![format!("\"experiment\":{}", json_str(&r.experiment))];
        for (n, v) in &r.params {
            let v = match v {
                Value::Int(i) => i.to_string(),
                Value::Real(x) => json_real(Some(*x)),
                Value::Text(t) => json_str(t),
            };
            fields.push(format!("{}:{v}", json_str(n)));
        }
        let numbers = [
            ("estimate", json_real(Some(r.estimate))),
            ("stderr", json_real(r.stderr)),
            ("n", r.n.to_string()),
            ("reference", json_real(r.reference)),
            ("z", json_real(r.z)),
            ("truncated", r.truncated.to_string()),
            ("ci_lo", json_real(r.interval.map(|i| i.0))),
            ("ci_hi", json_real(r.interval.map(|i| i.1))),
        ];
        fields.extend(numbers.into_iter().map(|(k, v)| format!("\"{k}\":{v}")));
        writeln!(out, "{{{}}}", fields.join(","))?;
    }
    out.flush()
}

pub fn write_to<W: Write>(records: &[EstimateRecord], format: Format, out: W) -> io::Result<()> {
    match format {
        Format::Csv => write_csv(records, out),
        Format::Jsonl => write_jsonl(records, out),
    }
}

/// Writes `records` to `path`, replacing any existing file.
pub fn write_results(records: &[EstimateRecord], format: Format, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_to(records, format, BufWriter::new(file)).map_err(io_err(path))
}

fn parse_value(s: &str) -> Value {
    if let Ok(i) = s.parse::<i64>() {
        Value::Int(i)
    } else if let Ok(x) = s.parse::<f64>() {
        Value::Real(x)
    } else {
        Value::Text(s.to_owned())
    }
}

/// Reads records back from CSV written by [`write_csv`].
pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<EstimateRecord>> {
    let bad = |msg: String| Error::Config(format!("malformed results CSV: {msg}"));
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let fixed_at = header
        .len()
        .checked_sub(FIXED_COLUMNS.len())
        .ok_or_else(|| bad("short header".into()))?;
    if header.first().map(String::as_str) != Some("experiment") || header[fixed_at..] != FIXED_COLUMNS {
        return Err(bad("unexpected columns".into()));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let real = |i: usize| -> Result<Option<f64>> {
            match &row[i] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(format!("not a number: {s:?}"))),
            }
        };
        let int = |i: usize| {
            row[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("not a count: {:?}", &row[i])))
        };
        let params = (1..fixed_at)
            .filter(|&i| !row[i].is_empty())
            .map(|i| (header[i].clone(), parse_value(&row[i])))
            .collect();
        let lo = real(fixed_at + 6)?;
        let hi = real(fixed_at + 7)?;
        out.push(EstimateRecord {
            experiment: row[0].to_owned(),
            params,
            estimate: real(fixed_at)?.ok_or_else(|| bad("missing estimate".into()))?,
            stderr: real(fixed_at + 1)?,
            n: int(fixed_at + 2)?,
            reference: real(fixed_at + 3)?,
            z: real(fixed_at + 4)?,
            truncated: int(fixed_at + 5)?,
            interval: lo.zip(hi),
        });
    }
    Ok(out)
}

/// Provenance written next to every data file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub subcommand: String,
    /// Resolved settings in config-file form; feeding them back through
    /// `--config` reproduces the data file.
    pub config: std::collections::BTreeMap<String, String>,
    pub seed: u64,
    pub duration_seconds: f64,
    pub records: usize,
    /// `experiment estimate ± stderr` per record.
    pub summary: Vec<String>,
}

/// `dir/name.ext` becomes `dir/name.manifest.json`.
pub fn manifest_path(data: &Path) -> PathBuf {
    let stem = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    data.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}
