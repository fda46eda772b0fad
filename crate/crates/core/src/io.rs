//! File formats: commented CSV, JSON summaries, observation tables and the
//! line-oriented event file.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::Observation;
use crate::stats::DetectionRecord;
use crate::units::AngularFrequency;

/// Effective configuration as `# `-prefixed comment lines.
pub fn comment_block(toml: &str) -> String {
    let mut out = String::new();
    for line in toml.lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            let _ = writeln!(out, "# {line}");
        }
    }
    out
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Comment block, one header line, then `rows`.
pub fn write_csv(path: &Path, comments: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(comments.as_bytes()).map_err(io)?;
    writeln!(w, "{header}").map_err(io)?;
    for row in rows {
        writeln!(w, "{row}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push((i + 1, t.to_string()));
        }
    }
    Ok(out)
}

/// Reads `x_MHz,y[,weight]` rows; the header line is required.
pub fn read_observations(path: &Path) -> Result<Vec<Observation>> {
    let lines = data_lines(path)?;
    let parse_err = |line, message: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };
    let Some(((hline, header), rows)) = lines.split_first() else {
        return Err(parse_err(0, "no header line".into()));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if !(cols == ["x_MHz", "y"] || cols == ["x_MHz", "y", "weight"]) {
        return Err(parse_err(
            *hline,
            format!("expected header `x_MHz,y[,weight]`, got `{header}`"),
        ));
    }
    rows.iter()
        .map(|(n, row)| {
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(parse_err(
                    *n,
                    format!("expected {} fields, got {}", cols.len(), fields.len()),
                ));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(*n, format!("`{s}`: {e}")));
            Ok(Observation {
                x: AngularFrequency::from_mhz(num(fields[0])?),
                y: num(fields[1])?,
                weight: if fields.len() == 3 { num(fields[2])? } else { 1.0 },
            })
        })
        .collect()
}

const EVENTS_HEADER: &str = "write_clicks read_clicks";
const META: &str = "#@ ";

/// Event file: metadata, configuration comments, a header and one
/// `write_clicks read_clicks` line per trial.
pub fn write_events(
    path: &Path,
    comments: &str,
    seed: u64,
    record: &DetectionRecord,
    events: &[(u8, u8)],
) -> Result<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{META}seed = {seed}").map_err(io)?;
    writeln!(w, "{META}background_trials = {}", record.background_trials).map_err(io)?;
    writeln!(w, "{META}background_write_clicks = {}", record.background_write_clicks).map_err(io)?;
    w.write_all(comments.as_bytes()).map_err(io)?;
    writeln!(w, "{EVENTS_HEADER}").map_err(io)?;
    for (wc, rc) in events {
        writeln!(w, "{wc} {rc}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_events(path: &Path) -> Result<DetectionRecord> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut record = DetectionRecord::empty();
    let parse_err = |line, message: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if let Some(meta) = t.strip_prefix(META.trim_end()) {
            let (k, v) = meta
                .split_once('=')
                .ok_or_else(|| parse_err(n, "metadata needs key = value".into()))?;
            let v: u64 = v.trim().parse().map_err(|e| parse_err(n, format!("{e}")))?;
            match k.trim() {
                "background_trials" => record.background_trials = v,
                "background_write_clicks" => record.background_write_clicks = v,
                _ => {}
            }
            continue;
        }
        if t.is_empty() || t.starts_with('#') || t == EVENTS_HEADER {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut field = |name: &str| -> Result<u8> {
            let s = it.next().ok_or_else(|| parse_err(n, format!("missing {name}")))?;
            let v: u8 = s.parse().map_err(|e| parse_err(n, format!("{name} `{s}`: {e}")))?;
            if v > 2 {
                return Err(parse_err(n, format!("{name} {v} exceeds 2 detectors")));
            }
            Ok(v)
        };
        let (wc, rc) = (field("write_clicks")?, field("read_clicks")?);
        if it.next().is_some() {
            return Err(parse_err(n, "trailing fields".into()));
        }
        record.record(wc, rc);
    }
    record.validate()?;
    Ok(record)
}

/// A detection record from an event file or from JSON (either a bare record
/// or an object with a `record` field).
pub fn read_record(path: &Path) -> Result<DetectionRecord> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let inner = value.get("record").cloned().unwrap_or(value);
        let record: DetectionRecord = serde_json::from_value(inner)?;
        record.validate()?;
        Ok(record)
    } else {
        read_events(path)
    }
}
