// Copyright 2026 The bgrape Authors
// SPDX-License-Identifier: Apache-2.0

//! File formats shared by every subcommand.
//!
//! | file              | header                            |
//! |-------------------|-----------------------------------|
//! | `trace.csv`       | `iter,samples,batch_loss,test_loss` |
//! | `field_*.csv`     | `segment,channel,amplitude`       |
//! | `landscape.csv`   | `eps1,eps2,infidelity`            |
//! | `errors.csv`      | `infidelity`                      |
//!
//! Reals are written in plain decimal with at least 15 significant digits
//! and parse back to the identical `f64`. An empty `test_loss` cell means
//! the held-out set was not evaluated on that iteration.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use bgrape::dynamics::ControlField;
use bgrape::optimizer::TraceRow;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TRACE_HEADER: &str = "iter,samples,batch_loss,test_loss";
pub const FIELD_HEADER: &str = "segment,channel,amplitude";
pub const LANDSCAPE_HEADER: &str = "eps1,eps2,infidelity";
pub const ERRORS_HEADER: &str = "infidelity";

const MIN_SIGNIFICANT: usize = 15;

/// Shortest round-trip decimal, zero-padded to 15 significant digits.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0.00000000000000".into();
    }
    let mut s = format!("{x}");
    let digits = s.trim_start_matches('-').replace('.', "");
    let significant = digits.trim_start_matches('0').len();
    if significant < MIN_SIGNIFICANT {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n('0', MIN_SIGNIFICANT - significant));
    }
    s
}

pub fn parse_float(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("not a number: {s:?}"))
}

/// Splits a headed CSV into `(line number, fields)` records after checking
/// the header. Blank lines are skipped.
pub fn read_records(text: &str, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(format!("empty file, expected header {}", header.join(",")));
    };
    let got: Vec<&str> = first.split(',').map(str::trim).collect();
    if got != header {
        return Err(format!(
            "header {:?} does not match expected {}",
            first.trim(),
            header.join(",")
        ));
    }
    lines
        .map(|(i, l)| {
            let fields: Vec<String> = l.split(',').map(|f| f.trim().to_owned()).collect();
            if fields.len() != header.len() {
                return Err(format!(
                    "line {}: expected {} fields, found {}",
                    i + 1,
                    header.len(),
                    fields.len()
                ));
            }
            Ok((i + 1, fields))
        })
        .collect()
}

pub fn field_csv(field: &ControlField) -> String {
    let mut out = format!("{FIELD_HEADER}\n");
    for m in 0..field.num_segments() {
        for k in 0..field.num_controls() {
            out.push_str(&format!("{m},{k},{}\n", format_float(field.get(m, k))));
        }
    }
    out
}

/// Reads a field file; every `(segment, channel)` pair of the given shape
/// must appear exactly once, in any order.
pub fn parse_field(text: &str, segments: usize, channels: usize, duration: f64) -> Result<ControlField, String> {
    let records = read_records(text, &["segment", "channel", "amplitude"])?;
    if records.len() != segments * channels {
        return Err(format!(
            "field has {} entries, expected {segments} segments x {channels} channels",
            records.len()
        ));
    }
    let mut values = vec![None; segments * channels];
    for (line, rec) in records {
        let idx = |s: &str| s.parse::<usize>().map_err(|_| format!("line {line}: bad index {s:?}"));
        let (m, k) = (idx(&rec[0])?, idx(&rec[1])?);
        if m >= segments || k >= channels {
            return Err(format!(
                "line {line}: entry ({m}, {k}) outside {segments} segments x {channels} channels"
            ));
        }
        let a = parse_float(&rec[2]).map_err(|e| format!("line {line}: {e}"))?;
        if values[m * channels + k].replace(a).is_some() {
            return Err(format!("line {line}: duplicate entry ({m}, {k})"));
        }
    }
    let amps = values.into_iter().map(|v| v.expect("every slot filled")).collect();
    ControlField::new(segments, channels, duration, amps).map_err(|e| e.to_string())
}

pub fn trace_line(row: &TraceRow) -> String {
    let test = row.test_loss.map(format_float).unwrap_or_default();
    format!(
        "{},{},{},{}\n",
        row.iteration,
        row.samples,
        format_float(row.batch_loss),
        test
    )
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes via a temporary sibling and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Directory to write into. An existing non-empty `requested` is reused only
/// with `force`; otherwise a fresh `requested-<timestamp>` sibling is made.
pub fn prepare_output_dir(requested: &Path, force: bool) -> io::Result<PathBuf> {
    let occupied = requested.exists() && fs::read_dir(requested)?.next().is_some();
    let dir = if occupied && !force {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
        let name = requested
            .file_name()
            .map_or("bgrape-out".into(), |n| n.to_string_lossy().into_owned());
        let mut candidate = requested.with_file_name(format!("{name}-{stamp}"));
        let mut n = 1;
        while candidate.exists() {
            candidate = requested.with_file_name(format!("{name}-{stamp}-{n}"));
            n += 1;
        }
        candidate
    } else {
        requested.to_owned()
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}
