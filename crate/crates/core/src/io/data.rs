use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fitting::PleScan;
use crate::montecarlo::PhotonStream;
use crate::types::{first_nonuniform_bin, CorrelationCurve};

/// Magic bytes opening a binary time-tag file; little-endian f64 seconds follow.
pub const TIME_TAG_MAGIC: &[u8; 8] = b"EMCOHTT1";

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn open_csv(path: &Path, columns: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| parse_error(path, 1, e.to_string()))?;
    let found: Vec<&str> = headers.iter().collect();
    if found != columns {
        return Err(parse_error(
            path,
            1,
            format!("expected header `{}`, found `{}`", columns.join(","), found.join(",")),
        ));
    }
    Ok(reader)
}

/// Reads rows of type `T`, reporting the 1-based file line of any failure.
fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, columns: &[&str]) -> Result<Vec<(u64, T)>> {
    let mut reader = open_csv(path, columns)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: T = record
            .deserialize(None)
            .map_err(|e| parse_error(path, line, format!("malformed row: {e}")))?;
        rows.push((line, row));
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct CorrelationRow {
    tau_s: f64,
    counts: f64,
}

/// Reads a `tau_s,counts` histogram with uniformly spaced bins.
pub fn load_correlation_csv(path: &Path) -> Result<CorrelationCurve> {
    let rows: Vec<(u64, CorrelationRow)> = read_rows(path, &["tau_s", "counts"])?;
    if rows.len() < 2 {
        return Err(parse_error(path, 1, "a correlation histogram needs at least two rows"));
    }
    for (line, r) in &rows {
        if !r.tau_s.is_finite() {
            return Err(parse_error(path, *line, "tau_s is not finite"));
        }
        if !(r.counts.is_finite() && r.counts >= 0.0) {
            return Err(parse_error(path, *line, format!("counts must be finite and >= 0, got {}", r.counts)));
        }
    }
    let taus: Vec<f64> = rows.iter().map(|r| r.1.tau_s).collect();
    let bin_width = taus[1] - taus[0];
    if !(bin_width > 0.0) {
        return Err(parse_error(path, rows[1].0, "tau_s must increase"));
    }
    if let Some(i) = first_nonuniform_bin(&taus, bin_width) {
        return Err(parse_error(
            path,
            rows[i].0,
            format!("non-uniform bin: spacing differs from {bin_width:e} s by more than 1e-6 relative"),
        ));
    }
    let counts = rows.iter().map(|r| r.1.counts).collect();
    CorrelationCurve::new(taus, counts, bin_width)
}

pub fn write_correlation_csv(path: &Path, curve: &CorrelationCurve) -> Result<()> {
    let mut w = create(path)?;
    let ctx = || format!("writing {}", path.display());
    writeln!(w, "tau_s,counts").map_err(|e| Error::io(ctx(), e))?;
    for (t, c) in curve.tau_bins().iter().zip(curve.counts()) {
        writeln!(w, "{t:?},{c:?}").map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

#[derive(Deserialize)]
struct PleRow {
    scan_id: String,
    freq_hz: f64,
    counts: f64,
}

/// Reads `scan_id,freq_hz,counts` rows into frequency-sorted scans ordered by id.
pub fn load_ple_scans(path: &Path) -> Result<Vec<PleScan>> {
    let rows: Vec<(u64, PleRow)> = read_rows(path, &["scan_id", "freq_hz", "counts"])?;
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (line, r) in rows {
        if r.scan_id.is_empty() {
            return Err(parse_error(path, line, "empty scan_id"));
        }
        if !r.freq_hz.is_finite() || !(r.counts.is_finite() && r.counts >= 0.0) {
            return Err(parse_error(path, line, "freq_hz must be finite and counts finite and >= 0"));
        }
        let g = groups.entry(r.scan_id).or_default();
        g.0.push(r.freq_hz);
        g.1.push(r.counts);
    }
    if groups.is_empty() {
        return Err(parse_error(path, 1, "no scans in file"));
    }
    groups
        .into_iter()
        .map(|(id, (f, c))| PleScan::new(id, f, c))
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

pub fn write_time_tags_binary(path: &Path, stream: &PhotonStream) -> Result<()> {
    let mut w = create(path)?;
    let ctx = || format!("writing {}", path.display());
    w.write_all(TIME_TAG_MAGIC).map_err(|e| Error::io(ctx(), e))?;
    for t in stream.arrival_times() {
        w.write_all(&t.to_le_bytes()).map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn write_time_tags_csv(path: &Path, stream: &PhotonStream) -> Result<()> {
    let mut w = create(path)?;
    let ctx = || format!("writing {}", path.display());
    writeln!(w, "t_s").map_err(|e| Error::io(ctx(), e))?;
    for t in stream.arrival_times() {
        writeln!(w, "{t:?}").map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

/// Reads a binary or `t_s` CSV time-tag file, told apart by the magic header.
/// Without `duration` the stream is taken to end at its last photon.
pub fn load_time_tags(path: &Path, duration: Option<f64>) -> Result<PhotonStream> {
    let mut bytes = Vec::new();
    File::open(path)
        .map(BufReader::new)
        .and_then(|mut r| r.read_to_end(&mut bytes))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let times: Vec<f64> = if bytes.starts_with(TIME_TAG_MAGIC) {
        let body = &bytes[TIME_TAG_MAGIC.len()..];
        if body.len() % 8 != 0 {
            return Err(parse_error(path, 0, "binary payload is not a whole number of f64 records"));
        }
        body.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect()
    } else {
        #[derive(Deserialize)]
        struct Row {
            t_s: f64,
        }
        let rows: Vec<(u64, Row)> = read_rows(path, &["t_s"])?;
        if let Some(w) = rows.windows(2).find(|w| !(w[1].1.t_s > w[0].1.t_s)) {
            return Err(parse_error(path, w[1].0, "arrival times must increase strictly"));
        }
        rows.into_iter().map(|r| r.1.t_s).collect()
    };
    let end = duration.unwrap_or_else(|| times.last().copied().unwrap_or(0.0));
    PhotonStream::new(times, end, 0)
}
