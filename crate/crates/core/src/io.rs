//! CSV series and JSON documents.
//!
//! Count series use the header `t_start_s,width_s,counts,channel`, ratio series
//! `t_start_s,width_s,ratio,sigma`. Floats are written in shortest round-trip
//! form ([`format_f64`]), so write-then-read is lossless. Invalid ratio bins are
//! written as `NaN`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectra::{check_layout, Bin, Channel, CountSeries, RatioBin, RatioSeries};

pub const COUNT_HEADER: [&str; 4] = ["t_start_s", "width_s", "counts", "channel"];
pub const RATIO_HEADER: [&str; 4] = ["t_start_s", "width_s", "ratio", "sigma"];

/// Shortest decimal that parses back to the same `f64`; `NaN` and `inf` spelled out.
pub fn format_f64(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match line {
        Some(l) => Error::structure(format!("{source}:{l}: {e}")),
        None => Error::structure(format!("{source}: {e}")),
    }
}

pub fn write_count_series_to<W: Write>(series: &CountSeries, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    let channel = series.channel.to_string();
    let io = |e: csv::Error| csv_error("output", e);
    w.write_record(COUNT_HEADER).map_err(io)?;
    for b in &series.bins {
        w.write_record([
            format_f64(b.t_start),
            format_f64(b.width),
            b.counts.to_string(),
            channel.clone(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_count_series(series: &CountSeries, path: &Path) -> Result<()> {
    write_count_series_to(series, BufWriter::new(File::create(path)?))
}

pub fn write_ratio_series_to<W: Write>(series: &RatioSeries, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    let io = |e: csv::Error| csv_error("output", e);
    w.write_record(RATIO_HEADER).map_err(io)?;
    for b in &series.bins {
        w.write_record([
            format_f64(b.t_start),
            format_f64(b.width),
            format_f64(b.ratio),
            format_f64(b.sigma),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ratio_series(series: &RatioSeries, path: &Path) -> Result<()> {
    write_ratio_series_to(series, BufWriter::new(File::create(path)?))
}

/// Data rows with their 1-based line numbers, after checking the header.
fn read_rows<R: Read>(input: R, source: &str, header: [&str; 4]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let first = match records.next() {
        None => return Err(Error::structure(format!("{source}:1: missing header"))),
        Some(r) => r.map_err(|e| csv_error(source, e))?,
    };
    if first.iter().ne(header.iter().copied()) {
        return Err(Error::structure(format!(
            "{source}:1: expected header `{}`, found `{}`",
            header.join(","),
            first.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 4 {
            return Err(Error::structure(format!(
                "{source}:{line}: expected 4 fields, found {}",
                record.len()
            )));
        }
        rows.push((line, record));
    }
    Ok(rows)
}

fn parse_f64(source: &str, line: u64, field: &str, text: &str) -> Result<f64> {
    text.parse::<f64>()
        .map_err(|_| Error::structure(format!("{source}:{line}: {field} `{text}` is not a number")))
}

fn layout_error(source: &str, lines: &[u64], (i, msg): (usize, String)) -> Error {
    Error::structure(format!("{source}:{}: {msg}", lines[i]))
}

/// Reads a count series. An empty data section yields an empty gamma series.
pub fn read_count_series_from<R: Read>(input: R, source: &str) -> Result<CountSeries> {
    let rows = read_rows(input, source, COUNT_HEADER)?;
    let mut channel: Option<Channel> = None;
    let mut bins = Vec::with_capacity(rows.len());
    let mut lines = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        let t_start = parse_f64(source, *line, "t_start_s", &r[0])?;
        let width = parse_f64(source, *line, "width_s", &r[1])?;
        let counts = r[2].parse::<u64>().map_err(|_| {
            let what = if r[2].starts_with('-') {
                "is negative"
            } else {
                "is not a non-negative integer"
            };
            Error::structure(format!("{source}:{line}: counts `{}` {what}", &r[2]))
        })?;
        let ch: Channel = r[3]
            .parse()
            .map_err(|e| Error::structure(format!("{source}:{line}: {e}")))?;
        match channel {
            None => channel = Some(ch),
            Some(prev) if prev != ch => {
                return Err(Error::structure(format!(
                    "{source}:{line}: channel `{ch}` differs from `{prev}` on earlier rows"
                )))
            }
            _ => {}
        }
        bins.push(Bin { t_start, width, counts });
        lines.push(*line);
    }
    check_layout(bins.iter().map(|b| (b.t_start, b.width))).map_err(|e| layout_error(source, &lines, e))?;
    if bins.is_empty() {
        log::warn!("{source}: no data rows; returning an empty series");
    }
    CountSeries::new(channel.unwrap_or(Channel::Gamma), bins)
}

pub fn read_count_series(path: &Path) -> Result<CountSeries> {
    let file = File::open(path)?;
    read_count_series_from(BufReader::new(file), &path.display().to_string())
}

/// Reads a ratio series. Rows with a non-finite ratio are marked invalid and a
/// zero ratio is flagged as low-count.
pub fn read_ratio_series_from<R: Read>(input: R, source: &str) -> Result<RatioSeries> {
    let rows = read_rows(input, source, RATIO_HEADER)?;
    let mut bins = Vec::with_capacity(rows.len());
    let mut lines = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        let ratio = parse_f64(source, *line, "ratio", &r[2])?;
        let sigma = parse_f64(source, *line, "sigma", &r[3])?;
        let valid = ratio.is_finite() && sigma.is_finite();
        if valid && (ratio < 0.0 || sigma < 0.0) {
            return Err(Error::structure(format!(
                "{source}:{line}: ratio and sigma must be non-negative"
            )));
        }
        bins.push(RatioBin {
            t_start: parse_f64(source, *line, "t_start_s", &r[0])?,
            width: parse_f64(source, *line, "width_s", &r[1])?,
            ratio,
            sigma,
            valid,
            low_count: valid && ratio == 0.0,
        });
        lines.push(*line);
    }
    check_layout(bins.iter().map(|b| (b.t_start, b.width))).map_err(|e| layout_error(source, &lines, e))?;
    if bins.is_empty() {
        log::warn!("{source}: no data rows; returning an empty series");
    }
    RatioSeries::new(bins)
}

pub fn read_ratio_series(path: &Path) -> Result<RatioSeries> {
    let file = File::open(path)?;
    read_ratio_series_from(BufReader::new(file), &path.display().to_string())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Parses JSON; the error carries serde's line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
