//! File formats.
//!
//! * Matrices: CSV, row-major, no header. Reals are written with 17
//!   significant digits so they read back bit-exactly.
//! * Datasets: JSON lines, one observation (array of row arrays) per line.
//! * Posterior draws: JSON lines, one `{"u": [[..]], "v": [[..]]}` per line.
//! * Replicates: CSV with a header row, one replicate per line.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::ReplicateEstimates;
use crate::harness::ReplicateRecord;
use crate::matrix_serde::{from_rows, to_rows};
use crate::model::{CountDataset, FactorPair};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, line: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse { path: path.display().to_string(), message: format!("line {line}: {message}") }
}

/// 17 significant digits in scientific notation.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// `x` rounded to three significant digits.
pub fn format_sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (2 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::numeric(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

fn matrix_csv<T>(m: &Array2<T>, fmt: impl Fn(&T) -> String) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(&fmt).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    write_text(path, &matrix_csv(m, |x| format_real(*x)))
}

pub fn write_counts_csv(path: &Path, m: &Array2<u64>) -> Result<()> {
    write_text(path, &matrix_csv(m, |x| x.to_string()))
}

fn read_csv<T: FromStr>(path: &Path) -> Result<Array2<T>>
where
    T::Err: std::fmt::Display,
    T: Clone,
{
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(j, cell)| {
                cell.trim()
                    .parse::<T>()
                    .map_err(|e| parse_err(path, i + 1, format!("field {}: {e}", j + 1)))
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "empty matrix"));
    }
    from_rows(rows).map_err(|e| parse_err(path, 1, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    read_csv(path)
}

pub fn read_counts_csv(path: &Path) -> Result<Array2<u64>> {
    read_csv(path)
}

fn write_lines<I: IntoIterator<Item = String>>(path: &Path, lines: I) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for line in lines {
        w.write_all(line.as_bytes()).map_err(io_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e))?);
    }
    Ok(out)
}

pub fn write_dataset_jsonl(path: &Path, data: &CountDataset) -> Result<()> {
    write_lines(
        path,
        data.observations()
            .iter()
            .map(|x| serde_json::to_string(&to_rows(x)).expect("integers serialize")),
    )
}

pub fn read_dataset_jsonl(path: &Path) -> Result<CountDataset> {
    let rows: Vec<Vec<Vec<u64>>> = read_json_lines(path)?;
    let observations = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| from_rows(r).map_err(|e| parse_err(path, i + 1, e)))
        .collect::<Result<Vec<_>>>()?;
    CountDataset::new(observations).map_err(|e| parse_err(path, 1, e))
}

/// Streams factor pairs to a JSON-lines file.
pub struct DrawWriter {
    path: String,
    inner: BufWriter<File>,
}

impl DrawWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = File::create(path).map_err(io_err(path))?;
        Ok(DrawWriter { path: path.display().to_string(), inner: BufWriter::new(file) })
    }

    pub fn write(&mut self, draw: &FactorPair) -> Result<()> {
        let line = serde_json::to_string(draw).map_err(|e| Error::numeric(e.to_string()))?;
        writeln!(self.inner, "{line}").map_err(|source| Error::Io { path: self.path.clone(), source })
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|source| Error::Io { path: self.path.clone(), source })
    }
}

pub fn read_draws_jsonl(path: &Path) -> Result<Vec<FactorPair>> {
    let draws: Vec<FactorPair> = read_json_lines(path)?;
    for (i, d) in draws.iter().enumerate() {
        d.validate().map_err(|e| parse_err(path, i + 1, e))?;
    }
    Ok(draws)
}

const REPLICATE_HEADER: &str =
    "index,empirical_loss,functional_variance,waic,generalization_error,empirical_entropy,lambda_point";

pub fn write_replicates_csv(path: &Path, records: &[ReplicateRecord]) -> Result<()> {
    let mut text = format!("{REPLICATE_HEADER}\n");
    for r in records {
        let e = &r.estimates;
        let cells = [
            e.empirical_loss,
            e.functional_variance,
            e.waic,
            e.generalization_error,
            e.empirical_entropy,
            e.lambda_point,
        ]
        .map(format_real);
        text.push_str(&format!("{},{}\n", r.index, cells.join(",")));
    }
    write_text(path, &text)
}

pub fn read_replicates_csv(path: &Path) -> Result<Vec<ReplicateRecord>> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == REPLICATE_HEADER => {}
        _ => return Err(parse_err(path, 1, "missing replicate header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(parse_err(path, i + 1, format!("expected 7 fields, found {}", cells.len())));
        }
        let index = cells[0].trim().parse().map_err(|e| parse_err(path, i + 1, format!("field 1: {e}")))?;
        let mut v = [0.0; 6];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = cells[k + 1]
                .trim()
                .parse()
                .map_err(|e| parse_err(path, i + 1, format!("field {}: {e}", k + 2)))?;
        }
        out.push(ReplicateRecord {
            index,
            estimates: ReplicateEstimates {
                empirical_loss: v[0],
                functional_variance: v[1],
                waic: v[2],
                generalization_error: v[3],
                empirical_entropy: v[4],
                lambda_point: v[5],
            },
        });
    }
    Ok(out)
}
