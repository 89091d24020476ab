//! Plain CSV tables: distributions, histograms, per-N ensembles, R^2 bands
//! and free-form result tables.

use std::fs;
use std::path::Path;

use super::{malformed, IoError};
use crate::corpuscular::CorpuscularEnsemble;
use crate::optics::ModelDistribution;
use crate::stats::{Histogram, R2Band};

/// A header row plus string cells, written as CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        assert_eq!(row.len(), self.columns.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-5, 1e16)` so tiny values stay compact.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn write_table(path: &Path, table: &Table) -> Result<(), IoError> {
    fs::write(path, table.render()).map_err(|e| IoError::file(path, e))
}

/// Reads a CSV whose header must equal `columns`; returns data rows with
/// their 1-based line numbers.
fn read_table(path: &Path, columns: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if header.iter().ne(columns.iter().copied()) {
        return Err(malformed(1, format!("expected columns `{}`", columns.join(","))));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| malformed(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != columns.len() {
            return Err(malformed(line, format!("expected {} fields", columns.len())));
        }
        rows.push((line, rec));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize, name: &str) -> Result<T, IoError>
where
    T::Err: std::fmt::Display,
{
    rec[i].parse().map_err(|e| malformed(line, format!("{name}: {e}")))
}

/// Rows must list pixels 0, 1, 2, ... in order.
fn expect_pixel(rec: &csv::StringRecord, col: usize, line: usize, expected: usize) -> Result<(), IoError> {
    let px: usize = field(rec, col, line, "pixel")?;
    if px != expected {
        return Err(malformed(line, format!("expected pixel {expected}, found {px}")));
    }
    Ok(())
}

pub fn write_distribution(path: &Path, dist: &ModelDistribution) -> Result<(), IoError> {
    let mut t = Table::new(&["pixel", "probability"]);
    for (i, p) in dist.probs().iter().enumerate() {
        t.push([i.to_string(), fmt_f64(*p)]);
    }
    write_table(path, &t)
}

pub fn read_distribution(path: &Path) -> Result<ModelDistribution, IoError> {
    let rows = read_table(path, &["pixel", "probability"])?;
    let mut probs = Vec::with_capacity(rows.len());
    for (i, (line, rec)) in rows.iter().enumerate() {
        expect_pixel(rec, 0, *line, i)?;
        probs.push(field(rec, 1, *line, "probability")?);
    }
    ModelDistribution::new(probs).map_err(|e| malformed(0, e.to_string()))
}

pub fn write_histogram(path: &Path, hist: &Histogram) -> Result<(), IoError> {
    let mut t = Table::new(&["pixel", "count"]);
    for (i, k) in hist.counts().iter().enumerate() {
        t.push([i.to_string(), k.to_string()]);
    }
    write_table(path, &t)
}

pub fn read_histogram(path: &Path) -> Result<Histogram, IoError> {
    let rows = read_table(path, &["pixel", "count"])?;
    let mut counts = Vec::with_capacity(rows.len());
    for (i, (line, rec)) in rows.iter().enumerate() {
        expect_pixel(rec, 0, *line, i)?;
        counts.push(field(rec, 1, *line, "count")?);
    }
    Ok(Histogram::new(counts))
}

const ENSEMBLE_COLUMNS: [&str; 4] = ["n", "runs", "pixel", "count"];

/// Long format, one row per (N, pixel) with raw N-th-click counts; readers
/// re-apply add-one smoothing.
pub fn write_ensemble(path: &Path, ens: &CorpuscularEnsemble) -> Result<(), IoError> {
    let mut t = Table::new(&ENSEMBLE_COLUMNS);
    for (n, counts) in ens.n_grid.iter().zip(&ens.counts) {
        for (px, k) in counts.iter().enumerate() {
            t.push([n.to_string(), ens.runs.to_string(), px.to_string(), k.to_string()]);
        }
    }
    write_table(path, &t)
}

pub fn read_ensemble(path: &Path) -> Result<CorpuscularEnsemble, IoError> {
    let rows = read_table(path, &ENSEMBLE_COLUMNS)?;
    let mut n_grid: Vec<usize> = Vec::new();
    let mut counts: Vec<Vec<u64>> = Vec::new();
    let mut runs = None;
    for (line, rec) in &rows {
        let n: usize = field(rec, 0, *line, "n")?;
        let r: usize = field(rec, 1, *line, "runs")?;
        if *runs.get_or_insert(r) != r {
            return Err(malformed(*line, "runs differs between rows"));
        }
        if n_grid.last() != Some(&n) {
            if n_grid.last().is_some_and(|&last| n <= last) {
                return Err(malformed(*line, "n must increase"));
            }
            n_grid.push(n);
            counts.push(Vec::new());
        }
        let row = counts.last_mut().expect("pushed above");
        expect_pixel(rec, 2, *line, row.len())?;
        row.push(field(rec, 3, *line, "count")?);
    }
    if counts.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(malformed(0, "pixel count differs between N blocks"));
    }
    let runs = runs.ok_or_else(|| malformed(2, "ensemble file has no rows"))?;
    CorpuscularEnsemble::from_counts(runs, n_grid, counts).map_err(|e| malformed(0, e.to_string()))
}

pub fn write_band(path: &Path, band: &R2Band) -> Result<(), IoError> {
    let mut t = Table::new(&["n", "q25", "q50", "q75"]);
    for i in 0..band.n.len() {
        t.push([
            band.n[i].to_string(),
            fmt_f64(band.q25[i]),
            fmt_f64(band.q50[i]),
            fmt_f64(band.q75[i]),
        ]);
    }
    write_table(path, &t)
}
