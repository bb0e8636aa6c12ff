//! Delimited-text dataset files.
//!
//! * spike sets: header `x1,…,xp[,label]`, one spike per row;
//! * labels: header `label`, one row per spike;
//! * recordings: header `sample`, one voltage value per row;
//! * peaks: header `peak`, 0-based sample indices;
//! * templates: header `t,cluster1,…,clusterK`, one grid point per row.
//!
//! Cluster and class labels are 1-based in every file and 0-based in memory.
//! Reals are written in shortest round-trip form.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::detect::Recording;
use super::SpikeSet;
use crate::error::{Error, Result};
use crate::signal::{Signal, TimeGrid};

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn parse_f64(field: &str, row: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: '{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("row {row}: non-finite value '{field}'")));
    }
    Ok(v)
}

fn parse_label(field: &str, row: usize) -> Result<usize> {
    match field.trim().parse::<usize>() {
        Ok(l) if l >= 1 => Ok(l - 1),
        _ => Err(Error::Parse(format!("row {row}: label '{field}' is not a positive integer"))),
    }
}

pub fn write_spikes<W: Write>(out: W, set: &SpikeSet) -> Result<()> {
    let p = set.grid.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    if set.true_labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_error)?;
    for (i, s) in set.signals.iter().enumerate() {
        let mut row: Vec<String> = s.values.iter().map(f64::to_string).collect();
        if let Some(labels) = &set.true_labels {
            row.push((labels[i] + 1).to_string());
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a spike matrix; the grid is `p` equispaced points.
pub fn read_spikes<R: Read>(input: R, provenance: &str) -> Result<SpikeSet> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_error)?.clone();
    let has_label = header.iter().next_back() == Some("label");
    let p = header.len() - usize::from(has_label);
    for (j, name) in header.iter().take(p).enumerate() {
        if name.trim() != format!("x{}", j + 1) {
            return Err(Error::Parse(format!("column {} should be named x{}, found '{name}'", j + 1, j + 1)));
        }
    }
    let mut signals = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = i + 1;
        let values = record.iter().take(p).map(|f| parse_f64(f, row)).collect::<Result<Vec<_>>>()?;
        if has_label {
            labels.push(parse_label(&record[p], row)?);
        }
        signals.push(Signal::new(format!("row{row}"), values)?);
    }
    if signals.is_empty() {
        return Err(Error::InsufficientData("spike file has no rows".into()));
    }
    Ok(SpikeSet {
        grid: TimeGrid::uniform(p)?,
        signals,
        true_labels: has_label.then_some(labels),
        provenance: provenance.to_string(),
    })
}

fn write_column<W: Write, T: ToString>(out: W, name: &str, values: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([name]).map_err(csv_error)?;
    for v in values {
        w.write_record([v.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn read_column<R: Read, T>(input: R, name: &str, parse: impl Fn(&str, usize) -> Result<T>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_error)?;
    if header.len() != 1 || header[0].trim() != name {
        return Err(Error::Parse(format!("expected a single '{name}' column")));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(csv_error)?;
            parse(&rec[0], i + 1)
        })
        .collect()
}

pub fn write_labels<W: Write>(out: W, labels: &[usize]) -> Result<()> {
    write_column(out, "label", labels.iter().map(|l| l + 1))
}

pub fn read_labels<R: Read>(input: R) -> Result<Vec<usize>> {
    read_column(input, "label", parse_label)
}

pub fn write_recording<W: Write>(out: W, rec: &Recording) -> Result<()> {
    write_column(out, "sample", &rec.samples)
}

pub fn read_recording<R: Read>(input: R) -> Result<Recording> {
    Recording::new(read_column(input, "sample", parse_f64)?, 1.0)
}

pub fn write_peaks<W: Write>(out: W, peaks: &[usize]) -> Result<()> {
    write_column(out, "peak", peaks)
}

pub fn read_peaks<R: Read>(input: R) -> Result<Vec<usize>> {
    read_column(input, "peak", |f, row| {
        f.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("row {row}: '{f}' is not a sample index")))
    })
}

/// One column per cluster curve, sampled on `grid`.
pub fn write_templates<W: Write>(out: W, grid: &TimeGrid, curves: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=curves.len()).map(|k| format!("cluster{k}")));
    w.write_record(&header).map_err(csv_error)?;
    for (j, t) in grid.points().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(curves.iter().map(|c| c[j].to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

pub fn open(path: &Path) -> Result<File> {
    Ok(File::open(path)?)
}
