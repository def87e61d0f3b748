//! CSV and JSON files for setups, scenes, measurements and permittivity maps.
//!
//! Numbers are written with Rust's shortest round-trip `{:e}` formatting, so
//! reading a file back reproduces the values bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use super::SceneSpec;
use crate::em::{MeasurementSet, PermittivityMap, Provenance, Setup};
use crate::error::{Error, Result};

pub const MEASUREMENT_HEADER: [&str; 4] = ["tx", "rx", "re", "im"];
pub const PERMITTIVITY_HEADER: [&str; 4] = ["i", "j", "re", "im"];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
}

pub fn write_setup(path: &Path, setup: &Setup) -> Result<()> {
    write_json(path, setup)
}

pub fn read_setup(path: &Path) -> Result<Setup> {
    let setup: Setup = read_json(path)?;
    setup.validate()?;
    Ok(setup)
}

pub fn write_scene(path: &Path, scene: &SceneSpec) -> Result<()> {
    write_json(path, scene)
}

pub fn read_scene(path: &Path) -> Result<SceneSpec> {
    let scene: SceneSpec = read_json(path)?;
    scene.validate()?;
    Ok(scene)
}

/// Writes one `(tx, rx, re, im)` row per sample, transmitter-major.
pub fn write_measurements<W: Write>(writer: W, meas: &MeasurementSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MEASUREMENT_HEADER).map_err(csv_err)?;
    for t in 0..meas.n_tx() {
        for r in 0..meas.n_rx() {
            let z = meas.samples[[r, t]];
            w.write_record([t.to_string(), r.to_string(), format!("{:e}", z.re), format!("{:e}", z.im)])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads rows of four fields from a headed CSV, checking the header.
/// Returns `(line, index_a, index_b, complex)` per row.
fn read_indexed_complex<R: Read>(
    reader: R,
    name: &str,
    header: [&str; 4],
) -> Result<Vec<(u64, usize, usize, Complex64)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let found = r.headers().map_err(|e| Error::parse(name, 1, e.to_string()))?.clone();
    if found.iter().ne(header) {
        return Err(Error::parse(name, 1, format!("expected header {}", header.join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(name, line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(Error::parse(name, line, format!("expected 4 fields, got {}", rec.len())));
        }
        let int = |i: usize| {
            rec[i]
                .parse::<usize>()
                .map_err(|_| Error::parse(name, line, format!("bad index '{}' in column {}", &rec[i], header[i])))
        };
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(name, line, format!("bad number '{}' in column {}", &rec[i], header[i])))
        };
        rows.push((line, int(0)?, int(1)?, Complex64::new(num(2)?, num(3)?)));
    }
    Ok(rows)
}

/// Fills an `a`×`b` array from indexed rows, requiring every entry exactly once.
fn fill_dense(
    rows: Vec<(u64, usize, usize, Complex64)>,
    name: &str,
    dim: (usize, usize),
    labels: (&str, &str),
) -> Result<Array2<Option<Complex64>>> {
    let mut out: Array2<Option<Complex64>> = Array2::from_elem(dim, None);
    for (line, a, b, z) in rows {
        if a >= dim.0 || b >= dim.1 {
            return Err(Error::parse(
                name,
                line,
                format!("{} {a} / {} {b} out of range {}x{}", labels.0, labels.1, dim.0, dim.1),
            ));
        }
        if out[[a, b]].replace(z).is_some() {
            return Err(Error::parse(name, line, format!("duplicate entry {} {a} / {} {b}", labels.0, labels.1)));
        }
    }
    if let Some(((a, b), _)) = out.indexed_iter().find(|(_, v)| v.is_none()) {
        return Err(Error::parse(name, 0, format!("missing entry {} {a} / {} {b}", labels.0, labels.1)));
    }
    Ok(out)
}

/// Reads a measurement CSV for `setup`. Every (tx, rx) pair must appear once.
pub fn read_measurements<R: Read>(reader: R, name: &str, setup: &Setup) -> Result<MeasurementSet> {
    let rows = read_indexed_complex(reader, name, MEASUREMENT_HEADER)?;
    let dense = fill_dense(rows, name, (setup.n_tx(), setup.n_rx()), ("tx", "rx"))?;
    let samples = Array2::from_shape_fn((setup.n_rx(), setup.n_tx()), |(r, t)| dense[[t, r]].unwrap_or_default());
    Ok(MeasurementSet {
        samples,
        fingerprint: setup.geometry_fingerprint(),
        provenance: Provenance::File,
    })
}

/// Writes one `(i, j, re, im)` row per cell, row-major.
pub fn write_permittivity<W: Write>(writer: W, map: &PermittivityMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PERMITTIVITY_HEADER).map_err(csv_err)?;
    for ((i, j), z) in map.values.indexed_iter() {
        w.write_record([i.to_string(), j.to_string(), format!("{:e}", z.re), format!("{:e}", z.im)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a permittivity CSV. The grid size is inferred from the row count,
/// which must be a perfect square.
pub fn read_permittivity<R: Read>(reader: R, name: &str) -> Result<PermittivityMap> {
    let rows = read_indexed_complex(reader, name, PERMITTIVITY_HEADER)?;
    let n = (rows.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != rows.len() {
        return Err(Error::parse(name, 0, format!("{} rows do not form a square grid", rows.len())));
    }
    let dense = fill_dense(rows, name, (n, n), ("i", "j"))?;
    PermittivityMap::from_values(dense.mapv(|v| v.unwrap_or_default()))
}
