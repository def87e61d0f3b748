//! Convergence log rows and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_HEADER: [&str; 7] = ["iter", "data", "bound", "tv", "total", "rel_err", "n_active_cells"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    pub data: f64,
    pub bound: f64,
    pub tv: f64,
    pub total: f64,
    /// Empty in the CSV when no ground truth was given.
    pub rel_err: Option<f64>,
    pub n_active_cells: usize,
}

pub fn write_log_csv<W: Write>(writer: W, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(LOG_HEADER).map_err(to_err)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            format!("{:e}", r.data),
            format!("{:e}", r.bound),
            format!("{:e}", r.tv),
            format!("{:e}", r.total),
            r.rel_err.map(|v| format!("{v:e}")).unwrap_or_default(),
            r.n_active_cells.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a log written by [`write_log_csv`]; `name` labels parse errors.
pub fn read_log_csv<R: Read>(reader: R, name: &str) -> Result<Vec<LogRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = r
        .headers()
        .map_err(|e| Error::parse(name, 1, e.to_string()))?
        .clone();
    if headers.iter().ne(LOG_HEADER) {
        return Err(Error::parse(name, 1, format!("expected header {}", LOG_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(name, line, e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(name, line, format!("bad number '{}' in column {}", &rec[i], LOG_HEADER[i])))
        };
        let int = |i: usize| -> Result<usize> {
            rec[i]
                .parse::<usize>()
                .map_err(|_| Error::parse(name, line, format!("bad integer '{}' in column {}", &rec[i], LOG_HEADER[i])))
        };
        rows.push(LogRow {
            iter: int(0)?,
            data: num(1)?,
            bound: num(2)?,
            tv: num(3)?,
            total: num(4)?,
            rel_err: if rec[5].is_empty() { None } else { Some(num(5)?) },
            n_active_cells: int(6)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let rows = vec![
            LogRow {
                iter: 1,
                data: 0.123456789012345,
                bound: 0.0,
                tv: 3.5e-7,
                total: 1.25,
                rel_err: Some(0.2),
                n_active_cells: 40,
            },
            LogRow {
                iter: 2,
                data: 1e-300,
                bound: 2.0,
                tv: 0.0,
                total: 4.0,
                rel_err: None,
                n_active_cells: 41,
            },
        ];
        let mut buf = Vec::new();
        write_log_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iter,data,bound,tv,total,rel_err,n_active_cells\n"));
        assert_eq!(read_log_csv(buf.as_slice(), "log.csv").unwrap(), rows);
    }

    #[test]
    fn reports_line_of_bad_row() {
        let text = "iter,data,bound,tv,total,rel_err,n_active_cells\n1,0,0,0,0,,3\n2,x,0,0,0,,3\n";
        let err = read_log_csv(text.as_bytes(), "log.csv").unwrap_err();
        assert!(err.to_string().starts_with("log.csv:3:"), "{err}");
    }
}
