//! CSV and `key = value` file handling.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

/// Floats are written with 17 significant digits so that they read back exactly.
pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// A header and numeric rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_cell(path: &Path, rec: &csv::StringRecord, col: &str, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::parse(
            path,
            line_of(rec),
            format!("column {col}: '{cell}' is not a finite number"),
        )),
    }
}

/// Reads a CSV with a header row and numeric cells.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let row = rec
            .iter()
            .zip(&header)
            .map(|(cell, col)| parse_cell(path, &rec, col, cell))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Reads an observed series with header `t,y1[,y2,…]`. Times must be the
/// consecutive integers `1, 2, …`. Returns the `T x p` matrix of values.
pub fn read_series(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::csv(path, e))?.clone();
    let p = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=p).map(|j| format!("y{j}")))
        .collect();
    if p == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CliError::parse(
            path,
            1,
            format!(
                "header must be t,y1,…,yp, found '{}'",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut values = Vec::new();
    let mut next_t = 1i64;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let row = line_of(&rec);
        let t: i64 = rec[0]
            .parse()
            .map_err(|_| CliError::parse(path, row, format!("t = '{}' is not an integer", &rec[0])))?;
        if t < next_t {
            return Err(CliError::parse(
                path,
                row,
                format!("t = {t} is a duplicate or out of order"),
            ));
        }
        if t > next_t {
            return Err(CliError::parse(
                path,
                row,
                format!("t jumps from {} to {t}", next_t - 1),
            ));
        }
        for j in 1..=p {
            values.push(parse_cell(path, &rec, &expected[j], &rec[j])?);
        }
        next_t += 1;
    }
    let horizon = (next_t - 1) as usize;
    if horizon == 0 {
        return Err(CliError::parse(path, 2, "series has no rows"));
    }
    Ok(DMatrix::from_row_slice(horizon, p, &values))
}

pub fn series_header(p: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((1..=p).map(|j| format!("y{j}")))
        .collect()
}

/// Parses `key = value` lines; `#` starts a comment. Returns `(key, value, line)`.
pub fn read_key_values(path: &Path) -> Result<Vec<(String, String, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected 'key = value', found '{line}'"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(CliError::Config {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "empty key or value".into(),
            });
        }
        out.push((k.to_string(), v.to_string(), i + 1));
    }
    Ok(out)
}

/// Output files of one command. Files written through it are removed again
/// unless [`OutputDir::finish`] is called, so a failed run leaves nothing behind.
pub struct OutputDir {
    dir: PathBuf,
    created: bool,
    written: Vec<PathBuf>,
    done: bool,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        let created = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created,
            written: Vec::new(),
            done: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn track(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.written.push(p.clone());
        p
    }

    /// Writes a CSV whose cells are already formatted.
    pub fn write_csv<I>(&mut self, name: &str, header: &[String], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.track(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        w.write_record(header).map_err(|e| CliError::csv(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| CliError::csv(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    pub fn write_key_values(&mut self, name: &str, pairs: &[(String, String)]) -> Result<()> {
        let path = self.track(name);
        let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    pub fn finish(mut self) {
        self.done = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
