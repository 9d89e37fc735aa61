use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// A CSV companion of a report, already rendered.
pub struct Table {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Table {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Table {
            name: name.into(),
            bytes,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Core(e.into()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes `<name>.json` and each table into `dir`, creating it if needed,
/// and returns the written paths in order.
pub fn emit_report<T: Serialize>(dir: &Path, name: &str, report: &T, tables: Vec<Table>) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::with_capacity(tables.len() + 1);
    let path = dir.join(format!("{name}.json"));
    write_file(&path, to_json(report)?.as_bytes())?;
    written.push(path);
    for t in tables {
        let path = dir.join(&t.name);
        write_file(&path, &t.bytes)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads numeric rows from a CSV file. A first line that does not parse as
/// numbers is taken as a header.
pub fn read_rows_csv(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(path, e.to_string()))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::data(path, format!("line {}: {e}", i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(CliError::data(path, "no numeric rows"));
    }
    let width = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(CliError::data(path, format!("row {} has {} fields, expected {width}", i + 1, rows[i].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::data(path, "values must be finite"));
    }
    Ok(rows)
}

pub fn rows_csv(rows: &[Vec<f64>]) -> Vec<u8> {
    let mut buf = Vec::new();
    csdm_core::diffusion::write_samples_csv(&mut buf, rows).expect("writing to memory");
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_with_optional_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let rows = vec![vec![0.1, -2.0], vec![1e-300, 3.5]];
        write_file(&p, &rows_csv(&rows)).unwrap();
        assert_eq!(read_rows_csv(&p).unwrap(), rows);
        write_file(&p, b"a,b\n1,2\n").unwrap();
        assert_eq!(read_rows_csv(&p).unwrap(), vec![vec![1.0, 2.0]]);
        write_file(&p, b"1,2\n3\n").unwrap();
        assert!(read_rows_csv(&p).is_err());
    }
}
