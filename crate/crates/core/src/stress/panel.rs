use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, std_dev};
use crate::tensor::matrix::Matrix;

/// A dated panel of named real-valued series, one row per date.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorPanel {
    pub times: Vec<String>,
    pub names: Vec<String>,
    pub values: Matrix,
    /// Cells filled at ingestion, per column.
    pub imputed: Vec<usize>,
}

/// Asset returns share the factor panel layout.
pub type ReturnPanel = FactorPanel;

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "N/A" | "NaN" | "nan" | "null" | ".")
}

/// `YYYY-MM-DD` or `YYYY-MM`, optionally followed by a time part.
fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    let digits = |r: std::ops::Range<usize>| r.clone().all(|i| b.get(i).is_some_and(u8::is_ascii_digit));
    let month_ok = b.len() >= 7 && digits(0..4) && b[4] == b'-' && digits(5..7);
    match b.len() {
        7 => month_ok,
        n if n >= 10 => month_ok && b[7] == b'-' && digits(8..10) && (n == 10 || matches!(b[10], b'T' | b' ')),
        _ => false,
    }
}

impl FactorPanel {
    pub fn new(times: Vec<String>, names: Vec<String>, values: Matrix) -> Result<Self> {
        if values.rows() != times.len() || values.cols() != names.len() {
            return Err(Error::invalid(format!(
                "panel shape {}x{} does not match {} dates and {} names",
                values.rows(),
                values.cols(),
                times.len(),
                names.len()
            )));
        }
        if values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("panel values must be finite"));
        }
        let imputed = vec![0; names.len()];
        Ok(FactorPanel {
            times,
            names,
            values,
            imputed,
        })
    }

    /// Reads a CSV whose first column is an ISO-8601 `date` and whose other
    /// columns are numeric. Missing cells are forward-filled, and cells
    /// before a column's first observation take the column mean.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.get(0).map(str::to_ascii_lowercase).as_deref() != Some("date") {
            return Err(Error::invalid("first CSV column must be `date`"));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::invalid("CSV has no value columns"));
        }
        let d = names.len();
        let mut times = Vec::new();
        let mut cells: Vec<Option<f64>> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            if rec.len() != d + 1 {
                return Err(Error::invalid(format!("line {line}: expected {} fields, found {}", d + 1, rec.len())));
            }
            let date = rec[0].to_string();
            if !is_iso_date(&date) {
                return Err(Error::invalid(format!("line {line}: `{date}` is not an ISO-8601 date")));
            }
            if times.last().is_some_and(|prev: &String| *prev >= date) {
                return Err(Error::invalid(format!("line {line}: dates must be strictly increasing")));
            }
            times.push(date);
            for (j, cell) in rec.iter().skip(1).enumerate() {
                if is_missing(cell) {
                    cells.push(None);
                } else {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::invalid(format!("line {line}, column `{}`: `{cell}` is not a number", names[j]))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::invalid(format!("line {line}, column `{}`: non-finite value", names[j])));
                    }
                    cells.push(Some(v));
                }
            }
        }
        if times.is_empty() {
            return Err(Error::invalid("CSV has no data rows"));
        }
        let n = times.len();
        let mut values = Matrix::zeros(n, d);
        let mut imputed = vec![0; d];
        for j in 0..d {
            let observed: Vec<f64> = (0..n).filter_map(|i| cells[i * d + j]).collect();
            if observed.is_empty() {
                return Err(Error::invalid(format!("column `{}` has no observations", names[j])));
            }
            let fill = mean(&observed);
            let mut last = None;
            for i in 0..n {
                let v = match cells[i * d + j] {
                    Some(v) => {
                        last = Some(v);
                        v
                    }
                    None => {
                        imputed[j] += 1;
                        last.unwrap_or(fill)
                    }
                };
                values.set(i, j, v);
            }
        }
        Ok(FactorPanel {
            times,
            names,
            values,
            imputed,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        wr.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut rec = vec![t.clone()];
            rec.extend(self.values.row(i).iter().map(|v| format!("{v:?}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i).to_vec()).collect()
    }

    /// Rows `range` as a new panel.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<FactorPanel> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::invalid(format!("row range {range:?} invalid for {} rows", self.len())));
        }
        let rows: Vec<Vec<f64>> = range.clone().map(|i| self.row(i).to_vec()).collect();
        FactorPanel::new(self.times[range].to_vec(), self.names.clone(), Matrix::from_rows(&rows)?)
    }

    /// Errors unless both panels carry the same dates.
    pub fn check_aligned(&self, other: &FactorPanel) -> Result<()> {
        if self.times != other.times {
            return Err(Error::invalid("factor and return panels are not aligned on dates"));
        }
        Ok(())
    }
}

/// Per-column z-scoring `(x − mean)/std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Sample standard deviations; constant columns use 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("cannot standardize an empty window"));
        }
        let d = rows[0].len();
        let mut mu = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            mu.push(mean(&col));
            let s = std_dev(&col);
            if s > 0.0 {
                scale.push(s);
            } else {
                log::warn!("column {j} is constant in the standardization window");
                scale.push(1.0);
            }
        }
        Ok(Standardizer { mean: mu, scale })
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| m + s * v).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_fill_then_mean_fill() {
        let csv = "date,a,b\n2020-01-01,,1\n2020-02-01,2,NA\n2020-03-01,4,3\n2020-04-01,,\n";
        let p = FactorPanel::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(p.names, vec!["a", "b"]);
        assert_eq!(p.values.column(0), vec![3.0, 2.0, 4.0, 4.0]);
        assert_eq!(p.values.column(1), vec![1.0, 1.0, 3.0, 3.0]);
        assert_eq!(p.imputed, vec![2, 2]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(FactorPanel::from_csv("when,a\n2020-01-01,1\n".as_bytes()).is_err());
        assert!(FactorPanel::from_csv("date,a\n2020-01-01,x\n".as_bytes()).is_err());
        assert!(FactorPanel::from_csv("date,a\n2020-02-01,1\n2020-01-01,2\n".as_bytes()).is_err());
        assert!(FactorPanel::from_csv("date,a\n01/02/2020,1\n".as_bytes()).is_err());
        assert!(FactorPanel::from_csv("date,a\n2020-01-01,\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = FactorPanel::new(
            vec!["2021-01".into(), "2021-02".into()],
            vec!["x".into()],
            Matrix::from_rows(&[vec![0.1], vec![-2.5e-7]]).unwrap(),
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(FactorPanel::from_csv(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn standardizer_round_trip() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let s = Standardizer::fit(&rows).unwrap();
        assert_eq!(s.apply(&[3.0, 5.0]), vec![0.0, 0.0]);
        assert_eq!(s.scale, vec![2.0, 1.0]);
        assert_eq!(s.invert(&s.apply(&[7.0, 1.0])), vec![7.0, 1.0]);
    }
}
