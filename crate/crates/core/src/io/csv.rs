use std::fs;
use std::path::Path;

use crate::cluster::Labels;
use crate::error::{Error, Result};
use crate::field::format_f64;
use crate::numcore::Matrix;

use super::write_atomic;

/// One line per row, comma-separated, no header.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| format_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str, origin: &Path, field: &str) -> Result<Matrix> {
    let fail = |msg: String| Error::Load {
        path: origin.to_path_buf(),
        field: field.to_string(),
        msg,
    };
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| fail(format!("line {}: `{}` is not a number", lineno + 1, cell.trim())))?;
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(fail(format!("line {} has {count} values, expected {c}", lineno + 1)));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| fail("file is empty".into()))?;
    Matrix::new(rows, cols, data).map_err(|e| fail(e.to_string()))
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    write_atomic(path, matrix_to_csv(m).as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text, path, "matrix")
}

pub fn labels_to_csv(labels: &Labels) -> String {
    let cells: Vec<String> = labels.as_slice().iter().map(|l| l.to_string()).collect();
    format!("{}\n", cells.join(","))
}

pub fn parse_labels_csv(text: &str, origin: &Path) -> Result<Labels> {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).ok_or_else(|| Error::Load {
        path: origin.to_path_buf(),
        field: "labels".into(),
        msg: "file is empty".into(),
    })?;
    let assignment = parse_label_cells(line.split(','), origin, "labels")?;
    Ok(Labels::from_assignment(assignment))
}

fn parse_label_cells<'a>(cells: impl Iterator<Item = &'a str>, origin: &Path, field: &str) -> Result<Vec<usize>> {
    cells
        .map(|c| {
            c.trim().parse::<usize>().map_err(|_| Error::Load {
                path: origin.to_path_buf(),
                field: field.to_string(),
                msg: format!("`{}` is not a label", c.trim()),
            })
        })
        .collect()
}

/// Predicted labels at several times: one line per time, the time first.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSeries {
    pub times: Vec<f64>,
    pub labels: Vec<Labels>,
}

impl LabelSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (t, l) in self.times.iter().zip(&self.labels) {
            out.push_str(&format_f64(*t));
            for v in l.as_slice() {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<LabelSeries> {
        let mut times = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let field = format!("line {}", lineno + 1);
            let mut cells = line.split(',');
            let t = cells
                .next()
                .and_then(|c| c.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Load {
                    path: origin.to_path_buf(),
                    field: field.clone(),
                    msg: "missing time".into(),
                })?;
            times.push(t);
            labels.push(Labels::from_assignment(parse_label_cells(cells, origin, &field)?));
        }
        Ok(LabelSeries { times, labels })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn load(path: &Path) -> Result<LabelSeries> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelSeries::parse(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let mut m = Rng::new(1).randn(4, 5);
        m[(0, 0)] = 0.1 + 0.2;
        m[(1, 1)] = f64::MIN_POSITIVE;
        m[(2, 2)] = -1e300;
        let back = parse_matrix_csv(&matrix_to_csv(&m), Path::new("m.csv"), "m").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ragged_or_bad_rows_fail() {
        let err = parse_matrix_csv("1,2\n3\n", Path::new("m.csv"), "files[0]").unwrap_err();
        assert!(err.to_string().contains("files[0]"), "{err}");
        assert!(parse_matrix_csv("1,x\n", Path::new("m.csv"), "m").is_err());
        assert!(parse_matrix_csv("\n", Path::new("m.csv"), "m").is_err());
    }

    #[test]
    fn label_series_round_trip() {
        let s = LabelSeries {
            times: vec![0.3, 1.0],
            labels: vec![Labels::from_assignment(vec![0, 1, 1]), Labels::from_assignment(vec![1, 0, 2])],
        };
        assert_eq!(LabelSeries::parse(&s.to_csv(), Path::new("l")).unwrap(), s);
        let l = Labels::from_assignment(vec![2, 0, 1, 1]);
        assert_eq!(parse_labels_csv(&labels_to_csv(&l), Path::new("l")).unwrap(), l);
    }
}
