//! Snapshot CSV files.
//!
//! Paired form: header `x1..xn,xp1..xpn[,y1..yp][,yp1..ypp]`, one snapshot
//! pair per line. Trajectory form: no `xp` columns; consecutive rows are
//! paired. Outputs are stored one row per sample.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::empirical::SnapshotSet;
use crate::error::{KoopmanError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    X,
    XPlus,
    Y,
    YPlus,
}

fn classify(name: &str) -> Option<(Group, usize)> {
    let (group, digits) = if let Some(d) = name.strip_prefix("xp") {
        (Group::XPlus, d)
    } else if let Some(d) = name.strip_prefix("yp") {
        (Group::YPlus, d)
    } else if let Some(d) = name.strip_prefix('x') {
        (Group::X, d)
    } else if let Some(d) = name.strip_prefix('y') {
        (Group::Y, d)
    } else {
        return None;
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok().map(|i: usize| (group, i - 1))
}

fn header_error(message: impl Into<String>) -> KoopmanError {
    KoopmanError::Parse { line: 1, column: 0, message: message.into() }
}

fn csv_error(e: csv::Error) -> KoopmanError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    KoopmanError::Parse { line, column: 0, message: e.to_string() }
}

/// Reads either CSV form into a snapshot set.
pub fn read_snapshots<R: Read>(reader: R) -> Result<SnapshotSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();

    // column index in the file for each (group, index)
    let mut slots: [Vec<Option<usize>>; 4] = Default::default();
    for (col, name) in headers.iter().enumerate() {
        let (group, idx) = classify(name)
            .ok_or_else(|| header_error(format!("unrecognised column name {name:?} (column {})", col + 1)))?;
        let slot = &mut slots[group as usize];
        if slot.len() <= idx {
            slot.resize(idx + 1, None);
        }
        if slot[idx].replace(col).is_some() {
            return Err(header_error(format!("duplicate column {name:?}")));
        }
    }
    for (group, prefix) in [(Group::X, "x"), (Group::XPlus, "xp"), (Group::Y, "y"), (Group::YPlus, "yp")] {
        if let Some(missing) = slots[group as usize].iter().position(Option::is_none) {
            return Err(header_error(format!("column {prefix}{} is missing", missing + 1)));
        }
    }
    let n = slots[Group::X as usize].len();
    let n_plus = slots[Group::XPlus as usize].len();
    let p = slots[Group::Y as usize].len();
    let p_plus = slots[Group::YPlus as usize].len();
    if n == 0 {
        return Err(header_error("no state columns x1..xn"));
    }
    if n_plus != 0 && n_plus != n {
        return Err(header_error(format!("{n} state columns but {n_plus} successor columns")));
    }
    if p_plus != 0 && p_plus != p {
        return Err(header_error(format!("{p} output columns but {p_plus} successor output columns")));
    }
    let trajectory = n_plus == 0;
    if trajectory && p_plus != 0 {
        return Err(header_error("successor output columns need successor state columns"));
    }

    let mut cols: [Vec<f64>; 4] = Default::default();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut values = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| KoopmanError::Parse {
                line,
                column: c + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(KoopmanError::Parse {
                    line,
                    column: c + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        for g in 0..4 {
            for c in slots[g].iter().flatten() {
                cols[g].push(values[*c]);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(KoopmanError::Parse { line: 2, column: 0, message: "no data rows".into() });
    }

    let mat = |g: Group, width: usize| DMatrix::from_row_slice(rows, width, &cols[g as usize]);
    let y = (p > 0).then(|| mat(Group::Y, p));
    if trajectory {
        SnapshotSet::from_trajectory(&mat(Group::X, n), y.as_ref())
    } else {
        let yp = (p_plus > 0).then(|| mat(Group::YPlus, p));
        SnapshotSet::with_outputs(mat(Group::X, n), mat(Group::XPlus, n), y, yp)
    }
}

pub fn read_snapshots_file(path: &std::path::Path) -> Result<SnapshotSet> {
    read_snapshots(std::fs::File::open(path)?)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes the paired form, including `Y`/`Y+` columns when present.
pub fn write_snapshots<W: Write>(mut out: W, data: &SnapshotSet) -> Result<()> {
    let n = data.state_dim();
    let p = data.output_dim().unwrap_or(0);
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend((1..=n).map(|i| format!("xp{i}")));
    header.extend((1..=p).map(|i| format!("y{i}")));
    if data.y_plus().is_some() {
        header.extend((1..=p).map(|i| format!("yp{i}")));
    }
    writeln!(out, "{}", header.join(","))?;
    for k in 0..data.len() {
        let mut fields: Vec<String> = Vec::with_capacity(header.len());
        let mats = [Some(data.x()), Some(data.x_plus()), data.y(), data.y_plus()];
        for m in mats.into_iter().flatten() {
            fields.extend(m.row(k).iter().map(|&v| fmt_f64(v)));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_form_with_outputs() {
        let text = "x1,x2,xp1,xp2,y1\n1,2,3,4,5\n6,7,8,9,10\n";
        let s = read_snapshots(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.x(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 6.0, 7.0]));
        assert_eq!(s.x_plus(), &DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 8.0, 9.0]));
        assert_eq!(s.y().unwrap(), &DMatrix::from_row_slice(2, 1, &[5.0, 10.0]));
        assert!(s.y_plus().is_none());
    }

    #[test]
    fn trajectory_form() {
        let text = "x1\n1\n2\n4\n";
        let s = read_snapshots(text.as_bytes()).unwrap();
        assert_eq!(s.x().as_slice(), &[1.0, 2.0]);
        assert_eq!(s.x_plus().as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn malformed_field_reports_line_and_column() {
        let text = "x1,xp1\n1,2\n3,abc\n";
        match read_snapshots(text.as_bytes()).unwrap_err() {
            KoopmanError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_reports_line() {
        let text = "x1,xp1\n1,2\n3\n";
        match read_snapshots(text.as_bytes()).unwrap_err() {
            KoopmanError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_problems() {
        for bad in ["x1,z1\n1,2\n", "x2,xp2\n1,2\n", "x1,x2,xp1\n1,2,3\n", "x1,x1\n1,2\n", "x1,xp1\n"] {
            assert!(matches!(read_snapshots(bad.as_bytes()), Err(KoopmanError::Parse { .. })), "{bad}");
        }
    }

    #[test]
    fn write_then_read_is_exact() {
        let x = DMatrix::from_row_slice(2, 1, &[0.1, 1.0 / 3.0]);
        let xp = DMatrix::from_row_slice(2, 1, &[1e-300, -2.5e17]);
        let y = DMatrix::from_row_slice(2, 2, &[std::f64::consts::PI, 0.0, -0.0, 7.0]);
        let yp = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let s = SnapshotSet::with_outputs(x, xp, Some(y), Some(yp)).unwrap();
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,xp1,y1,y2,yp1,yp2\n"));
        let back = read_snapshots(text.as_bytes()).unwrap();
        assert_eq!(back, s);
    }
}
