//! CSV input and output for curves, coefficients and scores.
//!
//! Three curve layouts are supported: raw (`curve_id,group,v,value[,v_reset]`,
//! one observed point per row in original units), long
//! (`curve_id,group,t,value` on a shared grid) and wide (`curve_id,group`
//! followed by one column per grid point, named by its abscissa). Floats are
//! written with the shortest representation that round-trips exactly.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::basis::BSplineBasis;
use crate::error::{Error, Result};
use crate::smooth::{CoefficientSet, CurveSet, RawCurve};

fn reader_from<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn parse_field(record: &csv::StringRecord, idx: usize, line: usize, what: &str) -> Result<f64> {
    let raw = record.get(idx).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what} field"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} value '{raw}'"),
    })
}

/// Reads raw curves. The optional `v_reset` column may be empty; it defaults
/// to the largest abscissa of the curve. Points must appear in increasing
/// abscissa order within each curve.
pub fn read_raw_curves<R: Read>(input: R) -> Result<Vec<RawCurve>> {
    let mut reader = reader_from(input);
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 4
        || cols[0] != "curve_id"
        || cols[1] != "group"
        || cols[2] != "v"
        || cols[3] != "value"
        || (cols.len() == 5 && cols[4] != "v_reset")
        || cols.len() > 5
    {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header curve_id,group,v,value[,v_reset], found {}",
                cols.join(",")
            ),
        });
    }
    let has_reset = cols.len() == 5;
    let mut curves: Vec<RawCurve> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        let id = record.get(0).unwrap_or_default().to_string();
        let group = record.get(1).unwrap_or_default().to_string();
        if id.is_empty() || group.is_empty() {
            return Err(Error::Parse {
                line,
                message: "curve_id and group must be nonempty".into(),
            });
        }
        let v = parse_field(&record, 2, line, "v")?;
        let y = parse_field(&record, 3, line, "value")?;
        let reset = if has_reset {
            match record.get(4) {
                None | Some("") => None,
                Some(raw) => Some(raw.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad v_reset value '{raw}'"),
                })?),
            }
        } else {
            None
        };
        match curves.last_mut() {
            Some(last) if last.id == id => {
                if last.group != group {
                    return Err(Error::Parse {
                        line,
                        message: format!("curve '{id}' appears under two groups"),
                    });
                }
                if let Some(r) = reset {
                    match last.v_reset {
                        Some(existing) if existing != r => {
                            return Err(Error::Parse {
                                line,
                                message: format!("curve '{id}' has conflicting v_reset values"),
                            })
                        }
                        _ => last.v_reset = Some(r),
                    }
                }
                last.points.push((v, y));
            }
            _ => {
                if curves.iter().any(|c| c.id == id) {
                    return Err(Error::Parse {
                        line,
                        message: format!("curve '{id}' rows are not contiguous"),
                    });
                }
                curves.push(RawCurve {
                    id,
                    group,
                    points: vec![(v, y)],
                    v_reset: reset,
                });
            }
        }
    }
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no curves in input".into()));
    }
    for curve in &curves {
        curve.validate()?;
    }
    Ok(curves)
}

/// Reads long-form curves on a shared grid.
pub fn read_curves_long<R: Read>(input: R) -> Result<CurveSet> {
    let mut reader = reader_from(input);
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["curve_id", "group", "t", "value"] {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header curve_id,group,t,value, found {}",
                cols.join(",")
            ),
        });
    }
    struct Partial {
        id: String,
        group: String,
        points: Vec<(f64, f64)>,
    }
    let mut curves: Vec<Partial> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        let id = record.get(0).unwrap_or_default().to_string();
        let group = record.get(1).unwrap_or_default().to_string();
        let t = parse_field(&record, 2, line, "t")?;
        let y = parse_field(&record, 3, line, "value")?;
        match curves.iter_mut().find(|c| c.id == id) {
            Some(c) => {
                if c.group != group {
                    return Err(Error::Parse {
                        line,
                        message: format!("curve '{id}' appears under two groups"),
                    });
                }
                c.points.push((t, y));
            }
            None => curves.push(Partial {
                id,
                group,
                points: vec![(t, y)],
            }),
        }
    }
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no curves in input".into()));
    }
    for c in curves.iter_mut() {
        c.points
            .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }
    let grid: Vec<f64> = curves[0].points.iter().map(|p| p.0).collect();
    let mut values = DMatrix::zeros(curves.len(), grid.len());
    for (row, c) in curves.iter().enumerate() {
        if c.points.len() != grid.len() || c.points.iter().zip(&grid).any(|(p, &t)| p.0 != t) {
            return Err(Error::InvalidArgument(format!(
                "curve '{}' is not observed on the shared grid",
                c.id
            )));
        }
        for (col, p) in c.points.iter().enumerate() {
            values[(row, col)] = p.1;
        }
    }
    CurveSet::new(
        grid,
        values,
        curves.iter().map(|c| c.id.clone()).collect(),
        curves.iter().map(|c| c.group.clone()).collect(),
    )
}

/// Reads wide-form curves; grid abscissas come from the column names.
pub fn read_curves_wide<R: Read>(input: R) -> Result<CurveSet> {
    let mut reader = reader_from(input);
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "curve_id" || cols[1] != "group" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header curve_id,group,<t1>,<t2>,...".into(),
        });
    }
    let mut grid = Vec::with_capacity(cols.len() - 2);
    for c in &cols[2..] {
        grid.push(c.parse::<f64>().map_err(|_| Error::Parse {
            line: 1,
            message: format!("grid column name '{c}' is not a number"),
        })?);
    }
    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        ids.push(record.get(0).unwrap_or_default().to_string());
        groups.push(record.get(1).unwrap_or_default().to_string());
        for col in 0..grid.len() {
            rows.push(parse_field(&record, col + 2, line, "value")?);
        }
    }
    if ids.is_empty() {
        return Err(Error::InvalidArgument("no curves in input".into()));
    }
    let values = DMatrix::from_row_slice(ids.len(), grid.len(), &rows);
    CurveSet::new(grid, values, ids, groups)
}

pub fn write_curves_long<W: Write>(out: &mut W, curves: &CurveSet) -> Result<()> {
    writeln!(out, "curve_id,group,t,value")?;
    let labels = curves.group_labels();
    for (row, id) in curves.curve_ids().iter().enumerate() {
        for (col, t) in curves.grid().iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                id,
                labels[row],
                t,
                curves.values()[(row, col)]
            )?;
        }
    }
    Ok(())
}

pub fn write_curves_wide<W: Write>(out: &mut W, curves: &CurveSet) -> Result<()> {
    write!(out, "curve_id,group")?;
    for t in curves.grid() {
        write!(out, ",{t}")?;
    }
    writeln!(out)?;
    let labels = curves.group_labels();
    for (row, id) in curves.curve_ids().iter().enumerate() {
        write!(out, "{},{}", id, labels[row])?;
        for col in 0..curves.grid().len() {
            write!(out, ",{}", curves.values()[(row, col)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Writes coefficients as `curve_id,group,a1..ap`.
pub fn write_coefficients<W: Write>(out: &mut W, coeffs: &CoefficientSet) -> Result<()> {
    let p = coeffs.coefficients().ncols();
    write!(out, "curve_id,group")?;
    for k in 1..=p {
        write!(out, ",a{k}")?;
    }
    writeln!(out)?;
    let labels = coeffs.group_labels();
    for (row, id) in coeffs.curve_ids().iter().enumerate() {
        write!(out, "{},{}", id, labels[row])?;
        for k in 0..p {
            write!(out, ",{}", coeffs.coefficients()[(row, k)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads coefficients back; the basis fixes the expected column count.
pub fn read_coefficients<R: Read>(input: R, basis: &BSplineBasis) -> Result<CoefficientSet> {
    let mut reader = reader_from(input);
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let p = basis.dimension();
    if cols.len() != p + 2 || cols[0] != "curve_id" || cols[1] != "group" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header curve_id,group,a1..a{p}"),
        });
    }
    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut flat = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        ids.push(record.get(0).unwrap_or_default().to_string());
        groups.push(record.get(1).unwrap_or_default().to_string());
        for k in 0..p {
            flat.push(parse_field(&record, k + 2, line, "coefficient")?);
        }
    }
    if ids.is_empty() {
        return Err(Error::InvalidArgument("no coefficients in input".into()));
    }
    let matrix = DMatrix::from_row_slice(ids.len(), p, &flat);
    CoefficientSet::new(matrix, ids, groups, basis.clone())
}

/// Writes principal component scores as `curve_id,group,pc1..pcq`.
pub fn write_scores<W: Write>(
    out: &mut W,
    ids: &[String],
    groups: &[String],
    scores: &DMatrix<f64>,
) -> Result<()> {
    let q = scores.ncols();
    write!(out, "curve_id,group")?;
    for k in 1..=q {
        write!(out, ",pc{k}")?;
    }
    writeln!(out)?;
    for row in 0..scores.nrows() {
        write!(out, "{},{}", ids[row], groups[row])?;
        for k in 0..q {
            write!(out, ",{}", scores[(row, k)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a score table back as (ids, groups, matrix).
pub fn read_scores<R: Read>(input: R) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let mut reader = reader_from(input);
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "curve_id" || cols[1] != "group" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header curve_id,group,pc1,...".into(),
        });
    }
    let q = cols.len() - 2;
    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut flat = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        ids.push(record.get(0).unwrap_or_default().to_string());
        groups.push(record.get(1).unwrap_or_default().to_string());
        for k in 0..q {
            flat.push(parse_field(&record, k + 2, line, "score")?);
        }
    }
    let matrix = DMatrix::from_row_slice(ids.len(), q, &flat);
    Ok((ids, groups, matrix))
}
