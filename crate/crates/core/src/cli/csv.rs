//! CSV serialisation of entropy traces and 2D fields. Floats are written
//! with 17 significant digits so a read-back is bit-identical.

use std::io::{self, Write};

use crate::entropy::{EntropyRow, EntropyTrace};

pub const TRACE_HEADER: &str =
    "t,sigma_entropy,tilde_entropy,entropy_production_direct,entropy_production_fisher,entropy_flow,mass";

pub const FIELD_HEADER: &str = "x_min,x_max,n_x,y_min,y_max,n_y";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn emit_trace<W: Write>(trace: &EntropyTrace, out: &mut W) -> io::Result<()> {
    emit_trace_rows(trace.rows(), out)
}

pub fn emit_trace_rows<W: Write>(rows: &[EntropyRow], out: &mut W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(r.t),
            num(r.sigma_entropy),
            num(r.tilde_entropy),
            num(r.production_direct),
            num(r.production_fisher),
            num(r.flow),
            num(r.mass)
        )?;
    }
    Ok(())
}

fn parse_row(line: &str, expected: usize) -> Result<Vec<f64>, String> {
    let cells: Vec<f64> = line
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("bad number `{c}`: {e}")))
        .collect::<Result<_, _>>()?;
    if cells.len() != expected {
        return Err(format!("expected {expected} columns, got {}", cells.len()));
    }
    Ok(cells)
}

/// Read a trace written by [`emit_trace`]; excluded mass is not stored and
/// reads back as zero.
pub fn parse_trace(text: &str) -> Result<Vec<EntropyRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        other => return Err(format!("unexpected trace header {other:?}")),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let c = parse_row(l, 7)?;
            Ok(EntropyRow {
                t: c[0],
                sigma_entropy: c[1],
                tilde_entropy: c[2],
                production_direct: c[3],
                production_fisher: c[4],
                flow: c[5],
                mass: c[6],
                excluded_mass: 0.0,
            })
        })
        .collect()
}

/// Cell-centred field on `[x_min, x_max] × [y_min, y_max]`, one CSV row per
/// y index.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTable {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

pub fn emit_field<W: Write>(
    x_range: (f64, f64),
    y_range: (f64, f64),
    nx: usize,
    ny: usize,
    values: &[f64],
    out: &mut W,
) -> io::Result<()> {
    if values.len() != nx * ny {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("field has {} values, grid needs {}", values.len(), nx * ny),
        ));
    }
    writeln!(out, "{FIELD_HEADER}")?;
    writeln!(
        out,
        "{},{},{nx},{},{},{ny}",
        num(x_range.0),
        num(x_range.1),
        num(y_range.0),
        num(y_range.1)
    )?;
    for row in values.chunks(nx) {
        let line: Vec<String> = row.iter().map(|&v| num(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn parse_field(text: &str) -> Result<FieldTable, String> {
    let mut lines = text.lines();
    if lines.next() != Some(FIELD_HEADER) {
        return Err("unexpected field header".into());
    }
    let dims = lines.next().ok_or("missing field dimensions")?;
    let d: Vec<&str> = dims.split(',').collect();
    if d.len() != 6 {
        return Err(format!("bad dimension line `{dims}`"));
    }
    let f = |s: &str| s.parse::<f64>().map_err(|e| e.to_string());
    let u = |s: &str| s.parse::<usize>().map_err(|e| e.to_string());
    let (nx, ny) = (u(d[2])?, u(d[5])?);
    let mut values = Vec::with_capacity(nx * ny);
    for l in lines.filter(|l| !l.is_empty()) {
        values.extend(parse_row(l, nx)?);
    }
    if values.len() != nx * ny {
        return Err(format!("expected {} values, got {}", nx * ny, values.len()));
    }
    Ok(FieldTable {
        x_range: (f(d[0])?, f(d[1])?),
        y_range: (f(d[3])?, f(d[4])?),
        nx,
        ny,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_is_header_only() {
        let mut buf = Vec::new();
        emit_trace(&EntropyTrace::new(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn trace_round_trips_bitwise() {
        let mut trace = EntropyTrace::new();
        for (k, t) in [0.0, 0.1, 0.30000000000000004].iter().enumerate() {
            trace
                .push(EntropyRow {
                    t: *t,
                    sigma_entropy: 1.0 / 3.0 + k as f64,
                    tilde_entropy: std::f64::consts::PI,
                    production_direct: 1e-300,
                    production_fisher: 2.2250738585072014e-308,
                    flow: -0.0,
                    mass: 1.0 - f64::EPSILON,
                    excluded_mass: 0.0,
                })
                .unwrap();
        }
        let mut buf = Vec::new();
        emit_trace(&trace, &mut buf).unwrap();
        let back = parse_trace(std::str::from_utf8(&buf).unwrap()).unwrap();
        for (a, b) in trace.rows().iter().zip(&back) {
            for (x, y) in [
                (a.t, b.t),
                (a.sigma_entropy, b.sigma_entropy),
                (a.tilde_entropy, b.tilde_entropy),
                (a.production_direct, b.production_direct),
                (a.production_fisher, b.production_fisher),
                (a.flow, b.flow),
                (a.mass, b.mass),
            ] {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn field_round_trips() {
        let values: Vec<f64> = (0..12).map(|k| (k as f64).sqrt()).collect();
        let mut buf = Vec::new();
        emit_field((-1.0, 1.0), (0.0, 3.0), 4, 3, &values, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x_min,x_max,n_x,y_min,y_max,n_y\n"));
        let back = parse_field(&text).unwrap();
        assert_eq!(back.values, values);
        assert_eq!((back.nx, back.ny), (4, 3));
    }

    #[test]
    fn field_size_mismatch_rejected() {
        let mut buf = Vec::new();
        assert!(emit_field((0.0, 1.0), (0.0, 1.0), 2, 2, &[1.0], &mut buf).is_err());
    }
}
