//! CSV emission and ingestion.
//!
//! Stats: `t,mean,variance[,ci_halfwidth[,variance_ci_halfwidth]]`.
//! Coefficients: `n,polynomial`. Majorant: `n,H_n,H_n_s_n`.
//!
//! Floats are written with six significant digits in `%g` style unless full
//! precision is requested, in which case the shortest round-trip form is
//! used. Grid points always use the shortest round-trip form.

use std::io::{Read, Write};

use thiserror::Error;

use crate::frobenius::SeriesSolution;
use crate::polyalg::SymbolTable;
use crate::uqstats::{MajorantSeq, StatCurve};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: u64, msg: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FloatFormat {
    #[default]
    Sig6,
    Full,
}

impl FloatFormat {
    pub fn write(self, x: f64) -> String {
        match self {
            FloatFormat::Sig6 => format_g(x, 6),
            FloatFormat::Full => format_shortest(x),
        }
    }
}

fn format_shortest(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        special(x)
    }
}

fn special(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// C `%.{digits}g`.
pub fn format_g(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return special(x);
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_stats<W: Write>(curve: &StatCurve, fmt: FloatFormat, out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    let with_ci = curve.ci_halfwidth.is_some();
    let with_var_ci = with_ci && curve.variance_ci_halfwidth.is_some();
    let mut header = vec!["t", "mean", "variance"];
    if with_ci {
        header.push("ci_halfwidth");
    }
    if with_var_ci {
        header.push("variance_ci_halfwidth");
    }
    w.write_record(&header)?;
    for i in 0..curve.grid.len() {
        let mut row = vec![
            format_shortest(curve.grid[i]),
            fmt.write(curve.mean[i]),
            fmt.write(curve.variance[i]),
        ];
        if let Some(ci) = &curve.ci_halfwidth {
            row.push(fmt.write(ci[i]));
        }
        if let (true, Some(ci)) = (with_var_ci, &curve.variance_ci_halfwidth) {
            row.push(fmt.write(ci[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stats<R: Read>(input: R, label: &str) -> Result<StatCurve, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let col = |name: &str| names.iter().position(|h| *h == name);
    let (Some(t), Some(mean), Some(var)) = (col("t"), col("mean"), col("variance")) else {
        return Err(CsvError::Format {
            line: 1,
            msg: format!("expected columns t, mean, variance; found {}", names.join(", ")),
        });
    };
    let ci = col("ci_halfwidth");
    let var_ci = col("variance_ci_halfwidth");
    let mut curve = StatCurve {
        label: label.to_string(),
        grid: Vec::new(),
        mean: Vec::new(),
        variance: Vec::new(),
        ci_halfwidth: ci.map(|_| Vec::new()),
        variance_ci_halfwidth: var_ci.map(|_| Vec::new()),
    };
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64, CsvError> {
            let raw = record.get(i).unwrap_or("").trim();
            raw.parse().map_err(|_| CsvError::Format {
                line,
                msg: format!("column `{}`: `{raw}` is not a number", names[i]),
            })
        };
        curve.grid.push(field(t)?);
        curve.mean.push(field(mean)?);
        curve.variance.push(field(var)?);
        if let (Some(i), Some(v)) = (ci, curve.ci_halfwidth.as_mut()) {
            v.push(field(i)?);
        }
        if let (Some(i), Some(v)) = (var_ci, curve.variance_ci_halfwidth.as_mut()) {
            v.push(field(i)?);
        }
    }
    Ok(curve)
}

pub fn write_coeffs<W: Write>(sol: &SeriesSolution, symbols: &SymbolTable, out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "polynomial"])?;
    for (n, p) in sol.coeffs.iter().enumerate() {
        w.write_record([n.to_string(), p.to_text(symbols)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_majorant<W: Write>(maj: &MajorantSeq, fmt: FloatFormat, out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "H_n", "H_n_s_n"])?;
    for (n, (h, hs)) in maj.h.iter().zip(maj.scaled()).enumerate() {
        w.write_record([n.to_string(), fmt.write(*h), fmt.write(hs)])?;
    }
    w.flush()?;
    Ok(())
}
