//! `SLIM v1` text format.
//!
//! ```text
//! SLIM v1 n=<n> rows=<k> lambda1=<v> lambdaF=<v> trainer=<cd|greedy>
//! R <item> <nnz>
//! <j> <w>
//! ...
//! ```
//!
//! Rows appear in model order. Reals use 17 significant digits, which
//! round-trips every `f64`. Lines starting with `#` after the header are
//! metadata and ignored by the reader.

use std::io::{BufRead, Write};

use super::{HyperParams, SlimModel, Trainer};
use crate::{Error, Result, SparseVec};

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_model<W: Write>(mut out: W, model: &SlimModel, meta: &[(&str, &str)]) -> Result<()> {
    let hp = model.hyper();
    writeln!(
        out,
        "SLIM v1 n={} rows={} lambda1={} lambdaF={} trainer={}",
        model.num_items(),
        model.num_rows(),
        fmt_real(hp.lambda_1),
        fmt_real(hp.lambda_f),
        model.trainer().as_str()
    )?;
    for (k, v) in meta {
        writeln!(out, "# {k}={v}")?;
    }
    for row in model.rows() {
        writeln!(out, "R {} {}", row.item, row.weights.nnz())?;
        for (j, w) in row.weights.iter() {
            writeln!(out, "{j} {}", fmt_real(w))?;
        }
    }
    Ok(())
}

fn format_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("SLIM model line {line}: {msg}"))
}

fn header_field<'a>(token: Option<&'a str>, key: &str, line: usize) -> Result<&'a str> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| format_err(line, format!("expected {key}=<value>")))
}

fn parse<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| format_err(line, format!("cannot parse {s:?}")))
}

pub fn read_model<R: BufRead>(source: R) -> Result<SlimModel> {
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(k, l)| l.map(|l| (k + 1, l)))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty() || l.starts_with('#')));

    let (no, header) = lines.next().ok_or_else(|| format_err(1, "empty file"))??;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("SLIM") || tokens.next() != Some("v1") {
        return Err(format_err(no, "missing `SLIM v1` header"));
    }
    let n: usize = parse(header_field(tokens.next(), "n", no)?, no)?;
    let rows: usize = parse(header_field(tokens.next(), "rows", no)?, no)?;
    let lambda_1: f64 = parse(header_field(tokens.next(), "lambda1", no)?, no)?;
    let lambda_f: f64 = parse(header_field(tokens.next(), "lambdaF", no)?, no)?;
    let trainer: Trainer = header_field(tokens.next(), "trainer", no)?.parse()?;
    let hp = HyperParams::new(lambda_1, lambda_f)?;
    let mut model = SlimModel::new(n, hp, trainer);

    for _ in 0..rows {
        let (no, line) = lines.next().ok_or_else(|| format_err(no, "truncated file"))??;
        let mut t = line.split_whitespace();
        if t.next() != Some("R") {
            return Err(format_err(no, "expected `R <item> <nnz>`"));
        }
        let item: usize = parse(t.next().unwrap_or(""), no)?;
        let nnz: usize = parse(t.next().unwrap_or(""), no)?;
        let mut pairs = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let (no, line) = lines.next().ok_or_else(|| format_err(no, "truncated row"))??;
            let mut t = line.split_whitespace();
            let j: usize = parse(t.next().unwrap_or(""), no)?;
            let w: f64 = parse(t.next().unwrap_or(""), no)?;
            pairs.push((j, w));
        }
        let weights = SparseVec::from_pairs(pairs);
        if weights.nnz() != nnz {
            return Err(format_err(no, "duplicate column in row"));
        }
        model
            .push_row(item, weights)
            .map_err(|e| format_err(no, e))?;
    }
    if let Some(extra) = lines.next() {
        let (no, _) = extra?;
        return Err(format_err(no, "trailing data after last row"));
    }
    Ok(model)
}
