//! Text formats for update streams and sparse signal listings.
//!
//! One record per line, `<index> <value>`, whitespace separated. `#` starts a
//! comment that runs to the end of the line; blank lines are ignored.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::signal::{Signal, Update};

fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(no, line)| {
        let body = line.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((no + 1, body))
    })
}

fn parse_record(line: usize, body: &str, n: usize) -> Result<(u64, f64)> {
    let mut fields = body.split_whitespace();
    let (Some(idx), Some(val), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(Error::Format { line, msg: format!("expected `<index> <value>`, got `{body}`") });
    };
    let index: u64 = idx
        .parse()
        .map_err(|_| Error::Format { line, msg: format!("bad index `{idx}`") })?;
    let value: f64 = val
        .parse()
        .map_err(|_| Error::Format { line, msg: format!("bad value `{val}`") })?;
    if !value.is_finite() {
        return Err(Error::Format { line, msg: format!("non-finite value `{val}`") });
    }
    if index >= n as u64 {
        return Err(Error::Format { line, msg: format!("index {index} out of range for n = {n}") });
    }
    Ok((index, value))
}

/// Parse an update stream over universe `[0, n)`.
pub fn parse_stream(text: &str, n: usize) -> Result<Vec<Update>> {
    records(text)
        .map(|(line, body)| parse_record(line, body, n).map(|(i, d)| Update::new(i, d)))
        .collect()
}

/// Parse a sparse signal listing; repeated indices accumulate.
pub fn parse_signal(text: &str, n: usize) -> Result<Signal> {
    let mut x = Signal::zeros(n);
    for (line, body) in records(text) {
        let (i, v) = parse_record(line, body, n)?;
        x.values_mut()[i as usize] += v;
    }
    Ok(x)
}

pub fn format_stream(updates: &[Update]) -> String {
    let mut out = String::new();
    for u in updates {
        let _ = writeln!(out, "{} {:?}", u.index, u.delta);
    }
    out
}

/// Nonzero coordinates only, ascending index.
pub fn format_signal(x: &Signal) -> String {
    let mut out = String::new();
    for (i, v) in x.values().iter().enumerate().filter(|(_, v)| **v != 0.0) {
        let _ = writeln!(out, "{i} {v:?}");
    }
    out
}
