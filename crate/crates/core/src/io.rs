//! Plain-text instance formats.
//!
//! Native format, whitespace-delimited, 1-based states, `#` comment lines:
//!
//! ```text
//! n m
//! pi_1
//! ...
//! pi_n
//! u v w        (m lines, w = K_uv * pi_v > 0)
//! ```
//!
//! The raw-rate format replaces the `n` weight lines by one line holding all
//! of `π`, followed by `m` directed triples `u v K_uv`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Laplacian, RateConstantMatrix};

/// Non-comment lines with their 1-based line numbers.
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Ok((i + 1, trimmed.split_whitespace().collect()));
        }
        Err(Error::Parse {
            line: self.last + 1,
            message: format!("unexpected end of input, expected {what}"),
        })
    }

    fn finish(&mut self) -> Result<()> {
        match self.next_line("") {
            Ok((line, _)) => Err(Error::Parse {
                line,
                message: "unexpected trailing data".into(),
            }),
            Err(_) => Ok(()),
        }
    }
}

fn field<T: FromStr>(line: usize, token: &str, what: &str) -> Result<T> {
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from {token:?}"),
    })
}

fn expect_fields(line: usize, fields: &[&str], count: usize, what: &str) -> Result<()> {
    if fields.len() != count {
        return Err(Error::Parse {
            line,
            message: format!("expected {what} ({count} fields), found {} fields", fields.len()),
        });
    }
    Ok(())
}

fn state(line: usize, token: &str, n: usize) -> Result<usize> {
    let v: usize = field(line, token, "state index")?;
    if v == 0 || v > n {
        return Err(Error::Parse {
            line,
            message: format!("state {v} outside 1..={n}"),
        });
    }
    Ok(v - 1)
}

fn header(lines: &mut Lines<'_>) -> Result<(usize, usize)> {
    let (line, f) = lines.next_line("header \"n m\"")?;
    expect_fields(line, &f, 2, "header \"n m\"")?;
    Ok((field(line, f[0], "n")?, field(line, f[1], "m")?))
}

fn with_line(line: usize, err: Error) -> Error {
    match err {
        Error::Parse { .. } => err,
        other => Error::Parse {
            line,
            message: other.to_string(),
        },
    }
}

/// Parses the native weighted-edge format.
pub fn parse_native(text: &str) -> Result<RateConstantMatrix> {
    let mut lines = Lines::new(text);
    let (n, m) = header(&mut lines)?;
    let mut pi = Vec::with_capacity(n);
    for v in 0..n {
        let (line, f) = lines.next_line("a stationary weight")?;
        expect_fields(line, &f, 1, "a stationary weight")?;
        let x: f64 = field(line, f[0], "stationary weight")?;
        if !(x > 0.0) || !x.is_finite() {
            return Err(with_line(line, Error::NonpositivePi { state: v, value: x }));
        }
        pi.push(x);
    }
    let mut edges = Vec::with_capacity(m);
    let mut seen = HashSet::with_capacity(m);
    for _ in 0..m {
        let (line, f) = lines.next_line("an edge \"u v w\"")?;
        expect_fields(line, &f, 3, "an edge \"u v w\"")?;
        let u = state(line, f[0], n)?;
        let v = state(line, f[1], n)?;
        let w: f64 = field(line, f[2], "edge weight")?;
        if u == v {
            return Err(Error::Parse {
                line,
                message: format!("self loop at state {}", u + 1),
            });
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("edge weight {w} must be finite and positive"),
            });
        }
        let pair = (u.min(v), u.max(v));
        if !seen.insert(pair) {
            return Err(Error::Parse {
                line,
                message: format!("edge ({}, {}) listed more than once", pair.0 + 1, pair.1 + 1),
            });
        }
        edges.push((pair.0, pair.1, w));
    }
    lines.finish()?;
    let lap = Laplacian::from_edges(n, &edges)?;
    RateConstantMatrix::from_laplacian(lap, pi)
}

/// Parses the raw-rate format and validates it against `tolerance`.
pub fn parse_raw_rates(text: &str, tolerance: f64) -> Result<RateConstantMatrix> {
    let mut lines = Lines::new(text);
    let (n, m) = header(&mut lines)?;
    let (line, f) = lines.next_line("the stationary weights")?;
    expect_fields(line, &f, n, "the stationary weights")?;
    let pi = f
        .iter()
        .map(|t| field(line, t, "stationary weight"))
        .collect::<Result<Vec<f64>>>()?;
    let mut rates = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, f) = lines.next_line("a rate \"u v K_uv\"")?;
        expect_fields(line, &f, 3, "a rate \"u v K_uv\"")?;
        rates.push((state(line, f[0], n)?, state(line, f[1], n)?, field(line, f[2], "rate")?));
    }
    lines.finish()?;
    RateConstantMatrix::from_rates(n, &rates, pi, tolerance)
}

/// Serializes to the native format; `comments` become leading `#` lines.
pub fn write_native(k: &RateConstantMatrix, comments: &[String]) -> String {
    let lap = k.laplacian();
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let edges: Vec<_> = lap.edges().collect();
    let _ = writeln!(out, "{} {}", k.n(), edges.len());
    for &x in k.pi() {
        let _ = writeln!(out, "{x:e}");
    }
    for (u, v, w) in edges {
        let _ = writeln!(out, "{} {} {w:e}", u + 1, v + 1);
    }
    out
}

/// Input flavour for [`read_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Native,
    RawRates,
}

pub fn read_instance(path: &Path, format: InputFormat, tolerance: f64) -> Result<RateConstantMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    match format {
        InputFormat::Native => parse_native(&text),
        InputFormat::RawRates => parse_raw_rates(&text, tolerance),
    }
}
