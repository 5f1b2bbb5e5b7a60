//! Portable tensor text format.
//!
//! Layout: line 1 is the rank, line 2 the whitespace-separated dimension
//! sizes, and the remaining lines whitespace-separated values in row-major
//! order. Values are written in scientific notation with 18 significant
//! digits, enough to round-trip any f64.
//!
//! Named dumps (weight files) repeat `key` on its own line followed by
//! that tensor's block.

use std::io::{BufRead, Write};

use super::Tensor;
use crate::error::{Error, Result};

/// Values per line when writing the data section.
const VALUES_PER_LINE: usize = 8;

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    writeln!(w, "{}", t.rank())?;
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    writeln!(w, "{}", dims.join(" "))?;
    for line in t.data().chunks(VALUES_PER_LINE) {
        let rendered: Vec<String> = line.iter().map(|v| render_value(*v)).collect();
        writeln!(w, "{}", rendered.join(" "))?;
    }
    Ok(())
}

/// Canonical decimal rendering used by the text format and the forward
/// checksum: `{:.17e}`, i.e. 18 significant digits.
pub(crate) fn render_value(v: f64) -> String {
    format!("{v:.17e}")
}

struct LineReader<R> {
    inner: R,
    line_no: usize,
}

impl<R: BufRead> LineReader<R> {
    fn next_line(&mut self) -> Result<Option<String>> {
        let mut buf = String::new();
        let n = self.inner.read_line(&mut buf)?;
        if n == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        Ok(Some(buf.trim_end_matches(['\n', '\r']).to_string()))
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            line: self.line_no,
            message: message.into(),
        }
    }
}

pub fn read_tensor(r: &mut impl BufRead) -> Result<Tensor> {
    let mut lr = LineReader {
        inner: r,
        line_no: 0,
    };
    read_tensor_body(&mut lr)
}

fn read_tensor_body<R: BufRead>(lr: &mut LineReader<R>) -> Result<Tensor> {
    let rank_line = lr
        .next_line()?
        .ok_or_else(|| lr.err("expected rank line"))?;
    let rank: usize = rank_line
        .trim()
        .parse()
        .map_err(|_| lr.err(format!("bad rank {rank_line:?}")))?;
    let dims_line = lr
        .next_line()?
        .ok_or_else(|| lr.err("expected dimensions line"))?;
    let dims: Vec<usize> = dims_line
        .split_whitespace()
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| lr.err(format!("bad dimension {s:?}")))
        })
        .collect::<Result<_>>()?;
    if dims.len() != rank {
        return Err(lr.err(format!("rank {rank} but {} dimensions", dims.len())));
    }
    let want: usize = dims.iter().product();
    let mut data = Vec::with_capacity(want);
    while data.len() < want {
        let line = lr
            .next_line()?
            .ok_or_else(|| lr.err(format!("expected {want} values, got {}", data.len())))?;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| lr.err(format!("bad value {tok:?}")))?;
            data.push(v);
        }
    }
    if data.len() != want {
        return Err(lr.err(format!("expected {want} values, got {}", data.len())));
    }
    Tensor::new(dims, data)
}

/// Write `(key, tensor)` pairs as a keyed dump.
pub fn write_named_tensors(w: &mut impl Write, entries: &[(&str, &Tensor)]) -> Result<()> {
    for (key, t) in entries {
        writeln!(w, "{key}")?;
        write_tensor(w, t)?;
    }
    Ok(())
}

/// Read a keyed dump back as `(key, tensor)` pairs in file order.
pub fn read_named_tensors(r: &mut impl BufRead) -> Result<Vec<(String, Tensor)>> {
    let mut lr = LineReader {
        inner: r,
        line_no: 0,
    };
    let mut out = Vec::new();
    loop {
        let key = match lr.next_line()? {
            None => break,
            Some(line) if line.trim().is_empty() => continue,
            Some(line) => line.trim().to_string(),
        };
        let tensor = read_tensor_body(&mut lr)?;
        out.push((key, tensor));
    }
    Ok(out)
}
