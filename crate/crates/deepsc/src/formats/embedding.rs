//! Embedding files: `DEEPSC-EMB v1 out=<D> in=<K> sigma=<σ> beta=<β>`
//! followed by D rows of K floats (the map in row-major order). The header
//! carries the pair-labeling threshold and margin the map was trained with.

use deepsc_core::embedding::EmbeddingMap;

use super::{
    numbered_lines, parse_count, parse_float_row, parse_header, parse_header_f64, ParseError,
};

const MAGIC: &str = "DEEPSC-EMB";

pub fn write_embedding(map: &EmbeddingMap, sigma: f64, beta: f64) -> String {
    use std::fmt::Write as _;
    let (out_dim, in_dim) = (map.out_dim(), map.in_dim());
    let mut out = format!("{MAGIC} v1 out={out_dim} in={in_dim} sigma={sigma} beta={beta}\n");
    for row in 0..out_dim {
        for col in 0..in_dim {
            if col > 0 {
                out.push(' ');
            }
            write!(out, "{}", map.entry(row, col)).expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn read_embedding(input: &str) -> Result<(EmbeddingMap, f64, f64), ParseError> {
    let mut lines = numbered_lines(input).filter(|l| !l.text.trim().is_empty());
    let Some(header) = lines.next() else {
        return Err(ParseError::EmptyInput);
    };
    let values = parse_header(header, MAGIC, &["out", "in", "sigma", "beta"])?;
    let out_dim = parse_count(&values[0], header.no, "out")?;
    let in_dim = parse_count(&values[1], header.no, "in")?;
    let sigma = parse_header_f64(&values[2], header.no, "sigma")?;
    let beta = parse_header_f64(&values[3], header.no, "beta")?;
    if !(sigma > 0.0 && beta > 0.0) {
        return Err(ParseError::Invariant(format!(
            "sigma and beta must be positive, got sigma={sigma} beta={beta}"
        )));
    }
    if out_dim.checked_mul(in_dim).is_none() {
        return Err(ParseError::MalformedHeader {
            line: header.no,
            msg: "out*in overflows".into(),
        });
    }

    let mut rows_flat = Vec::with_capacity((out_dim * in_dim).min(1 << 20));
    let mut rows = 0usize;
    let mut last_line = header.no;
    for line in lines {
        if rows == out_dim {
            return Err(ParseError::DimensionMismatch {
                line: line.no,
                expected: out_dim,
                got: out_dim + 1,
            });
        }
        parse_float_row(line, in_dim, &mut rows_flat)?;
        rows += 1;
        last_line = line.no;
    }
    if rows < out_dim {
        return Err(ParseError::TruncatedPayload {
            line: last_line,
            msg: format!("embedding has {rows} of {out_dim} rows"),
        });
    }

    let mut cols = vec![0.0; out_dim * in_dim];
    for row in 0..out_dim {
        for col in 0..in_dim {
            cols[col * out_dim + row] = rows_flat[row * in_dim + col];
        }
    }
    Ok((EmbeddingMap::new(out_dim, in_dim, cols)?, sigma, beta))
}
