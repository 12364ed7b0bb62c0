//! Sparse code files: `DEEPSC-CODE v1 size=<K> nx=<nx> ny=<ny>` followed by
//! one row per lattice point (row-major): `nnz idx:val idx:val ...` with
//! 0-based strictly increasing indices.
//!
//! The header records the lattice shape but not its pixel geometry, so a
//! block reads back as plain codes rather than a full grid.

use deepsc_core::sparse::{SparseCode, SparseCodeGrid};

use super::{numbered_lines, parse_count, parse_header, parse_payload_f64, ParseError};

const MAGIC: &str = "DEEPSC-CODE";

/// Codes read back from a file, with the lattice shape they were written in.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBlock {
    pub size: usize,
    pub nx: usize,
    pub ny: usize,
    pub codes: Vec<SparseCode>,
}

pub fn write_code_grid(codes: &SparseCodeGrid) -> String {
    use std::fmt::Write as _;
    let grid = codes.grid();
    let mut out = format!(
        "{MAGIC} v1 size={} nx={} ny={}\n",
        codes.dict_size(),
        grid.nx(),
        grid.ny()
    );
    for code in codes.codes() {
        write!(out, "{}", code.nnz()).expect("string write");
        for &(idx, value) in code.entries() {
            write!(out, " {idx}:{value}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn read_code_blocks(input: &str) -> Result<Vec<CodeBlock>, ParseError> {
    let mut lines = numbered_lines(input).filter(|l| !l.text.trim().is_empty()).peekable();
    if lines.peek().is_none() {
        return Err(ParseError::EmptyInput);
    }
    let mut blocks = Vec::new();
    while let Some(header) = lines.next() {
        let values = parse_header(header, MAGIC, &["size", "nx", "ny"])?;
        let size = parse_count(&values[0], header.no, "size")?;
        let nx = parse_count(&values[1], header.no, "nx")?;
        let ny = parse_count(&values[2], header.no, "ny")?;
        let points = nx.checked_mul(ny).ok_or(ParseError::MalformedHeader {
            line: header.no,
            msg: "nx*ny overflows".into(),
        })?;

        let mut codes = Vec::with_capacity(points.min(1 << 20));
        let mut last_line = header.no;
        for row in 0..points {
            let Some(line) = lines.next_if(|l| !l.text.trim_start().starts_with(MAGIC)) else {
                return Err(ParseError::TruncatedPayload {
                    line: last_line,
                    msg: format!("block has {row} of {points} rows"),
                });
            };
            last_line = line.no;
            codes.push(parse_code_row(line.text, line.no, size)?);
        }
        blocks.push(CodeBlock { size, nx, ny, codes });
    }
    Ok(blocks)
}

fn parse_code_row(text: &str, line: usize, size: usize) -> Result<SparseCode, ParseError> {
    let mut tokens = text.split_whitespace();
    let nnz_token = tokens.next().ok_or(ParseError::CorruptPayload {
        line,
        msg: "missing nnz count".into(),
    })?;
    let nnz: usize = nnz_token.parse().map_err(|_| ParseError::CorruptPayload {
        line,
        msg: format!("nnz must be an unsigned integer, got {nnz_token}"),
    })?;
    let mut entries = Vec::with_capacity(nnz.min(size));
    for i in 0..nnz {
        let Some(token) = tokens.next() else {
            return Err(ParseError::TruncatedPayload {
                line,
                msg: format!("row has {i} of {nnz} entries"),
            });
        };
        entries.push(parse_entry(token, line)?);
    }
    if tokens.next().is_some() {
        return Err(ParseError::DimensionMismatch {
            line,
            expected: nnz,
            got: nnz + 1 + tokens.count(),
        });
    }
    SparseCode::new(size, entries).map_err(|e| ParseError::CorruptPayload {
        line,
        msg: e.to_string(),
    })
}

/// `idx:val` with a 0-based index.
fn parse_entry(token: &str, line: usize) -> Result<(usize, f64), ParseError> {
    let (idx, val) = token.split_once(':').ok_or(ParseError::CorruptPayload {
        line,
        msg: format!("expected idx:val, got {token}"),
    })?;
    let idx: usize = idx.parse().map_err(|_| ParseError::CorruptPayload {
        line,
        msg: format!("index must be an unsigned integer, got {idx}"),
    })?;
    Ok((idx, parse_payload_f64(val, line)?))
}
