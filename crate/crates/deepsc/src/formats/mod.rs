//! Text file formats for pipeline artifacts.
//!
//! Every format is line-oriented UTF-8 with a `DEEPSC-<KIND> v1` header
//! carrying `key=value` fields, followed by a numeric payload. Floats are
//! written as their shortest round-trip decimal, so save → load → save is
//! byte-identical and payloads re-parse to bitwise-equal values.

mod code;
mod descriptor;
mod dictionary;
mod embedding;
mod model;
mod sparse_text;

pub use code::{read_code_blocks, write_code_grid, CodeBlock};
pub use descriptor::{load_descriptors, save_descriptors};
pub use dictionary::{read_dictionary, write_dictionary};
pub use embedding::{read_embedding, write_embedding};
pub use model::{load_model, read_model, save_model, write_model};
pub use sparse_text::{parse_sparse_text, sparse_line, write_sparse_text, SparseSample};

/// Parse failures, one variant per distinguishable defect so callers and
/// tests can tell them apart.
#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("empty input")]
    EmptyInput,
    #[error("malformed header at line {line}: {msg}")]
    MalformedHeader { line: usize, msg: String },
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("dimension mismatch at line {line}: expected {expected} values, got {got}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("truncated payload at line {line}: {msg}")]
    TruncatedPayload { line: usize, msg: String },
    #[error("corrupt payload at line {line}: {msg}")]
    CorruptPayload { line: usize, msg: String },
    /// The payload parsed but violates a model invariant (norm bound,
    /// dimension chaining, value range).
    #[error("invariant violation: {0}")]
    Invariant(String),
}

impl From<deepsc_core::Error> for ParseError {
    fn from(e: deepsc_core::Error) -> Self {
        ParseError::Invariant(e.to_string())
    }
}

/// A line with its 1-based position in the input, for error reporting.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Line<'a> {
    pub no: usize,
    pub text: &'a str,
}

/// Splits input into numbered lines, trimming one trailing `\r` so files
/// written on other platforms still parse.
pub(crate) fn numbered_lines(input: &str) -> impl Iterator<Item = Line<'_>> {
    input.lines().enumerate().map(|(i, text)| Line {
        no: i + 1,
        text: text.strip_suffix('\r').unwrap_or(text),
    })
}

/// Header grammar: `<magic> <version> key=value ...` with the keys required
/// in the given order. Returns the raw values.
pub(crate) fn parse_header(
    line: Line<'_>,
    magic: &str,
    keys: &[&str],
) -> Result<Vec<String>, ParseError> {
    let malformed = |msg: String| ParseError::MalformedHeader { line: line.no, msg };
    let mut tokens = line.text.split_whitespace();
    match tokens.next() {
        Some(m) if m == magic => {}
        Some(m) => return Err(malformed(format!("expected {magic}, found {m}"))),
        None => return Err(malformed("blank header line".into())),
    }
    match tokens.next() {
        Some("v1") => {}
        Some(v) => {
            return Err(ParseError::VersionMismatch {
                expected: format!("{magic} v1"),
                found: format!("{magic} {v}"),
            });
        }
        None => return Err(malformed("missing version tag".into())),
    }
    let mut values = Vec::with_capacity(keys.len());
    for key in keys {
        // A trailing `*` marks a free-form last field (ids may contain
        // spaces): its value is the rest of the line, verbatim.
        let free_form = key.ends_with('*');
        let key = key.trim_end_matches('*');
        if free_form {
            debug_assert_eq!(Some(key), keys.last().map(|k| k.trim_end_matches('*')));
            let marker = format!(" {key}=");
            let Some(pos) = line.text.find(&marker) else {
                return Err(malformed(format!("missing field {key}")));
            };
            let value = &line.text[pos + marker.len()..];
            if value.trim().is_empty() {
                return Err(malformed(format!("expected {key}=<value>")));
            }
            values.push(value.to_owned());
            return Ok(values);
        }
        let Some(token) = tokens.next() else {
            return Err(malformed(format!("missing field {key}")));
        };
        match token.strip_prefix(key).and_then(|t| t.strip_prefix('=')) {
            Some(value) if !value.is_empty() => values.push(value.to_owned()),
            _ => return Err(malformed(format!("expected {key}=<value>, found {token}"))),
        }
    }
    if let Some(extra) = tokens.next() {
        return Err(malformed(format!("unexpected trailing field {extra}")));
    }
    Ok(values)
}

pub(crate) fn parse_count(value: &str, line: usize, what: &str) -> Result<usize, ParseError> {
    let parsed = value
        .parse::<usize>()
        .map_err(|_| ParseError::MalformedHeader {
            line,
            msg: format!("{what} must be an unsigned integer, got {value}"),
        })?;
    if parsed == 0 {
        return Err(ParseError::MalformedHeader {
            line,
            msg: format!("{what} must be positive"),
        });
    }
    Ok(parsed)
}

pub(crate) fn parse_header_f64(value: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    let parsed = value.parse::<f64>().map_err(|_| ParseError::MalformedHeader {
        line,
        msg: format!("{what} must be a decimal number, got {value}"),
    })?;
    if !parsed.is_finite() {
        return Err(ParseError::MalformedHeader {
            line,
            msg: format!("{what} must be finite, got {value}"),
        });
    }
    Ok(parsed)
}

/// Parses one payload row of exactly `expected` floats. Short rows are
/// truncations, long rows dimension mismatches, bad tokens corruption.
pub(crate) fn parse_float_row(
    line: Line<'_>,
    expected: usize,
    out: &mut Vec<f64>,
) -> Result<(), ParseError> {
    let mut got = 0usize;
    for token in line.text.split_whitespace() {
        got += 1;
        if got > expected {
            return Err(ParseError::DimensionMismatch {
                line: line.no,
                expected,
                got: line.text.split_whitespace().count(),
            });
        }
        out.push(parse_payload_f64(token, line.no)?);
    }
    if got < expected {
        return Err(ParseError::TruncatedPayload {
            line: line.no,
            msg: format!("row has {got} of {expected} values"),
        });
    }
    Ok(())
}

pub(crate) fn parse_payload_f64(token: &str, line: usize) -> Result<f64, ParseError> {
    let value = token.parse::<f64>().map_err(|_| ParseError::CorruptPayload {
        line,
        msg: format!("not a decimal number: {token}"),
    })?;
    if !value.is_finite() {
        return Err(ParseError::CorruptPayload {
            line,
            msg: format!("non-finite value: {token}"),
        });
    }
    Ok(value)
}

/// Writes one row of floats in shortest round-trip form.
pub(crate) fn write_float_row(out: &mut String, row: impl IntoIterator<Item = f64>) {
    use std::fmt::Write as _;
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        write!(out, "{v}").expect("string write");
        first = false;
    }
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(text: &str) -> Line<'_> {
        Line { no: 1, text }
    }

    #[test]
    fn header_round_trip() {
        let values = parse_header(line("DEEPSC-DICT v1 dim=128 size=64"), "DEEPSC-DICT", &["dim", "size"])
            .unwrap();
        assert_eq!(values, ["128", "64"]);
    }

    #[test]
    fn header_rejects_wrong_magic_and_version() {
        let e = parse_header(line("NOPE v1 dim=1"), "DEEPSC-DICT", &["dim"]).unwrap_err();
        assert!(matches!(e, ParseError::MalformedHeader { .. }));
        let e = parse_header(line("DEEPSC-DICT v2 dim=1"), "DEEPSC-DICT", &["dim"]).unwrap_err();
        assert!(matches!(e, ParseError::VersionMismatch { .. }));
    }

    #[test]
    fn header_rejects_missing_and_misnamed_fields() {
        let e = parse_header(line("DEEPSC-DICT v1 dim=128"), "DEEPSC-DICT", &["dim", "size"])
            .unwrap_err();
        assert!(matches!(e, ParseError::MalformedHeader { .. }));
        let e = parse_header(line("DEEPSC-DICT v1 dims=128 size=4"), "DEEPSC-DICT", &["dim", "size"])
            .unwrap_err();
        assert!(matches!(e, ParseError::MalformedHeader { .. }));
        let e = parse_header(
            line("DEEPSC-DICT v1 dim=128 size=4 extra=1"),
            "DEEPSC-DICT",
            &["dim", "size"],
        )
        .unwrap_err();
        assert!(matches!(e, ParseError::MalformedHeader { .. }));
    }

    #[test]
    fn free_form_tail_key_takes_the_rest_of_the_line() {
        let values = parse_header(
            line("DEEPSC-DESC v1 dim=2 image=pics/cat 01.png"),
            "DEEPSC-DESC",
            &["dim", "image*"],
        )
        .unwrap();
        assert_eq!(values[1], "pics/cat 01.png");
    }

    #[test]
    fn float_rows_distinguish_short_long_and_corrupt() {
        let mut out = Vec::new();
        parse_float_row(line("1 2.5 -3e-2"), 3, &mut out).unwrap();
        assert_eq!(out, [1.0, 2.5, -3e-2]);

        let e = parse_float_row(line("1 2"), 3, &mut Vec::new()).unwrap_err();
        assert!(matches!(e, ParseError::TruncatedPayload { .. }));
        let e = parse_float_row(line("1 2 3 4"), 3, &mut Vec::new()).unwrap_err();
        assert!(matches!(e, ParseError::DimensionMismatch { expected: 3, got: 4, .. }));
        let e = parse_float_row(line("1 x 3"), 3, &mut Vec::new()).unwrap_err();
        assert!(matches!(e, ParseError::CorruptPayload { .. }));
        let e = parse_float_row(line("1 NaN 3"), 3, &mut Vec::new()).unwrap_err();
        assert!(matches!(e, ParseError::CorruptPayload { .. }));
    }

    #[test]
    fn float_rows_use_shortest_round_trip_form() {
        let mut s = String::new();
        write_float_row(&mut s, [1.0, 0.1, f64::from_bits(0x3FD5555555555555)]);
        assert_eq!(s, "1 0.1 0.3333333333333333\n");
        for token in s.trim().split(' ') {
            let v: f64 = token.parse().unwrap();
            assert_eq!(format!("{v}"), token);
        }
    }
}
