//! Sparse text feature files: one sample per line, `<label> <idx>:<value>
//! ...` with 1-based strictly increasing indices, zeros omitted, and values
//! in shortest round-trip form. Lines starting with `#` are comments; the
//! feature writer puts the vector length in a `# dim=<D>` comment so dense
//! vectors reconstruct exactly.

use std::fmt::Write as _;

use super::{parse_payload_f64, ParseError};

/// One parsed sample: label and 0-based sparse entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSample {
    pub label: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseSample {
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(idx, value) in &self.entries {
            out[idx] = value;
        }
        out
    }
}

/// Formats one sample line (no trailing newline).
pub fn sparse_line(label: usize, feature: &[f64]) -> String {
    let mut line = label.to_string();
    for (idx, &value) in feature.iter().enumerate() {
        if value != 0.0 {
            write!(line, " {}:{value}", idx + 1).expect("string write");
        }
    }
    line
}

/// Writes every sample, one line each, with an optional `# dim=` header.
pub fn write_sparse_text(
    features: &[Vec<f64>],
    labels: &[usize],
    dim_header: Option<usize>,
) -> String {
    debug_assert_eq!(features.len(), labels.len());
    let mut out = String::new();
    if let Some(dim) = dim_header {
        writeln!(out, "# dim={dim}").expect("string write");
    }
    for (feature, &label) in features.iter().zip(labels) {
        out.push_str(&sparse_line(label, feature));
        out.push('\n');
    }
    out
}

/// Parses a sparse text file; returns the samples and the `# dim=` header
/// value when present. Comment and blank lines are skipped.
pub fn parse_sparse_text(input: &str) -> Result<(Vec<SparseSample>, Option<usize>), ParseError> {
    let mut dim = None;
    let mut samples = Vec::new();
    for (i, raw) in input.lines().enumerate() {
        let no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("dim=") {
                dim = Some(value.parse::<usize>().map_err(|_| ParseError::CorruptPayload {
                    line: no,
                    msg: format!("dim header must be an unsigned integer, got {value}"),
                })?);
            }
            continue;
        }
        samples.push(parse_sample(line, no)?);
    }
    if samples.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    Ok((samples, dim))
}

fn parse_sample(line: &str, no: usize) -> Result<SparseSample, ParseError> {
    let mut tokens = line.split_whitespace();
    let label_token = tokens.next().expect("line is nonempty");
    let label: usize = label_token.parse().map_err(|_| ParseError::CorruptPayload {
        line: no,
        msg: format!("label must be an unsigned integer, got {label_token}"),
    })?;
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for token in tokens {
        let (idx, value) = token.split_once(':').ok_or(ParseError::CorruptPayload {
            line: no,
            msg: format!("expected idx:value, got {token}"),
        })?;
        let idx: usize = idx.parse().map_err(|_| ParseError::CorruptPayload {
            line: no,
            msg: format!("index must be an unsigned integer, got {idx}"),
        })?;
        if idx == 0 {
            return Err(ParseError::CorruptPayload {
                line: no,
                msg: "indices are 1-based".into(),
            });
        }
        if entries.last().is_some_and(|&(prev, _)| prev + 1 >= idx) {
            return Err(ParseError::CorruptPayload {
                line: no,
                msg: format!("indices must be strictly increasing at {idx}"),
            });
        }
        let value = parse_payload_f64(value, no)?;
        if value == 0.0 {
            return Err(ParseError::CorruptPayload {
                line: no,
                msg: format!("explicit zeros are not stored (index {idx})"),
            });
        }
        entries.push((idx - 1, value));
    }
    Ok(SparseSample { label, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_the_documented_examples() {
        assert_eq!(sparse_line(3, &[0.0, 2.5, 0.0, 1.0]), "3 2:2.5 4:1");
        assert_eq!(sparse_line(3, &[0.0, 0.0]), "3");
    }

    #[test]
    fn round_trips_dense_vectors_exactly() {
        let features = vec![
            vec![0.0, 2.5, 0.0, 1.0],
            vec![0.1 + 0.2, 0.0, -1.0 / 3.0, 0.0],
            vec![0.0; 4],
        ];
        let labels = vec![3, 0, 7];
        let text = write_sparse_text(&features, &labels, Some(4));
        let (samples, dim) = parse_sparse_text(&text).unwrap();
        assert_eq!(dim, Some(4));
        for (sample, (feature, label)) in samples.iter().zip(features.iter().zip(&labels)) {
            assert_eq!(sample.label, *label);
            let dense = sample.to_dense(4);
            assert!(dense.iter().zip(feature).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(parse_sparse_text(""), Err(ParseError::EmptyInput)));
        assert!(matches!(parse_sparse_text("# dim=4\n"), Err(ParseError::EmptyInput)));
        for bad in [
            "x 1:2",      // non-numeric label
            "1 0:2",      // 0-based index
            "1 2:1 2:3",  // repeated index
            "1 3:1 2:3",  // decreasing index
            "1 2:0",      // explicit zero
            "1 2=5",      // wrong separator
            "1 2:inf",    // non-finite value
        ] {
            assert!(
                matches!(parse_sparse_text(bad), Err(ParseError::CorruptPayload { .. })),
                "expected corrupt payload error for {bad:?}"
            );
        }
    }
}
