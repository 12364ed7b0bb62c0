//! Dictionary files: `DEEPSC-DICT v1 dim=<D> size=<K>` followed by K rows of
//! D floats, one atom per row.

use deepsc_core::sparse::Dictionary;

use super::{numbered_lines, parse_count, parse_float_row, parse_header, write_float_row, ParseError};

const MAGIC: &str = "DEEPSC-DICT";

pub fn write_dictionary(dict: &Dictionary) -> String {
    let mut out = format!("{MAGIC} v1 dim={} size={}\n", dict.dim(), dict.size());
    for atom in dict.atoms() {
        write_float_row(&mut out, atom.iter().copied());
    }
    out
}

pub fn read_dictionary(input: &str) -> Result<Dictionary, ParseError> {
    let mut lines = numbered_lines(input).filter(|l| !l.text.trim().is_empty());
    let Some(header) = lines.next() else {
        return Err(ParseError::EmptyInput);
    };
    let values = parse_header(header, MAGIC, &["dim", "size"])?;
    let dim = parse_count(&values[0], header.no, "dim")?;
    let size = parse_count(&values[1], header.no, "size")?;
    if dim.checked_mul(size).is_none() {
        return Err(ParseError::MalformedHeader {
            line: header.no,
            msg: "dim*size overflows".into(),
        });
    }

    let mut atoms = Vec::with_capacity((dim * size).min(1 << 20));
    let mut rows = 0usize;
    let mut last_line = header.no;
    for line in lines {
        if rows == size {
            return Err(ParseError::DimensionMismatch {
                line: line.no,
                expected: size,
                got: size + 1,
            });
        }
        parse_float_row(line, dim, &mut atoms)?;
        rows += 1;
        last_line = line.no;
    }
    if rows < size {
        return Err(ParseError::TruncatedPayload {
            line: last_line,
            msg: format!("dictionary has {rows} of {size} atoms"),
        });
    }
    Ok(Dictionary::new(dim, atoms)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dictionary {
        Dictionary::new(3, vec![1.0, 0.0, 0.0, 0.1, -0.25, 1.0 / 3.0]).unwrap()
    }

    #[test]
    fn round_trips_bitwise() {
        let dict = toy();
        let text = write_dictionary(&dict);
        let back = read_dictionary(&text).unwrap();
        assert_eq!(back, dict);
        assert_eq!(write_dictionary(&back), text);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(read_dictionary("  \n"), Err(ParseError::EmptyInput)));
        assert!(matches!(
            read_dictionary("DEEPSC-DICT v3 dim=2 size=1\n1 0\n"),
            Err(ParseError::VersionMismatch { .. })
        ));
        assert!(matches!(
            read_dictionary("DEEPSC-DICT v1 dim=2 size=2\n1 0\n"),
            Err(ParseError::TruncatedPayload { .. })
        ));
        assert!(matches!(
            read_dictionary("DEEPSC-DICT v1 dim=2 size=1\n1 0\n0 1\n"),
            Err(ParseError::DimensionMismatch { .. })
        ));
        // A parseable payload violating the unit-ball bound is an invariant
        // error, not a parse error.
        assert!(matches!(
            read_dictionary("DEEPSC-DICT v1 dim=2 size=1\n3 4\n"),
            Err(ParseError::Invariant(_))
        ));
    }
}
