//! Descriptor grid files.
//!
//! One block per image: a `DEEPSC-DESC v1 dim= nx= ny= spacing= patch=
//! image=<id>` header followed by nx·ny rows of `dim` floats in row-major
//! lattice order. Blocks are separated by a blank line. The header carries
//! the lattice geometry, not the source image size, so loading rebuilds the
//! smallest image consistent with the lattice.

use deepsc_core::descriptor::DescriptorGrid;
use deepsc_core::grid::{build_grid, SamplingGrid};

use super::{
    numbered_lines, parse_count, parse_float_row, parse_header, write_float_row, Line, ParseError,
};

const MAGIC: &str = "DEEPSC-DESC";
const KEYS: &[&str] = &["dim", "nx", "ny", "spacing", "patch", "image*"];

/// Pixel-unit lattice parameters of a flush layer-1 grid, or `None` when the
/// grid has been coarsened (fractional centers cannot be expressed in this
/// header).
fn flush_geometry(grid: &SamplingGrid) -> Option<(u32, u32)> {
    let s_hp = grid.spacing_hp();
    let rf_hp = grid.receptive_field_hp();
    let (ox_hp, oy_hp) = grid.center_hp(0);
    if s_hp % 2 != 0 || rf_hp % 2 != 0 || ox_hp != oy_hp || 2 * ox_hp != rf_hp {
        return None;
    }
    Some(((s_hp / 2) as u32, (rf_hp / 2) as u32))
}

/// Writes one block per `(image_id, grid)` pair in the given order.
///
/// Ids must be free of newlines; everything after `image=` up to the end of
/// the header line is the id, so spaces are fine. Only flush layer-1 grids
/// are expressible in the header.
pub fn save_descriptors<'a, I>(blocks: I) -> Result<String, deepsc_core::Error>
where
    I: IntoIterator<Item = (&'a str, &'a DescriptorGrid)>,
{
    let mut out = String::new();
    for (id, dg) in blocks {
        if id.is_empty() || id.contains('\n') || id.contains('\r') {
            return Err(deepsc_core::Error::InvalidInput(format!(
                "image id {id:?} must be nonempty and single-line"
            )));
        }
        let grid = dg.grid();
        let Some((spacing, patch)) = flush_geometry(grid) else {
            return Err(deepsc_core::Error::InvalidInput(
                "only flush layer-1 grids can be saved as descriptor blocks".into(),
            ));
        };
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!(
            "{MAGIC} v1 dim={} nx={} ny={} spacing={spacing} patch={patch} image={id}\n",
            dg.dim(),
            grid.nx(),
            grid.ny(),
        ));
        for d in dg.descriptors() {
            write_float_row(&mut out, d.iter().copied());
        }
    }
    if out.is_empty() {
        return Err(deepsc_core::Error::InvalidInput(
            "descriptor file needs at least one block".into(),
        ));
    }
    Ok(out)
}

/// Parses every block of a descriptor file, in file order.
pub fn load_descriptors(input: &str) -> Result<Vec<(String, DescriptorGrid)>, ParseError> {
    let mut lines = numbered_lines(input).filter(|l| !l.text.trim().is_empty()).peekable();
    if lines.peek().is_none() {
        return Err(ParseError::EmptyInput);
    }
    let mut blocks = Vec::new();
    while let Some(header) = lines.next() {
        let values = parse_header(header, MAGIC, KEYS)?;
        let dim = parse_count(&values[0], header.no, "dim")?;
        let nx = parse_count(&values[1], header.no, "nx")?;
        let ny = parse_count(&values[2], header.no, "ny")?;
        let spacing = parse_count(&values[3], header.no, "spacing")?;
        let patch = parse_count(&values[4], header.no, "patch")?;
        let image_id = values[5].clone();
        let geometry_fits = |v: usize| u32::try_from(v).ok().filter(|&v| v <= 1 << 20);
        let (Some(spacing), Some(patch)) = (geometry_fits(spacing), geometry_fits(patch)) else {
            return Err(ParseError::MalformedHeader {
                line: header.no,
                msg: "spacing and patch must be sane pixel counts".into(),
            });
        };

        let points = nx
            .checked_mul(ny)
            .and_then(|p| p.checked_mul(dim).map(|_| p))
            .ok_or(ParseError::MalformedHeader {
                line: header.no,
                msg: "nx*ny*dim overflows".into(),
            })?;
        // Capacity bounded in case a hostile header inflates the counts.
        let mut data = Vec::with_capacity((points * dim).min(1 << 20));
        let mut last_line = header.no;
        for row in 0..points {
            let Some(line) = next_row(&mut lines) else {
                return Err(ParseError::TruncatedPayload {
                    line: last_line,
                    msg: format!("block {image_id} has {row} of {points} rows"),
                });
            };
            last_line = line.no;
            parse_float_row(line, dim, &mut data)?;
        }

        let extent = |n: usize| {
            (n as u64 - 1)
                .checked_mul(spacing as u64)
                .and_then(|span| span.checked_add(patch as u64))
                .and_then(|v| u32::try_from(v).ok())
                .ok_or(ParseError::MalformedHeader {
                    line: header.no,
                    msg: "lattice does not fit in image coordinates".into(),
                })
        };
        let (width, height) = (extent(nx)?, extent(ny)?);
        let grid = build_grid(width, height, patch, spacing)?;
        debug_assert_eq!((grid.nx(), grid.ny()), (nx, ny));
        blocks.push((image_id, DescriptorGrid::from_parts(grid, dim, data)?));
    }
    Ok(blocks)
}

/// Payload rows come from the same stream as headers; a header where a row
/// is expected means the previous block was cut short.
fn next_row<'a, I>(lines: &mut std::iter::Peekable<I>) -> Option<Line<'a>>
where
    I: Iterator<Item = Line<'a>>,
{
    let next = lines.peek()?;
    if next.text.trim_start().starts_with(MAGIC) {
        return None;
    }
    lines.next()
}
