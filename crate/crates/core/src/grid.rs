//! Sampling-grid geometry.
//!
//! A layer's codes live on a regular lattice of patch centers. Coarsening
//! replaces each 4x4 block of lattice points (stepped by 2, so neighboring
//! blocks overlap) with one point on a lattice of doubled spacing; the
//! receptive field grows by three times the fine spacing. Spatial-pyramid
//! pooling assigns every point to one cell per pyramid level.
//!
//! Centers sit on half-pixel positions, so all coordinates are stored in
//! half-pixel units (`_hp` fields, two units per pixel) and geometry
//! predicates reduce to integer comparisons. Pixel-valued accessors return
//! exactly representable `f64` values.

use alloc::vec::Vec;

use crate::error::invalid_input;
use crate::{Error, Result};

/// Regular lattice of `nx * ny` sampling points over one image.
///
/// Point `i` has lattice coordinates `(i % nx, i / nx)` and center
/// `origin + (a, b) * spacing`. The receptive field is the side length of
/// the square of input pixels a point summarizes; it always fits inside the
/// image for every point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingGrid {
    image_width: u32,
    image_height: u32,
    origin_x_hp: i64,
    origin_y_hp: i64,
    spacing_hp: i64,
    receptive_field_hp: i64,
    nx: usize,
    ny: usize,
}

impl SamplingGrid {
    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn point_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Center of the first point, in pixels.
    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x_hp as f64 / 2.0, self.origin_y_hp as f64 / 2.0)
    }

    /// Distance between neighboring points, in pixels.
    pub fn spacing(&self) -> f64 {
        self.spacing_hp as f64 / 2.0
    }

    /// Side length of the square input region a point summarizes, in pixels.
    pub fn receptive_field(&self) -> f64 {
        self.receptive_field_hp as f64 / 2.0
    }

    /// Raw half-pixel quantities for exact integer geometry.
    pub fn spacing_hp(&self) -> i64 {
        self.spacing_hp
    }

    pub fn receptive_field_hp(&self) -> i64 {
        self.receptive_field_hp
    }

    /// Lattice coordinates of point `i`.
    pub fn lattice(&self, i: usize) -> (usize, usize) {
        debug_assert!(i < self.point_count());
        (i % self.nx, i / self.nx)
    }

    /// Point index of lattice coordinates `(a, b)`.
    pub fn index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < self.nx && b < self.ny);
        b * self.nx + a
    }

    /// Center of point `i` in half-pixel units.
    pub fn center_hp(&self, i: usize) -> (i64, i64) {
        let (a, b) = self.lattice(i);
        (
            self.origin_x_hp + a as i64 * self.spacing_hp,
            self.origin_y_hp + b as i64 * self.spacing_hp,
        )
    }

    /// Center of point `i` in pixels.
    pub fn center(&self, i: usize) -> (f64, f64) {
        let (x, y) = self.center_hp(i);
        (x as f64 / 2.0, y as f64 / 2.0)
    }

    fn covers_image(&self) -> bool {
        let last_x = self.origin_x_hp + (self.nx as i64 - 1) * self.spacing_hp;
        let last_y = self.origin_y_hp + (self.ny as i64 - 1) * self.spacing_hp;
        // Every receptive field inside the image: centers are half-pixels and
        // the bounds are `c ± rf/2` pixels, so double once more and compare
        // quarter-pixels against 4*w.
        2 * self.origin_x_hp - self.receptive_field_hp >= 0
            && 2 * self.origin_y_hp - self.receptive_field_hp >= 0
            && 2 * last_x + self.receptive_field_hp <= 4 * self.image_width as i64
            && 2 * last_y + self.receptive_field_hp <= 4 * self.image_height as i64
    }
}

/// Lays out the layer-1 lattice: patches of side `patch_size` every
/// `spacing` pixels, flush with the top-left corner.
pub fn build_grid(
    image_width: u32,
    image_height: u32,
    patch_size: u32,
    spacing: u32,
) -> Result<SamplingGrid> {
    if patch_size == 0 || spacing == 0 {
        return Err(invalid_input!(
            "patch size and spacing must be positive, got patch={patch_size} spacing={spacing}"
        ));
    }
    if patch_size > image_width || patch_size > image_height {
        return Err(invalid_input!(
            "{image_width}x{image_height} image cannot fit a {patch_size}-pixel patch"
        ));
    }
    let nx = ((image_width - patch_size) / spacing + 1) as usize;
    let ny = ((image_height - patch_size) / spacing + 1) as usize;
    let grid = SamplingGrid {
        image_width,
        image_height,
        origin_x_hp: patch_size as i64,
        origin_y_hp: patch_size as i64,
        spacing_hp: 2 * spacing as i64,
        receptive_field_hp: 2 * patch_size as i64,
        nx,
        ny,
    };
    debug_assert!(grid.covers_image());
    Ok(grid)
}

/// Coarse lattice whose points each summarize a 4x4 block of fine points.
///
/// Blocks step by two fine points, so the coarse spacing is twice the fine
/// spacing, coarse centers sit at the mean of their block's centers, and the
/// receptive field grows by three fine spacings.
pub fn coarsen_grid(fine: &SamplingGrid) -> Result<SamplingGrid> {
    if fine.nx < 4 || fine.ny < 4 {
        return Err(invalid_input!(
            "{}x{} grid is too small to coarsen (needs at least 4x4)",
            fine.nx,
            fine.ny
        ));
    }
    debug_assert_eq!(fine.spacing_hp % 2, 0);
    let grid = SamplingGrid {
        image_width: fine.image_width,
        image_height: fine.image_height,
        origin_x_hp: fine.origin_x_hp + 3 * fine.spacing_hp / 2,
        origin_y_hp: fine.origin_y_hp + 3 * fine.spacing_hp / 2,
        spacing_hp: 2 * fine.spacing_hp,
        receptive_field_hp: fine.receptive_field_hp + 3 * fine.spacing_hp,
        nx: (fine.nx - 4) / 2 + 1,
        ny: (fine.ny - 4) / 2 + 1,
    };
    debug_assert!(grid.covers_image());
    Ok(grid)
}

/// The 16 fine point indices pooled into coarse point `coarse_index`,
/// in row-major block order.
pub fn block_indices(
    fine: &SamplingGrid,
    coarse: &SamplingGrid,
    coarse_index: usize,
) -> Result<[usize; 16]> {
    let expected = coarsen_grid(fine)?;
    if *coarse != expected {
        return Err(invalid_input!(
            "coarse grid does not match the coarsening of the fine grid"
        ));
    }
    if coarse_index >= coarse.point_count() {
        return Err(Error::IndexOutOfRange {
            what: "coarse point",
            index: coarse_index,
            len: coarse.point_count(),
        });
    }
    let (cx, cy) = coarse.lattice(coarse_index);
    let mut out = [0usize; 16];
    for b in 0..4 {
        for a in 0..4 {
            out[b * 4 + a] = fine.index(2 * cx + a, 2 * cy + b);
        }
    }
    Ok(out)
}

/// One spatial-pyramid cell: a half-open pixel rectangle on one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub level: u8,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// The 21 pyramid cells of an image: the whole image, a 2x2 partition, and
/// a 4x4 partition, in that order with each level row-major.
///
/// Cell edges are `width * i / n` with `n` a power of two, so every edge is
/// an exact `f64` and containment tests are exact for half-pixel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidRegions {
    width: u32,
    height: u32,
    regions: Vec<Region>,
}

pub const PYRAMID_REGIONS: usize = 21;

impl PyramidRegions {
    pub fn new(width: u32, height: u32) -> Self {
        let mut regions = Vec::with_capacity(PYRAMID_REGIONS);
        let (w, h) = (width as f64, height as f64);
        regions.push(Region {
            level: 1,
            x0: 0.0,
            y0: 0.0,
            x1: w,
            y1: h,
        });
        for level in [2u8, 3] {
            let n = 1u32 << (level - 1); // 2 or 4 cells per side
            for row in 0..n {
                for col in 0..n {
                    regions.push(Region {
                        level,
                        x0: (width * col) as f64 / n as f64,
                        y0: (height * row) as f64 / n as f64,
                        x1: (width * (col + 1)) as f64 / n as f64,
                        y1: (height * (row + 1)) as f64 / n as f64,
                    });
                }
            }
        }
        PyramidRegions {
            width,
            height,
            regions,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Region index containing `(x, y)` on each of the three levels.
    /// The point must lie strictly inside the image.
    pub fn locate(&self, x: f64, y: f64) -> [usize; 3] {
        debug_assert!(x >= 0.0 && x < self.width as f64);
        debug_assert!(y >= 0.0 && y < self.height as f64);
        let mut out = [0usize; 3];
        for (slot, range) in [(1usize, 1..5usize), (2, 5..21)] {
            let offset = range.start;
            let found = self.regions[range]
                .iter()
                .position(|r| r.contains(x, y))
                .expect("pyramid cells tile the image");
            out[slot] = offset + found;
        }
        out
    }
}

/// Pyramid cell membership (one region index per level) for every grid
/// point, in point order.
pub fn spm_assign(grid: &SamplingGrid) -> Vec<[usize; 3]> {
    let regions = PyramidRegions::new(grid.image_width, grid.image_height);
    (0..grid.point_count())
        .map(|i| {
            let (x, y) = grid.center(i);
            regions.locate(x, y)
        })
        .collect()
}
