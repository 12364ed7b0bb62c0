//! Dense gradient-orientation descriptors on a sampling grid.
//!
//! Each grid point summarizes its patch with a 4x4 array of spatial cells,
//! each holding an 8-bin gradient-orientation histogram (128 values for the
//! default 16-pixel patch). Gradients come from central differences with
//! border clamping; each gradient votes its magnitude into the two nearest
//! orientation bins by linear interpolation. The histogram is L2-normalized,
//! clamped at 0.2 per component, and renormalized; an all-constant patch
//! yields the zero descriptor.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid_input;
use crate::grid::SamplingGrid;
use crate::{math, Error, Result};

pub const ORIENTATION_BINS: usize = 8;
pub const SPATIAL_CELLS: usize = 4;
/// Descriptor length: 4x4 spatial cells times 8 orientation bins.
pub const DESCRIPTOR_DIM: usize = SPATIAL_CELLS * SPATIAL_CELLS * ORIENTATION_BINS;

const CLAMP: f64 = 0.2;
const ZERO_NORM: f64 = 1e-12;

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid_input!("image dimensions must be positive"));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "image pixel buffer",
                expected,
                got: pixels.len(),
            });
        }
        if !pixels.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)) {
            return Err(Error::NonFinite("image pixels (must be finite in [0, 1])"));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_luma8(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        let pixels = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        GrayImage::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Sample with coordinates clamped to the image border.
    fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(0, self.width as i64 - 1) as u32;
        let y = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(x, y)
    }
}

/// One dense vector per grid point, in point order.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrid {
    grid: SamplingGrid,
    dim: usize,
    data: Vec<f64>,
}

impl DescriptorGrid {
    pub fn from_parts(grid: SamplingGrid, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid_input!("descriptor dimension must be positive"));
        }
        let expected = grid.point_count() * dim;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "descriptor buffer",
                expected,
                got: data.len(),
            });
        }
        if !math::all_finite(&data) {
            return Err(Error::NonFinite("descriptor values"));
        }
        Ok(DescriptorGrid { grid, dim, data })
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.point_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn descriptor(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Computes the descriptor of every grid point of `image`.
///
/// The grid must be a patch grid built for this image: receptive fields are
/// whole pixels and every patch lies inside the image.
pub fn compute_descriptors(image: &GrayImage, grid: &SamplingGrid) -> Result<DescriptorGrid> {
    if grid.image_width() != image.width() || grid.image_height() != image.height() {
        return Err(invalid_input!(
            "grid was built for a {}x{} image, got {}x{}",
            grid.image_width(),
            grid.image_height(),
            image.width(),
            image.height()
        ));
    }
    if grid.receptive_field_hp() % 2 != 0 {
        return Err(invalid_input!(
            "grid receptive field is not a whole number of pixels"
        ));
    }
    let patch = (grid.receptive_field_hp() / 2) as usize;
    let mut data = vec![0.0; grid.point_count() * DESCRIPTOR_DIM];
    for i in 0..grid.point_count() {
        let (cx_hp, cy_hp) = grid.center_hp(i);
        // Patch top-left pixel: center minus half the receptive field.
        let x0 = (cx_hp - patch as i64) / 2;
        let y0 = (cy_hp - patch as i64) / 2;
        debug_assert_eq!((cx_hp - patch as i64) % 2, 0);
        patch_descriptor(
            image,
            x0,
            y0,
            patch,
            &mut data[i * DESCRIPTOR_DIM..(i + 1) * DESCRIPTOR_DIM],
        );
    }
    DescriptorGrid::from_parts(grid.clone(), DESCRIPTOR_DIM, data)
}

fn patch_descriptor(image: &GrayImage, x0: i64, y0: i64, patch: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), DESCRIPTOR_DIM);
    let bins = ORIENTATION_BINS as f64;
    for j in 0..patch {
        for i in 0..patch {
            let x = x0 + i as i64;
            let y = y0 + j as i64;
            let gx = 0.5 * (image.get_clamped(x + 1, y) - image.get_clamped(x - 1, y));
            let gy = 0.5 * (image.get_clamped(x, y + 1) - image.get_clamped(x, y - 1));
            let mag = math::sqrt(gx * gx + gy * gy);
            if mag == 0.0 {
                continue;
            }
            // Orientation in units of bins, wrapped into [0, 8).
            let mut pos = math::atan2(gy, gx) * (bins / (2.0 * core::f64::consts::PI));
            if pos < 0.0 {
                pos += bins;
            }
            if pos >= bins {
                pos -= bins;
            }
            let low = math::floor(pos);
            let frac = pos - low;
            let b0 = low as usize % ORIENTATION_BINS;
            let b1 = (b0 + 1) % ORIENTATION_BINS;
            // Cell index: maps pixel offset [0, patch) onto [0, 4).
            let cell_x = i * SPATIAL_CELLS / patch;
            let cell_y = j * SPATIAL_CELLS / patch;
            let cell = (cell_y * SPATIAL_CELLS + cell_x) * ORIENTATION_BINS;
            out[cell + b0] += (1.0 - frac) * mag;
            out[cell + b1] += frac * mag;
        }
    }
    let n = math::norm(out);
    if n < ZERO_NORM {
        out.fill(0.0);
        return;
    }
    for v in out.iter_mut() {
        *v = (*v / n).min(CLAMP);
    }
    let n2 = math::norm(out);
    debug_assert!(n2 > 0.0);
    for v in out.iter_mut() {
        *v /= n2;
    }
}
