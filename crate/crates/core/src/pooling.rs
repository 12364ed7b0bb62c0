//! Component-wise max pooling: over code blocks (grid coarsening) and over
//! spatial-pyramid regions (per-image features).
//!
//! Pooling sparse codes respects dense semantics: a component absent from a
//! code counts as 0, so the pooled value is the max over stored values and,
//! when any input lacks the component, 0.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid_input;
use crate::grid::{block_indices, coarsen_grid, spm_assign, PyramidRegions, SamplingGrid, PYRAMID_REGIONS};
use crate::sparse::{SparseCode, SparseCodeGrid};
use crate::{math, Error, Result};

/// Pooled codes denser than this fraction are stored dense.
const SPARSE_DENSITY_LIMIT: f64 = 0.25;

/// Component-wise maximum of a nonempty set of equal-length vectors.
pub fn max_pool<V: AsRef<[f64]>>(codes: &[V]) -> Result<Vec<f64>> {
    let first = codes
        .first()
        .ok_or_else(|| invalid_input!("cannot max-pool an empty set"))?
        .as_ref();
    let mut out = first.to_vec();
    for code in &codes[1..] {
        let code = code.as_ref();
        if code.len() != out.len() {
            return Err(Error::DimensionMismatch {
                what: "pooled vector",
                expected: out.len(),
                got: code.len(),
            });
        }
        for (o, &v) in out.iter_mut().zip(code) {
            *o = o.max(v);
        }
    }
    Ok(out)
}

/// Dense max over sparse codes, writing into `out` (length = code dim).
/// An empty set pools to zero.
fn max_pool_sparse_into(codes: &[&SparseCode], out: &mut [f64]) {
    out.fill(0.0);
    if codes.is_empty() {
        return;
    }
    // Track how many inputs stored each component: a component missing from
    // any input competes against that input's implicit zero.
    let mut counts = vec![0u32; out.len()];
    let mut best = vec![0.0f64; out.len()];
    for code in codes {
        for &(i, v) in code.entries() {
            best[i] = if counts[i] == 0 { v } else { best[i].max(v) };
            counts[i] += 1;
        }
    }
    let full = codes.len() as u32;
    for i in 0..out.len() {
        out[i] = match counts[i] {
            0 => 0.0,
            c if c == full => best[i],
            _ => best[i].max(0.0),
        };
    }
}

/// A pooled code, stored sparse while its density stays low.
#[derive(Debug, Clone, PartialEq)]
pub enum PooledCode {
    Sparse(SparseCode),
    Dense(Vec<f64>),
}

impl PooledCode {
    /// Picks the storage form by density.
    pub fn from_dense(values: Vec<f64>) -> Self {
        let nnz = values.iter().filter(|&&v| v != 0.0).count();
        if (nnz as f64) < SPARSE_DENSITY_LIMIT * values.len() as f64 {
            PooledCode::Sparse(SparseCode::from_dense(&values))
        } else {
            PooledCode::Dense(values)
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PooledCode::Sparse(c) => c.dim(),
            PooledCode::Dense(v) => v.len(),
        }
    }

    pub fn write_dense(&self, out: &mut [f64]) {
        match self {
            PooledCode::Sparse(c) => c.write_dense(out),
            PooledCode::Dense(v) => out.copy_from_slice(v),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write_dense(&mut out);
        out
    }
}

/// Pooled codes on the coarse grid, one per coarse point.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledCodeGrid {
    grid: SamplingGrid,
    dict_size: usize,
    codes: Vec<PooledCode>,
}

impl PooledCodeGrid {
    pub fn new(grid: SamplingGrid, dict_size: usize, codes: Vec<PooledCode>) -> Result<Self> {
        if codes.len() != grid.point_count() {
            return Err(Error::DimensionMismatch {
                what: "pooled code grid",
                expected: grid.point_count(),
                got: codes.len(),
            });
        }
        if let Some(bad) = codes.iter().find(|c| c.dim() != dict_size) {
            return Err(Error::DimensionMismatch {
                what: "pooled code",
                expected: dict_size,
                got: bad.dim(),
            });
        }
        Ok(PooledCodeGrid {
            grid,
            dict_size,
            codes,
        })
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    pub fn dict_size(&self) -> usize {
        self.dict_size
    }

    pub fn code(&self, i: usize) -> &PooledCode {
        &self.codes[i]
    }

    pub fn codes(&self) -> &[PooledCode] {
        &self.codes
    }
}

/// Pools each coarse point's 4x4 block of fine codes into one code on the
/// coarsened grid.
pub fn local_spatial_pool(codes: &SparseCodeGrid) -> Result<PooledCodeGrid> {
    let fine = codes.grid();
    let coarse = coarsen_grid(fine)?;
    let k = codes.dict_size();
    let mut pooled = Vec::with_capacity(coarse.point_count());
    let mut dense = vec![0.0; k];
    for idx in 0..coarse.point_count() {
        let block = block_indices(fine, &coarse, idx)?;
        let members: Vec<&SparseCode> = block.iter().map(|&i| codes.code(i)).collect();
        max_pool_sparse_into(&members, &mut dense);
        pooled.push(PooledCode::from_dense(dense.clone()));
    }
    PooledCodeGrid::new(coarse, k, pooled)
}

/// One image's pyramid-pooled feature vector for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidFeature {
    pub layer_id: usize,
    pub values: Vec<f64>,
}

impl PyramidFeature {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Scales to unit Euclidean norm; the zero vector stays zero.
    pub fn l2_normalize(&mut self) {
        let n = math::norm(&self.values);
        if n > 0.0 {
            for v in self.values.iter_mut() {
                *v /= n;
            }
        }
    }
}

/// Max-pools codes into the 21 pyramid regions by point-center membership
/// and concatenates in region order. Regions with no centers pool to zero.
pub fn spm_pool(codes: &SparseCodeGrid, regions: &PyramidRegions) -> Result<PyramidFeature> {
    let grid = codes.grid();
    if regions.width() != grid.image_width() || regions.height() != grid.image_height() {
        return Err(invalid_input!(
            "pyramid regions cover a {}x{} image, grid covers {}x{}",
            regions.width(),
            regions.height(),
            grid.image_width(),
            grid.image_height()
        ));
    }
    let k = codes.dict_size();
    let mut members: Vec<Vec<&SparseCode>> = vec![Vec::new(); PYRAMID_REGIONS];
    for (i, cells) in spm_assign(grid).into_iter().enumerate() {
        for region in cells {
            members[region].push(codes.code(i));
        }
    }
    let mut values = vec![0.0; PYRAMID_REGIONS * k];
    for (region, group) in members.iter().enumerate() {
        max_pool_sparse_into(group, &mut values[region * k..(region + 1) * k]);
    }
    Ok(PyramidFeature {
        layer_id: 0,
        values,
    })
}
