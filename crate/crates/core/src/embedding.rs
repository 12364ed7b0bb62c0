//! Contrastive linear embedding between sparse coding layers.
//!
//! Spatially close grid points (overlapping receptive fields) form labeled
//! pairs: similar when their center distance is below σ, dissimilar
//! otherwise. A linear map W with unit-ball columns is trained by projected
//! SGD on the contrastive loss, pulling similar pairs together and pushing
//! dissimilar pairs past the margin β. Embedded codes `z = Wȳ` become the
//! next layer's dense descriptors.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::descriptor::DescriptorGrid;
use crate::error::invalid_input;
use crate::grid::SamplingGrid;
use crate::pooling::{PooledCode, PooledCodeGrid};
use crate::{math, Error, Result, NORM_TOL};

/// Linear map from code space (in_dim) to embedding space (out_dim) with
/// every column inside the unit ball. Stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMap {
    out_dim: usize,
    in_dim: usize,
    cols: Vec<f64>,
}

impl EmbeddingMap {
    pub fn new(out_dim: usize, in_dim: usize, cols: Vec<f64>) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(invalid_input!("embedding dimensions must be positive"));
        }
        if cols.len() != out_dim * in_dim {
            return Err(Error::DimensionMismatch {
                what: "embedding matrix buffer",
                expected: out_dim * in_dim,
                got: cols.len(),
            });
        }
        if !math::all_finite(&cols) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        for k in 0..in_dim {
            let norm = math::norm(&cols[k * out_dim..(k + 1) * out_dim]);
            if norm > 1.0 + NORM_TOL {
                return Err(invalid_input!("embedding column {k} has norm {norm} > 1"));
            }
        }
        Ok(EmbeddingMap {
            out_dim,
            in_dim,
            cols,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn col(&self, k: usize) -> &[f64] {
        &self.cols[k * self.out_dim..(k + 1) * self.out_dim]
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.cols[col * self.out_dim + row]
    }

    pub fn apply_dense(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                what: "embedding input",
                expected: self.in_dim,
                got: y.len(),
            });
        }
        let mut z = vec![0.0; self.out_dim];
        apply_into(&self.cols, self.out_dim, y, &mut z);
        Ok(z)
    }
}

/// Accumulates `z += Σ_k y_k · col_k`, skipping zero inputs.
fn apply_into(cols: &[f64], out_dim: usize, y: &[f64], z: &mut [f64]) {
    for (k, &yk) in y.iter().enumerate() {
        if yk == 0.0 {
            continue;
        }
        let col = &cols[k * out_dim..(k + 1) * out_dim];
        for (zi, ci) in z.iter_mut().zip(col) {
            *zi += yk * ci;
        }
    }
}

/// Pair label: similar pairs are pulled together, dissimilar pairs pushed
/// beyond the margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLabel {
    Similar,
    Dissimilar,
}

/// A labeled pair of grid points with their center distance in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPair {
    pub i: usize,
    pub j: usize,
    pub label: PairLabel,
    pub distance: f64,
}

/// Training parameters for one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DrlimConfig {
    /// Center-distance threshold (pixels) separating similar from dissimilar.
    pub sigma: f64,
    /// Margin in embedding space for dissimilar pairs.
    pub beta: f64,
    pub step_size: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Cap on pairs kept per image.
    pub pairs_per_image: usize,
}

impl DrlimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid_input!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid_input!("beta must be positive, got {}", self.beta));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid_input!(
                "step size must be positive, got {}",
                self.step_size
            ));
        }
        if self.epochs == 0 {
            return Err(invalid_input!("embedding training needs at least one epoch"));
        }
        Ok(())
    }
}

/// Enumerates labeled pairs of grid points whose receptive fields overlap
/// (|Δx| < R and |Δy| < R in centers). If more than `cap` pairs exist, a
/// seeded uniform subsample is kept, preserving the similar:dissimilar ratio
/// and the enumeration order.
pub fn generate_pairs(
    grid: &SamplingGrid,
    sigma: f64,
    cap: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid_input!("sigma must be positive, got {sigma}"));
    }
    let s_hp = grid.spacing_hp();
    let r_hp = grid.receptive_field_hp();
    let reach = (r_hp - 1) / s_hp; // max lattice offset with |Δ| < R
    let (nx, ny) = (grid.nx() as i64, grid.ny() as i64);
    let mut pairs = Vec::new();
    for b in 0..ny {
        for a in 0..nx {
            let i = (b * nx + a) as usize;
            for db in 0..=reach.min(ny - 1 - b) {
                let da_min = if db == 0 { 1 } else { -reach };
                for da in da_min..=reach {
                    let (a2, b2) = (a + da, b + db);
                    if a2 < 0 || a2 >= nx {
                        continue;
                    }
                    let j = (b2 * nx + a2) as usize;
                    let dist_sq_hp = (da * s_hp) * (da * s_hp) + (db * s_hp) * (db * s_hp);
                    let distance = math::sqrt(dist_sq_hp as f64) / 2.0;
                    let label = if distance < sigma {
                        PairLabel::Similar
                    } else {
                        PairLabel::Dissimilar
                    };
                    pairs.push(LabeledPair {
                        i,
                        j,
                        label,
                        distance,
                    });
                }
            }
        }
    }
    if pairs.len() <= cap {
        return Ok(pairs);
    }
    let positives = pairs
        .iter()
        .filter(|p| p.label == PairLabel::Similar)
        .count();
    let negatives = pairs.len() - positives;
    let mut keep_pos = cap * positives / pairs.len();
    let mut keep_neg = cap - keep_pos;
    if keep_neg > negatives {
        keep_neg = negatives;
        keep_pos = cap - keep_neg;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep_flags = vec![false; pairs.len()];
    for (label, keep, total) in [
        (PairLabel::Similar, keep_pos, positives),
        (PairLabel::Dissimilar, keep_neg, negatives),
    ] {
        let chosen = sample_indices(&mut rng, total, keep);
        let mut mask = vec![false; total];
        for idx in chosen.iter() {
            mask[idx] = true;
        }
        let mut within = 0;
        for (flag, pair) in keep_flags.iter_mut().zip(&pairs) {
            if pair.label == label {
                *flag |= mask[within];
                within += 1;
            }
        }
    }
    Ok(pairs
        .into_iter()
        .zip(keep_flags)
        .filter_map(|(p, keep)| keep.then_some(p))
        .collect())
}

fn check_pair_args(map: &EmbeddingMap, yi: &[f64], yj: &[f64], beta: f64) -> Result<()> {
    if yi.len() != map.in_dim() || yj.len() != map.in_dim() {
        return Err(Error::DimensionMismatch {
            what: "pair code vector",
            expected: map.in_dim(),
            got: if yi.len() != map.in_dim() {
                yi.len()
            } else {
                yj.len()
            },
        });
    }
    if !math::all_finite(yi) || !math::all_finite(yj) {
        return Err(Error::NonFinite("pair code vectors"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid_input!("beta must be positive, got {beta}"));
    }
    Ok(())
}

/// Per-pair contrastive loss: with `Δ = yi − yj` and `d = ‖WΔ‖`, similar
/// pairs pay `½d²`, dissimilar pairs pay `max(0, β − d)²`.
pub fn contrastive_loss(
    map: &EmbeddingMap,
    label: PairLabel,
    yi: &[f64],
    yj: &[f64],
    beta: f64,
) -> Result<f64> {
    check_pair_args(map, yi, yj, beta)?;
    let delta: Vec<f64> = yi.iter().zip(yj).map(|(a, b)| a - b).collect();
    let mut u = vec![0.0; map.out_dim()];
    apply_into(&map.cols, map.out_dim, &delta, &mut u);
    let d = math::norm(&u);
    Ok(match label {
        PairLabel::Similar => 0.5 * d * d,
        PairLabel::Dissimilar => {
            let gap = (beta - d).max(0.0);
            gap * gap
        }
    })
}

/// Gradient of `contrastive_loss` with respect to W, returned column-major
/// (column k at `[k·out_dim, (k+1)·out_dim)`, matching `EmbeddingMap`).
///
/// Similar: `(WΔ)Δᵀ`. Dissimilar with 0 < d < β: `−2(β−d)/d · (WΔ)Δᵀ`.
/// Dissimilar with d ≥ β or d = 0: zero (subgradient choice at the hinge).
pub fn loss_gradient(
    map: &EmbeddingMap,
    label: PairLabel,
    yi: &[f64],
    yj: &[f64],
    beta: f64,
) -> Result<Vec<f64>> {
    check_pair_args(map, yi, yj, beta)?;
    let delta: Vec<f64> = yi.iter().zip(yj).map(|(a, b)| a - b).collect();
    let mut u = vec![0.0; map.out_dim()];
    apply_into(&map.cols, map.out_dim, &delta, &mut u);
    let d = math::norm(&u);
    let scale = match label {
        PairLabel::Similar => 1.0,
        PairLabel::Dissimilar if d > 0.0 && d < beta => -2.0 * (beta - d) / d,
        PairLabel::Dissimilar => 0.0,
    };
    let mut grad = vec![0.0; map.out_dim() * map.in_dim()];
    if scale != 0.0 {
        for (k, &dk) in delta.iter().enumerate() {
            if dk == 0.0 {
                continue;
            }
            let col = &mut grad[k * map.out_dim..(k + 1) * map.out_dim];
            for (g, &ui) in col.iter_mut().zip(&u) {
                *g = scale * dk * ui;
            }
        }
    }
    Ok(grad)
}

/// Sum of per-pair losses over the whole pair set.
pub fn total_contrastive_loss(
    map: &EmbeddingMap,
    codes: &[Vec<f64>],
    pairs: &[LabeledPair],
    beta: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for pair in pairs {
        total += contrastive_loss(map, pair.label, &codes[pair.i], &codes[pair.j], beta)?;
    }
    Ok(total)
}

/// Result of embedding training.
#[derive(Debug, Clone)]
pub struct EmbeddingTraining {
    pub map: EmbeddingMap,
    /// Total training-set loss before training (index 0) and after each
    /// epoch.
    pub epoch_loss: Vec<f64>,
    /// Set when all pairs carry one label (degenerate objective).
    pub single_label: bool,
}

/// Projected SGD on the contrastive loss.
///
/// W starts from seeded Gaussian entries scaled by `1/√in_dim` with columns
/// projected onto the unit ball; each epoch visits the pairs in a fresh
/// seeded shuffle, takes one gradient step per pair, and re-projects every
/// touched column.
pub fn train_embedding(
    codes: &[Vec<f64>],
    pairs: &[LabeledPair],
    out_dim: usize,
    config: &DrlimConfig,
) -> Result<EmbeddingTraining> {
    config.validate()?;
    if out_dim == 0 {
        return Err(invalid_input!("embedding output dimension must be positive"));
    }
    if pairs.is_empty() {
        return Err(invalid_input!("embedding training needs at least one pair"));
    }
    let in_dim = codes.first().map_or(0, Vec::len);
    if in_dim == 0 {
        return Err(invalid_input!("embedding training needs nonempty codes"));
    }
    for c in codes {
        if c.len() != in_dim {
            return Err(Error::DimensionMismatch {
                what: "training code",
                expected: in_dim,
                got: c.len(),
            });
        }
        if !math::all_finite(c) {
            return Err(Error::NonFinite("training codes"));
        }
    }
    for pair in pairs {
        let bound = codes.len();
        if pair.i >= bound || pair.j >= bound {
            return Err(Error::IndexOutOfRange {
                what: "pair point",
                index: pair.i.max(pair.j),
                len: bound,
            });
        }
        if pair.i == pair.j {
            return Err(invalid_input!("pair joins point {} with itself", pair.i));
        }
    }
    let single_label = {
        let first = pairs[0].label;
        pairs.iter().all(|p| p.label == first)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = 1.0 / math::sqrt(in_dim as f64);
    let mut cols = vec![0.0; out_dim * in_dim];
    for col in cols.chunks_exact_mut(out_dim) {
        for v in col.iter_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal) * scale;
        }
        math::project_unit_ball(col);
    }

    let eval = |cols: &[f64]| -> f64 {
        let mut total = 0.0;
        let mut u = vec![0.0; out_dim];
        for pair in pairs {
            u.fill(0.0);
            let (yi, yj) = (&codes[pair.i], &codes[pair.j]);
            for k in 0..in_dim {
                let dk = yi[k] - yj[k];
                if dk == 0.0 {
                    continue;
                }
                let col = &cols[k * out_dim..(k + 1) * out_dim];
                for (ui, ci) in u.iter_mut().zip(col) {
                    *ui += dk * ci;
                }
            }
            let d = math::norm(&u);
            total += match pair.label {
                PairLabel::Similar => 0.5 * d * d,
                PairLabel::Dissimilar => {
                    let gap = (beta_gap(config.beta, d)).max(0.0);
                    gap * gap
                }
            };
        }
        total
    };

    let mut epoch_loss = Vec::with_capacity(config.epochs + 1);
    epoch_loss.push(eval(&cols));

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut delta = vec![0.0; in_dim];
    let mut u = vec![0.0; out_dim];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &p in &order {
            let pair = &pairs[p];
            let (yi, yj) = (&codes[pair.i], &codes[pair.j]);
            for (dk, (a, b)) in delta.iter_mut().zip(yi.iter().zip(yj)) {
                *dk = a - b;
            }
            u.fill(0.0);
            apply_into(&cols, out_dim, &delta, &mut u);
            let d = math::norm(&u);
            let scale = match pair.label {
                PairLabel::Similar => 1.0,
                PairLabel::Dissimilar if d > 0.0 && d < config.beta => {
                    -2.0 * (config.beta - d) / d
                }
                PairLabel::Dissimilar => continue,
            };
            let step = config.step_size * scale;
            for (k, &dk) in delta.iter().enumerate() {
                if dk == 0.0 {
                    continue;
                }
                let col = &mut cols[k * out_dim..(k + 1) * out_dim];
                for (ci, &ui) in col.iter_mut().zip(&u) {
                    *ci -= step * dk * ui;
                }
                math::project_unit_ball(col);
            }
        }
        epoch_loss.push(eval(&cols));
    }

    Ok(EmbeddingTraining {
        map: EmbeddingMap::new(out_dim, in_dim, cols)?,
        epoch_loss,
        single_label,
    })
}

fn beta_gap(beta: f64, d: f64) -> f64 {
    beta - d
}

/// Embeds every pooled code: `z_i = W ȳ_i` on the same coarse grid. The
/// output is the next layer's descriptor grid.
pub fn embed_grid(pg: &PooledCodeGrid, map: &EmbeddingMap) -> Result<DescriptorGrid> {
    if pg.dict_size() != map.in_dim() {
        return Err(Error::DimensionMismatch {
            what: "embedding input",
            expected: map.in_dim(),
            got: pg.dict_size(),
        });
    }
    let out_dim = map.out_dim();
    let mut data = vec![0.0; pg.grid().point_count() * out_dim];
    for (i, code) in pg.codes().iter().enumerate() {
        let z = &mut data[i * out_dim..(i + 1) * out_dim];
        match code {
            PooledCode::Sparse(c) => {
                for &(k, v) in c.entries() {
                    for (zi, ci) in z.iter_mut().zip(map.col(k)) {
                        *zi += v * ci;
                    }
                }
            }
            PooledCode::Dense(v) => apply_into(&map.cols, out_dim, v, z),
        }
    }
    DescriptorGrid::from_parts(pg.grid().clone(), out_dim, data)
}
