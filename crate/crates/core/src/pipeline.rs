//! Layer-wise training and feature extraction for the full model.
//!
//! Training is greedy: layer 1 learns a dictionary over image descriptors;
//! each later layer pools the previous layer's codes over 4×4 grid blocks,
//! trains a contrastive embedding on spatially labeled point pairs, maps the
//! pooled codes through it, and learns its own dictionary on the result.
//! Every random stage draws from a [`Stream`](crate::seeds::Stream) keyed by
//! its layer, so a deeper model reproduces a shallower one bit for bit on the
//! shared prefix.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::descriptor::{compute_descriptors, DescriptorGrid, GrayImage, DESCRIPTOR_DIM};
use crate::embedding::{
    embed_grid, generate_pairs, train_embedding, DrlimConfig, EmbeddingMap, LabeledPair,
};
use crate::error::invalid_input;
use crate::executor::Executor;
use crate::grid::{build_grid, PyramidRegions, PYRAMID_REGIONS};
use crate::pooling::{local_spatial_pool, spm_pool};
use crate::seeds::Stream;
use crate::sparse::{encode_grid, learn_dictionary, Dictionary, SparseCodeGrid};
use crate::{Error, Result};

/// Default cap on the number of vectors fed to dictionary learning per layer.
pub const DICT_SAMPLE_CAP: usize = 200_000;

/// Descriptor extraction geometry shared by every layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorParams {
    pub patch_size: u32,
    pub spacing: u32,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            patch_size: 16,
            spacing: 4,
        }
    }
}

impl DescriptorParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 4 {
            return Err(invalid_input!(
                "descriptor patch must cover the 4x4 cell layout, got {}",
                self.patch_size
            ));
        }
        if self.spacing == 0 {
            return Err(invalid_input!("descriptor spacing must be positive"));
        }
        Ok(())
    }
}

/// Sparse-to-dense module settings for one layer transition.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedSpec {
    /// Embedding output dimension; the next dictionary's vector length.
    pub out_dim: usize,
    /// Center-distance threshold separating similar from dissimilar pairs.
    pub sigma: f64,
    /// Margin below which dissimilar pairs are pushed apart.
    pub beta: f64,
    pub step_size: f64,
    /// Cap on labeled pairs drawn from each image.
    pub pairs_per_image: usize,
}

/// One sparse-coding layer; layers past the first pool and embed their input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub dict_size: usize,
    pub alpha: f64,
    /// Passes over the data, for both dictionary learning and (when present)
    /// embedding training.
    pub epochs: usize,
    pub embed: Option<EmbedSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub descriptor: DescriptorParams,
    pub layers: Vec<LayerSpec>,
    pub dict_sample_cap: usize,
    pub seed: u64,
    /// Keep each training image's per-layer codes in the outcome so callers
    /// can reuse them for feature extraction.
    pub cache_codes: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.descriptor.validate()?;
        if self.layers.is_empty() {
            return Err(invalid_input!("the model needs at least one layer"));
        }
        if self.dict_sample_cap == 0 {
            return Err(invalid_input!("dictionary sample cap must be positive"));
        }
        for (l, spec) in self.layers.iter().enumerate() {
            let n = l + 1;
            if spec.dict_size == 0 {
                return Err(invalid_input!("layer {n}: dictionary size must be positive"));
            }
            if !(spec.alpha > 0.0 && spec.alpha.is_finite()) {
                return Err(invalid_input!(
                    "layer {n}: alpha must be positive, got {}",
                    spec.alpha
                ));
            }
            if spec.epochs == 0 {
                return Err(invalid_input!("layer {n}: needs at least one epoch"));
            }
            match (&spec.embed, l) {
                (Some(_), 0) => {
                    return Err(invalid_input!(
                        "layer 1 consumes descriptors directly and takes no embed block"
                    ));
                }
                (None, l) if l > 0 => {
                    return Err(invalid_input!(
                        "layer {n} needs an embed block to consume layer {l} codes"
                    ));
                }
                _ => {}
            }
            if let Some(es) = &spec.embed {
                if es.out_dim == 0 {
                    return Err(invalid_input!(
                        "layer {n}: embedding dimension must be positive"
                    ));
                }
                if !(es.sigma > 0.0 && es.sigma.is_finite()) {
                    return Err(invalid_input!(
                        "layer {n}: sigma must be positive, got {}",
                        es.sigma
                    ));
                }
                if !(es.beta > 0.0 && es.beta.is_finite()) {
                    return Err(invalid_input!(
                        "layer {n}: beta must be positive, got {}",
                        es.beta
                    ));
                }
                if !(es.step_size > 0.0 && es.step_size.is_finite()) {
                    return Err(invalid_input!(
                        "layer {n}: step size must be positive, got {}",
                        es.step_size
                    ));
                }
                if es.pairs_per_image == 0 {
                    return Err(invalid_input!(
                        "layer {n}: pair budget must be positive"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A trained layer: its settings, dictionary, and (from layer 2 on) the
/// embedding that maps the previous layer's pooled codes into this one.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    spec: LayerSpec,
    dict: Dictionary,
    embedding: Option<EmbeddingMap>,
}

impl LayerParams {
    pub fn new(spec: LayerSpec, dict: Dictionary, embedding: Option<EmbeddingMap>) -> Result<Self> {
        if dict.size() != spec.dict_size {
            return Err(Error::DimensionMismatch {
                what: "layer dictionary size",
                expected: spec.dict_size,
                got: dict.size(),
            });
        }
        match (&spec.embed, &embedding) {
            (None, Some(_)) | (Some(_), None) => {
                return Err(invalid_input!(
                    "layer embedding does not match its declared settings"
                ));
            }
            (Some(es), Some(map)) => {
                if map.out_dim() != es.out_dim || map.out_dim() != dict.dim() {
                    return Err(Error::DimensionMismatch {
                        what: "embedding output dimension",
                        expected: dict.dim(),
                        got: map.out_dim(),
                    });
                }
            }
            (None, None) => {}
        }
        Ok(LayerParams {
            spec,
            dict,
            embedding,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn embedding(&self) -> Option<&EmbeddingMap> {
        self.embedding.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepSCModel {
    descriptor: DescriptorParams,
    seed: u64,
    layers: Vec<LayerParams>,
}

impl DeepSCModel {
    /// Validates cross-layer chaining: the first layer codes descriptors, and
    /// each later layer's embedding must accept the previous dictionary's
    /// code vectors.
    pub fn from_parts(
        descriptor: DescriptorParams,
        seed: u64,
        layers: Vec<LayerParams>,
    ) -> Result<Self> {
        descriptor.validate()?;
        if layers.is_empty() {
            return Err(invalid_input!("a model needs at least one layer"));
        }
        if layers[0].embedding.is_some() {
            return Err(invalid_input!("layer 1 cannot carry an embedding"));
        }
        if layers[0].dict.dim() != DESCRIPTOR_DIM {
            return Err(Error::DimensionMismatch {
                what: "layer 1 dictionary vector length",
                expected: DESCRIPTOR_DIM,
                got: layers[0].dict.dim(),
            });
        }
        for l in 1..layers.len() {
            let Some(map) = &layers[l].embedding else {
                return Err(invalid_input!(
                    "layer {} has no embedding to consume layer {} codes",
                    l + 1,
                    l
                ));
            };
            if map.in_dim() != layers[l - 1].dict.size() {
                return Err(Error::DimensionMismatch {
                    what: "embedding input dimension",
                    expected: layers[l - 1].dict.size(),
                    got: map.in_dim(),
                });
            }
        }
        Ok(DeepSCModel {
            descriptor,
            seed,
            layers,
        })
    }

    pub fn descriptor(&self) -> DescriptorParams {
        self.descriptor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &LayerParams {
        &self.layers[l]
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Length of the feature vector built from the first `depth` layers.
    pub fn feature_dim(&self, depth: usize) -> usize {
        PYRAMID_REGIONS
            * self.layers[..depth]
                .iter()
                .map(|l| l.dict.size())
                .sum::<usize>()
    }
}

/// Training diagnostics for one layer.
#[derive(Debug, Clone)]
pub struct LayerLog {
    /// Mean coding objective after each dictionary epoch.
    pub dict_objective: Vec<f64>,
    /// Total contrastive loss before training and after each epoch.
    pub drlim_loss: Option<Vec<f64>>,
    /// All training pairs shared one label; the margin (or attraction) term
    /// went unexercised.
    pub drlim_single_label: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeepSCModel,
    pub layer_logs: Vec<LayerLog>,
    /// Images excluded from deeper layers, degenerate pair labels, and other
    /// conditions worth reporting that do not stop training.
    pub warnings: Vec<String>,
    /// Per image, per layer: the training-time codes (`None` once an image
    /// fell out of the deeper layers). Present when the config asks for it.
    pub cached_codes: Option<Vec<Vec<Option<SparseCodeGrid>>>>,
}

/// Trains every layer in sequence over the given images.
///
/// Images too small for the descriptor grid are an error; images whose grids
/// become too small to pool at a deeper layer are excluded from that layer
/// onward with a warning.
pub fn train_model<E: Executor>(
    images: &[GrayImage],
    config: &TrainConfig,
    exec: &E,
) -> Result<TrainOutcome> {
    config.validate()?;
    if images.is_empty() {
        return Err(invalid_input!("training needs at least one image"));
    }

    let mut warnings = Vec::new();
    let grids = images
        .iter()
        .enumerate()
        .map(|(i, image)| {
            build_grid(
                image.width(),
                image.height(),
                config.descriptor.patch_size,
                config.descriptor.spacing,
            )
            .map_err(|e| {
                invalid_input!(
                    "image {i} ({}x{}): {e}",
                    image.width(),
                    image.height()
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let desc_inputs: Vec<(&GrayImage, &crate::grid::SamplingGrid)> =
        images.iter().zip(&grids).collect();
    let mut live: Vec<(usize, DescriptorGrid)> = Vec::with_capacity(images.len());
    for (i, result) in exec
        .map(&desc_inputs, |(image, grid)| compute_descriptors(image, grid))
        .into_iter()
        .enumerate()
    {
        live.push((i, result.map_err(|e| invalid_input!("image {i}: {e}"))?));
    }

    let mut layers = Vec::with_capacity(config.layers.len());
    let mut layer_logs = Vec::with_capacity(config.layers.len());
    let mut cached: Vec<Vec<Option<SparseCodeGrid>>> =
        vec![Vec::with_capacity(config.layers.len()); images.len()];
    let mut prev_codes: Vec<(usize, SparseCodeGrid)> = Vec::new();

    for (l, spec) in config.layers.iter().enumerate() {
        let mut embedding = None;
        let mut drlim_loss = None;
        let mut drlim_single_label = false;

        if l > 0 {
            let es = spec.embed.as_ref().expect("validated layer spec");

            let mut pooled = Vec::with_capacity(prev_codes.len());
            for (idx, codes) in &prev_codes {
                match local_spatial_pool(codes) {
                    Ok(p) => pooled.push((*idx, p)),
                    Err(e) => warnings.push(format!(
                        "image {idx}: {e}; excluded from layer {} onward",
                        l + 1
                    )),
                }
            }
            if pooled.is_empty() {
                return Err(invalid_input!(
                    "no image grid is large enough to pool into layer {}",
                    l + 1
                ));
            }

            let mut dense_codes: Vec<Vec<f64>> = Vec::new();
            let mut pairs: Vec<LabeledPair> = Vec::new();
            for (idx, pg) in &pooled {
                let base = dense_codes.len();
                let pair_seed = Stream::Pairs { layer: l, image: *idx }
                    .rng(config.seed)
                    .gen::<u64>();
                let image_pairs =
                    generate_pairs(pg.grid(), es.sigma, es.pairs_per_image, pair_seed)?;
                pairs.extend(image_pairs.into_iter().map(|p| LabeledPair {
                    i: p.i + base,
                    j: p.j + base,
                    ..p
                }));
                for code in pg.codes() {
                    dense_codes.push(code.to_dense());
                }
            }
            if pairs.is_empty() {
                return Err(invalid_input!(
                    "no grid yields overlapping point pairs for layer {}",
                    l + 1
                ));
            }

            let drlim = DrlimConfig {
                sigma: es.sigma,
                beta: es.beta,
                step_size: es.step_size,
                epochs: spec.epochs,
                seed: Stream::Embedding { layer: l }.rng(config.seed).gen::<u64>(),
                pairs_per_image: es.pairs_per_image,
            };
            let trained = train_embedding(&dense_codes, &pairs, es.out_dim, &drlim)?;
            if trained.single_label {
                warnings.push(format!(
                    "layer {}: every training pair carries the same label",
                    l + 1
                ));
                drlim_single_label = true;
            }
            drlim_loss = Some(trained.epoch_loss);

            let mut next_live = Vec::with_capacity(pooled.len());
            for (idx, pg) in &pooled {
                next_live.push((*idx, embed_grid(pg, &trained.map)?));
            }
            live = next_live;
            embedding = Some(trained.map);
        }

        let total: usize = live.iter().map(|(_, g)| g.len()).sum();
        let mut samples: Vec<&[f64]> = Vec::with_capacity(total.min(config.dict_sample_cap));
        if total > config.dict_sample_cap {
            let mut rng = Stream::DictSample { layer: l }.rng(config.seed);
            let mut chosen = sample_indices(&mut rng, total, config.dict_sample_cap).into_vec();
            chosen.sort_unstable();
            let mut picks = chosen.into_iter().peekable();
            let mut offset = 0;
            for (_, g) in &live {
                let end = offset + g.len();
                while picks.peek().is_some_and(|&c| c < end) {
                    let c = picks.next().unwrap();
                    samples.push(g.descriptor(c - offset));
                }
                offset = end;
            }
        } else {
            for (_, g) in &live {
                samples.extend(g.descriptors());
            }
        }

        let dict_seed = Stream::DictLearn { layer: l }.rng(config.seed).gen::<u64>();
        let training = learn_dictionary(&samples, spec.dict_size, spec.alpha, spec.epochs, dict_seed)
            .map_err(|e| invalid_input!("layer {}: {e}", l + 1))?;
        drop(samples);
        let dict = training.dictionary;

        let grid_refs: Vec<&DescriptorGrid> = live.iter().map(|(_, g)| g).collect();
        let code_results = exec.map(&grid_refs, |g| encode_grid(g, &dict, spec.alpha));
        let mut per_layer: Vec<Option<SparseCodeGrid>> = vec![None; images.len()];
        let mut next_codes = Vec::with_capacity(live.len());
        for ((idx, _), result) in live.iter().zip(code_results) {
            let codes = result?;
            per_layer[*idx] = Some(codes.clone());
            next_codes.push((*idx, codes));
        }
        if config.cache_codes {
            for (slots, slot) in cached.iter_mut().zip(per_layer) {
                slots.push(slot);
            }
        }

        layers.push(LayerParams::new(spec.clone(), dict, embedding)?);
        layer_logs.push(LayerLog {
            dict_objective: training.epoch_objective,
            drlim_loss,
            drlim_single_label,
        });
        prev_codes = next_codes;
    }

    Ok(TrainOutcome {
        model: DeepSCModel::from_parts(config.descriptor, config.seed, layers)?,
        layer_logs,
        warnings,
        cached_codes: config.cache_codes.then_some(cached),
    })
}

/// Runs the first `depth` layers on one image.
///
/// The result has exactly `depth` entries; entries turn `None` from the first
/// layer whose pooled grid the image is too small to support. This matches
/// the codes cached during training bit for bit.
pub fn forward_codes(
    model: &DeepSCModel,
    image: &GrayImage,
    depth: usize,
) -> Result<Vec<Option<SparseCodeGrid>>> {
    if depth == 0 || depth > model.depth() {
        return Err(Error::IndexOutOfRange {
            what: "model depth",
            index: depth,
            len: model.depth(),
        });
    }
    let grid = build_grid(
        image.width(),
        image.height(),
        model.descriptor.patch_size,
        model.descriptor.spacing,
    )?;
    let mut input = Some(compute_descriptors(image, &grid)?);
    let mut out: Vec<Option<SparseCodeGrid>> = Vec::with_capacity(depth);
    for l in 0..depth {
        let layer = &model.layers[l];
        let current = if l == 0 {
            input.take().expect("descriptors consumed once")
        } else {
            let Some(prev) = out[l - 1].as_ref() else {
                out.push(None);
                continue;
            };
            match local_spatial_pool(prev) {
                Ok(pooled) => {
                    let map = layer.embedding.as_ref().expect("validated model");
                    embed_grid(&pooled, map)?
                }
                // The grid ran out of room to coarsen; deeper layers see
                // nothing from this image.
                Err(_) => {
                    out.push(None);
                    continue;
                }
            }
        };
        out.push(Some(encode_grid(&current, &layer.dict, layer.spec.alpha)?));
    }
    Ok(out)
}

/// Concatenates per-layer pyramid features from forward codes.
///
/// Each coded layer contributes its L2-normalized 21-region pyramid vector;
/// layers the image was too small to reach contribute zeros, keeping the
/// feature length fixed at [`DeepSCModel::feature_dim`] for the given depth.
pub fn features_from_codes(
    model: &DeepSCModel,
    codes: &[Option<SparseCodeGrid>],
) -> Result<Vec<f64>> {
    if codes.is_empty() || codes.len() > model.depth() {
        return Err(Error::IndexOutOfRange {
            what: "coded layers",
            index: codes.len(),
            len: model.depth(),
        });
    }
    let Some(first) = codes.iter().flatten().next() else {
        return Err(invalid_input!(
            "feature extraction needs codes for at least one layer"
        ));
    };
    let regions = PyramidRegions::new(first.grid().image_width(), first.grid().image_height());
    let mut out = Vec::with_capacity(model.feature_dim(codes.len()));
    for (l, slot) in codes.iter().enumerate() {
        let size = model.layers[l].dict.size();
        match slot {
            Some(grid) => {
                if grid.dict_size() != size {
                    return Err(Error::DimensionMismatch {
                        what: "layer code width",
                        expected: size,
                        got: grid.dict_size(),
                    });
                }
                let mut feature = spm_pool(grid, &regions)?;
                feature.layer_id = l;
                feature.l2_normalize();
                out.extend_from_slice(&feature.values);
            }
            None => out.extend(core::iter::repeat_n(0.0, PYRAMID_REGIONS * size)),
        }
    }
    Ok(out)
}

/// Feature vector for one image from the first `depth` layers.
pub fn extract_features(model: &DeepSCModel, image: &GrayImage, depth: usize) -> Result<Vec<f64>> {
    let codes = forward_codes(model, image, depth)?;
    features_from_codes(model, &codes)
}
