//! Deterministic RNG construction.
//!
//! Every random decision in the pipeline draws from a ChaCha8 generator
//! keyed by the run seed and a stream id, so results depend only on the
//! seed and never on thread count or iteration timing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used by the training pipeline. Grouping them here keeps the
/// assignment collision-free as stages are added.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    /// Subsampling dictionary training vectors at a layer.
    DictSample { layer: usize },
    /// Online dictionary learning at a layer.
    DictLearn { layer: usize },
    /// Point-pair subsampling for one image at a layer.
    Pairs { layer: usize, image: usize },
    /// Contrastive embedding training at a layer.
    Embedding { layer: usize },
    /// Train/test split shuffling.
    Split,
    /// One-vs-all classifier training.
    Svm,
    /// A repeated evaluation run.
    Repeat { index: usize },
    /// Synthetic image generation.
    Synth { class: usize, image: usize },
}

impl Stream {
    pub fn id(self) -> u64 {
        // kind in the top 8 bits, coordinates below; image/class ids stay
        // well under 2^32.
        match self {
            Stream::DictSample { layer } => (1 << 56) | layer as u64,
            Stream::DictLearn { layer } => (2 << 56) | layer as u64,
            Stream::Pairs { layer, image } => (3 << 56) | ((layer as u64) << 32) | image as u64,
            Stream::Embedding { layer } => (4 << 56) | layer as u64,
            Stream::Split => 5 << 56,
            Stream::Svm => 6 << 56,
            Stream::Repeat { index } => (7 << 56) | index as u64,
            Stream::Synth { class, image } => (8 << 56) | ((class as u64) << 32) | image as u64,
        }
    }

    pub fn rng(self, seed: u64) -> ChaCha8Rng {
        stream_rng(seed, self.id())
    }
}
