//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tass_core::featureio::{Dataset, FeatureDims};
use tass_core::head_train::{random_dataset, ModelConfig, Stream, TassModel};
use tass_core::jtg::SlotOrder;

/// Desk-scale default shape.
pub const DIMS: FeatureDims = FeatureDims { d: 64, h: 7, w: 7, t: 10 };

pub fn dataset(n: usize, vocab: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    random_dataset(DIMS, n, vocab, &mut rng).expect("valid fixture")
}

pub fn model(stream: Stream, vocab: usize) -> TassModel {
    let config = ModelConfig {
        d: DIMS.d,
        h: DIMS.h,
        w: DIMS.w,
        t: DIMS.t,
        n_heads: 4,
        vocab,
        tau: 0.025,
        target_aware: true,
        stream,
        order: SlotOrder::default(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    TassModel::init(config, &mut rng).expect("valid fixture")
}
