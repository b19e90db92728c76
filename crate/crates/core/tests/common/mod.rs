#![allow(dead_code)]

use pmil::dataio::{generate_synthetic, SynthConfig, SynthDataset};
use pmil::milnet::{Matrix, ModelDims, ModelParams};
use pmil::rng::substream;
use rand::Rng;

/// A hand-built classifier that detects instances aligned with `direction`:
/// one embedding unit reads `u·x`, attention grows with it, and the class-1
/// logit is `gain·(pooled − threshold)`. For C > 2 one unit per class.
pub fn planted_model(directions: &[Vec<f64>], threshold: f64, gain: f64) -> ModelParams<f64> {
    let classes = directions.len();
    let d = directions[1].len();
    let embed = classes - 1;
    let mut p = ModelParams::zeros(ModelDims::new(d, classes).with_hidden(embed, embed));
    for (c, dir) in directions.iter().enumerate().skip(1) {
        for (i, &u) in dir.iter().enumerate() {
            p.embed_weight.set(i, c - 1, u);
        }
        p.attn_v.set(c - 1, c - 1, 1.0);
        p.attn_u.set(c - 1, c - 1, 1.0);
        p.attn_w[c - 1] = 10.0;
        p.clf_weight.set(c - 1, c, gain);
        p.clf_bias[c] = -gain * threshold;
    }
    p
}

/// Clean planted-signal data: signal instances sit far from the background.
pub fn clean_data(
    seed: u64,
    classes: usize,
    n: usize,
    positives: (usize, usize),
) -> SynthDataset<f64> {
    generate_synthetic(&SynthConfig {
        train_bags: 40,
        val_bags: 10,
        test_bags: 10,
        classes,
        feature_dim: 8,
        instances_min: n,
        instances_max: n,
        positives_min: positives.0,
        positives_max: positives.1,
        signal_strength: 8.0,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

pub fn random_bag(seed: u64, n: usize, d: usize) -> Matrix<f64> {
    let mut rng = substream(seed, "fixture-bag", 0);
    Matrix::from_fn(n, d, |_, _| rng.gen_range(-1.5..1.5))
}
