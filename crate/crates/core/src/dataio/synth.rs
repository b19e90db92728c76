//! Planted-signal Gaussian bags with ground-truth instance labels.
//!
//! Background instances are `N(0, spread²)` per coordinate. Class `c ≥ 1`
//! owns a random unit direction `u_c`; its signal instances are
//! `N(signal_strength·u_c, spread²)`. With probability `overlap` a
//! background instance is instead a decoy drawn halfway towards a random
//! class direction. A bag of class `c ≥ 1` plants `k` signal instances at
//! random positions, `k` uniform in the positives range.

use rand::seq::{index::sample, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BagRecord, DataError, Dataset};
use crate::milnet::Matrix;
use crate::rng::{substream, StreamRng};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub train_bags: usize,
    pub val_bags: usize,
    pub test_bags: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub instances_min: usize,
    pub instances_max: usize,
    pub positives_min: usize,
    pub positives_max: usize,
    /// Share of bags in each split that carry a planted signal.
    pub positive_bag_fraction: f64,
    pub signal_strength: f64,
    pub spread: f64,
    pub overlap: f64,
    /// Set by the caller, never read from a config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_bags: 200,
            val_bags: 50,
            test_bags: 100,
            classes: 2,
            feature_dim: 16,
            instances_min: 60,
            instances_max: 60,
            positives_min: 3,
            positives_max: 3,
            positive_bag_fraction: 0.5,
            signal_strength: 2.0,
            spread: 1.0,
            overlap: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        for (field, v) in [
            ("train_bags", self.train_bags),
            ("val_bags", self.val_bags),
            ("test_bags", self.test_bags),
        ] {
            if v == 0 {
                return Err(DataError::config(field, "must be at least 1"));
            }
        }
        if self.classes < 2 {
            return Err(DataError::config("classes", "must be at least 2"));
        }
        if self.feature_dim == 0 {
            return Err(DataError::config("feature_dim", "must be at least 1"));
        }
        if self.instances_min == 0 || self.instances_min > self.instances_max {
            return Err(DataError::config(
                "instances_min",
                format!(
                    "range {}..={} is empty or starts at 0",
                    self.instances_min, self.instances_max
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.positive_bag_fraction) {
            return Err(DataError::config(
                "positive_bag_fraction",
                "must lie in [0, 1]",
            ));
        }
        if self.positives_min > self.positives_max {
            return Err(DataError::config(
                "positives_min",
                format!("exceeds positives_max {}", self.positives_max),
            ));
        }
        if self.positives_max > self.instances_min {
            return Err(DataError::config(
                "positives_max",
                format!("exceeds instances_min {}", self.instances_min),
            ));
        }
        if self.positives_min == 0 && self.positive_bag_fraction > 0.0 {
            return Err(DataError::config(
                "positives_min",
                "positive bags need at least one planted instance",
            ));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(DataError::config("spread", "must be positive and finite"));
        }
        if !self.signal_strength.is_finite() {
            return Err(DataError::config("signal_strength", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(DataError::config("overlap", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes)
            .map(|c| {
                if c == 0 {
                    "negative".to_string()
                } else if self.classes == 2 {
                    "positive".to_string()
                } else {
                    format!("class_{c}")
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset<T> {
    pub train: Dataset<T>,
    pub val: Dataset<T>,
    pub test: Dataset<T>,
    /// Unit signal direction per class; index 0 (background) is all zeros.
    pub directions: Vec<Vec<f64>>,
}

fn unit_direction(rng: &mut StreamRng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn gaussian_row(rng: &mut StreamRng, mean: &[f64], scale: f64, spread: f64) -> Vec<f64> {
    mean.iter()
        .map(|&m| {
            let z: f64 = StandardNormal.sample(rng);
            // stored as f32 on disk; round now so save/load is lossless
            f64::from((scale * m + spread * z) as f32)
        })
        .collect()
}

fn generate_split<T: Scalar>(
    cfg: &SynthConfig,
    directions: &[Vec<f64>],
    name: &str,
    count: usize,
) -> Dataset<T> {
    let mut rng = substream(cfg.seed, &format!("synth:{name}"), 0);
    let n_pos = (cfg.positive_bag_fraction * count as f64).round() as usize;
    let mut labels: Vec<usize> = (0..count)
        .map(|i| {
            if i < n_pos {
                1 + i % (cfg.classes - 1)
            } else {
                0
            }
        })
        .collect();
    labels.shuffle(&mut rng);

    let d = cfg.feature_dim;
    let zero = vec![0.0; d];
    let bags = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let n = rng.gen_range(cfg.instances_min..=cfg.instances_max);
            let mut inst = vec![0u8; n];
            if label != 0 {
                let k = rng.gen_range(cfg.positives_min..=cfg.positives_max);
                for j in sample(&mut rng, n, k) {
                    inst[j] = 1;
                }
            }
            let mut values = Vec::with_capacity(n * d);
            for &is_pos in &inst {
                let row = if is_pos == 1 {
                    gaussian_row(
                        &mut rng,
                        &directions[label],
                        cfg.signal_strength,
                        cfg.spread,
                    )
                } else if cfg.classes > 1 && rng.gen_bool(cfg.overlap) {
                    let c = rng.gen_range(1..cfg.classes);
                    gaussian_row(
                        &mut rng,
                        &directions[c],
                        0.5 * cfg.signal_strength,
                        cfg.spread,
                    )
                } else {
                    gaussian_row(&mut rng, &zero, 0.0, cfg.spread)
                };
                values.extend(row.into_iter().map(T::lit));
            }
            BagRecord {
                id: format!("{name}_{i:04}"),
                label,
                feats: Matrix::new(n, d, values).expect("generated values are finite"),
                instance_labels: Some(inst),
            }
        })
        .collect();
    Dataset {
        feature_dim: d,
        class_names: cfg.class_names(),
        bags,
    }
}

/// Generates train/val/test splits. A pure function of `cfg`.
pub fn generate_synthetic<T: Scalar>(cfg: &SynthConfig) -> Result<SynthDataset<T>, DataError> {
    cfg.validate()?;
    let mut dir_rng = substream(cfg.seed, "synth:directions", 0);
    let directions: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|c| {
            if c == 0 {
                vec![0.0; cfg.feature_dim]
            } else {
                unit_direction(&mut dir_rng, cfg.feature_dim)
            }
        })
        .collect();
    Ok(SynthDataset {
        train: generate_split(cfg, &directions, "train", cfg.train_bags),
        val: generate_split(cfg, &directions, "val", cfg.val_bags),
        test: generate_split(cfg, &directions, "test", cfg.test_bags),
        directions,
    })
}
