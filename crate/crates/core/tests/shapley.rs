mod common;

use common::{clean_data, planted_model, random_bag};
use pmil::milnet::{EmbeddedBag, Matrix, ModelDims, ModelParams, Pooling};
use pmil::rng::substream;
use pmil::shapley::{
    accelerated_iis, attention_iis, classwise_iis, exact_iis, exact_shapley, CoalitionGame,
    CoalitionValueFn, EmptyCoalition, IisConfig, IisMethod, TableGame, TargetClass,
};
use proptest::prelude::*;
use rand::Rng;

/// Average marginal contribution over all n! orderings.
fn permutation_oracle(n: usize, v: &dyn Fn(&[usize]) -> f64) -> Vec<f64> {
    fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permutations(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let mut perms = Vec::new();
    permutations(&mut (0..n).collect(), 0, &mut perms);
    let mut phi = vec![0.0; n];
    for p in &perms {
        let mut coalition: Vec<usize> = Vec::new();
        for &j in p {
            let mut sorted = coalition.clone();
            sorted.sort_unstable();
            let before = v(&sorted);
            coalition.push(j);
            let mut sorted = coalition.clone();
            sorted.sort_unstable();
            phi[j] += v(&sorted) - before;
        }
    }
    phi.iter().map(|s| s / perms.len() as f64).collect()
}

fn random_table(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = substream(seed, "game", 0);
    (0..1usize << n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn mask(s: &[usize]) -> usize {
    s.iter().fold(0, |m, &j| m | 1 << j)
}

#[test]
fn three_player_table_matches_permutation_average() {
    let values = [0.0, 0.1, 0.2, 0.5, 0.3, 0.45, 0.6, 1.0];
    let mut game = TableGame::new(3, values.to_vec()).unwrap();
    let phi = exact_shapley(&mut game).unwrap();
    let oracle = permutation_oracle(3, &|s| values[mask(s)]);
    for (a, b) in phi.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn random_five_player_games_match_permutation_average() {
    for seed in 0..20 {
        let values = random_table(seed, 5);
        let phi = exact_shapley(&mut TableGame::new(5, values.clone()).unwrap()).unwrap();
        let oracle = permutation_oracle(5, &|s| values[mask(s)]);
        for (a, b) in phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "seed {seed}");
        }
    }
}

#[test]
fn axioms_on_model_games() {
    let params = ModelParams::<f64>::init(
        ModelDims::new(6, 2).with_hidden(8, 4),
        &mut substream(1, "axioms", 0),
    )
    .unwrap();
    for n in [1, 4, 7, 10] {
        let feats = random_bag(n as u64, n, 6);
        let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 1).unwrap();
        let phi = exact_shapley(&mut v).unwrap();
        let all: Vec<usize> = (0..n).collect();
        let gap = v.value(&all) - v.value(&[]);
        assert!(
            (phi.iter().sum::<f64>() - gap).abs() < 1e-8,
            "efficiency n={n}"
        );
        // every coalition evaluated once
        assert_eq!(v.evaluations(), 1 << n);
    }
}

#[test]
fn symmetric_instances_share_value() {
    let params = ModelParams::<f64>::init(
        ModelDims::new(4, 2).with_hidden(6, 3),
        &mut substream(2, "sym", 0),
    )
    .unwrap();
    let base = random_bag(9, 5, 4);
    let mut rows: Vec<Vec<f64>> = (0..5).map(|i| base.row(i).to_vec()).collect();
    rows[3] = rows[1].clone();
    let feats = Matrix::from_rows(&rows).unwrap();
    let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 0).unwrap();
    let phi = exact_shapley(&mut v).unwrap();
    assert!((phi[1] - phi[3]).abs() < 1e-10);
}

#[test]
fn empty_coalition_conventions() {
    let params = ModelParams::<f64>::init(
        ModelDims::new(3, 2).with_hidden(4, 2),
        &mut substream(3, "empty", 0),
    )
    .unwrap();
    let feats = random_bag(3, 4, 3);
    let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 1).unwrap();
    // softmax(clf(0)) = softmax(bias) = [0.5, 0.5] with zero biases
    assert_eq!(v.value(&[]), 0.5);
    let mut z = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 1)
        .unwrap()
        .with_empty_convention(EmptyCoalition::ZeroValue);
    assert_eq!(z.value(&[]), 0.0);
    let phi = exact_shapley(&mut z).unwrap();
    let all: Vec<usize> = (0..4).collect();
    assert!((phi.iter().sum::<f64>() - z.value(&all)).abs() < 1e-12);
}

#[test]
fn cache_hits_do_not_count() {
    let params = ModelParams::<f64>::init(
        ModelDims::new(3, 2).with_hidden(4, 2),
        &mut substream(4, "cache", 0),
    )
    .unwrap();
    let feats = random_bag(4, 5, 3);
    let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 0).unwrap();
    let a = v.value(&[0, 2]);
    let b = v.value(&[2, 0]);
    assert_eq!(a, b);
    assert_eq!(v.evaluations(), 1);
    v.value(&[1]);
    assert_eq!(v.evaluations(), 2);
}

#[test]
fn without_low_block_scores_are_singleton_gains() {
    let params = ModelParams::<f64>::init(
        ModelDims::new(5, 2).with_hidden(8, 4),
        &mut substream(5, "single", 0),
    )
    .unwrap();
    let feats = random_bag(5, 9, 5);
    let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 1).unwrap();
    let attention = v.embedded().attention();
    let cfg = IisConfig {
        mu: 10,
        tau: 4,
        pseudo_bags: 1,
        ..IisConfig::default()
    };
    let iis = accelerated_iis(&mut v, &attention, &cfg, &mut substream(1, "draws", 0)).unwrap();
    assert_eq!(iis.high_count, 9);
    let empty = v.value(&[]);
    for j in 0..9 {
        assert!((iis.scores[j] - (v.value(&[j]) - empty)).abs() < 1e-15);
    }
    assert_eq!(iis.method, IisMethod::ShapleyAccel);
}

#[test]
fn budget_bound_for_paper_settings() {
    let params = ModelParams::<f64>::init(
        ModelDims::new(16, 2).with_hidden(16, 8),
        &mut substream(6, "budget", 0),
    )
    .unwrap();
    for seed in 0..3 {
        let feats = random_bag(seed, 1000, 16);
        let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 1).unwrap();
        let attention = v.embedded().attention();
        let cfg = IisConfig {
            mu: 10,
            tau: 3,
            pseudo_bags: 4,
            ..IisConfig::default()
        };
        let iis = accelerated_iis(&mut v, &attention, &cfg, &mut substream(seed, "d", 0)).unwrap();
        assert!(v.evaluations() <= 123, "{} forward calls", v.evaluations());
        assert_eq!(iis.high_count, 40);
    }
}

#[test]
fn ranking_block_structure_and_determinism() {
    let params = ModelParams::<f64>::init(
        ModelDims::new(6, 2).with_hidden(8, 4),
        &mut substream(7, "blocks", 0),
    )
    .unwrap();
    let feats = random_bag(7, 30, 6);
    let run = || {
        let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 1).unwrap();
        let att = v.embedded().attention();
        let cfg = IisConfig {
            mu: 3,
            tau: 3,
            pseudo_bags: 2,
            ..IisConfig::default()
        };
        (
            accelerated_iis(&mut v, &att, &cfg, &mut substream(9, "d", 0)).unwrap(),
            att,
        )
    };
    let (iis, att) = run();
    assert_eq!(iis, run().0);
    let by_att = attention_iis(&att).ranking;
    let high: Vec<usize> = by_att[..6].to_vec();
    assert!(iis.ranking[..6].iter().all(|j| high.contains(j)));
    assert_eq!(&iis.ranking[6..], &by_att[6..]);
    // scores agree with ranking everywhere
    for w in iis.ranking.windows(2) {
        assert!(iis.scores[w[0]] >= iis.scores[w[1]]);
    }
    let mut sorted = iis.ranking.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..30).collect::<Vec<_>>());
}

#[test]
fn planted_instance_ranks_first_and_agrees_with_exact() {
    let data = clean_data(21, 2, 12, (1, 1));
    let model = planted_model(&data.directions, 4.0, 3.0);
    let mut agree = 0;
    let mut planted_first = 0;
    let positives: Vec<_> = data.train.bags.iter().filter(|b| b.label == 1).collect();
    let bags: Vec<_> = positives.iter().cycle().take(50).enumerate().collect();
    for (i, bag) in bags {
        let mut v = CoalitionValueFn::new(&model, &bag.feats, Pooling::Attention, 1).unwrap();
        let att = v.embedded().attention();
        let exact = exact_iis(&mut v).unwrap();
        let cfg = IisConfig {
            mu: 1,
            tau: 5,
            pseudo_bags: 4,
            ..IisConfig::default()
        };
        let accel = accelerated_iis(&mut v, &att, &cfg, &mut substream(i as u64, "d", 0)).unwrap();
        let planted = bag
            .instance_labels
            .as_ref()
            .unwrap()
            .iter()
            .position(|&l| l == 1)
            .unwrap();
        agree += usize::from(accel.ranking[0] == exact.ranking[0]);
        planted_first += usize::from(accel.ranking[0] == planted);
    }
    assert!(agree >= 40, "top-1 agreement {agree}/50");
    assert!(planted_first >= 40, "planted first {planted_first}/50");
}

#[test]
fn binary_classwise_scores_are_antisymmetric() {
    let params = ModelParams::<f64>::init(
        ModelDims::new(6, 2).with_hidden(8, 4),
        &mut substream(8, "anti", 0),
    )
    .unwrap();
    let feats = random_bag(8, 25, 6);
    let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 0).unwrap();
    let att = v.embedded().attention();
    let cfg = IisConfig {
        mu: 2,
        tau: 3,
        pseudo_bags: 4,
        ..IisConfig::default()
    };
    let both = classwise_iis(&mut v, &att, &cfg, &[0, 1], &mut substream(2, "d", 0)).unwrap();
    for &j in both[0].high_block() {
        assert!((both[0].scores[j] + both[1].scores[j]).abs() < 1e-12);
    }
}

#[test]
fn classwise_for_label_class_reproduces_accelerated() {
    let data = clean_data(5, 2, 20, (2, 3));
    let model = planted_model(&data.directions, 4.0, 3.0);
    let bag = data.train.bags.iter().find(|b| b.label == 1).unwrap();
    let cfg = IisConfig {
        mu: 2,
        tau: 3,
        pseudo_bags: 3,
        target: TargetClass::BagLabel,
        ..IisConfig::default()
    };
    let mut v1 = CoalitionValueFn::new(&model, &bag.feats, Pooling::Attention, bag.label).unwrap();
    let att = v1.embedded().attention();
    let single = accelerated_iis(&mut v1, &att, &cfg, &mut substream(3, "d", 0)).unwrap();
    let mut v2 = CoalitionValueFn::new(&model, &bag.feats, Pooling::Attention, 0).unwrap();
    let multi = classwise_iis(&mut v2, &att, &cfg, &[0, 1], &mut substream(3, "d", 0)).unwrap();
    assert_eq!(multi[1], single);
    // both classes share every forward call
    assert_eq!(v1.evaluations(), v2.evaluations());
}

#[test]
fn three_class_planted_instance_leads_its_class() {
    let data = clean_data(13, 3, 15, (1, 1));
    let model = planted_model(&data.directions, 4.0, 3.0);
    let mut checked = 0;
    for (i, bag) in data.train.bags.iter().filter(|b| b.label == 2).enumerate() {
        let planted = bag
            .instance_labels
            .as_ref()
            .unwrap()
            .iter()
            .position(|&l| l == 1)
            .unwrap();
        let mut v = CoalitionValueFn::new(&model, &bag.feats, Pooling::Attention, 2).unwrap();
        let att = EmbeddedBag::new(&model, &bag.feats, Pooling::Attention)
            .unwrap()
            .attention();
        let cfg = IisConfig {
            mu: 2,
            tau: 3,
            pseudo_bags: 2,
            ..IisConfig::default()
        };
        let per = classwise_iis(
            &mut v,
            &att,
            &cfg,
            &[0, 1, 2],
            &mut substream(i as u64, "d", 0),
        )
        .unwrap();
        assert_eq!(per[2].ranking[0], planted, "bag {}", bag.id);
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn class_out_of_range_is_rejected() {
    let params = ModelParams::<f64>::init(
        ModelDims::new(3, 2).with_hidden(4, 2),
        &mut substream(1, "r", 0),
    )
    .unwrap();
    let feats = random_bag(1, 3, 3);
    assert!(CoalitionValueFn::new(&params, &feats, Pooling::Attention, 2).is_err());
    let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 1).unwrap();
    let att = v.embedded().attention();
    let cfg = IisConfig::default();
    assert!(classwise_iis(&mut v, &att, &cfg, &[5], &mut substream(1, "d", 0)).is_err());
}

proptest! {
    #[test]
    fn budget_never_exceeded(seed in 0u64..200, n in 1usize..80, mu in 1usize..6, tau in 1usize..5, m in 1usize..5) {
        let params = ModelParams::<f64>::init(ModelDims::new(4, 2).with_hidden(6, 3), &mut substream(seed, "p", 0)).unwrap();
        let feats = random_bag(seed, n, 4);
        let mut v = CoalitionValueFn::new(&params, &feats, Pooling::Attention, 1).unwrap();
        let att = v.embedded().attention();
        let cfg = IisConfig { mu, tau, pseudo_bags: m, ..IisConfig::default() };
        let iis = accelerated_iis(&mut v, &att, &cfg, &mut substream(seed, "d", 0)).unwrap();
        prop_assert!(v.evaluations() <= tau * (mu * m).min(n) + tau);
        let high: Vec<usize> = iis.high_block().to_vec();
        prop_assert_eq!(high.len(), (mu * m).min(n));
    }

    #[test]
    fn attention_ranking_invariant_under_monotone_maps(raw in proptest::collection::vec(0.0f64..1.0, 1..20)) {
        let total: f64 = raw.iter().sum::<f64>() + 1e-9;
        let att: Vec<f64> = raw.iter().map(|a| a / total).collect();
        let mapped: Vec<f64> = att.iter().map(|a| (3.0 * a).exp() + 2.0).collect();
        prop_assert_eq!(attention_iis(&att).ranking, attention_iis(&mapped).ranking);
    }

    #[test]
    fn efficiency_on_random_tables(seed in 0u64..1000, n in 1usize..9) {
        let values = random_table(seed, n);
        let phi = exact_shapley(&mut TableGame::new(n, values.clone()).unwrap()).unwrap();
        let gap = values[(1 << n) - 1] - values[0];
        prop_assert!((phi.iter().sum::<f64>() - gap).abs() < 1e-8);
    }
}
