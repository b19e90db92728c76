mod common;

use std::fs;
use std::path::Path;

use common::{clean_data, planted_model};
use pmil::dataio::{
    encode_features, export_iis, generate_synthetic, load_split, read_model, save_split,
    write_features, write_model, DataError, SynthConfig, IIS_FIXED_COLUMNS,
};
use pmil::milnet::{Matrix, Pooling};
use pmil::rng::substream;
use pmil::shapley::{classwise_iis, CoalitionValueFn, IisConfig};
use serde_json::json;

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn save_all(dir: &Path, cfg: &SynthConfig) {
    let ds = generate_synthetic::<f64>(cfg).unwrap();
    save_split(dir, "train", &ds.train).unwrap();
    save_split(dir, "val", &ds.val).unwrap();
    save_split(dir, "test", &ds.test).unwrap();
}

#[test]
fn saved_splits_load_back_equal() {
    let cfg = SynthConfig {
        train_bags: 12,
        val_bags: 4,
        test_bags: 4,
        classes: 3,
        instances_min: 5,
        instances_max: 30,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic::<f64>(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_split(dir.path(), "train", &ds.train).unwrap();
    let back = load_split::<f64>(dir.path(), "train").unwrap();
    assert_eq!(back, ds.train);
    // f32 readers see the same values, since generation rounds through f32
    let back32 = load_split::<f32>(dir.path(), "train").unwrap();
    for (a, b) in back32.bags.iter().zip(&ds.train.bags) {
        assert!(a
            .feats
            .as_slice()
            .iter()
            .zip(b.feats.as_slice())
            .all(|(x, y)| *x as f64 == *y));
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let cfg = SynthConfig {
        train_bags: 10,
        val_bags: 3,
        test_bags: 3,
        seed: 42,
        ..SynthConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    save_all(a.path(), &cfg);
    save_all(b.path(), &cfg);
    assert_eq!(read_tree(a.path()), read_tree(b.path()));
    let c = tempfile::tempdir().unwrap();
    save_all(c.path(), &SynthConfig { seed: 43, ..cfg });
    assert_ne!(read_tree(a.path()), read_tree(c.path()));
}

#[test]
fn allocation_substrate_has_sixty_instances_and_three_positives() {
    let cfg = SynthConfig {
        instances_min: 60,
        instances_max: 60,
        positives_min: 3,
        positives_max: 3,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic::<f64>(&cfg).unwrap();
    for b in ds
        .train
        .bags
        .iter()
        .chain(&ds.val.bags)
        .chain(&ds.test.bags)
    {
        assert_eq!(b.len(), 60);
        assert_eq!(b.positives().unwrap(), if b.label == 0 { 0 } else { 3 });
    }
}

#[test]
fn zero_positives_needs_negative_only_data() {
    let cfg = SynthConfig {
        positives_min: 0,
        positives_max: 0,
        ..SynthConfig::default()
    };
    let err = generate_synthetic::<f64>(&cfg).unwrap_err();
    assert!(err.to_string().contains("positives"), "{err}");
    let neg_only = SynthConfig {
        positive_bag_fraction: 0.0,
        ..cfg
    };
    let ds = generate_synthetic::<f64>(&neg_only).unwrap();
    assert!(ds.train.bags.iter().all(|b| b.label == 0));
}

fn one_bag_manifest(dir: &Path, dim: usize) {
    fs::write(
        dir.join("train.json"),
        serde_json::to_string(&json!({
            "format_version": 1,
            "feature_dim": dim,
            "class_names": ["negative", "positive"],
            "bags": [{"id": "a", "label": 0, "features": "a.milb"}]
        }))
        .unwrap(),
    )
    .unwrap();
}

#[test]
fn manifest_and_header_dimensions_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    write_features(&dir.path().join("a.milb"), &Matrix::<f64>::zeros(3, 64)).unwrap();
    one_bag_manifest(dir.path(), 128);
    match load_split::<f64>(dir.path(), "train") {
        Err(DataError::DimensionConflict {
            expected: 128,
            found: 64,
        }) => {}
        other => panic!("expected a dimension conflict, got {other:?}"),
    }
    one_bag_manifest(dir.path(), 64);
    assert_eq!(
        load_split::<f64>(dir.path(), "train").unwrap().bags[0].len(),
        3
    );
}

#[test]
fn corrupted_magic_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = encode_features(&Matrix::<f64>::zeros(2, 4));
    bytes[0] = b'X';
    fs::write(dir.path().join("a.milb"), bytes).unwrap();
    one_bag_manifest(dir.path(), 4);
    let err = load_split::<f64>(dir.path(), "train").unwrap_err();
    assert!(matches!(err, DataError::BadMagic { .. }));
    assert!(err.to_string().contains("bad magic"));
}

#[test]
fn manifest_problems_are_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    one_bag_manifest(dir.path(), 4);
    // referenced file missing
    assert!(matches!(
        load_split::<f64>(dir.path(), "train"),
        Err(DataError::Io { .. })
    ));
    write_features(&dir.path().join("a.milb"), &Matrix::<f64>::zeros(2, 4)).unwrap();
    fs::write(
        dir.path().join("train.json"),
        r#"{"format_version":1,"feature_dim":4,"class_names":["n","p"],"bags":[],"extra":1}"#,
    )
    .unwrap();
    assert!(matches!(
        load_split::<f64>(dir.path(), "train"),
        Err(DataError::Json(_))
    ));
    fs::write(
        dir.path().join("train.json"),
        r#"{"format_version":7,"feature_dim":4,"class_names":["n","p"],"bags":[]}"#,
    )
    .unwrap();
    assert!(matches!(
        load_split::<f64>(dir.path(), "train"),
        Err(DataError::VersionMismatch { found: 7, .. })
    ));
    fs::write(
        dir.path().join("train.json"),
        r#"{"format_version":1,"feature_dim":4,"class_names":["n","p"],"bags":[{"id":"a","label":5,"features":"a.milb"}]}"#,
    )
    .unwrap();
    assert!(load_split::<f64>(dir.path(), "train").is_err());
}

#[test]
fn model_files_round_trip() {
    let data = clean_data(1, 3, 6, (1, 1));
    let model = planted_model(&data.directions, 4.0, 3.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    write_model(&path, &model, Pooling::Max).unwrap();
    let (back, pooling) = read_model::<f64>(&path).unwrap();
    assert_eq!((back, pooling), (model, Pooling::Max));
}

fn export_bag(seed: u64) -> Vec<u8> {
    let data = clean_data(seed, 3, 20, (1, 2));
    let model = planted_model(&data.directions, 4.0, 3.0);
    let bag = &data.test.bags[0];
    let mut v = CoalitionValueFn::new(&model, &bag.feats, Pooling::Attention, 0).unwrap();
    let att = v.embedded().attention();
    let cfg = IisConfig {
        mu: 2,
        pseudo_bags: 2,
        ..IisConfig::default()
    };
    let per = classwise_iis(
        &mut v,
        &att,
        &cfg,
        &[0, 1, 2],
        &mut substream(seed, "iis", 0),
    )
    .unwrap();
    let mut buf = Vec::new();
    export_iis(&mut buf, &bag.id, &att, &per).unwrap();
    buf
}

#[test]
fn iis_export_schema_and_replay() {
    let a = export_bag(4);
    assert_eq!(a, export_bag(4));
    let mut rdr = csv::Reader::from_reader(a.as_slice());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(header.len(), IIS_FIXED_COLUMNS + 3);
    assert_eq!(&header[3], "iis_class_0");
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 20);
    let att: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((att - 1.0).abs() < 1e-9);
    for (j, r) in rows.iter().enumerate() {
        assert_eq!(r[1].parse::<usize>().unwrap(), j);
        // values round-trip through their text form
        for k in 2..r.len() {
            assert!(r[k].parse::<f64>().unwrap().is_finite());
        }
    }
}
