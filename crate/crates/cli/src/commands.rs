use std::fs;
use std::io::Write;
use std::path::Path;

use pmil::dataio::{
    export_iis, generate_synthetic, load_split, read_model, save_split, write_model,
};
use pmil::metrics::{attention_mass, bag_metrics, instance_metrics, BagEval, InstanceEval};
use pmil::milnet::{predict, EmbeddedBag, ModelParams, Pooling};
use pmil::pseudobag::{em_train, SplitStrategy, TrainConfig};
use pmil::rng::substream;
use pmil::shapley::{
    accelerated_iis, classwise_iis, evidence_class, CoalitionValueFn, IisConfig, TargetClass,
};
use pmil::Dataset;
use rayon::ThreadPool;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Abmil,
    Mean,
    Max,
    PmilRandom,
    PmilAttn,
    PmilShapley,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Abmil => "abmil",
            Method::Mean => "mean",
            Method::Max => "max",
            Method::PmilRandom => "pmil-random",
            Method::PmilAttn => "pmil-attn",
            Method::PmilShapley => "pmil-shapley",
        }
    }

    /// The baselines train on whole bags for a single round; the PMIL
    /// variants keep the configured schedule and pick the split strategy.
    pub fn apply(self, mut cfg: TrainConfig) -> TrainConfig {
        let whole_bags = |mut c: TrainConfig, pooling| {
            c.pooling = pooling;
            c.m0 = 1;
            c.delta_m = 0;
            c.m_max = 1;
            c.rounds = 1;
            c.strategy = SplitStrategy::Random;
            c
        };
        match self {
            Method::Abmil => whole_bags(cfg, Pooling::Attention),
            Method::Mean => whole_bags(cfg, Pooling::Mean),
            Method::Max => whole_bags(cfg, Pooling::Max),
            Method::PmilRandom => {
                cfg.strategy = SplitStrategy::Random;
                cfg
            }
            Method::PmilAttn => {
                cfg.strategy = SplitStrategy::Attention;
                cfg
            }
            Method::PmilShapley => {
                cfg.strategy = SplitStrategy::Shapley;
                cfg
            }
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => {
            fs::write(p, bytes).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Internal(e.to_string()))
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

fn load_model(path: &Path) -> Result<(ModelParams<f64>, Pooling), CliError> {
    read_model(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_data(dir: &Path, split: &str) -> Result<Dataset, CliError> {
    load_split(dir, split)
        .map_err(|e| CliError::Input(format!("{split} split in {}: {e}", dir.display())))
}

fn check_schema(params: &ModelParams<f64>, data: &Dataset) -> Result<(), CliError> {
    let dims = params.dims();
    if dims.input != data.feature_dim || dims.classes != data.num_classes() {
        return Err(CliError::Input(format!(
            "model expects {} features and {} classes, data has {} and {}",
            dims.input,
            dims.classes,
            data.feature_dim,
            data.num_classes()
        )));
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = generate_synthetic::<f64>(&cfg.synth)?;
    let mut summary = String::new();
    for (name, split) in [("train", &ds.train), ("val", &ds.val), ("test", &ds.test)] {
        save_split(out, name, split)?;
        let instances: usize = split.bags.iter().map(|b| b.len()).sum();
        let positive = split.bags.iter().filter(|b| b.label != 0).count();
        summary.push_str(&format!(
            "{name}: {} bags ({positive} positive), {instances} instances\n",
            split.len()
        ));
    }
    emit(None, summary.as_bytes())
}

#[derive(Serialize)]
struct TrainMetrics<'a> {
    method: &'a str,
    best_round: usize,
    best_val_score: f64,
    epochs: usize,
    val: BagEval,
}

pub fn train(
    cfg: &RunConfig,
    method: Method,
    data: &Path,
    out: &Path,
    pool: Option<&ThreadPool>,
) -> Result<(), CliError> {
    let train = load_data(data, "train")?;
    let val = load_data(data, "val")?;
    let outcome = em_train(&train, &val, &cfg.train, pool)?;

    fs::create_dir_all(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    write_model(&out.join("model.bin"), &outcome.best, outcome.pooling)?;
    let mut history = Vec::new();
    for rec in &outcome.history {
        serde_json::to_writer(&mut history, rec).expect("serializable");
        history.push(b'\n');
    }
    emit(Some(&out.join("history.jsonl")), &history)?;

    let probs = val
        .bags
        .iter()
        .map(|b| predict(&outcome.best, &b.feats, outcome.pooling).map(|p| p.0))
        .collect::<pmil::Result<Vec<_>>>()?;
    let metrics = TrainMetrics {
        method: method.name(),
        best_round: outcome.best_round,
        best_val_score: outcome.best_val_score,
        epochs: outcome.history.len(),
        val: bag_metrics(&probs, &val.labels())?,
    };
    emit(Some(&out.join("metrics.json")), &pretty(&metrics))?;
    emit(Some(&out.join("config.json")), cfg.to_json().as_bytes())
}

#[derive(Serialize)]
struct EvalReport {
    split: String,
    bags: usize,
    bag: BagEval,
    #[serde(skip_serializing_if = "Option::is_none")]
    instance: Option<InstanceEval>,
}

pub fn eval(
    cfg: &RunConfig,
    model: &Path,
    data: &Path,
    split: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (params, pooling) = load_model(model)?;
    let ds = load_data(data, split)?;
    check_schema(&params, &ds)?;
    let probs = ds
        .bags
        .iter()
        .map(|b| predict(&params, &b.feats, pooling).map(|p| p.0))
        .collect::<pmil::Result<Vec<_>>>()?;
    let bag = bag_metrics(&probs, &ds.labels())?;

    let instance = if ds.has_instance_labels() {
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for (i, (b, p)) in ds.bags.iter().zip(&probs).enumerate() {
            let class = evidence_class(p);
            let mut value = CoalitionValueFn::new(&params, &b.feats, pooling, class)?;
            let attention = value.embedded().attention();
            let iis_cfg = IisConfig {
                mu: cfg.iis.mu,
                tau: cfg.iis.tau,
                pseudo_bags: cfg.iis.pseudo_bags,
                seed: cfg.seed,
                target: TargetClass::Explicit(class),
            };
            let mut rng = substream(cfg.seed, "eval-iis", i as u64);
            let iis = accelerated_iis(&mut value, &attention, &iis_cfg, &mut rng)?;
            scores.extend(iis.scores);
            truth.extend(
                b.instance_labels
                    .as_ref()
                    .expect("checked above")
                    .iter()
                    .map(|&l| l == 1),
            );
        }
        // positive marginal contribution marks an instance positive
        Some(instance_metrics(&scores, &truth, 0.0)?)
    } else {
        None
    };

    let report = EvalReport {
        split: split.to_string(),
        bags: ds.len(),
        bag,
        instance,
    };
    emit(out, &pretty(&report))
}

fn parse_classes(spec: &str, classes: usize) -> Result<Vec<usize>, CliError> {
    if spec == "all" {
        return Ok((0..classes).collect());
    }
    let mut out = Vec::new();
    for tok in spec.split(',') {
        let c: usize = tok
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("invalid class list entry {tok:?}")))?;
        if c >= classes {
            return Err(CliError::Reference(format!(
                "class {c} out of range for {classes} classes"
            )));
        }
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn iis(
    cfg: &RunConfig,
    model: &Path,
    data: &Path,
    split: &str,
    bag_id: &str,
    classes: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (params, pooling) = load_model(model)?;
    let ds = load_data(data, split)?;
    check_schema(&params, &ds)?;
    let index =
        ds.bags.iter().position(|b| b.id == bag_id).ok_or_else(|| {
            CliError::Reference(format!("no bag {bag_id:?} in the {split} split"))
        })?;
    let bag = &ds.bags[index];
    let classes = parse_classes(classes, ds.num_classes())?;

    let mut value = CoalitionValueFn::new(&params, &bag.feats, pooling, classes[0])?;
    let attention = value.embedded().attention();
    let iis_cfg = IisConfig {
        mu: cfg.iis.mu,
        tau: cfg.iis.tau,
        pseudo_bags: cfg.iis.pseudo_bags,
        seed: cfg.seed,
        target: TargetClass::Explicit(classes[0]),
    };
    let mut rng = substream(cfg.seed, "iis", index as u64);
    let per_class = classwise_iis(&mut value, &attention, &iis_cfg, &classes, &mut rng)?;
    let mut buf = Vec::new();
    export_iis(&mut buf, bag_id, &attention, &per_class)?;
    emit(out, &buf)
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

const QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

pub fn attn_stats(
    cfg: &RunConfig,
    model: &Path,
    data: &Path,
    split: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (params, pooling) = load_model(model)?;
    let ds = load_data(data, split)?;
    check_schema(&params, &ds)?;
    if ds.is_empty() {
        return Err(CliError::Input(format!("the {split} split has no bags")));
    }
    let k = cfg.attn_k;
    let mut text = format!("bag_id,label,instances,top{k}_mass,q10,q25,q50,q75,q90\n");
    let mut masses = Vec::with_capacity(ds.len());
    for b in &ds.bags {
        let att = EmbeddedBag::new(&params, &b.feats, pooling)?.attention();
        let mass = attention_mass(&att, k);
        masses.push(mass);
        text.push_str(&format!("{},{},{},{mass},,,,,\n", b.id, b.label, b.len()));
    }
    let mean = masses.iter().sum::<f64>() / masses.len() as f64;
    masses.sort_by(f64::total_cmp);
    let qs: Vec<String> = QUANTILES
        .iter()
        .map(|&q| quantile(&masses, q).to_string())
        .collect();
    let instances: usize = ds.bags.iter().map(|b| b.len()).sum();
    text.push_str(&format!("summary,,{instances},{mean},{}\n", qs.join(",")));
    emit(out, text.as_bytes())
}
