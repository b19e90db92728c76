use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{add_outer, mat_vec, vec_mat, FeatureMatrix, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How instance embeddings are aggregated into one bag representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Gated attention: softmax over `w·(tanh(Vᵀh) ⊙ sigmoid(Uᵀh))`.
    Attention,
    Mean,
    /// Coordinatewise maximum. The reported attention is uniform and carries
    /// no meaning for this pooling.
    Max,
}

impl Pooling {
    pub fn code(self) -> u32 {
        match self {
            Pooling::Attention => 0,
            Pooling::Mean => 1,
            Pooling::Max => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Pooling::Attention),
            1 => Some(Pooling::Mean),
            2 => Some(Pooling::Max),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Input feature dimension `d`.
    pub input: usize,
    /// Embedding width `L`.
    pub embed: usize,
    /// Attention hidden width `H`.
    pub attn: usize,
    /// Number of classes `C`.
    pub classes: usize,
}

impl ModelDims {
    pub fn new(input: usize, classes: usize) -> Self {
        Self {
            input,
            embed: 128,
            attn: 64,
            classes,
        }
    }

    pub fn with_hidden(mut self, embed: usize, attn: usize) -> Self {
        self.embed = embed;
        self.attn = attn;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.embed == 0 || self.attn == 0 {
            return Err(Error::Shape(format!("zero-sized layer in {self:?}")));
        }
        if self.classes < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        Ok(())
    }
}

/// All weights of the attention-MIL classifier. The same type doubles as
/// the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// d × L
    pub embed_weight: Matrix<T>,
    pub embed_bias: Vec<T>,
    /// L × H, tanh branch
    pub attn_v: Matrix<T>,
    /// L × H, sigmoid gate
    pub attn_u: Matrix<T>,
    pub attn_w: Vec<T>,
    /// L × C
    pub clf_weight: Matrix<T>,
    pub clf_bias: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            embed_weight: Matrix::zeros(dims.input, dims.embed),
            embed_bias: vec![T::zero(); dims.embed],
            attn_v: Matrix::zeros(dims.embed, dims.attn),
            attn_u: Matrix::zeros(dims.embed, dims.attn),
            attn_w: vec![T::zero(); dims.attn],
            clf_weight: Matrix::zeros(dims.embed, dims.classes),
            clf_bias: vec![T::zero(); dims.classes],
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let mut p = Self::zeros(dims);
        let mut fill = |buf: &mut [T], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in buf {
                *v = T::lit(rng.gen_range(-bound..bound));
            }
        };
        fill(p.embed_weight.as_mut_slice(), dims.input);
        fill(p.attn_v.as_mut_slice(), dims.embed);
        fill(p.attn_u.as_mut_slice(), dims.embed);
        fill(&mut p.attn_w, dims.attn);
        fill(p.clf_weight.as_mut_slice(), dims.embed);
        Ok(p)
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self.embed_weight.rows(),
            embed: self.embed_weight.cols(),
            attn: self.attn_v.cols(),
            classes: self.clf_weight.cols(),
        }
    }

    /// Checks mutual shape consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        d.validate()?;
        let ok = self.embed_bias.len() == d.embed
            && self.attn_v.rows() == d.embed
            && self.attn_u.rows() == d.embed
            && self.attn_u.cols() == d.attn
            && self.attn_w.len() == d.attn
            && self.clf_weight.rows() == d.embed
            && self.clf_bias.len() == d.classes;
        if !ok {
            return Err(Error::Shape("inconsistent parameter shapes".into()));
        }
        if !self
            .buffers()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite("non-finite parameter".into()));
        }
        Ok(())
    }

    /// The seven parameter tensors in a fixed order.
    pub fn buffers(&self) -> [&[T]; 7] {
        [
            self.embed_weight.as_slice(),
            &self.embed_bias,
            self.attn_v.as_slice(),
            self.attn_u.as_slice(),
            &self.attn_w,
            self.clf_weight.as_slice(),
            &self.clf_bias,
        ]
    }

    pub fn buffers_mut(&mut self) -> [&mut [T]; 7] {
        [
            self.embed_weight.as_mut_slice(),
            &mut self.embed_bias,
            self.attn_v.as_mut_slice(),
            self.attn_u.as_mut_slice(),
            &mut self.attn_w,
            self.clf_weight.as_mut_slice(),
            &mut self.clf_bias,
        ]
    }

    pub fn num_values(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.buffers()
            .iter()
            .zip(other.buffers().iter())
            .all(|(a, b)| a.len() == b.len())
            && self.dims() == other.dims()
    }

    pub fn l2_norm(&self) -> T {
        self.buffers()
            .iter()
            .flat_map(|b| b.iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let v = |xs: &[T]| xs.iter().map(|&x| U::lit(x.as_f64())).collect::<Vec<U>>();
        ModelParams {
            embed_weight: self.embed_weight.cast(),
            embed_bias: v(&self.embed_bias),
            attn_v: self.attn_v.cast(),
            attn_u: self.attn_u.cast(),
            attn_w: v(&self.attn_w),
            clf_weight: self.clf_weight.cast(),
            clf_bias: v(&self.clf_bias),
        }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub pooling: Pooling,
    /// Pre-activation embeddings, n × L.
    pub pre_embed: Matrix<T>,
    /// ReLU embeddings, n × L.
    pub embedded: Matrix<T>,
    /// tanh branch, n × H (attention pooling only).
    pub gate_tanh: Option<Matrix<T>>,
    /// sigmoid branch, n × H (attention pooling only).
    pub gate_sigmoid: Option<Matrix<T>>,
    pub attention: Vec<T>,
    /// Winning row per embedding coordinate (max pooling only).
    pub argmax: Option<Vec<usize>>,
    pub pooled: Vec<T>,
    pub logits: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn probs(&self) -> Vec<T> {
        softmax(&self.logits)
    }
}

pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = xs.iter().map(|&x| (x - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    max + xs.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn check_input<T: Scalar>(params: &ModelParams<T>, feats: &FeatureMatrix<T>) -> Result<()> {
    let d = params.embed_weight.rows();
    if feats.cols() != d {
        return Err(Error::Shape(format!(
            "feature dimension {} does not match model input {d}",
            feats.cols()
        )));
    }
    if feats.rows() == 0 {
        return Err(Error::Shape("bag has no instances".into()));
    }
    if !feats.is_finite() {
        return Err(Error::NonFinite("non-finite feature value".into()));
    }
    Ok(())
}

/// `tanh(hV)`, `sigmoid(hU)` and the raw attention scores.
type Gate<T> = (Matrix<T>, Matrix<T>, Vec<T>);

/// Instance embeddings and gated attention pieces, shared by the full
/// forward pass and coalition evaluation.
fn embed_and_gate<T: Scalar>(
    params: &ModelParams<T>,
    feats: &FeatureMatrix<T>,
    pooling: Pooling,
) -> (Matrix<T>, Matrix<T>, Option<Gate<T>>) {
    let pre = feats.matmul_bias(&params.embed_weight, Some(&params.embed_bias));
    let mut h = pre.clone();
    for v in h.as_mut_slice() {
        *v = v.max(T::zero());
    }
    let gate = (pooling == Pooling::Attention).then(|| {
        let mut t = h.matmul_bias(&params.attn_v, None);
        let mut s = h.matmul_bias(&params.attn_u, None);
        t.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
        s.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v));
        let scores = (0..h.rows())
            .map(|j| {
                t.row(j)
                    .iter()
                    .zip(s.row(j))
                    .zip(&params.attn_w)
                    .map(|((&a, &b), &w)| a * b * w)
                    .sum()
            })
            .collect();
        (t, s, scores)
    });
    (pre, h, gate)
}

/// Pools the rows `subset` (all rows when `None`) of `h`. Returns the pooled
/// vector, the attention over the subset and, for max pooling, the argmax
/// rows (as indices into `h`).
fn pool_rows<T: Scalar>(
    h: &Matrix<T>,
    scores: Option<&[T]>,
    pooling: Pooling,
    subset: Option<&[usize]>,
) -> (Vec<T>, Vec<T>, Option<Vec<usize>>) {
    let all: Vec<usize>;
    let rows = match subset {
        Some(s) => s,
        None => {
            all = (0..h.rows()).collect();
            &all
        }
    };
    let n = rows.len();
    let width = h.cols();
    if n == 0 {
        return (vec![T::zero(); width], Vec::new(), None);
    }
    let uniform = T::one() / T::lit(n as f64);
    match pooling {
        Pooling::Attention => {
            let scores = scores.expect("attention pooling requires scores");
            let sub: Vec<T> = rows.iter().map(|&j| scores[j]).collect();
            let alpha = softmax(&sub);
            let mut pooled = vec![T::zero(); width];
            for (&j, &a) in rows.iter().zip(&alpha) {
                for (p, &x) in pooled.iter_mut().zip(h.row(j)) {
                    *p = *p + a * x;
                }
            }
            (pooled, alpha, None)
        }
        Pooling::Mean => {
            let mut pooled = vec![T::zero(); width];
            for &j in rows {
                for (p, &x) in pooled.iter_mut().zip(h.row(j)) {
                    *p = *p + x;
                }
            }
            pooled.iter_mut().for_each(|p| *p = *p * uniform);
            (pooled, vec![uniform; n], None)
        }
        Pooling::Max => {
            let mut pooled = h.row(rows[0]).to_vec();
            let mut arg = vec![rows[0]; width];
            for &j in &rows[1..] {
                for (k, &x) in h.row(j).iter().enumerate() {
                    if x > pooled[k] {
                        pooled[k] = x;
                        arg[k] = j;
                    }
                }
            }
            (pooled, vec![uniform; n], Some(arg))
        }
    }
}

fn classify<T: Scalar>(params: &ModelParams<T>, pooled: &[T]) -> Vec<T> {
    vec_mat(pooled, &params.clf_weight, Some(&params.clf_bias))
}

pub fn forward_bag<T: Scalar>(
    params: &ModelParams<T>,
    feats: &FeatureMatrix<T>,
    pooling: Pooling,
) -> Result<ForwardTrace<T>> {
    check_input(params, feats)?;
    let (pre, h, gate) = embed_and_gate(params, feats, pooling);
    let scores = gate.as_ref().map(|g| g.2.as_slice());
    let (pooled, attention, argmax) = pool_rows(&h, scores, pooling, None);
    let logits = classify(params, &pooled);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("non-finite logits".into()));
    }
    let (gate_tanh, gate_sigmoid) = match gate {
        Some((t, s, _)) => (Some(t), Some(s)),
        None => (None, None),
    };
    Ok(ForwardTrace {
        pooling,
        pre_embed: pre,
        embedded: h,
        gate_tanh,
        gate_sigmoid,
        attention,
        argmax,
        pooled,
        logits,
    })
}

/// Cross-entropy `−log softmax(logits)[label]`, computed via log-sum-exp.
pub fn loss_ce<T: Scalar>(logits: &[T], label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    Ok((log_sum_exp(logits) - logits[label]).max(T::zero()))
}

/// Gradient of `loss_ce(forward_bag(params, feats).logits, label)` with
/// respect to every parameter.
pub fn backward_bag<T: Scalar>(
    trace: &ForwardTrace<T>,
    params: &ModelParams<T>,
    feats: &FeatureMatrix<T>,
    label: usize,
) -> Result<ModelParams<T>> {
    let dims = params.dims();
    let n = feats.rows();
    if trace.embedded.rows() != n
        || trace.embedded.cols() != dims.embed
        || trace.logits.len() != dims.classes
        || feats.cols() != dims.input
        || trace.attention.len() != n
    {
        return Err(Error::Shape(
            "forward trace does not match params/features".into(),
        ));
    }
    if label >= dims.classes {
        return Err(Error::LabelOutOfRange {
            label,
            classes: dims.classes,
        });
    }

    let mut g = ModelParams::zeros(dims);
    let mut dlogits = trace.probs();
    dlogits[label] = dlogits[label] - T::one();

    add_outer(&mut g.clf_weight, &trace.pooled, &dlogits);
    g.clf_bias.copy_from_slice(&dlogits);
    let dpooled = mat_vec(&params.clf_weight, &dlogits);

    let h = &trace.embedded;
    let mut dh = Matrix::<T>::zeros(n, dims.embed);
    match trace.pooling {
        Pooling::Attention => {
            let (t, s) = match (&trace.gate_tanh, &trace.gate_sigmoid) {
                (Some(t), Some(s)) => (t, s),
                _ => {
                    return Err(Error::Shape(
                        "attention trace lacks gate activations".into(),
                    ))
                }
            };
            let alpha = &trace.attention;
            let dalpha: Vec<T> = (0..n)
                .map(|j| h.row(j).iter().zip(&dpooled).map(|(&a, &b)| a * b).sum())
                .collect();
            let mean: T = alpha.iter().zip(&dalpha).map(|(&a, &d)| a * d).sum();
            for j in 0..n {
                let a = alpha[j];
                for (dst, &dp) in dh.row_mut(j).iter_mut().zip(&dpooled) {
                    *dst = a * dp;
                }
                let dscore = a * (dalpha[j] - mean);
                if dscore == T::zero() {
                    continue;
                }
                let (tj, sj) = (t.row(j), s.row(j));
                let mut dpre_v = vec![T::zero(); dims.attn];
                let mut dpre_u = vec![T::zero(); dims.attn];
                for k in 0..dims.attn {
                    g.attn_w[k] = g.attn_w[k] + dscore * tj[k] * sj[k];
                    let dgate = dscore * params.attn_w[k];
                    dpre_v[k] = dgate * sj[k] * (T::one() - tj[k] * tj[k]);
                    dpre_u[k] = dgate * tj[k] * sj[k] * (T::one() - sj[k]);
                }
                add_outer(&mut g.attn_v, h.row(j), &dpre_v);
                add_outer(&mut g.attn_u, h.row(j), &dpre_u);
                let back_v = mat_vec(&params.attn_v, &dpre_v);
                let back_u = mat_vec(&params.attn_u, &dpre_u);
                for ((dst, &bv), &bu) in dh.row_mut(j).iter_mut().zip(&back_v).zip(&back_u) {
                    *dst = *dst + bv + bu;
                }
            }
        }
        Pooling::Mean => {
            let inv = T::one() / T::lit(n as f64);
            for j in 0..n {
                for (dst, &dp) in dh.row_mut(j).iter_mut().zip(&dpooled) {
                    *dst = dp * inv;
                }
            }
        }
        Pooling::Max => {
            let arg = trace
                .argmax
                .as_ref()
                .ok_or_else(|| Error::Shape("max trace lacks argmax".into()))?;
            for (k, &j) in arg.iter().enumerate() {
                let cur = dh.get(j, k);
                dh.set(j, k, cur + dpooled[k]);
            }
        }
    }

    for j in 0..n {
        let mut dz = dh.row(j).to_vec();
        for (d, &z) in dz.iter_mut().zip(trace.pre_embed.row(j)) {
            if z <= T::zero() {
                *d = T::zero();
            }
        }
        add_outer(&mut g.embed_weight, feats.row(j), &dz);
        for (b, &d) in g.embed_bias.iter_mut().zip(&dz) {
            *b = *b + d;
        }
    }
    Ok(g)
}

/// Class probabilities and per-instance attention for one bag.
pub fn predict<T: Scalar>(
    params: &ModelParams<T>,
    feats: &FeatureMatrix<T>,
    pooling: Pooling,
) -> Result<(Vec<T>, Vec<T>)> {
    let trace = forward_bag(params, feats, pooling)?;
    Ok((trace.probs(), trace.attention))
}

/// A bag pushed through the frozen embedding and attention layers once, so
/// that any subset of its instances can be pooled and classified cheaply.
#[derive(Clone, Debug)]
pub struct EmbeddedBag<T> {
    pooling: Pooling,
    hidden: Matrix<T>,
    scores: Option<Vec<T>>,
}

impl<T: Scalar> EmbeddedBag<T> {
    pub fn new(
        params: &ModelParams<T>,
        feats: &FeatureMatrix<T>,
        pooling: Pooling,
    ) -> Result<Self> {
        check_input(params, feats)?;
        let (_, hidden, gate) = embed_and_gate(params, feats, pooling);
        Ok(Self {
            pooling,
            hidden,
            scores: gate.map(|g| g.2),
        })
    }

    pub fn len(&self) -> usize {
        self.hidden.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.rows() == 0
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }

    /// Attention over the whole bag.
    pub fn attention(&self) -> Vec<T> {
        pool_rows(&self.hidden, self.scores.as_deref(), self.pooling, None).1
    }

    /// Pooled representation of `subset` (ascending instance indices). The
    /// empty subset pools to the zero vector.
    pub fn pool(&self, subset: &[usize]) -> Vec<T> {
        pool_rows(
            &self.hidden,
            self.scores.as_deref(),
            self.pooling,
            Some(subset),
        )
        .0
    }

    pub fn logits(&self, params: &ModelParams<T>, subset: &[usize]) -> Vec<T> {
        classify(params, &self.pool(subset))
    }
}
