//! Policy/value network with hand-written backpropagation.
//!
//! ```text
//! state (S³ entries / f_max, clipped to ±4) ++ [depth / max_steps]
//!   -> dense(H) -> relu -> dense(H) -> relu = h
//! value      = dense(h) -> scalar rank-to-go
//! policy[p]  = dense(relu(dense([h, emb(t_0), ..., emb(t_{p-1})]))) -> logits over tokens
//! ```
//!
//! All weights live in one flat `Vec<f64>`; [`Layout`] records where each
//! named block starts. Gradients use the same layout.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tokenizer::{Token, TokenizerConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Clip applied to scaled tensor entries.
const INPUT_CLIP: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub tokenizer: TokenizerConfig,
    /// Torso width.
    pub hidden: usize,
    pub policy_hidden: usize,
    pub embed_dim: usize,
    /// Depth normalization for the step-count input.
    pub max_steps: usize,
}

impl Architecture {
    pub fn new(tokenizer: TokenizerConfig) -> Self {
        Self {
            tokenizer,
            hidden: 512,
            policy_hidden: 256,
            embed_dim: 32,
            max_steps: 16,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.tokenizer.size.pow(3) + 1
    }

    /// Scaled, clipped tensor entries followed by `depth / max_steps`.
    pub fn featurize(&self, state: &Tensor3, depth: usize) -> Result<Vec<f64>> {
        if state.size() != self.tokenizer.size {
            return Err(Error::usage(format!(
                "state size {} does not match model size {}",
                state.size(),
                self.tokenizer.size
            )));
        }
        let scale = f64::from(self.tokenizer.f_max);
        let mut x: Vec<f64> = state
            .entries()
            .iter()
            .map(|&e| (f64::from(e) / scale).clamp(-INPUT_CLIP, INPUT_CLIP))
            .collect();
        x.push(depth as f64 / self.max_steps as f64);
        Ok(x)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.policy_hidden == 0 || self.embed_dim == 0 || self.max_steps == 0 {
            return Err(Error::usage("architecture dimensions must be positive"));
        }
        Ok(())
    }
}

/// A named weight block: offset into the flat vector and its shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug)]
struct HeadIdx {
    wq: usize,
    bq: usize,
    wo: usize,
    bo: usize,
}

/// Shape manifest of all weights.
#[derive(Clone, Debug)]
pub struct Layout {
    blocks: Vec<Block>,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    vw: usize,
    vb: usize,
    embed: usize,
    heads: Vec<HeadIdx>,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let b = Block { name, shape, offset };
            offset += b.len();
            blocks.push(b);
            blocks.len() - 1
        };
        let (h, hp, e) = (arch.hidden, arch.policy_hidden, arch.embed_dim);
        let vocab = arch.tokenizer.vocab_size();
        let w1 = push("torso.w1".into(), vec![arch.input_dim(), h]);
        let b1 = push("torso.b1".into(), vec![h]);
        let w2 = push("torso.w2".into(), vec![h, h]);
        let b2 = push("torso.b2".into(), vec![h]);
        let vw = push("value.w".into(), vec![h]);
        let vb = push("value.b".into(), vec![1]);
        let embed = push("embed".into(), vec![vocab, e]);
        let heads = (0..arch.tokenizer.tokens_per_factor())
            .map(|p| HeadIdx {
                wq: push(format!("policy.{p}.wq"), vec![h + p * e, hp]),
                bq: push(format!("policy.{p}.bq"), vec![hp]),
                wo: push(format!("policy.{p}.wo"), vec![hp, vocab]),
                bo: push(format!("policy.{p}.bo"), vec![vocab]),
            })
            .collect();
        Self {
            blocks,
            w1,
            b1,
            w2,
            b2,
            vw,
            vb,
            embed,
            heads,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_params(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }
}

fn view2<'a>(w: &'a [f64], b: &Block) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((b.shape[0], b.shape[1]), &w[b.range()]).expect("layout shape")
}

fn view1<'a>(w: &'a [f64], b: &Block) -> ArrayView1<'a, f64> {
    ArrayView1::from(&w[b.range()])
}

fn view2_mut<'a>(w: &'a mut [f64], b: &Block) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((b.shape[0], b.shape[1]), &mut w[b.range()]).expect("layout shape")
}

fn view1_mut<'a>(w: &'a mut [f64], b: &Block) -> ArrayViewMut1<'a, f64> {
    ArrayViewMut1::from(&mut w[b.range()])
}

fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Numerically stable softmax over the finite entries of `logits`.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Network weights plus the architecture that gives them meaning.
#[derive(Clone, Debug)]
pub struct ModelParams {
    arch: Architecture,
    layout: Layout,
    weights: Vec<f64>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Per-sample output of the shared torso.
#[derive(Clone, Debug)]
pub struct TorsoOutput {
    pub hidden: Array1<f64>,
    pub value: f64,
}

/// One supervised example: a residual state, the next factor's tokens and
/// the number of factors still to go.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub tokens: Vec<Token>,
    pub rank_to_go: f64,
}

/// Mean losses over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    /// Mean token cross-entropy per position.
    pub ce: f64,
    /// Mean squared value error.
    pub vmse: f64,
}

impl ModelParams {
    /// Random initialization: He-scaled hidden layers, small output layers so
    /// the initial policy is close to uniform.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut weights = vec![0.0; layout.num_params()];
        let mut fill = |block: &Block, std: f64, rng: &mut R| {
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut weights[block.range()] {
                *w = normal.sample(rng);
            }
        };
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let b = &layout.blocks;
        fill(&b[layout.w1], he(arch.input_dim()), rng);
        fill(&b[layout.w2], he(arch.hidden), rng);
        fill(&b[layout.vw], 0.01, rng);
        fill(&b[layout.embed], 0.1, rng);
        for head in &layout.heads {
            fill(&b[head.wq], he(b[head.wq].shape[0]), rng);
            fill(&b[head.wo], 0.01, rng);
        }
        Ok(Self { arch, layout, weights })
    }

    /// Wraps existing weights, checking the count against the architecture.
    pub fn from_weights(arch: Architecture, weights: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        if weights.len() != layout.num_params() {
            return Err(Error::Incompatible(format!(
                "expected {} weights, got {}",
                layout.num_params(),
                weights.len()
            )));
        }
        Ok(Self { arch, layout, weights })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.arch.tokenizer
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    fn block(&self, i: usize) -> &Block {
        &self.layout.blocks[i]
    }

    /// Input vector for a residual tensor at search depth `depth`.
    pub fn featurize(&self, state: &Tensor3, depth: usize) -> Result<Vec<f64>> {
        self.arch.featurize(state, depth)
    }

    fn torso_batch(&self, x: &ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let w = &self.weights;
        let mut h1 = x.dot(&view2(w, self.block(self.layout.w1)));
        h1 += &view1(w, self.block(self.layout.b1));
        relu_inplace(&mut h1);
        let mut h2 = h1.dot(&view2(w, self.block(self.layout.w2)));
        h2 += &view1(w, self.block(self.layout.b2));
        relu_inplace(&mut h2);
        (h1, h2)
    }

    fn value_of(&self, h2: &ArrayView2<f64>) -> Array1<f64> {
        let w = &self.weights;
        h2.dot(&view1(w, self.block(self.layout.vw))) + w[self.block(self.layout.vb).offset]
    }

    pub fn torso(&self, state: &Tensor3, depth: usize) -> Result<TorsoOutput> {
        let x = self.featurize(state, depth)?;
        let x = ArrayView2::from_shape((1, x.len()), &x).expect("row vector");
        let (_, h2) = self.torso_batch(&x);
        let value = self.value_of(&h2.view())[0];
        Ok(TorsoOutput {
            hidden: h2.row(0).to_owned(),
            value,
        })
    }

    /// Rank-to-go estimates for several states at one depth.
    pub fn values(&self, states: &[&Tensor3], depth: usize) -> Result<Vec<f64>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.arch.input_dim();
        let mut x = Array2::zeros((states.len(), d));
        for (mut row, s) in x.axis_iter_mut(Axis(0)).zip(states) {
            row.assign(&ArrayView1::from(&self.featurize(s, depth)?));
        }
        let (_, h2) = self.torso_batch(&x.view());
        Ok(self.value_of(&h2.view()).to_vec())
    }

    /// Unnormalized next-token scores at position `prefix.len()`.
    pub fn policy_logits(&self, torso: &TorsoOutput, prefix: &[Token]) -> Result<Vec<f64>> {
        let p = prefix.len();
        let tok = &self.arch.tokenizer;
        if p >= tok.tokens_per_factor() {
            return Err(Error::usage(format!(
                "prefix length {p} must be below {}",
                tok.tokens_per_factor()
            )));
        }
        if torso.hidden.len() != self.arch.hidden {
            return Err(Error::usage("torso output does not match this model"));
        }
        let w = &self.weights;
        let (h, e) = (self.arch.hidden, self.arch.embed_dim);
        let emb = view2(w, self.block(self.layout.embed));
        let mut input = Array1::zeros(h + p * e);
        input.slice_mut(s![..h]).assign(&torso.hidden);
        for (k, &t) in prefix.iter().enumerate() {
            if t as usize >= tok.vocab_size() {
                return Err(Error::usage(format!("token {t} out of vocabulary")));
            }
            input
                .slice_mut(s![h + k * e..h + (k + 1) * e])
                .assign(&emb.row(t as usize));
        }
        let head = self.layout.heads[p];
        let mut g = input.dot(&view2(w, self.block(head.wq))) + view1(w, self.block(head.bq));
        g.mapv_inplace(|v| v.max(0.0));
        let logits = g.dot(&view2(w, self.block(head.wo))) + view1(w, self.block(head.bo));
        Ok(logits.to_vec())
    }

    /// Next-token distribution and rank-to-go estimate for `(state, depth)`
    /// after `prefix`.
    pub fn forward(&self, state: &Tensor3, depth: usize, prefix: &[Token]) -> Result<(Vec<f64>, f64)> {
        let torso = self.torso(state, depth)?;
        let logits = self.policy_logits(&torso, prefix)?;
        Ok((softmax(&logits), torso.value))
    }

    fn check_batch(&self, batch: &[Sample]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        let tok = &self.arch.tokenizer;
        for s in batch {
            if s.features.len() != self.arch.input_dim() || s.tokens.len() != tok.tokens_per_factor() {
                return Err(Error::usage("sample shape does not match the model"));
            }
            if s.tokens.iter().any(|&t| t as usize >= tok.vocab_size()) {
                return Err(Error::usage("sample token out of vocabulary"));
            }
        }
        Ok(())
    }

    /// Mean losses without gradients.
    pub fn loss(&self, batch: &[Sample], value_weight: f64) -> Result<LossParts> {
        self.loss_impl(batch, value_weight, None)
    }

    /// Mean losses and the exact gradient of `total` with respect to every weight.
    pub fn loss_and_grad(&self, batch: &[Sample], value_weight: f64) -> Result<(LossParts, Vec<f64>)> {
        let mut grad = vec![0.0; self.weights.len()];
        let parts = self.loss_impl(batch, value_weight, Some(&mut grad))?;
        Ok((parts, grad))
    }

    fn loss_impl(&self, batch: &[Sample], value_weight: f64, mut grad: Option<&mut Vec<f64>>) -> Result<LossParts> {
        self.check_batch(batch)?;
        let w = &self.weights;
        let lay = &self.layout;
        let bsz = batch.len();
        let (h, e) = (self.arch.hidden, self.arch.embed_dim);
        let n_pos = self.arch.tokenizer.tokens_per_factor();

        let mut x = Array2::zeros((bsz, self.arch.input_dim()));
        for (mut row, s) in x.axis_iter_mut(Axis(0)).zip(batch) {
            row.assign(&ArrayView1::from(&s.features));
        }
        let (h1, h2) = self.torso_batch(&x.view());
        let value = self.value_of(&h2.view());

        let mut vmse = 0.0;
        let mut dv = Array1::zeros(bsz);
        for (i, s) in batch.iter().enumerate() {
            let err = value[i] - s.rank_to_go;
            vmse += err * err;
            dv[i] = 2.0 * value_weight * err / bsz as f64;
        }
        vmse /= bsz as f64;

        let emb = view2(w, self.block(lay.embed));
        let mut dh2 = Array2::<f64>::zeros((bsz, h));
        let mut ce_sum = 0.0;
        let ce_scale = 1.0 / (bsz * n_pos) as f64;

        for (p, head) in lay.heads.iter().enumerate() {
            let mut input = Array2::zeros((bsz, h + p * e));
            input.slice_mut(s![.., ..h]).assign(&h2);
            for (i, smp) in batch.iter().enumerate() {
                for k in 0..p {
                    input
                        .slice_mut(s![i, h + k * e..h + (k + 1) * e])
                        .assign(&emb.row(smp.tokens[k] as usize));
                }
            }
            let mut g = input.dot(&view2(w, self.block(head.wq)));
            g += &view1(w, self.block(head.bq));
            relu_inplace(&mut g);
            let mut logits = g.dot(&view2(w, self.block(head.wo)));
            logits += &view1(w, self.block(head.bo));

            // Softmax in place; logits become dL/dlogits.
            for (i, mut row) in logits.axis_iter_mut(Axis(0)).enumerate() {
                let target = batch[i].tokens[p] as usize;
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let mut z = 0.0;
                row.mapv_inplace(|v| {
                    let ev = (v - max).exp();
                    z += ev;
                    ev
                });
                ce_sum += -(row[target] / z).ln();
                row.mapv_inplace(|v| v / z * ce_scale);
                row[target] -= ce_scale;
            }
            let Some(grad) = grad.as_deref_mut() else {
                continue;
            };
            let dlogits = logits;
            general_mat_mul(1.0, &g.t(), &dlogits, 1.0, &mut view2_mut(grad, self.block(head.wo)));
            view1_mut(grad, self.block(head.bo)).scaled_add(1.0, &dlogits.sum_axis(Axis(0)));
            let mut dg = dlogits.dot(&view2(w, self.block(head.wo)).t());
            dg.zip_mut_with(&g, |d, &gv| {
                if gv <= 0.0 {
                    *d = 0.0
                }
            });
            general_mat_mul(1.0, &input.t(), &dg, 1.0, &mut view2_mut(grad, self.block(head.wq)));
            view1_mut(grad, self.block(head.bq)).scaled_add(1.0, &dg.sum_axis(Axis(0)));
            let dinput = dg.dot(&view2(w, self.block(head.wq)).t());
            dh2 += &dinput.slice(s![.., ..h]);
            if p > 0 {
                let mut demb = view2_mut(grad, self.block(lay.embed));
                for (i, smp) in batch.iter().enumerate() {
                    for k in 0..p {
                        let mut row = demb.row_mut(smp.tokens[k] as usize);
                        row += &dinput.slice(s![i, h + k * e..h + (k + 1) * e]);
                    }
                }
            }
        }
        let ce = ce_sum / (bsz * n_pos) as f64;
        let total = ce + value_weight * vmse;
        let parts = LossParts { total, ce, vmse };
        if !total.is_finite() {
            return Err(Error::Training(format!("non-finite loss (ce={ce}, vmse={vmse})")));
        }

        let Some(grad) = grad else {
            return Ok(parts);
        };
        // Value head.
        view1_mut(grad, self.block(lay.vw)).scaled_add(1.0, &h2.t().dot(&dv));
        grad[self.block(lay.vb).offset] += dv.sum();
        let vw = view1(w, self.block(lay.vw));
        for (mut row, &d) in dh2.axis_iter_mut(Axis(0)).zip(dv.iter()) {
            row.scaled_add(d, &vw);
        }
        // Torso.
        let mut dz2 = dh2;
        dz2.zip_mut_with(&h2, |d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        general_mat_mul(1.0, &h1.t(), &dz2, 1.0, &mut view2_mut(grad, self.block(lay.w2)));
        view1_mut(grad, self.block(lay.b2)).scaled_add(1.0, &dz2.sum_axis(Axis(0)));
        let mut dz1 = dz2.dot(&view2(w, self.block(lay.w2)).t());
        dz1.zip_mut_with(&h1, |d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        general_mat_mul(1.0, &x.t(), &dz1, 1.0, &mut view2_mut(grad, self.block(lay.w1)));
        view1_mut(grad, self.block(lay.b1)).scaled_add(1.0, &dz1.sum_axis(Axis(0)));
        Ok(parts)
    }
}
