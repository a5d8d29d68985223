//! Supervised training on demonstrations.
//!
//! A producer thread turns demos into shuffled mini-batches (basis change,
//! order shuffling and featurization all happen there) and feeds them
//! through a bounded channel to the single thread that owns the weights.
//! Every random choice comes from streams derived from `TrainConfig::seed`
//! and the epoch number, so results do not depend on thread timing.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread;

use rand::seq::SliceRandom;
use rand::Rng;

use super::network::{Architecture, LossParts, ModelParams, Sample};
use super::optim::{Adam, AdamConfig, LrSchedule};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use crate::synth::{augment_basis, redundancy_check, shuffle_actions, BasisAugment, Demo, FilterConfig};
use crate::tensor::apply_factor;

const STREAM_SPLIT: u64 = 1;
const STREAM_EPOCH: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

/// Which data tricks are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Toggles {
    /// Train on canonical targets; when off, each target is replaced by a
    /// random member of its sign orbit.
    pub canonicalization: bool,
    pub basis_change: bool,
    pub order_shuffle: bool,
    /// Drop demos that fail the redundancy check from the training split.
    pub redundancy_filter: bool,
}

/// The three configurations compared in the loss-curve ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    Augmented,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Augmented, Variant::Full];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Augmented => "augmented",
            Variant::Full => "full",
        }
    }

    pub fn toggles(self) -> Toggles {
        Toggles {
            canonicalization: true,
            basis_change: true,
            order_shuffle: self != Variant::Baseline,
            redundancy_filter: self == Variant::Full,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| Error::usage(format!("unknown variant {s:?} (baseline|augmented|full)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Last epoch to run (1-based). A resumed run continues from `start_epoch + 1`.
    pub epochs: usize,
    pub start_epoch: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub adam: AdamConfig,
    pub value_weight: f64,
    pub shuffle_period: usize,
    pub variant: Variant,
    pub toggles: Toggles,
    /// Chance that a demo is seen through a fresh basis change in a given epoch.
    pub basis_prob: f64,
    pub basis: BasisAugment,
    pub filter: FilterConfig,
    pub seed: u64,
    pub held_out_fraction: f64,
    /// Batches buffered between the producer and the optimizer.
    pub queue_depth: usize,
}

impl TrainConfig {
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            epochs: 100,
            start_epoch: 0,
            batch_size: 64,
            lr: LrSchedule::default(),
            adam: AdamConfig::default(),
            value_weight: 0.25,
            shuffle_period: 10,
            variant,
            toggles: variant.toggles(),
            basis_prob: 0.5,
            basis: BasisAugment::default(),
            filter: FilterConfig::default(),
            seed: 0,
            held_out_fraction: 0.1,
            queue_depth: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shuffle_period == 0 {
            return Err(Error::usage("shuffle period must be at least 1"));
        }
        if self.batch_size == 0 || self.queue_depth == 0 {
            return Err(Error::usage("batch size and queue depth must be positive"));
        }
        if !self.lr.is_valid() {
            return Err(Error::usage("invalid learning-rate schedule"));
        }
        if !(0.0..=1.0).contains(&self.basis_prob) || !(0.0..1.0).contains(&self.held_out_fraction) {
            return Err(Error::usage("probabilities must lie in [0, 1]"));
        }
        if !(self.value_weight >= 0.0 && self.value_weight.is_finite()) {
            return Err(Error::usage("value weight must be a non-negative number"));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_variant(Variant::Full)
    }
}

/// Losses recorded at the end of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the mini-batch losses seen during the epoch.
    pub train: LossParts,
    pub held: Option<LossParts>,
    /// Order-shuffled pairs in the training pool this epoch.
    pub aug_pairs: usize,
    /// Demos (base plus shuffled) trained on this epoch.
    pub train_pairs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub variant: Variant,
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    /// `epoch=… split=… loss=… ce=… vmse=… variant=…`, one line per split.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let splits = std::iter::once(("train", r.train)).chain(r.held.map(|h| ("held", h)));
            for (split, l) in splits {
                writeln!(
                    out,
                    "epoch={} split={split} loss={:.8} ce={:.8} vmse={:.8} variant={}",
                    r.epoch, l.total, l.ce, l.vmse, self.variant
                )
                .unwrap();
            }
        }
        out
    }

    /// Whitespace-separated table for plotting; held loss is `nan` when absent.
    pub fn loss_table(&self) -> String {
        let mut out = String::from("epoch variant train_loss held_loss aug_pairs train_pairs\n");
        for r in &self.records {
            writeln!(
                out,
                "{} {} {:.8} {:.8} {} {}",
                r.epoch,
                self.variant,
                r.train.total,
                r.held.map_or(f64::NAN, |h| h.total),
                r.aug_pairs,
                r.train_pairs
            )
            .unwrap();
        }
        out
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train.total).collect()
    }

    pub fn held_losses(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.held.map(|h| h.total)).collect()
    }
}

/// Training stopped early; `params` are the weights after `last_good_epoch`.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub params: ModelParams,
    pub last_good_epoch: usize,
    pub log: TrainLog,
}

impl fmt::Display for TrainAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (last good epoch {})", self.error, self.last_good_epoch)
    }
}

impl std::error::Error for TrainAbort {}

/// Per-step samples of one demo: the residual before each factor, that
/// factor's tokens and the number of factors left including it.
pub fn demo_samples(arch: &Architecture, demo: &Demo, canonical: bool, rng: &mut rng::Rng) -> Result<Vec<Sample>> {
    let mut state = demo.tensor().clone();
    let r = demo.rank();
    let mut out = Vec::with_capacity(r);
    for (t, f) in demo.factors().iter().enumerate() {
        let target = if canonical {
            f.clone()
        } else {
            f.sign_orbit()[rng.random_range(0..4)].clone()
        };
        out.push(Sample {
            features: arch.featurize(&state, t)?,
            tokens: arch.tokenizer.tokenize(&target)?,
            rank_to_go: (r - t) as f64,
        });
        state = apply_factor(&state, f)?;
    }
    Ok(out)
}

/// Deterministic split into (train, held-out) demos.
pub fn split_held_out(demos: &[Demo], fraction: f64, seed: u64) -> (Vec<Demo>, Vec<Demo>) {
    let mut order: Vec<usize> = (0..demos.len()).collect();
    order.shuffle(&mut rng::seeded(derive_seed(seed, STREAM_SPLIT)));
    let n_held = ((demos.len() as f64) * fraction).floor() as usize;
    let n_held = n_held.min(demos.len().saturating_sub(1));
    let (held, train) = order.split_at(n_held);
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| demos[i].clone()).collect()
    };
    (pick(train), pick(held))
}

enum Msg {
    Batch(Vec<Sample>),
    EpochEnd { aug_pairs: usize, train_pairs: usize },
    Failed(Error),
}

struct Producer<'a> {
    arch: Architecture,
    cfg: &'a TrainConfig,
    base: Vec<Demo>,
    shuffled: Vec<Demo>,
}

impl Producer<'_> {
    fn add_shuffled(&mut self, epoch: usize) {
        let mut rng = rng::seeded(derive_seed(derive_seed(self.cfg.seed, STREAM_SHUFFLE), epoch as u64));
        let extra: Vec<Demo> = self.base.iter().map(|d| shuffle_actions(d, &mut rng)).collect();
        self.shuffled.extend(extra);
    }

    fn shuffle_due(&self, epoch: usize) -> bool {
        self.cfg.toggles.order_shuffle && epoch.is_multiple_of(self.cfg.shuffle_period)
    }

    fn epoch_samples(&self, epoch: usize) -> Result<Vec<Sample>> {
        let cfg = self.cfg;
        let mut rng = rng::seeded(derive_seed(derive_seed(cfg.seed, STREAM_EPOCH), epoch as u64));
        let mut samples = Vec::new();
        for demo in self.base.iter().chain(&self.shuffled) {
            let moved;
            let demo = if cfg.toggles.basis_change && rng.random_bool(cfg.basis_prob) {
                moved = augment_basis(demo, &mut rng, &cfg.basis).ok();
                moved.as_ref().unwrap_or(demo)
            } else {
                demo
            };
            samples.extend(demo_samples(&self.arch, demo, cfg.toggles.canonicalization, &mut rng)?);
        }
        samples.shuffle(&mut rng);
        Ok(samples)
    }

    fn run(mut self, tx: SyncSender<Msg>) {
        for epoch in 1..=self.cfg.start_epoch {
            if self.shuffle_due(epoch) {
                self.add_shuffled(epoch);
            }
        }
        for epoch in self.cfg.start_epoch + 1..=self.cfg.epochs {
            if self.shuffle_due(epoch) {
                self.add_shuffled(epoch);
            }
            let samples = match self.epoch_samples(epoch) {
                Ok(s) => s,
                Err(e) => {
                    let _ = tx.send(Msg::Failed(e));
                    return;
                }
            };
            for chunk in samples.chunks(self.cfg.batch_size) {
                if tx.send(Msg::Batch(chunk.to_vec())).is_err() {
                    return;
                }
            }
            let end = Msg::EpochEnd {
                aug_pairs: self.shuffled.len(),
                train_pairs: self.base.len() + self.shuffled.len(),
            };
            if tx.send(end).is_err() {
                return;
            }
        }
    }
}

/// Mean losses over `samples`, evaluated in chunks.
pub fn evaluate(params: &ModelParams, samples: &[Sample], value_weight: f64) -> Result<LossParts> {
    const CHUNK: usize = 256;
    let mut acc = LossParts::default();
    for chunk in samples.chunks(CHUNK) {
        let l = params.loss(chunk, value_weight)?;
        let w = chunk.len() as f64 / samples.len() as f64;
        acc.total += w * l.total;
        acc.ce += w * l.ce;
        acc.vmse += w * l.vmse;
    }
    Ok(acc)
}

/// Splits `dataset` by `cfg.held_out_fraction` and trains.
pub fn train(
    dataset: &[Demo],
    cfg: &TrainConfig,
    init: ModelParams,
) -> std::result::Result<(ModelParams, TrainLog), Box<TrainAbort>> {
    let (tr, held) = split_held_out(dataset, cfg.held_out_fraction, cfg.seed);
    train_with_held_out(&tr, &held, cfg, init)
}

/// Trains on `train_demos`, reporting held-out loss on `held_demos` (which
/// are never augmented or filtered) after every epoch.
pub fn train_with_held_out(
    train_demos: &[Demo],
    held_demos: &[Demo],
    cfg: &TrainConfig,
    init: ModelParams,
) -> std::result::Result<(ModelParams, TrainLog), Box<TrainAbort>> {
    let mut log = TrainLog {
        variant: cfg.variant,
        records: Vec::new(),
    };
    let abort = |error, params: ModelParams, epoch, log| {
        Box::new(TrainAbort {
            error,
            params,
            last_good_epoch: epoch,
            log,
        })
    };
    if let Err(e) = cfg.validate() {
        return Err(abort(e, init, cfg.start_epoch, log));
    }
    let base: Vec<Demo> = train_demos
        .iter()
        .filter(|d| !cfg.toggles.redundancy_filter || redundancy_check(d.factors(), cfg.filter).is_clean())
        .cloned()
        .collect();
    if base.is_empty() {
        return Err(abort(
            Error::Training("no training demos".into()),
            init,
            cfg.start_epoch,
            log,
        ));
    }
    let arch = *init.arch();
    let mut held_rng = rng::seeded(derive_seed(cfg.seed, STREAM_SPLIT));
    let mut held = Vec::new();
    for d in held_demos {
        match demo_samples(&arch, d, true, &mut held_rng) {
            Ok(s) => held.extend(s),
            Err(e) => return Err(abort(e, init, cfg.start_epoch, log)),
        }
    }

    let producer = Producer {
        arch,
        cfg,
        base,
        shuffled: Vec::new(),
    };
    let (tx, rx) = sync_channel(cfg.queue_depth);
    let outcome = thread::scope(|scope| {
        scope.spawn(move || producer.run(tx));
        consume(rx, cfg, init, &held, &mut log)
    });
    match outcome {
        Ok(params) => Ok((params, log)),
        Err((e, params, epoch)) => Err(abort(e, params, epoch, log)),
    }
}

type ConsumeError = (Error, ModelParams, usize);

fn consume(
    rx: Receiver<Msg>,
    cfg: &TrainConfig,
    init: ModelParams,
    held: &[Sample],
    log: &mut TrainLog,
) -> std::result::Result<ModelParams, ConsumeError> {
    let mut params = init.clone();
    let mut good = init;
    let mut adam = Adam::new(cfg.adam, params.weights().len());
    let mut epoch = cfg.start_epoch + 1;
    let mut sum = LossParts::default();
    let mut count = 0usize;
    let total_epochs = cfg.epochs;
    for msg in rx {
        match msg {
            Msg::Batch(batch) => {
                let step = params.loss_and_grad(&batch, cfg.value_weight).and_then(|(l, g)| {
                    if g.iter().all(|x| x.is_finite()) {
                        Ok((l, g))
                    } else {
                        Err(Error::Training("non-finite gradient".into()))
                    }
                });
                let (l, g) = match step {
                    Ok(x) => x,
                    Err(e) => return Err((e, good, epoch - 1)),
                };
                let n = batch.len() as f64;
                sum.total += l.total * n;
                sum.ce += l.ce * n;
                sum.vmse += l.vmse * n;
                count += batch.len();
                adam.step(params.weights_mut(), &g, cfg.lr.rate(epoch, total_epochs));
                if !params.is_finite() {
                    return Err((
                        Error::Training(format!("non-finite weights in epoch {epoch}")),
                        good,
                        epoch - 1,
                    ));
                }
            }
            Msg::EpochEnd { aug_pairs, train_pairs } => {
                let c = count.max(1) as f64;
                let train = LossParts {
                    total: sum.total / c,
                    ce: sum.ce / c,
                    vmse: sum.vmse / c,
                };
                let held = if held.is_empty() {
                    None
                } else {
                    match evaluate(&params, held, cfg.value_weight) {
                        Ok(h) => Some(h),
                        Err(e) => return Err((e, good, epoch - 1)),
                    }
                };
                log.records.push(EpochRecord {
                    epoch,
                    train,
                    held,
                    aug_pairs,
                    train_pairs,
                });
                good = params.clone();
                epoch += 1;
                sum = LossParts::default();
                count = 0;
            }
            Msg::Failed(e) => return Err((e, good, epoch - 1)),
        }
    }
    Ok(params)
}
