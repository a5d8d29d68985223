//! Autoregressive factor sampling from the policy head.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use super::network::{softmax, ModelParams, TorsoOutput};
use super::tokenizer::Token;
use crate::error::Result;
use crate::tensor::{Factor, Tensor3};

/// Temperatures at or below this are treated as greedy decoding.
pub const GREEDY_TEMPERATURE: f64 = 1e-8;

/// Extra draws allowed per requested sample when a decode hits a zero vector.
const RETRIES_PER_SAMPLE: usize = 4;

struct Decoder<'a> {
    params: &'a ModelParams,
    torso: TorsoOutput,
    /// Masked next-token log-probabilities (temperature 1), per prefix.
    cache: HashMap<Vec<Token>, Vec<f64>>,
}

impl<'a> Decoder<'a> {
    fn new(params: &'a ModelParams, state: &Tensor3, depth: usize) -> Result<Self> {
        Ok(Self {
            params,
            torso: params.torso(state, depth)?,
            cache: HashMap::new(),
        })
    }

    fn log_probs(&mut self, prefix: &[Token]) -> Result<&[f64]> {
        if !self.cache.contains_key(prefix) {
            let tok = self.params.tokenizer();
            let mut logits = self.params.policy_logits(&self.torso, prefix)?;
            for (t, l) in logits.iter_mut().enumerate() {
                if !tok.is_valid(prefix.len(), t as Token) {
                    *l = f64::NEG_INFINITY;
                }
            }
            let probs = softmax(&logits);
            let lp = probs.into_iter().map(f64::ln).collect();
            self.cache.insert(prefix.to_vec(), lp);
        }
        Ok(&self.cache[prefix])
    }

    fn greedy(&mut self) -> Result<Vec<Token>> {
        let mut seq = Vec::new();
        for _ in 0..self.params.tokenizer().tokens_per_factor() {
            let lp = self.log_probs(&seq)?;
            let best = lp
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (t, &l)| if l > acc.1 { (t, l) } else { acc },
                )
                .0;
            seq.push(best as Token);
        }
        Ok(seq)
    }

    fn sample<R: Rng + ?Sized>(&mut self, temperature: f64, rng: &mut R) -> Result<Vec<Token>> {
        let mut seq = Vec::new();
        for _ in 0..self.params.tokenizer().tokens_per_factor() {
            let lp = self.log_probs(&seq)?;
            let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = lp.iter().map(|&l| ((l - max) / temperature).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut x = rng.random::<f64>() * total;
            let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            for (t, &w) in weights.iter().enumerate() {
                if x < w {
                    pick = t;
                    break;
                }
                x -= w;
            }
            seq.push(pick as Token);
        }
        Ok(seq)
    }

    fn sequence_prob(&mut self, seq: &[Token]) -> Result<f64> {
        let mut lp = 0.0;
        for p in 0..seq.len() {
            lp += self.log_probs(&seq[..p])?[seq[p] as usize];
        }
        Ok(lp.exp())
    }
}

/// Draws up to `k` factors from the policy at `(state, depth)`.
///
/// Each sequence is decoded token by token with logits divided by
/// `temperature`; decodes containing a zero vector are redrawn a bounded
/// number of times. Results are canonicalized and merged. A factor's prior is
/// the untempered model probability of its distinct sampled sequences, summed
/// over the sign orbit and renormalized over the returned set. Output is
/// sorted by factor.
pub fn sample_actions<R: Rng + ?Sized>(
    params: &ModelParams,
    state: &Tensor3,
    depth: usize,
    k: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<(Factor, f64)>> {
    let mut dec = Decoder::new(params, state, depth)?;
    let tok = *params.tokenizer();
    let mut sequences: BTreeMap<Vec<Token>, Factor> = BTreeMap::new();

    if temperature <= GREEDY_TEMPERATURE {
        let seq = dec.greedy()?;
        return Ok(match tok.detokenize(&seq) {
            Ok(f) => vec![(f.canonical(), 1.0)],
            Err(_) => Vec::new(),
        });
    }

    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < k && attempts < k * (1 + RETRIES_PER_SAMPLE) {
        attempts += 1;
        let seq = dec.sample(temperature, rng)?;
        if let Ok(f) = tok.detokenize(&seq) {
            accepted += 1;
            sequences.entry(seq).or_insert(f);
        }
    }

    let mut merged: BTreeMap<Factor, f64> = BTreeMap::new();
    for (seq, f) in &sequences {
        let p = dec.sequence_prob(seq)?;
        *merged.entry(f.canonical()).or_insert(0.0) += p;
    }
    let total: f64 = merged.values().sum();
    let n = merged.len() as f64;
    Ok(merged
        .into_iter()
        .map(|(f, p)| {
            let prior = if total > 0.0 { p / total } else { 1.0 / n };
            (f, prior)
        })
        .collect())
}

/// Highest-probability factor under greedy decoding, if it decodes.
pub fn greedy_factor(params: &ModelParams, state: &Tensor3, depth: usize) -> Result<Option<Factor>> {
    let mut dec = Decoder::new(params, state, depth)?;
    let seq = dec.greedy()?;
    Ok(params.tokenizer().detokenize(&seq).ok())
}
