//! Factors as short token sequences.
//!
//! The `3S` entries of `(u, v, w)` are concatenated, padded with zeros to a
//! multiple of `chunk`, and each chunk becomes one token: its entries, shifted
//! to `0..=2·f_max`, read as base-`(2·f_max + 1)` digits, most significant
//! first.

use crate::error::{Error, Result};
use crate::tensor::Factor;

pub type Token = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenizerConfig {
    pub size: usize,
    pub f_max: i32,
    /// Entries per token.
    pub chunk: usize,
}

impl TokenizerConfig {
    pub fn new(size: usize, f_max: i32, chunk: usize) -> Result<Self> {
        if size == 0 || f_max < 1 || chunk == 0 {
            return Err(Error::usage(format!(
                "invalid tokenizer (S={size}, f_max={f_max}, chunk={chunk})"
            )));
        }
        let cfg = Self { size, f_max, chunk };
        if (cfg.base() as u64)
            .checked_pow(chunk as u32)
            .is_none_or(|v| v > u64::from(u32::MAX))
        {
            return Err(Error::usage("vocabulary too large"));
        }
        Ok(cfg)
    }

    fn base(&self) -> usize {
        (2 * self.f_max + 1) as usize
    }

    pub fn vocab_size(&self) -> usize {
        self.base().pow(self.chunk as u32)
    }

    pub fn tokens_per_factor(&self) -> usize {
        (3 * self.size).div_ceil(self.chunk)
    }

    /// Number of padding entries in the final token.
    pub fn padding(&self) -> usize {
        self.tokens_per_factor() * self.chunk - 3 * self.size
    }

    fn digits(&self, token: Token) -> Vec<i32> {
        let base = self.base() as u32;
        let mut out = vec![0; self.chunk];
        let mut t = token;
        for d in out.iter_mut().rev() {
            *d = (t % base) as i32 - self.f_max;
            t /= base;
        }
        out
    }

    /// Whether `token` may appear at `position` (padding entries must be 0).
    pub fn is_valid(&self, position: usize, token: Token) -> bool {
        if token as usize >= self.vocab_size() || position >= self.tokens_per_factor() {
            return false;
        }
        let pad = self.padding();
        if pad == 0 || position + 1 < self.tokens_per_factor() {
            return true;
        }
        self.digits(token)[self.chunk - pad..].iter().all(|&d| d == 0)
    }

    pub fn tokenize(&self, f: &Factor) -> Result<Vec<Token>> {
        if f.size() != Some(self.size) {
            return Err(Error::usage(format!("factor size does not match S={}", self.size)));
        }
        if !f.in_domain(self.f_max) {
            return Err(Error::usage(format!("factor leaves F = ±{}", self.f_max)));
        }
        let mut entries: Vec<i32> = f.vectors().iter().flat_map(|x| x.iter().copied()).collect();
        entries.resize(self.tokens_per_factor() * self.chunk, 0);
        let base = self.base() as Token;
        Ok(entries
            .chunks(self.chunk)
            .map(|c| c.iter().fold(0, |acc, &e| acc * base + (e + self.f_max) as Token))
            .collect())
    }

    pub fn detokenize(&self, tokens: &[Token]) -> Result<Factor> {
        if tokens.len() != self.tokens_per_factor() {
            return Err(Error::usage(format!(
                "expected {} tokens, got {}",
                self.tokens_per_factor(),
                tokens.len()
            )));
        }
        for (pos, &t) in tokens.iter().enumerate() {
            if !self.is_valid(pos, t) {
                return Err(Error::usage(format!("token {t} invalid at position {pos}")));
            }
        }
        let entries: Vec<i32> = tokens.iter().flat_map(|&t| self.digits(t)).collect();
        let s = self.size;
        Factor::new(
            entries[..s].to_vec(),
            entries[s..2 * s].to_vec(),
            entries[2 * s..3 * s].to_vec(),
        )
    }
}
