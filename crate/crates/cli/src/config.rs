//! TOML run configuration.
//!
//! Every field has a default, unknown keys are rejected, and the fully
//! resolved configuration is written next to each command's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mmsearch_core::model::{Architecture, LrSchedule, TokenizerConfig, TrainConfig, Variant};
use mmsearch_core::rng::derive_seed;
use mmsearch_core::search::{DirichletNoise, SearchConfig};
use mmsearch_core::synth::{FilterConfig, FilterMode, GenParams, SignMode};
use mmsearch_core::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gen: GenSection,
    pub train: TrainSection,
    pub search: SearchSection,
    pub run: RunSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub size: usize,
    pub rank_min: usize,
    pub rank_max: usize,
    pub f_max: i32,
    pub sparsity: f64,
    pub pool_size: usize,
    pub entry_cap: i32,
    pub n: usize,
    pub filter: bool,
    /// `duplicate` or `strict`.
    pub filter_mode: String,
    /// `up_to_sign` or `exact`.
    pub sign_mode: String,
    pub max_retries: usize,
}

impl Default for GenSection {
    fn default() -> Self {
        let p = GenParams::default();
        Self {
            size: p.size,
            rank_min: p.rank_min,
            rank_max: p.rank_max,
            f_max: p.f_max,
            sparsity: p.sparsity,
            pool_size: p.pool_size,
            entry_cap: p.entry_cap,
            n: 1000,
            filter: true,
            filter_mode: "duplicate".into(),
            sign_mode: "up_to_sign".into(),
            max_retries: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Cosine decay to this rate; absent for a constant rate.
    pub lr_floor: Option<f64>,
    pub value_weight: f64,
    pub shuffle_period: usize,
    pub basis_prob: f64,
    pub held_out_fraction: f64,
    pub queue_depth: usize,
    pub hidden: usize,
    pub policy_hidden: usize,
    pub embed_dim: usize,
    pub chunk: usize,
    pub max_steps: usize,
    /// Overrides of the variant's toggles.
    pub canonicalization: Option<bool>,
    pub basis_change: Option<bool>,
    pub order_shuffle: Option<bool>,
    pub redundancy_filter: Option<bool>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: 1e-3,
            lr_floor: None,
            value_weight: t.value_weight,
            shuffle_period: t.shuffle_period,
            basis_prob: t.basis_prob,
            held_out_fraction: t.held_out_fraction,
            queue_depth: t.queue_depth,
            hidden: 512,
            policy_hidden: 256,
            embed_dim: 32,
            chunk: 4,
            max_steps: 16,
            canonicalization: None,
            basis_change: None,
            order_shuffle: None,
            redundancy_filter: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub simulations: usize,
    pub candidates: usize,
    pub c_puct: f64,
    pub temperature: f64,
    pub max_depth: usize,
    pub dirichlet_alpha: Option<f64>,
    pub dirichlet_fraction: f64,
    pub temperature_retries: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SearchConfig::default();
        Self {
            simulations: s.simulations,
            candidates: s.candidates,
            c_puct: s.c_puct,
            temperature: s.temperature,
            max_depth: s.max_depth,
            dirichlet_alpha: None,
            dirichlet_fraction: 0.25,
            temperature_retries: s.temperature_retries,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    pub variant: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            variant: Variant::Full.tag().into(),
        }
    }
}

/// Sub-seeds so that generation, training and search draw independent streams.
const TRAIN_STREAM: u64 = 1;
const SEARCH_STREAM: u64 = 2;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::Io { path, source: e })
    }

    pub fn variant(&self) -> Result<Variant> {
        self.run.variant.parse()
    }

    pub fn gen_params(&self) -> GenParams {
        let g = &self.gen;
        GenParams {
            size: g.size,
            rank_min: g.rank_min,
            rank_max: g.rank_max,
            f_max: g.f_max,
            sparsity: g.sparsity,
            pool_size: g.pool_size,
            seed: self.run.seed,
            entry_cap: g.entry_cap,
        }
    }

    pub fn filter(&self) -> Result<Option<FilterConfig>> {
        if !self.gen.filter {
            return Ok(None);
        }
        let mode = match self.gen.filter_mode.as_str() {
            "duplicate" => FilterMode::Duplicate,
            "strict" => FilterMode::Strict,
            other => return Err(Error::Usage(format!("unknown filter_mode {other:?}"))),
        };
        let sign = match self.gen.sign_mode.as_str() {
            "up_to_sign" => SignMode::UpToSign,
            "exact" => SignMode::Exact,
            other => return Err(Error::Usage(format!("unknown sign_mode {other:?}"))),
        };
        Ok(Some(FilterConfig { mode, sign }))
    }

    pub fn architecture(&self, size: usize, f_max: i32) -> Result<Architecture> {
        let t = &self.train;
        let arch = Architecture {
            tokenizer: TokenizerConfig::new(size, f_max, t.chunk)?,
            hidden: t.hidden,
            policy_hidden: t.policy_hidden,
            embed_dim: t.embed_dim,
            max_steps: t.max_steps,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn train_seed(&self) -> u64 {
        derive_seed(self.run.seed, TRAIN_STREAM)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let variant = self.variant()?;
        let mut cfg = TrainConfig::for_variant(variant);
        let mut toggles = variant.toggles();
        toggles.canonicalization = t.canonicalization.unwrap_or(toggles.canonicalization);
        toggles.basis_change = t.basis_change.unwrap_or(toggles.basis_change);
        toggles.order_shuffle = t.order_shuffle.unwrap_or(toggles.order_shuffle);
        toggles.redundancy_filter = t.redundancy_filter.unwrap_or(toggles.redundancy_filter);
        cfg.toggles = toggles;
        cfg.epochs = t.epochs;
        cfg.batch_size = t.batch_size;
        cfg.lr = match t.lr_floor {
            Some(floor) => LrSchedule::Cosine { peak: t.lr, floor },
            None => LrSchedule::Constant(t.lr),
        };
        cfg.value_weight = t.value_weight;
        cfg.shuffle_period = t.shuffle_period;
        cfg.basis_prob = t.basis_prob;
        cfg.basis.f_max = self.gen.f_max;
        cfg.basis.entry_cap = self.gen.entry_cap;
        cfg.held_out_fraction = t.held_out_fraction;
        cfg.queue_depth = t.queue_depth;
        if let Some(f) = self.filter()? {
            cfg.filter = f;
        }
        cfg.seed = self.train_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn search_config(&self) -> Result<SearchConfig> {
        let s = &self.search;
        let cfg = SearchConfig {
            simulations: s.simulations,
            candidates: s.candidates,
            c_puct: s.c_puct,
            temperature: s.temperature,
            max_depth: s.max_depth,
            dirichlet: s.dirichlet_alpha.map(|alpha| DirichletNoise {
                alpha,
                fraction: s.dirichlet_fraction,
            }),
            seed: derive_seed(self.run.seed, SEARCH_STREAM),
            entry_cap: self.gen.entry_cap,
            temperature_retries: s.temperature_retries,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[gen]\nsparsty = 0.5\n").is_err());
        assert!(RunConfig::parse("[extra]\n").is_err());
        let ok = RunConfig::parse("[gen]\nsparsity = 0.5\n[run]\nseed = 3\n").unwrap();
        assert_eq!(ok.gen.sparsity, 0.5);
        assert_eq!(ok.run.seed, 3);
        assert_eq!(ok.gen.rank_max, GenParams::default().rank_max);
    }

    #[test]
    fn toggle_overrides_apply() {
        let cfg = RunConfig::parse("[train]\norder_shuffle = false\n[run]\nvariant = \"augmented\"\n").unwrap();
        let t = cfg.train_config().unwrap();
        assert!(!t.toggles.order_shuffle);
        assert!(t.toggles.basis_change);
        assert_eq!(t.variant, Variant::Augmented);
    }
}
