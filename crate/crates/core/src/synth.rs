//! Synthetic demonstrations: random factor lists composited into tensors,
//! a per-factor redundancy filter, and the two data augmentations (change
//! of basis and order shuffling).
//!
//! A demonstration is only a *witness*: its tensor may have a shorter
//! decomposition than the one it was built from. The filter in
//! [`redundancy_check`] rejects lists where some factor's six cross outer
//! products `m_x m_yᵀ` (x ≠ y over u, v, w) contain a repeat, which is a
//! sufficient sign that the list is longer than needed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use crate::tensor::{
    change_of_basis_capped, random_basis_transform, transform_factors, verify_decomposition, BasisTransform, Factor,
    Tensor3, DEFAULT_ENTRY_CAP, DEFAULT_F_MAX,
};

/// Parameters of the synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub size: usize,
    /// Number of factors per demo is drawn uniformly from `rank_min..=rank_max`.
    pub rank_min: usize,
    pub rank_max: usize,
    pub f_max: i32,
    /// Probability that a coordinate is zero.
    pub sparsity: f64,
    /// Size of the shared vector pool; 0 draws fresh vectors for every factor.
    pub pool_size: usize,
    pub seed: u64,
    pub entry_cap: i32,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            size: 4,
            rank_min: 3,
            rank_max: 8,
            f_max: DEFAULT_F_MAX,
            sparsity: 0.75,
            pool_size: 0,
            seed: 0,
            entry_cap: DEFAULT_ENTRY_CAP,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::usage("generator size must be positive"));
        }
        if self.rank_min == 0 || self.rank_min > self.rank_max {
            return Err(Error::usage(format!(
                "invalid rank range {}..={}",
                self.rank_min, self.rank_max
            )));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::usage(format!("sparsity {} not in [0, 1)", self.sparsity)));
        }
        if self.f_max < 1 {
            return Err(Error::usage("f_max must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of [`redundancy_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Clean,
    /// Index of the first factor whose cross products repeat.
    Redundant(usize),
}

impl Verdict {
    pub fn is_clean(self) -> bool {
        self == Verdict::Clean
    }
}

/// What counts as "the collection contains the same elements".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FilterMode {
    /// Any two of the six matrices coincide.
    #[default]
    Duplicate,
    /// All six matrices coincide.
    Strict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SignMode {
    Exact,
    /// Matrices equal up to a global sign count as equal.
    #[default]
    UpToSign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct FilterConfig {
    pub mode: FilterMode,
    pub sign: SignMode,
}

fn cross_products(f: &Factor) -> Vec<Vec<i64>> {
    let [u, v, w] = f.vectors();
    let pairs: [(&[i32], &[i32]); 6] = [(u, v), (v, u), (u, w), (w, u), (v, w), (w, v)];
    pairs
        .iter()
        .map(|(x, y)| {
            x.iter()
                .flat_map(|&a| y.iter().map(move |&b| i64::from(a) * i64::from(b)))
                .collect()
        })
        .collect()
}

fn same(a: &[i64], b: &[i64], sign: SignMode) -> bool {
    a == b || (sign == SignMode::UpToSign && a.iter().zip(b).all(|(x, y)| *x == -*y))
}

/// True if this factor's six cross outer products repeat under `cfg`.
pub fn factor_is_redundant(f: &Factor, cfg: FilterConfig) -> bool {
    let mats = cross_products(f);
    match cfg.mode {
        FilterMode::Duplicate => {
            (0..mats.len()).any(|i| (i + 1..mats.len()).any(|j| same(&mats[i], &mats[j], cfg.sign)))
        }
        FilterMode::Strict => mats[1..].iter().all(|m| same(&mats[0], m, cfg.sign)),
    }
}

/// Scans the factors in order and reports the first redundant one.
pub fn redundancy_check(factors: &[Factor], cfg: FilterConfig) -> Verdict {
    factors
        .iter()
        .position(|f| factor_is_redundant(f, cfg))
        .map_or(Verdict::Clean, Verdict::Redundant)
}

/// Provenance of a demo.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemoMeta {
    /// Seed of the RNG stream that generated the demo.
    pub seed: u64,
    /// `+`-joined augmentation history, starting with `gen`.
    pub lineage: String,
    /// Redundant drafts discarded before this demo was accepted.
    pub rejections: u32,
}

/// A tensor together with a canonical factor list that sums to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Demo {
    tensor: Tensor3,
    factors: Vec<Factor>,
    pub meta: DemoMeta,
}

impl Demo {
    /// Checks the decomposition and that every factor is canonical.
    pub fn new(tensor: Tensor3, factors: Vec<Factor>, meta: DemoMeta) -> Result<Self> {
        if let Some(i) = factors.iter().position(|f| !f.is_canonical()) {
            return Err(Error::Corruption(format!("factor {i} is not canonical")));
        }
        if !verify_decomposition(&tensor, &factors) {
            return Err(Error::Corruption("factors do not sum to the demo tensor".to_string()));
        }
        Ok(Self { tensor, factors, meta })
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.tensor
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    fn with_tag(&self, tag: &str) -> DemoMeta {
        DemoMeta {
            lineage: format!("{}+{tag}", self.meta.lineage),
            ..self.meta.clone()
        }
    }
}

/// Draws factors and demos for one dataset. In pool mode the vector pool is
/// fixed at construction from `params.seed`.
#[derive(Clone, Debug)]
pub struct Generator {
    params: GenParams,
    pool: Option<Vec<Vec<i32>>>,
}

impl Generator {
    pub fn new(params: GenParams) -> Result<Self> {
        params.validate()?;
        let pool = (params.pool_size > 0).then(|| {
            let mut rng = rng::seeded(derive_seed(params.seed, u64::MAX));
            (0..params.pool_size).map(|_| fresh_vector(&params, &mut rng)).collect()
        });
        Ok(Self { params, pool })
    }

    pub fn params(&self) -> &GenParams {
        &self.params
    }

    fn vector<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i32> {
        match &self.pool {
            Some(pool) => pool.choose(rng).expect("pool is non-empty").clone(),
            None => fresh_vector(&self.params, rng),
        }
    }

    /// One canonical factor with sparse entries from `F \ {0}`.
    pub fn sample_factor<R: Rng + ?Sized>(&self, rng: &mut R) -> Factor {
        let u = self.vector(rng);
        let v = self.vector(rng);
        let w = self.vector(rng);
        Factor::new(u, v, w).expect("sampled vectors are non-zero").canonical()
    }

    /// Composites a random number of sampled factors. Drafts that overflow
    /// the entry cap are redrawn.
    pub fn generate_demo<R: Rng + ?Sized>(&self, rng: &mut R, seed: u64) -> Result<Demo> {
        const OVERFLOW_RETRIES: usize = 100;
        for _ in 0..OVERFLOW_RETRIES {
            let rank = rng.random_range(self.params.rank_min..=self.params.rank_max);
            let factors: Vec<Factor> = (0..rank).map(|_| self.sample_factor(rng)).collect();
            if let Ok(tensor) = Tensor3::from_factors(self.params.size, &factors, self.params.entry_cap) {
                let meta = DemoMeta {
                    seed,
                    lineage: "gen".to_string(),
                    rejections: 0,
                };
                return Demo::new(tensor, factors, meta);
            }
        }
        Err(Error::Generation(format!(
            "every draft overflowed the entry cap (seed {seed})"
        )))
    }

    /// Redraws until [`redundancy_check`] passes, at most `max_retries` drafts.
    pub fn generate_filtered_demo<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        seed: u64,
        max_retries: usize,
        filter: FilterConfig,
    ) -> Result<FilteredDemo> {
        if max_retries == 0 {
            return Err(Error::usage("max_retries must be at least 1"));
        }
        let mut rejected = Vec::new();
        for _ in 0..max_retries {
            let mut demo = self.generate_demo(rng, seed)?;
            match redundancy_check(demo.factors(), filter) {
                Verdict::Clean => {
                    demo.meta.rejections = rejected.len() as u32;
                    return Ok(FilteredDemo { demo, rejected });
                }
                Verdict::Redundant(i) => rejected.push(i),
            }
        }
        Err(Error::Generation(format!(
            "{max_retries} consecutive drafts were redundant (seed {seed})"
        )))
    }
}

fn fresh_vector<R: Rng + ?Sized>(params: &GenParams, rng: &mut R) -> Vec<i32> {
    loop {
        let x: Vec<i32> = (0..params.size)
            .map(|_| {
                if rng.random_bool(params.sparsity) {
                    0
                } else {
                    let mag = rng.random_range(1..=params.f_max);
                    if rng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                }
            })
            .collect();
        if x.iter().any(|&e| e != 0) {
            return x;
        }
    }
}

/// A demo accepted by the filter plus the redundancy index of every draft
/// rejected on the way.
#[derive(Clone, Debug)]
pub struct FilteredDemo {
    pub demo: Demo,
    pub rejected: Vec<usize>,
}

/// Counts gathered while generating a dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GenStats {
    /// Drafts generated, accepted or not.
    pub total_generated: usize,
    pub rejected: usize,
    /// Redundancy index → number of rejected drafts.
    pub histogram: BTreeMap<usize, usize>,
}

impl GenStats {
    pub fn rejection_fraction(&self) -> f64 {
        if self.total_generated == 0 {
            0.0
        } else {
            self.rejected as f64 / self.total_generated as f64
        }
    }

    pub fn record(&mut self, verdict: Verdict) {
        self.total_generated += 1;
        if let Verdict::Redundant(i) = verdict {
            self.rejected += 1;
            *self.histogram.entry(i).or_default() += 1;
        }
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        writeln!(out, "total_generated={}", self.total_generated).unwrap();
        writeln!(out, "rejected={}", self.rejected).unwrap();
        writeln!(out, "rejection_fraction={:.6}", self.rejection_fraction()).unwrap();
        let hist: Vec<String> = self.histogram.iter().map(|(i, n)| format!("{i}:{n}")).collect();
        writeln!(out, "redundancy_index_histogram={}", hist.join(",")).unwrap();
        out
    }
}

/// Generates `n` demos; demo `i` uses the stream `derive_seed(params.seed, i)`.
/// With a filter, redundant drafts are discarded and counted in the stats.
pub fn generate_dataset(
    params: &GenParams,
    n: usize,
    filter: Option<FilterConfig>,
    max_retries: usize,
) -> Result<(Vec<Demo>, GenStats)> {
    let generator = Generator::new(params.clone())?;
    let mut stats = GenStats::default();
    let mut demos = Vec::with_capacity(n);
    for i in 0..n {
        let seed = derive_seed(params.seed, i as u64);
        let mut rng = rng::seeded(seed);
        match filter {
            Some(cfg) => {
                let out = generator.generate_filtered_demo(&mut rng, seed, max_retries, cfg)?;
                for &r in &out.rejected {
                    stats.record(Verdict::Redundant(r));
                }
                stats.record(Verdict::Clean);
                demos.push(out.demo);
            }
            None => {
                demos.push(generator.generate_demo(&mut rng, seed)?);
                stats.record(Verdict::Clean);
            }
        }
    }
    Ok((demos, stats))
}

/// What to do with transformed factors that leave `F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BasisClip {
    /// Draw a new transform.
    #[default]
    Reject,
    Keep,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisAugment {
    /// Elementary row operations per matrix.
    pub ops: usize,
    /// Bound on transform matrix entries.
    pub max_entry: i32,
    pub clip: BasisClip,
    pub f_max: i32,
    pub retries: usize,
    pub entry_cap: i32,
}

impl Default for BasisAugment {
    fn default() -> Self {
        Self {
            ops: 3,
            max_entry: 2,
            clip: BasisClip::Reject,
            f_max: DEFAULT_F_MAX,
            retries: 16,
            entry_cap: DEFAULT_ENTRY_CAP,
        }
    }
}

/// Applies a fixed transform; `None` if a factor leaves `F` under
/// [`BasisClip::Reject`] or the tensor overflows.
pub fn apply_basis(demo: &Demo, bt: &BasisTransform, cfg: &BasisAugment) -> Option<Demo> {
    let moved = transform_factors(demo.factors(), bt, cfg.f_max);
    if cfg.clip == BasisClip::Reject && moved.iter().any(|(_, ok)| !ok) {
        return None;
    }
    let tensor = change_of_basis_capped(demo.tensor(), bt, cfg.entry_cap).ok()?;
    let factors = moved.into_iter().map(|(f, _)| f.canonical()).collect();
    Demo::new(tensor, factors, demo.with_tag("basis")).ok()
}

/// Change-of-basis augmentation with a random unimodular transform.
pub fn augment_basis<R: Rng + ?Sized>(demo: &Demo, rng: &mut R, cfg: &BasisAugment) -> Result<Demo> {
    let size = demo.tensor().size();
    for _ in 0..cfg.retries.max(1) {
        let bt = random_basis_transform(size, cfg.ops, cfg.max_entry, rng);
        if let Some(out) = apply_basis(demo, &bt, cfg) {
            return Ok(out);
        }
    }
    Err(Error::Generation(format!(
        "no admissible basis transform in {} tries",
        cfg.retries
    )))
}

/// Swaps one uniformly chosen factor with a uniformly chosen other position.
/// Single-factor demos are returned unchanged.
pub fn shuffle_actions<R: Rng + ?Sized>(demo: &Demo, rng: &mut R) -> Demo {
    let r = demo.rank();
    if r < 2 {
        return demo.clone();
    }
    let i = rng.random_range(0..r);
    let mut j = rng.random_range(0..r - 1);
    if j >= i {
        j += 1;
    }
    let mut factors = demo.factors.clone();
    factors.swap(i, j);
    Demo {
        tensor: demo.tensor.clone(),
        factors,
        meta: demo.with_tag("shuffle"),
    }
}
