//! Guided Monte Carlo tree search over factor choices, and the outer loop
//! that peels factors off a tensor until it is zero.
//!
//! Returns are negative costs: every applied factor costs 1, reaching the
//! zero tensor costs nothing more, hitting the depth limit costs
//! [`rank_upper_bound`] of the residual, and an unexpanded leaf costs the
//! guide's rank-to-go estimate. On a successful path the total return is
//! minus the number of factors.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use rand_distr::{Distribution, Gamma};

use crate::certificate::factor_line;
use crate::error::{Error, Result};
use crate::model::{sample_actions, ModelParams};
use crate::rng::{self, derive_seed};
use crate::tensor::{apply_factor_capped, rank_upper_bound, verify_decomposition, Factor, Tensor3, DEFAULT_ENTRY_CAP};

/// Anything that can propose factors and estimate rank-to-go.
pub trait Guide {
    /// Estimated number of factors still needed from `state`.
    fn value(&self, state: &Tensor3, depth: usize) -> Result<f64>;

    /// Estimates for several states at the same depth.
    fn values(&self, states: &[&Tensor3], depth: usize) -> Result<Vec<f64>> {
        states.iter().map(|s| self.value(s, depth)).collect()
    }

    /// Candidate factors with priors.
    fn propose(
        &self,
        state: &Tensor3,
        depth: usize,
        k: usize,
        temperature: f64,
        rng: &mut rng::Rng,
    ) -> Result<Vec<(Factor, f64)>>;
}

impl Guide for ModelParams {
    fn value(&self, state: &Tensor3, depth: usize) -> Result<f64> {
        Ok(self.torso(state, depth)?.value.max(0.0))
    }

    fn values(&self, states: &[&Tensor3], depth: usize) -> Result<Vec<f64>> {
        Ok(ModelParams::values(self, states, depth)?
            .into_iter()
            .map(|v| v.max(0.0))
            .collect())
    }

    fn propose(
        &self,
        state: &Tensor3,
        depth: usize,
        k: usize,
        temperature: f64,
        rng: &mut rng::Rng,
    ) -> Result<Vec<(Factor, f64)>> {
        sample_actions(self, state, depth, k, temperature, rng)
    }
}

/// Root exploration noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletNoise {
    pub alpha: f64,
    /// Weight of the noise in the mixed prior.
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub simulations: usize,
    /// Factors requested from the guide per expansion.
    pub candidates: usize,
    pub c_puct: f64,
    pub temperature: f64,
    /// Depth limit `R_limit`; states at this depth are not expanded.
    pub max_depth: usize,
    pub dirichlet: Option<DirichletNoise>,
    pub seed: u64,
    pub entry_cap: i32,
    /// Extra attempts, each at doubled temperature, when a move finds no candidates.
    pub temperature_retries: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            simulations: 400,
            candidates: 16,
            c_puct: 1.25,
            temperature: 1.0,
            max_depth: 12,
            dirichlet: None,
            seed: 0,
            entry_cap: DEFAULT_ENTRY_CAP,
            temperature_retries: 2,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 || self.simulations < self.candidates {
            return Err(Error::usage(format!(
                "need simulations ({}) >= candidates ({}) >= 1",
                self.simulations, self.candidates
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::usage("max depth must be at least 1"));
        }
        if !(self.c_puct >= 0.0 && self.c_puct.is_finite()) || !(self.temperature >= 0.0) {
            return Err(Error::usage("c_puct and temperature must be non-negative"));
        }
        Ok(())
    }
}

/// Per-child statistics at the root.
#[derive(Clone, Debug, PartialEq)]
pub struct ChildStats {
    pub factor: Factor,
    pub prior: f64,
    pub visits: u32,
    /// Mean return of visits, or the initial estimate if unvisited.
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchStats {
    pub simulations: usize,
    /// Root children in factor order.
    pub children: Vec<ChildStats>,
    /// Simulations that ended on the zero tensor.
    pub terminal_hits: usize,
    pub nodes: usize,
}

impl SearchStats {
    pub fn total_visits(&self) -> u64 {
        self.children.iter().map(|c| u64::from(c.visits)).sum()
    }

    pub fn visits_csv(&self) -> String {
        let v: Vec<String> = self.children.iter().map(|c| c.visits.to_string()).collect();
        v.join(",")
    }

    /// One line per child: `n=… q=… p=… factor=…`.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for c in &self.children {
            writeln!(
                out,
                "n={} q={:.6} p={:.6} factor={}",
                c.visits,
                c.q,
                c.prior,
                factor_line(&c.factor)
            )
            .unwrap();
        }
        out
    }
}

/// Index of the move to play: most visits, then higher `q`, then the
/// earliest child (children are in factor order).
pub fn select_move(children: &[ChildStats]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in children.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let cb = &children[b];
                c.visits > cb.visits || (c.visits == cb.visits && c.q > cb.q)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

struct Edge {
    factor: Factor,
    prior: f64,
    n: u32,
    w: f64,
    init_q: f64,
    child: usize,
}

impl Edge {
    fn q(&self) -> f64 {
        if self.n > 0 {
            self.w / f64::from(self.n)
        } else {
            self.init_q
        }
    }
}

struct Node {
    state: Tensor3,
    depth: usize,
    /// Cost-to-go estimate: 0 at the zero tensor, the rank upper bound at the
    /// depth limit, otherwise the guide's value.
    cost: f64,
    expanded: bool,
    edges: Vec<Edge>,
}

impl Node {
    fn is_leaf_terminal(&self, max_depth: usize) -> bool {
        self.state.is_zero() || self.depth >= max_depth
    }
}

struct Tree<'a, G: Guide + ?Sized> {
    guide: &'a G,
    cfg: &'a SearchConfig,
    nodes: Vec<Node>,
    table: HashMap<(Vec<i32>, usize), usize>,
}

impl<G: Guide + ?Sized> Tree<'_, G> {
    /// Node ids for `states` at `depth`, creating missing ones with batched
    /// guide evaluation.
    fn intern(&mut self, states: Vec<Tensor3>, depth: usize) -> Result<Vec<usize>> {
        let mut ids = vec![usize::MAX; states.len()];
        let mut fresh: Vec<usize> = Vec::new();
        for (i, s) in states.iter().enumerate() {
            match self.table.get(&(s.entries().to_vec(), depth)) {
                Some(&id) => ids[i] = id,
                None => fresh.push(i),
            }
        }
        let need_value: Vec<&Tensor3> = fresh
            .iter()
            .map(|&i| &states[i])
            .filter(|s| !s.is_zero() && depth < self.cfg.max_depth)
            .collect();
        let mut values = self.guide.values(&need_value, depth)?.into_iter();
        for (i, s) in states.into_iter().enumerate() {
            if ids[i] != usize::MAX {
                continue;
            }
            let key = (s.entries().to_vec(), depth);
            if let Some(&id) = self.table.get(&key) {
                // Duplicate state within this batch; its value was computed twice.
                if !s.is_zero() && depth < self.cfg.max_depth {
                    values.next();
                }
                ids[i] = id;
                continue;
            }
            let cost = if s.is_zero() {
                0.0
            } else if depth >= self.cfg.max_depth {
                rank_upper_bound(&s) as f64
            } else {
                values.next().expect("one value per fresh state")
            };
            let id = self.nodes.len();
            self.nodes.push(Node {
                state: s,
                depth,
                cost,
                expanded: false,
                edges: Vec::new(),
            });
            self.table.insert(key, id);
            ids[i] = id;
        }
        Ok(ids)
    }

    fn expand(&mut self, id: usize, temperature: f64, rng: &mut rng::Rng) -> Result<()> {
        let (state, depth) = (self.nodes[id].state.clone(), self.nodes[id].depth);
        let mut proposals = self
            .guide
            .propose(&state, depth, self.cfg.candidates, temperature, rng)?;
        for (f, _) in &mut proposals {
            *f = f.canonical();
        }
        proposals.sort_by(|a, b| a.0.cmp(&b.0));
        proposals.dedup_by(|later, first| {
            if later.0 == first.0 {
                first.1 += later.1;
                true
            } else {
                false
            }
        });
        let mut kept = Vec::new();
        let mut children = Vec::new();
        for (f, p) in proposals {
            if f.size() != Some(state.size()) {
                continue;
            }
            if let Ok(next) = apply_factor_capped(&state, &f, self.cfg.entry_cap) {
                kept.push((f, p));
                children.push(next);
            }
        }
        let ids = self.intern(children, depth + 1)?;
        let total: f64 = kept.iter().map(|(_, p)| p).sum();
        let n = kept.len() as f64;
        let edges = kept
            .into_iter()
            .zip(ids)
            .map(|((factor, p), child)| Edge {
                factor,
                prior: if total > 0.0 { p / total } else { 1.0 / n },
                n: 0,
                w: 0.0,
                init_q: -1.0 - self.nodes[child].cost,
                child,
            })
            .collect();
        let node = &mut self.nodes[id];
        node.edges = edges;
        node.expanded = true;
        Ok(())
    }

    fn add_noise(&mut self, id: usize, noise: DirichletNoise, rng: &mut rng::Rng) -> Result<()> {
        let edges = &mut self.nodes[id].edges;
        if edges.is_empty() {
            return Ok(());
        }
        let gamma = Gamma::new(noise.alpha, 1.0).map_err(|e| Error::usage(format!("dirichlet alpha: {e}")))?;
        let draws: Vec<f64> = edges.iter().map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 {
            for (e, d) in edges.iter_mut().zip(draws) {
                e.prior = (1.0 - noise.fraction) * e.prior + noise.fraction * d / sum;
            }
        }
        Ok(())
    }

    fn select(&self, id: usize) -> usize {
        let edges = &self.nodes[id].edges;
        let qs: Vec<f64> = edges.iter().map(Edge::q).collect();
        let lo = qs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: u32 = edges.iter().map(|e| e.n).sum();
        let sqrt_total = f64::from(total).sqrt();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, (e, &q)) in edges.iter().zip(&qs).enumerate() {
            let qn = if hi - lo > 1e-12 { (q - lo) / (hi - lo) } else { 0.5 };
            let score = qn + self.cfg.c_puct * e.prior * sqrt_total / (1.0 + f64::from(e.n));
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }

    /// One select → expand → evaluate → backup pass. Returns whether it
    /// ended on the zero tensor.
    fn simulate(&mut self, root: usize, rng: &mut rng::Rng) -> Result<bool> {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut id = root;
        let (mut g, terminal) = loop {
            let node = &self.nodes[id];
            if node.is_leaf_terminal(self.cfg.max_depth) {
                break (-node.cost, node.state.is_zero());
            }
            if !node.expanded {
                self.expand(id, self.cfg.temperature, rng)?;
                break (-self.nodes[id].cost, false);
            }
            if node.edges.is_empty() {
                break (-node.cost, false);
            }
            let e = self.select(id);
            path.push((id, e));
            id = self.nodes[id].edges[e].child;
        };
        for &(node, e) in path.iter().rev() {
            g -= 1.0;
            let edge = &mut self.nodes[node].edges[e];
            edge.n += 1;
            edge.w += g;
        }
        Ok(terminal)
    }
}

/// Runs `cfg.simulations` simulations from `(t, depth)` and picks a move.
pub fn mcts_search<G: Guide + ?Sized>(
    t: &Tensor3,
    depth: usize,
    guide: &G,
    cfg: &SearchConfig,
    rng: &mut rng::Rng,
) -> Result<(Factor, SearchStats)> {
    cfg.validate()?;
    if t.is_zero() {
        return Err(Error::usage("search target is already zero"));
    }
    if depth >= cfg.max_depth {
        return Err(Error::usage(format!("depth {depth} is at the limit {}", cfg.max_depth)));
    }
    let stats = search_stats(t, depth, guide, cfg, cfg.temperature, rng)?;
    let pick = select_move(&stats.children)
        .ok_or_else(|| Error::Search(format!("no valid candidate factors at depth {depth}")))?;
    Ok((stats.children[pick].factor.clone(), stats))
}

/// Search statistics after `cfg.simulations` simulations (possibly zero).
pub fn search_stats<G: Guide + ?Sized>(
    t: &Tensor3,
    depth: usize,
    guide: &G,
    cfg: &SearchConfig,
    temperature: f64,
    rng: &mut rng::Rng,
) -> Result<SearchStats> {
    let cfg = SearchConfig {
        temperature,
        ..cfg.clone()
    };
    let mut tree = Tree {
        guide,
        cfg: &cfg,
        nodes: Vec::new(),
        table: HashMap::new(),
    };
    let root = tree.intern(vec![t.clone()], depth)?[0];
    let mut terminal_hits = 0;
    for sim in 0..cfg.simulations {
        if tree.simulate(root, rng)? {
            terminal_hits += 1;
        }
        if sim == 0 {
            if let Some(noise) = cfg.dirichlet {
                tree.add_noise(root, noise, rng)?;
            }
        }
    }
    let children = tree.nodes[root]
        .edges
        .iter()
        .map(|e| ChildStats {
            factor: e.factor.clone(),
            prior: e.prior,
            visits: e.n,
            q: e.q(),
        })
        .collect();
    Ok(SearchStats {
        simulations: cfg.simulations,
        children,
        terminal_hits,
        nodes: tree.nodes.len(),
    })
}

/// One move of a decomposition episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep {
    pub step: usize,
    pub residual_nnz: usize,
    pub chosen: Factor,
    pub visits: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub target: Tensor3,
    pub factors: Vec<Factor>,
    pub residual: Tensor3,
    pub success: bool,
    pub steps: Vec<EpisodeStep>,
}

impl Decomposition {
    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    /// `step=… residual_nnz=… chosen=… visits=…` per move, then `result=… rank=…`.
    pub fn episode_log(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let visits: Vec<String> = s.visits.iter().map(u32::to_string).collect();
            writeln!(
                out,
                "step={} residual_nnz={} chosen={} visits={}",
                s.step,
                s.residual_nnz,
                factor_line(&s.chosen),
                visits.join(",")
            )
            .unwrap();
        }
        let result = if self.success { "success" } else { "fail" };
        writeln!(out, "result={result} rank={}", self.rank()).unwrap();
        out
    }
}

/// A search error together with the episode up to the failing move.
#[derive(Debug)]
pub struct SearchFailure {
    pub error: Error,
    pub partial: Decomposition,
}

impl fmt::Display for SearchFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} factors", self.error, self.partial.rank())
    }
}

impl std::error::Error for SearchFailure {}

/// Applies searched factors until the residual is zero or `cfg.max_depth`
/// factors have been used. Move `t` draws from `derive_seed(cfg.seed, t)`.
pub fn decompose<G: Guide + ?Sized>(
    t: &Tensor3,
    guide: &G,
    cfg: &SearchConfig,
) -> std::result::Result<Decomposition, Box<SearchFailure>> {
    let mut dec = Decomposition {
        target: t.clone(),
        factors: Vec::new(),
        residual: t.clone(),
        success: false,
        steps: Vec::new(),
    };
    let fail = |error, partial| Box::new(SearchFailure { error, partial });
    if let Err(e) = cfg.validate() {
        return Err(fail(e, dec));
    }
    for step in 0..cfg.max_depth {
        if dec.residual.is_zero() {
            break;
        }
        let mut rng = rng::seeded(derive_seed(cfg.seed, step as u64));
        let mut temperature = cfg.temperature;
        let mut outcome = search_stats(&dec.residual, step, guide, cfg, temperature, &mut rng);
        for _ in 0..cfg.temperature_retries {
            match &outcome {
                Ok(s) if s.children.is_empty() => {
                    temperature = (temperature * 2.0).max(1.0);
                    outcome = search_stats(&dec.residual, step, guide, cfg, temperature, &mut rng);
                }
                _ => break,
            }
        }
        let stats = match outcome {
            Ok(s) => s,
            Err(e) => return Err(fail(e, dec)),
        };
        let Some(pick) = select_move(&stats.children) else {
            let e = Error::Search(format!("no valid candidate factors at step {step}"));
            return Err(fail(e, dec));
        };
        let chosen = stats.children[pick].factor.clone();
        let next = match apply_factor_capped(&dec.residual, &chosen, cfg.entry_cap) {
            Ok(n) => n,
            Err(e) => return Err(fail(e, dec)),
        };
        dec.steps.push(EpisodeStep {
            step,
            residual_nnz: dec.residual.nnz(),
            chosen: chosen.clone(),
            visits: stats.children.iter().map(|c| c.visits).collect(),
        });
        dec.factors.push(chosen);
        dec.residual = next;
    }
    dec.success = dec.residual.is_zero();
    if dec.success && !verify_decomposition(t, &dec.factors) {
        let e = Error::Corruption("search produced factors that do not sum to the target".into());
        return Err(fail(e, dec));
    }
    Ok(dec)
}

/// Multiplies every leaf evaluation by `scale`; used to check that the move
/// rule does not depend on the scale of values.
pub struct ScaledGuide<'a, G: ?Sized> {
    pub inner: &'a G,
    pub scale: f64,
}

impl<G: Guide + ?Sized> Guide for ScaledGuide<'_, G> {
    fn value(&self, state: &Tensor3, depth: usize) -> Result<f64> {
        Ok(self.scale * self.inner.value(state, depth)?)
    }

    fn values(&self, states: &[&Tensor3], depth: usize) -> Result<Vec<f64>> {
        Ok(self
            .inner
            .values(states, depth)?
            .into_iter()
            .map(|v| self.scale * v)
            .collect())
    }

    fn propose(
        &self,
        state: &Tensor3,
        depth: usize,
        k: usize,
        temperature: f64,
        rng: &mut rng::Rng,
    ) -> Result<Vec<(Factor, f64)>> {
        self.inner.propose(state, depth, k, temperature, rng)
    }
}

/// A guide that proposes a fixed list (uniform prior) and values states by
/// [`rank_upper_bound`]. Useful as a model-free baseline.
pub struct FixedGuide {
    pub factors: Vec<Factor>,
}

impl Guide for FixedGuide {
    fn value(&self, state: &Tensor3, _depth: usize) -> Result<f64> {
        Ok(rank_upper_bound(state) as f64)
    }

    fn propose(
        &self,
        _state: &Tensor3,
        _depth: usize,
        _k: usize,
        _temperature: f64,
        _rng: &mut rng::Rng,
    ) -> Result<Vec<(Factor, f64)>> {
        let p = 1.0 / self.factors.len().max(1) as f64;
        Ok(self.factors.iter().map(|f| (f.clone(), p)).collect())
    }
}
