//! Exact rank by exhaustive search, for tiny tensors.
//!
//! Factors are drawn from a small entry set (by default `{-1, 0, 1}`), so the
//! "rank" here is the least number of such factors summing to the tensor.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng;
use crate::search::Guide;
use crate::tensor::{factor_tensor, rank_lower_bound, Factor, Tensor3};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub size: usize,
    pub max_rank: usize,
    /// Allowed factor entries.
    pub entries: Vec<i32>,
    /// Enumerate one representative per sign orbit.
    pub canonical_only: bool,
    /// Largest admissible `((|entries|^S - 1)^3)^max_rank`.
    pub budget: f64,
}

impl OracleConfig {
    pub fn new(size: usize, max_rank: usize) -> Self {
        Self {
            size,
            max_rank,
            entries: vec![-1, 0, 1],
            canonical_only: true,
            budget: 1e13,
        }
    }

    /// Nominal size of the search space.
    pub fn space(&self) -> f64 {
        let per_vector = (self.entries.len() as f64).powi(self.size as i32) - 1.0;
        per_vector.powi(3).powi(self.max_rank as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.size) {
            return Err(Error::usage(format!("oracle size must be 1..=3, got {}", self.size)));
        }
        if self.max_rank > 4 {
            return Err(Error::usage(format!(
                "oracle max rank must be at most 4, got {}",
                self.max_rank
            )));
        }
        if self.entries.iter().all(|&e| e == 0) {
            return Err(Error::usage("entry set needs a non-zero value"));
        }
        let mut sorted = self.entries.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.entries.len() {
            return Err(Error::usage("entry set has repeated values"));
        }
        if self.canonical_only && sorted.iter().any(|e| !sorted.contains(&-e)) {
            return Err(Error::usage(
                "canonical-only enumeration needs a sign-symmetric entry set",
            ));
        }
        let space = self.space();
        if space > self.budget {
            return Err(Error::Budget {
                space,
                budget: self.budget,
            });
        }
        Ok(())
    }
}

fn vectors(size: usize, entries: &[i32]) -> Vec<Vec<i32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..size {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                entries.iter().map(move |&e| {
                    let mut v = prefix.clone();
                    v.push(e);
                    v
                })
            })
            .collect();
    }
    out.retain(|v| v.iter().any(|&e| e != 0));
    out
}

/// Every factor over the entry set (canonical ones only if configured),
/// in increasing order, with one factor kept per distinct rank-one tensor.
pub fn enumerate_factors(cfg: &OracleConfig) -> Vec<Factor> {
    let vs = vectors(cfg.size, &cfg.entries);
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for u in &vs {
        for v in &vs {
            for w in &vs {
                let f = Factor::new(u.clone(), v.clone(), w.clone()).expect("non-zero vectors");
                if cfg.canonical_only && !f.is_canonical() {
                    continue;
                }
                let t = factor_tensor(&f).expect("equal lengths");
                if seen.insert(t.entries().to_vec(), ()).is_none() {
                    out.push(f);
                }
            }
        }
    }
    out.sort();
    out
}

struct Atoms {
    factors: Vec<Factor>,
    tensors: Vec<Vec<i32>>,
    lookup: HashMap<Vec<i32>, usize>,
    max_abs: i32,
}

impl Atoms {
    fn new(cfg: &OracleConfig) -> Self {
        let factors = enumerate_factors(cfg);
        let tensors: Vec<Vec<i32>> = factors
            .iter()
            .map(|f| factor_tensor(f).expect("equal lengths").entries().to_vec())
            .collect();
        let lookup = tensors.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let max_abs = tensors.iter().flatten().map(|e| e.abs()).max().unwrap_or(0);
        Self {
            factors,
            tensors,
            lookup,
            max_abs,
        }
    }
}

struct Dfs<'a> {
    size: usize,
    atoms: &'a Atoms,
    chosen: Vec<usize>,
}

impl Dfs<'_> {
    /// Whether `residual` is a sum of exactly `remaining` atoms with indices
    /// at least `start`; on success `chosen` holds them.
    fn search(&mut self, residual: &[i32], remaining: usize, start: usize) -> bool {
        let max = residual.iter().map(|e| e.abs()).max().unwrap_or(0);
        if max > remaining as i32 * self.atoms.max_abs {
            return false;
        }
        if remaining == 1 {
            return match self.atoms.lookup.get(residual) {
                Some(&i) if i >= start => {
                    self.chosen.push(i);
                    true
                }
                _ => false,
            };
        }
        let t = Tensor3::from_entries(self.size, residual.to_vec(), i32::MAX).expect("sized residual");
        if rank_lower_bound(&t) > remaining {
            return false;
        }
        let mut next = residual.to_vec();
        for i in start..self.atoms.tensors.len() {
            for (n, (r, a)) in next.iter_mut().zip(residual.iter().zip(&self.atoms.tensors[i])) {
                *n = r - a;
            }
            self.chosen.push(i);
            if self.search(&next, remaining - 1, i) {
                return true;
            }
            self.chosen.pop();
        }
        false
    }
}

/// Least `r ≤ cfg.max_rank` with `t` a sum of `r` factors over the entry
/// set, and one such decomposition; `None` if the rank exceeds `max_rank`.
pub fn brute_force_rank(t: &Tensor3, cfg: &OracleConfig) -> Result<Option<(usize, Vec<Factor>)>> {
    cfg.validate()?;
    if t.size() != cfg.size {
        return Err(Error::usage(format!(
            "tensor size {} does not match oracle size {}",
            t.size(),
            cfg.size
        )));
    }
    let atoms = Atoms::new(cfg);
    Ok(search_with(t, cfg.max_rank, &atoms))
}

fn search_with(t: &Tensor3, max_rank: usize, atoms: &Atoms) -> Option<(usize, Vec<Factor>)> {
    if t.is_zero() {
        return Some((0, Vec::new()));
    }
    for r in 1..=max_rank {
        let mut dfs = Dfs {
            size: t.size(),
            atoms,
            chosen: Vec::new(),
        };
        if dfs.search(t.entries(), r, 0) {
            let witness = dfs.chosen.iter().map(|&i| atoms.factors[i].clone()).collect();
            return Some((r, witness));
        }
    }
    None
}

/// Ranks of every tensor reachable with at most `max_rank` factors, built
/// level by level from the zero tensor.
pub struct RankTable {
    size: usize,
    max_rank: usize,
    ranks: HashMap<Vec<i32>, u8>,
    factors: Vec<Factor>,
}

impl RankTable {
    pub fn build(cfg: &OracleConfig) -> Result<Self> {
        cfg.validate()?;
        let atoms = Atoms::new(cfg);
        let zero = vec![0; cfg.size.pow(3)];
        let mut ranks = HashMap::from([(zero.clone(), 0u8)]);
        let mut frontier = vec![zero];
        for r in 1..=cfg.max_rank {
            let mut next = Vec::new();
            for t in &frontier {
                for a in &atoms.tensors {
                    let s: Vec<i32> = t.iter().zip(a).map(|(x, y)| x + y).collect();
                    if !ranks.contains_key(&s) {
                        ranks.insert(s.clone(), r as u8);
                        next.push(s);
                    }
                }
            }
            frontier = next;
        }
        Ok(Self {
            size: cfg.size,
            max_rank: cfg.max_rank,
            ranks,
            factors: atoms.factors,
        })
    }

    /// Exact rank if at most `max_rank`.
    pub fn rank(&self, t: &Tensor3) -> Option<usize> {
        if t.size() != self.size {
            return None;
        }
        self.ranks.get(t.entries()).map(|&r| r as usize)
    }

    pub fn max_rank(&self) -> usize {
        self.max_rank
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }
}

/// Search guide with exact values: proposes every factor over the entry set
/// with a uniform prior and values states by their exact rank, or
/// `max_rank + 1` beyond the table.
pub struct OracleGuide {
    table: RankTable,
}

impl OracleGuide {
    pub fn new(cfg: &OracleConfig) -> Result<Self> {
        Ok(Self {
            table: RankTable::build(cfg)?,
        })
    }

    pub fn table(&self) -> &RankTable {
        &self.table
    }
}

impl Guide for OracleGuide {
    fn value(&self, state: &Tensor3, _depth: usize) -> Result<f64> {
        Ok(self.table.rank(state).unwrap_or(self.table.max_rank + 1) as f64)
    }

    fn propose(
        &self,
        _state: &Tensor3,
        _depth: usize,
        _k: usize,
        _temperature: f64,
        _rng: &mut rng::Rng,
    ) -> Result<Vec<(Factor, f64)>> {
        let p = 1.0 / self.table.factors.len() as f64;
        Ok(self.table.factors.iter().map(|f| (f.clone(), p)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{rank_upper_bound, verify_decomposition};

    fn f(u: &[i32], v: &[i32], w: &[i32]) -> Factor {
        Factor::new(u.to_vec(), v.to_vec(), w.to_vec()).unwrap()
    }

    #[test]
    fn canonical_enumeration_counts() {
        let cfg = OracleConfig::new(2, 2);
        let fs = enumerate_factors(&cfg);
        // 4 choices each for u and v (first non-zero positive), 8 for w.
        assert_eq!(fs.len(), 128);
        assert!(fs.iter().all(Factor::is_canonical));
        let all = OracleConfig {
            canonical_only: false,
            ..cfg
        };
        assert_eq!(enumerate_factors(&all).len(), 128);
    }

    #[test]
    fn zero_and_rank_one() {
        let cfg = OracleConfig::new(2, 3);
        assert_eq!(brute_force_rank(&Tensor3::zeros(2), &cfg).unwrap(), Some((0, vec![])));
        let g = f(&[1, -1], &[0, 1], &[-1, 1]);
        let t = factor_tensor(&g).unwrap();
        let (r, w) = brute_force_rank(&t, &cfg).unwrap().unwrap();
        assert_eq!(r, 1);
        assert_eq!(w, vec![g.canonical()]);
        assert_eq!(rank_upper_bound(&t), 1);
    }

    #[test]
    fn two_by_two_identity_slices_need_two() {
        // Diagonal tensor e0⊗e0⊗e0 + e1⊗e1⊗e1.
        let t = Tensor3::from_entries(2, vec![1, 0, 0, 0, 0, 0, 0, 1], 64).unwrap();
        let (r, w) = brute_force_rank(&t, &OracleConfig::new(2, 3)).unwrap().unwrap();
        assert_eq!(r, 2);
        assert!(verify_decomposition(&t, &w));
    }

    #[test]
    fn budget_refused_up_front() {
        let cfg = OracleConfig::new(3, 4);
        assert!(matches!(cfg.validate(), Err(Error::Budget { .. })));
        assert!(brute_force_rank(&Tensor3::zeros(3), &cfg).is_err());
        assert!(OracleConfig::new(4, 1).validate().is_err());
        let asym = OracleConfig {
            entries: vec![0, 1, 2],
            ..OracleConfig::new(2, 2)
        };
        assert!(asym.validate().is_err());
    }

    #[test]
    fn table_agrees_with_search_on_small_sums() {
        let cfg = OracleConfig::new(2, 3);
        let table = RankTable::build(&cfg).unwrap();
        let fs = table.factors().to_vec();
        for i in (0..fs.len()).step_by(7) {
            for j in (i..fs.len()).step_by(11) {
                let t = Tensor3::from_factors(2, &[fs[i].clone(), fs[j].clone()], 64).unwrap();
                let exact = brute_force_rank(&t, &cfg).unwrap().map(|(r, _)| r);
                assert_eq!(table.rank(&t), exact);
            }
        }
    }
}
