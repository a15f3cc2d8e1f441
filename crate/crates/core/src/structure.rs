//! Dependency-graph learning by greedy correlation-based feature selection
//! over differentially private entropy estimates.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Schema};
use crate::noise::{laplace_scale, sample_laplace};
use crate::{Error, Result};

pub const DEFAULT_MAXCOST: u64 = 10_000;

/// Shannon entropy in bits of the empirical distribution of `hist`.
pub fn entropy(hist: &[u64]) -> Result<f64> {
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return Err(Error::param("hist", "entropy of an empty histogram"));
    }
    Ok(entropy_of_counts(hist.iter().copied(), n))
}

fn entropy_of_counts(counts: impl Iterator<Item = u64>, n: u64) -> f64 {
    let n = n as f64;
    // H = log2 n - (1/n) Σ c log2 c
    let s: f64 = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let c = c as f64;
            c * c.log2()
        })
        .sum();
    (n.log2() - s / n).max(0.0)
}

/// Upper bound on |H(z) - H(z')| for histograms of `n` records differing in
/// one record.
pub fn entropy_sensitivity(n: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::param("n", format!("entropy sensitivity needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    Ok((2.0 + std::f64::consts::LOG2_E + 2.0 * nf.log2()) / nf)
}

pub fn noisy_entropy<R: Rng + ?Sized>(h: f64, delta_h: f64, eps_h: f64, rng: &mut R) -> Result<f64> {
    if !(delta_h > 0.0) {
        return Err(Error::param("delta_H", format!("must be positive, got {delta_h}")));
    }
    let scale = laplace_scale("eps_H", delta_h, eps_h)?;
    Ok(h + sample_laplace(scale, rng))
}

/// `n_t + Lap(1/eps_nt)`, rounded and floored at 2.
pub fn noisy_record_count<R: Rng + ?Sized>(n_t: u64, eps_nt: f64, rng: &mut R) -> Result<u64> {
    let scale = laplace_scale("eps_nT", 1.0, eps_nt)?;
    let noisy = (n_t as f64 + sample_laplace(scale, rng)).round();
    Ok(if noisy < 2.0 { 2 } else { noisy as u64 })
}

/// Symmetrical uncertainty `2 - 2 H_ij / (H_i + H_j)`, clamped to [0, 1].
pub fn correlation(h_i: f64, h_j: f64, h_ij: f64) -> f64 {
    let denom = h_i + h_j;
    if denom == 0.0 {
        return 0.0;
    }
    let c = 2.0 - 2.0 * h_ij / denom;
    if c.is_nan() {
        0.0
    } else {
        c.clamp(0.0, 1.0)
    }
}

/// CFS merit of `parents` for `target`. `corr(a, b)` is the correlation of
/// attribute `a` with the bucketized attribute `b`; inter-parent terms run
/// over ordered pairs.
pub fn merit(parents: &[usize], target: usize, corr: impl Fn(usize, usize) -> f64) -> f64 {
    if parents.is_empty() {
        return 0.0;
    }
    let num: f64 = parents.iter().map(|&j| corr(target, j)).sum();
    let mut radicand = parents.len() as f64;
    for &j in parents {
        for &k in parents {
            if j != k {
                radicand += corr(j, k);
            }
        }
    }
    num / radicand.sqrt()
}

/// Product of the parents' bucket counts, saturating at `u64::MAX`.
pub fn cost(parents: &[usize], schema: &Schema) -> u64 {
    parents
        .iter()
        .fold(1u64, |acc, &j| acc.saturating_mul(schema.bucket_count(j) as u64))
}

/// Noisy entropies of every attribute, every bucketized attribute and every
/// ordered pair `(x_i, bu(x_j))`, `i != j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTable {
    m: usize,
    raw: Vec<f64>,
    bucketized: Vec<f64>,
    /// Row-major `m x m`; entry `(i, j)` is H(x_i, bu(x_j)). The diagonal is
    /// unused and holds 0.
    pairs: Vec<f64>,
    n_tilde: u64,
    delta_h: f64,
}

impl EntropyTable {
    /// Exact entropies of `d`, with noise `Lap(Δ_H(ñ)/eps_h)` added to each
    /// and `ñ = noisy_record_count(|d|, eps_nt)`. Draw order: ñ, raw singles,
    /// bucketized singles, then pairs in lexicographic `(i, j)` order.
    pub fn compute<R: Rng + ?Sized>(d: &Dataset, eps_h: f64, eps_nt: f64, rng: &mut R) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Dataset("structure learning needs a nonempty training set".into()));
        }
        laplace_scale("eps_H", 1.0, eps_h)?;
        let schema = d.schema();
        let m = schema.len();
        let n_tilde = noisy_record_count(d.len() as u64, eps_nt, rng)?;
        let delta_h = entropy_sensitivity(n_tilde)?;

        let exact = ExactEntropies::compute(d);
        let mut noisy = |h: f64| noisy_entropy(h, delta_h, eps_h, rng);
        let raw = exact.raw.iter().map(|&h| noisy(h)).collect::<Result<Vec<_>>>()?;
        let bucketized = exact.bucketized.iter().map(|&h| noisy(h)).collect::<Result<Vec<_>>>()?;
        let mut pairs = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    pairs[i * m + j] = noisy(exact.pairs[i * m + j])?;
                }
            }
        }
        Ok(EntropyTable {
            m,
            raw,
            bucketized,
            pairs,
            n_tilde,
            delta_h,
        })
    }

    /// Noise-free table, used when privacy for structure learning is
    /// disabled and in tests.
    pub fn exact(d: &Dataset) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Dataset("structure learning needs a nonempty training set".into()));
        }
        let e = ExactEntropies::compute(d);
        let n = (d.len() as u64).max(2);
        Ok(EntropyTable {
            m: d.schema().len(),
            raw: e.raw,
            bucketized: e.bucketized,
            pairs: e.pairs,
            n_tilde: n,
            delta_h: entropy_sensitivity(n)?,
        })
    }

    pub fn attribute_count(&self) -> usize {
        self.m
    }

    pub fn raw(&self, i: usize) -> f64 {
        self.raw[i]
    }

    pub fn bucketized(&self, i: usize) -> f64 {
        self.bucketized[i]
    }

    /// H(x_i, bu(x_j)) for `i != j`.
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        debug_assert_ne!(i, j);
        self.pairs[i * self.m + j]
    }

    pub fn n_tilde(&self) -> u64 {
        self.n_tilde
    }

    pub fn delta_h(&self) -> f64 {
        self.delta_h
    }

    /// Correlation of raw `x_i` with bucketized `x_j`.
    pub fn corr(&self, i: usize, j: usize) -> f64 {
        correlation(self.raw(i), self.bucketized(j), self.pair(i, j))
    }

    /// Number of noisy entropy entries, `m(m+1)`.
    pub fn entry_count(&self) -> usize {
        self.raw.len() + self.bucketized.len() + self.m * (self.m - 1)
    }
}

struct ExactEntropies {
    raw: Vec<f64>,
    bucketized: Vec<f64>,
    pairs: Vec<f64>,
}

impl ExactEntropies {
    fn compute(d: &Dataset) -> Self {
        let schema = d.schema();
        let m = schema.len();
        let n = d.len() as u64;
        let column_entropy = |size: usize, key: &dyn Fn(&[u32]) -> usize| {
            let mut hist = vec![0u64; size];
            for r in d.records() {
                hist[key(r)] += 1;
            }
            entropy_of_counts(hist.into_iter(), n)
        };
        let raw = (0..m)
            .map(|i| column_entropy(schema.cardinality(i), &|r| r[i] as usize))
            .collect();
        let bucketized = (0..m)
            .map(|i| column_entropy(schema.bucket_count(i), &|r| schema.bucketize(i, r[i]) as usize))
            .collect();
        let mut pairs = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let bj = schema.bucket_count(j);
                let size = schema.cardinality(i) * bj;
                let key = |r: &[u32]| r[i] as usize * bj + schema.bucketize(j, r[j]) as usize;
                pairs[i * m + j] = if size <= 1 << 22 {
                    column_entropy(size, &key)
                } else {
                    let mut keys: Vec<usize> = d.records().iter().map(|r| key(r)).collect();
                    keys.sort_unstable();
                    let runs = keys.chunk_by(|a, b| a == b).map(|c| c.len() as u64);
                    entropy_of_counts(runs, n)
                };
            }
        }
        ExactEntropies { raw, bucketized, pairs }
    }
}

/// Parent sets of an acyclic graph over the attributes together with a
/// topological order `sigma`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    parents: Vec<Vec<usize>>,
    sigma: Vec<usize>,
}

impl DependencyGraph {
    /// Builds the graph and derives `sigma` by Kahn's algorithm, releasing the
    /// smallest ready attribute index first. Parent lists are sorted.
    pub fn new(mut parents: Vec<Vec<usize>>) -> Result<Self> {
        let m = parents.len();
        for (i, p) in parents.iter_mut().enumerate() {
            p.sort_unstable();
            p.dedup();
            if p.iter().any(|&j| j >= m || j == i) {
                return Err(Error::Inconsistent(format!("invalid parent set {p:?} for attribute {i}")));
            }
        }
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); m];
        for (i, p) in parents.iter().enumerate() {
            for &j in p {
                children[j].push(i);
            }
        }
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..m).filter(|&i| indegree[i] == 0).map(Reverse).collect();
        let mut sigma = Vec::with_capacity(m);
        while let Some(Reverse(i)) = ready.pop() {
            sigma.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if sigma.len() != m {
            return Err(Error::Inconsistent("dependency graph has a cycle".into()));
        }
        Ok(DependencyGraph { parents, sigma })
    }

    /// Graph with no edges; `sigma` is the identity.
    pub fn empty(m: usize) -> Self {
        DependencyGraph {
            parents: vec![Vec::new(); m],
            sigma: (0..m).collect(),
        }
    }

    /// Checks that `sigma` is a permutation and a topological order.
    pub fn validate(&self) -> Result<()> {
        let m = self.parents.len();
        let mut position = vec![usize::MAX; m];
        if self.sigma.len() != m {
            return Err(Error::Inconsistent("sigma length differs from attribute count".into()));
        }
        for (pos, &a) in self.sigma.iter().enumerate() {
            if a >= m || position[a] != usize::MAX {
                return Err(Error::Inconsistent("sigma is not a permutation".into()));
            }
            position[a] = pos;
        }
        for (i, p) in self.parents.iter().enumerate() {
            if p.iter().any(|&j| j >= m || position[j] >= position[i]) {
                return Err(Error::Inconsistent(format!("sigma does not order parents of attribute {i}")));
            }
        }
        Ok(())
    }

    pub fn attribute_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    /// Attributes that list `i` as a parent.
    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.parents.len()).filter(move |&c| self.parents[c].contains(&i))
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// One `target <- parent,parent` line per attribute followed by the
    /// order, using attribute names.
    pub fn to_text(&self, schema: &Schema) -> String {
        let name = |i: usize| schema.attribute(i).name();
        let mut out = String::new();
        for (i, p) in self.parents.iter().enumerate() {
            let ps: Vec<&str> = p.iter().map(|&j| name(j)).collect();
            let _ = writeln!(out, "{} <- {}", name(i), ps.join(","));
        }
        let order: Vec<&str> = self.sigma.iter().map(|&i| name(i)).collect();
        let _ = writeln!(out, "sigma: {}", order.join(","));
        out
    }
}

/// Greedy parent selection over a fixed entropy table. Targets are visited in
/// ascending index; each grows its parent set one attribute at a time while
/// the merit strictly improves, the cost stays within `maxcost` and the
/// graph stays acyclic. Equal scores go to the lowest attribute index.
pub fn select_parents(table: &EntropyTable, schema: &Schema, maxcost: u64) -> Result<DependencyGraph> {
    let m = schema.len();
    if table.attribute_count() != m {
        return Err(Error::Inconsistent("entropy table does not match schema".into()));
    }
    let corr: Vec<f64> = (0..m * m)
        .map(|ij| {
            let (i, j) = (ij / m, ij % m);
            if i == j {
                1.0
            } else {
                table.corr(i, j)
            }
        })
        .collect();
    let corr = |a: usize, b: usize| corr[a * m + b];

    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); m];
    for target in 0..m {
        let mut current: Vec<usize> = Vec::new();
        let mut score = 0.0;
        loop {
            let mut best: Option<(usize, f64)> = None;
            for cand in 0..m {
                if cand == target || current.contains(&cand) {
                    continue;
                }
                let mut trial = current.clone();
                trial.push(cand);
                if cost(&trial, schema) > maxcost {
                    continue;
                }
                // edge cand -> target closes a cycle iff target reaches cand
                if reaches(&parents, target, cand) {
                    continue;
                }
                trial.sort_unstable();
                let s = merit(&trial, target, corr);
                if s > score && best.is_none_or(|(_, b)| s > b) {
                    best = Some((cand, s));
                }
            }
            match best {
                Some((cand, s)) => {
                    current.push(cand);
                    current.sort_unstable();
                    parents[target] = current.clone();
                    score = s;
                }
                None => break,
            }
        }
    }
    DependencyGraph::new(parents)
}

/// Whether a directed path `from -> ... -> to` exists, where edges run from
/// parent to child.
fn reaches(parents: &[Vec<usize>], from: usize, to: usize) -> bool {
    // walk ancestors of `to` looking for `from`
    let mut stack = vec![to];
    let mut seen = vec![false; parents.len()];
    while let Some(v) = stack.pop() {
        if v == from {
            return true;
        }
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        stack.extend(parents[v].iter().copied());
    }
    false
}

/// Noisy entropies followed by greedy parent selection.
pub fn learn_structure<R: Rng + ?Sized>(
    d_t: &Dataset,
    eps_h: f64,
    eps_nt: f64,
    maxcost: u64,
    rng: &mut R,
) -> Result<(DependencyGraph, EntropyTable)> {
    let table = EntropyTable::compute(d_t, eps_h, eps_nt, rng)?;
    let graph = select_parents(&table, d_t.schema(), maxcost)?;
    Ok((graph, table))
}
