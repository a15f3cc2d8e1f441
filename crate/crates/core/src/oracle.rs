//! Exact verification of the release mechanism on small universes.
//!
//! The release probability of every outcome is computed from the partition
//! decomposition: records of `D` are grouped by the bracket
//! `gamma^-(i+1) < p_d(y) <= gamma^-i` their generation probability falls
//! in, and
//!
//! ```text
//! Pr[F(D) = y] = (1/|D|) Σ_i pt(|C_i|) Σ_{s ∈ C_i} p_s(y)
//! ```
//!
//! where `pt(c) = Pr[Lap(1/eps0) >= k - c]` is the chance that the randomized
//! test passes with `c` plausible seeds. Nothing here samples; the
//! mechanism's own code is only used to build generation probabilities.
//!
//! Brackets are located by repeated division by `gamma` rather than through
//! logarithms, so the mechanism's partition numbering is checked against an
//! independent route.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;
use std::thread;

use rand::Rng;

use crate::data::{Record, Schema};
use crate::noise::{rng_from_seed, SimRng};
use crate::params::{sample_dirichlet, ConfigurationKey, GenerativeModel};
use crate::structure::DependencyGraph;
use crate::synthesis::{OmegaModel, SeedModel};
use crate::{Error, Result};

/// Inequality margins at or below this are treated as satisfied.
pub const NUMERICAL_ZERO: f64 = 1e-12;

/// `Pr[L >= x]` for `L ~ Lap(1/eps0)`.
pub fn laplace_tail(x: f64, eps0: f64) -> f64 {
    if x >= 0.0 {
        0.5 * (-eps0 * x).exp()
    } else {
        1.0 - 0.5 * (eps0 * x).exp()
    }
}

/// Probability that the randomized test passes with `count` plausible seeds.
pub fn pt_exact(count: usize, k: usize, eps0: f64) -> f64 {
    laplace_tail(k as f64 - count as f64, eps0)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

fn csum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<CompensatedSum>().value()
}

/// Index `i` with `gamma^-(i+1) < p <= gamma^-i`, or `None` for `p = 0`.
pub fn bracket(p: f64, gamma: f64) -> Option<u32> {
    if !(p > 0.0) {
        return None;
    }
    let mut hi = 1.0;
    let mut i = 0;
    loop {
        let lo = hi / gamma;
        if p > lo || lo == 0.0 {
            return Some(i);
        }
        hi = lo;
        i += 1;
    }
}

/// A seed model given as an explicit matrix `p_s(y)` over an enumerated
/// universe. Rows are indexed by seed, columns by output.
#[derive(Debug, Clone)]
pub struct ExplicitModel {
    universe: Vec<Record>,
    index: HashMap<Record, usize>,
    probs: Vec<f64>,
}

impl ExplicitModel {
    pub fn new(universe: Vec<Record>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = universe.len();
        if n == 0 || rows.len() != n {
            return Err(Error::param("rows", format!("need one row per universe record ({n})")));
        }
        let mut probs = Vec::with_capacity(n * n);
        for (s, row) in rows.into_iter().enumerate() {
            let sum = csum(row.iter().copied());
            if row.len() != n || row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::param("rows", format!("row {s} is not a distribution over {n} outputs")));
            }
            probs.extend(row);
        }
        let index = universe.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect::<HashMap<_, _>>();
        if index.len() != n {
            return Err(Error::param("universe", "duplicate records"));
        }
        Ok(ExplicitModel { universe, index, probs })
    }

    /// Tabulates any seed model over `universe`.
    pub fn from_model<M: SeedModel + ?Sized>(universe: Vec<Record>, model: &M) -> Result<Self> {
        let mut rows = Vec::with_capacity(universe.len());
        for s in &universe {
            let row = universe
                .iter()
                .map(|y| model.generation_probability(s, y))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(universe, rows)
    }

    /// Random matrix with uneven, partly zero rows so that outcomes spread
    /// over several brackets.
    pub fn random<R: Rng + ?Sized>(universe: Vec<Record>, rng: &mut R) -> Result<Self> {
        let n = universe.len();
        let rows = (0..n)
            .map(|s| {
                let mut w: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            0.0
                        } else {
                            rng.random::<f64>().powi(3)
                        }
                    })
                    .collect();
                if w.iter().all(|&x| x == 0.0) {
                    w[s] = 1.0;
                }
                let total = csum(w.iter().copied());
                w.iter_mut().for_each(|x| *x /= total);
                w
            })
            .collect();
        Self::new(universe, rows)
    }

    /// Random matrix whose nonzero off-diagonal entries sit at the top or
    /// just above the bottom of a `gamma` bracket, so that two seeds in one
    /// partition can differ by a factor close to `gamma`. Each seed's own
    /// record takes the remaining mass.
    pub fn random_edges<R: Rng + ?Sized>(universe: Vec<Record>, gamma: f64, rng: &mut R) -> Result<Self> {
        let n = universe.len();
        // smallest bracket index whose top value, taken n - 1 times, stays below 1
        let mut first = 0;
        while gamma.powi(-first) * (n as f64 - 1.0) >= 1.0 {
            first += 1;
        }
        let rows = (0..n)
            .map(|s| {
                let mut w: Vec<f64> = (0..n)
                    .map(|y| {
                        if y == s || rng.random_bool(0.5) {
                            return 0.0;
                        }
                        let i = first + rng.random_range(0..3);
                        if rng.random_bool(0.5) {
                            gamma.powi(-i)
                        } else {
                            gamma.powi(-i - 1) * (1.0 + 1e-6)
                        }
                    })
                    .collect();
                w[s] = 1.0 - csum(w.iter().copied());
                w
            })
            .collect();
        Self::new(universe, rows)
    }

    pub fn universe(&self) -> &[Record] {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.universe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.universe.is_empty()
    }

    pub fn index_of(&self, r: &Record) -> Option<usize> {
        self.index.get(r).copied()
    }

    /// `p_s(y)` by universe indices.
    pub fn prob(&self, s: usize, y: usize) -> f64 {
        self.probs[s * self.universe.len() + y]
    }

    fn lookup(&self, r: &Record) -> Result<usize> {
        self.index_of(r)
            .ok_or_else(|| Error::Inconsistent(format!("record {r} is outside the enumerated universe")))
    }
}

impl SeedModel for ExplicitModel {
    fn generation_probability(&self, seed: &Record, y: &Record) -> Result<f64> {
        Ok(self.prob(self.lookup(seed)?, self.lookup(y)?))
    }

    fn generate(&self, seed: &Record, rng: &mut SimRng) -> Result<Record> {
        let s = self.lookup(seed)?;
        let n = self.universe.len();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for y in 0..n {
            let p = self.prob(s, y);
            if p > 0.0 {
                acc += p;
                last = y;
                if u < acc {
                    return Ok(self.universe[y].clone());
                }
            }
        }
        Ok(self.universe[last].clone())
    }
}

/// The records of `D` grouped by bracket for one outcome `y`. `D` is given as
/// universe indices and may repeat records.
#[derive(Debug, Clone)]
pub struct PartitionProfile {
    pub y: usize,
    /// `p_d(y)` per position in `D`.
    pub probs: Vec<f64>,
    /// Bracket index to positions in `D`.
    pub parts: BTreeMap<u32, Vec<usize>>,
}

impl PartitionProfile {
    pub fn new(d: &[usize], y: usize, model: &ExplicitModel, gamma: f64) -> Self {
        let probs: Vec<f64> = d.iter().map(|&s| model.prob(s, y)).collect();
        let mut parts: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (pos, &p) in probs.iter().enumerate() {
            if let Some(i) = bracket(p, gamma) {
                parts.entry(i).or_default().push(pos);
            }
        }
        PartitionProfile { y, probs, parts }
    }

    pub fn count(&self, i: u32) -> usize {
        self.parts.get(&i).map_or(0, Vec::len)
    }

    /// `Σ_{s ∈ C_i} p_s(y)`.
    pub fn mass(&self, i: u32) -> f64 {
        self.parts
            .get(&i)
            .map_or(0.0, |m| csum(m.iter().map(|&pos| self.probs[pos])))
    }

    /// Probability of producing `y` from partition `i` and releasing it,
    /// up to the `1/|D|` seed factor.
    pub fn q(&self, i: u32, k: usize, eps0: f64) -> f64 {
        pt_exact(self.count(i), k, eps0) * self.mass(i)
    }

    /// `Pr[F(D) = y]`.
    pub fn release_prob(&self, k: usize, eps0: f64) -> f64 {
        let n = self.probs.len() as f64;
        csum(self.parts.keys().map(|&i| self.q(i, k, eps0))) / n
    }

    /// Probability that the candidate is `y` and the test fails.
    pub fn reject_prob(&self, k: usize, eps0: f64) -> f64 {
        let n = self.probs.len() as f64;
        csum(
            self.parts
                .keys()
                .map(|&i| (1.0 - pt_exact(self.count(i), k, eps0)) * self.mass(i)),
        ) / n
    }
}

/// `Pr[F(D) = y]` for the randomized test without caps.
pub fn release_prob_exact(d: &[usize], y: usize, model: &ExplicitModel, k: usize, gamma: f64, eps0: f64) -> f64 {
    PartitionProfile::new(d, y, model, gamma).release_prob(k, eps0)
}

/// `Pr[F(D) = y]` for every `y` in the universe, plus the probability that
/// one mechanism step releases nothing.
pub fn release_distribution(d: &[usize], model: &ExplicitModel, k: usize, gamma: f64, eps0: f64) -> (Vec<f64>, f64) {
    let mut none = CompensatedSum::default();
    let probs = (0..model.len())
        .map(|y| {
            let prof = PartitionProfile::new(d, y, model, gamma);
            none.add(prof.reject_prob(k, eps0));
            prof.release_prob(k, eps0)
        })
        .collect();
    (probs, none.value())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub k: usize,
    pub gamma: f64,
    pub eps0: f64,
    pub t: usize,
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k", "must be positive"));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::param("gamma", format!("must exceed 1, got {}", self.gamma)));
        }
        if !(self.eps0 > 0.0) {
            return Err(Error::param("eps0", format!("must be positive, got {}", self.eps0)));
        }
        if self.t == 0 {
            return Err(Error::param("t", "must be positive"));
        }
        Ok(())
    }

    /// `(eps, delta)` claimed for these parameters. `gamma_factor` scales the
    /// `gamma` inside the bound; anything below 1 understates `eps` and serves
    /// as a negative control.
    pub fn bound(&self, gamma_factor: f64) -> (f64, f64) {
        let t = self.t as f64;
        let eps = self.eps0 + (1.0 + gamma_factor * self.gamma / t).ln();
        let delta = (-self.eps0 * (self.k as f64 - t)).exp();
        (eps, delta)
    }
}

/// Worst margins (`lhs - rhs`, so positive means violated) over a set of
/// checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    /// (D, d', parameters) combinations.
    pub configurations: usize,
    pub checks: usize,
    /// `Pr[F(D) ∈ Y] - e^eps Pr[F(D') ∈ Y]`.
    pub worst_forward: f64,
    /// `Pr[F(D') ∈ Y] - e^eps Pr[F(D) ∈ Y] - delta`.
    pub worst_backward: f64,
    /// Per-outcome bound with the local additive term `delta(D', d', y)`,
    /// the pure bound on `Y_{t+}`, and the total local term on `Y_{t-}`.
    pub worst_local: f64,
    /// Both sides of `pt(D,i,y) <= pt(D',i,y) <= e^eps0 pt(D,i,y)`.
    pub worst_sandwich: f64,
    /// `q(D,i,y) - q(D',i,y)`.
    pub worst_monotone: f64,
    /// Largest additive term actually needed on any singleton.
    pub max_local_delta: f64,
    pub violations: usize,
    pub first_violation: Option<String>,
}

impl Default for Theorem1Report {
    fn default() -> Self {
        Theorem1Report {
            configurations: 0,
            checks: 0,
            worst_forward: f64::NEG_INFINITY,
            worst_backward: f64::NEG_INFINITY,
            worst_local: f64::NEG_INFINITY,
            worst_sandwich: f64::NEG_INFINITY,
            worst_monotone: f64::NEG_INFINITY,
            max_local_delta: 0.0,
            violations: 0,
            first_violation: None,
        }
    }
}

#[derive(Clone, Copy)]
enum Check {
    Forward,
    Backward,
    Local,
    Sandwich,
    Monotone,
}

impl Theorem1Report {
    fn record(&mut self, check: Check, margin: f64, what: impl FnOnce() -> String) {
        self.checks += 1;
        let slot = match check {
            Check::Forward => &mut self.worst_forward,
            Check::Backward => &mut self.worst_backward,
            Check::Local => &mut self.worst_local,
            Check::Sandwich => &mut self.worst_sandwich,
            Check::Monotone => &mut self.worst_monotone,
        };
        *slot = slot.max(margin);
        if !(margin <= NUMERICAL_ZERO) {
            self.violations += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(format!("{} (margin {margin:.3e})", what()));
            }
        }
    }

    pub fn merge(&mut self, other: &Theorem1Report) {
        self.configurations += other.configurations;
        self.checks += other.checks;
        self.worst_forward = self.worst_forward.max(other.worst_forward);
        self.worst_backward = self.worst_backward.max(other.worst_backward);
        self.worst_local = self.worst_local.max(other.worst_local);
        self.worst_sandwich = self.worst_sandwich.max(other.worst_sandwich);
        self.worst_monotone = self.worst_monotone.max(other.worst_monotone);
        self.max_local_delta = self.max_local_delta.max(other.max_local_delta);
        self.violations += other.violations;
        if self.first_violation.is_none() {
            self.first_violation.clone_from(&other.first_violation);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks the privacy guarantee for `D` and its neighbor `D' = D ∪ {d'}`
/// over all singleton outcomes and over the split of the universe into
/// `Y_{t-}` (d' lands in a partition of `D` with fewer than `t` members) and
/// `Y_{t+}`.
pub fn check_theorem1(
    d: &[usize],
    d_prime: usize,
    model: &ExplicitModel,
    params: &OracleParams,
    gamma_factor: f64,
) -> Result<Theorem1Report> {
    params.validate()?;
    if d.len() < params.k {
        return Err(Error::param(
            "k",
            format!("dataset has {} records, fewer than k = {}", d.len(), params.k),
        ));
    }
    let n = model.len();
    if d_prime >= n || d.iter().any(|&s| s >= n) {
        return Err(Error::param("d", "record index outside the universe"));
    }
    let OracleParams { k, gamma, eps0, t } = *params;
    let (eps, delta) = params.bound(gamma_factor);
    let e_eps = eps.exp();
    let e_eps0 = eps0.exp();
    let local_scale = (-eps0 * (k as f64 - t as f64)).exp();

    let mut dp = d.to_vec();
    dp.push(d_prime);
    let nd_prime = dp.len() as f64;

    let mut rep = Theorem1Report {
        configurations: 1,
        ..Default::default()
    };
    let tag = |y: usize| format!("k={k} gamma={gamma} eps0={eps0} t={t} d'={d_prime} y={y}");

    // [Y_{t-}, Y_{t+}] sums of Pr[F(D)], Pr[F(D')] and the local terms
    let mut set_d = [CompensatedSum::default(); 2];
    let mut set_dp = [CompensatedSum::default(); 2];
    let mut local_sum = CompensatedSum::default();

    for y in 0..n {
        let pd = PartitionProfile::new(d, y, model, gamma);
        let pdp = PartitionProfile::new(&dp, y, model, gamma);
        let f_d = pd.release_prob(k, eps0);
        let f_dp = pdp.release_prob(k, eps0);

        let j = bracket(model.prob(d_prime, y), gamma);
        let small = j.is_some_and(|j| pd.count(j) < t);
        let local = match j {
            Some(j) if small => local_scale / nd_prime * pdp.mass(j),
            _ => 0.0,
        };
        rep.max_local_delta = rep.max_local_delta.max(local);

        rep.record(Check::Forward, f_d - e_eps * f_dp, || format!("forward {}", tag(y)));
        rep.record(Check::Backward, f_dp - e_eps * f_d - delta, || format!("backward {}", tag(y)));
        rep.record(Check::Local, f_dp - e_eps * f_d - local, || format!("local {}", tag(y)));

        for &i in pdp.parts.keys() {
            let pt_d = pt_exact(pd.count(i), k, eps0);
            let pt_dp = pt_exact(pdp.count(i), k, eps0);
            rep.record(Check::Sandwich, pt_d - pt_dp, || format!("sandwich lower i={i} {}", tag(y)));
            rep.record(Check::Sandwich, pt_dp - e_eps0 * pt_d, || {
                format!("sandwich upper i={i} {}", tag(y))
            });
            rep.record(Check::Monotone, pd.q(i, k, eps0) - pdp.q(i, k, eps0), || {
                format!("monotone i={i} {}", tag(y))
            });
        }

        let side = usize::from(!small);
        set_d[side].add(f_d);
        set_dp[side].add(f_dp);
        if small {
            local_sum.add(local);
        }
    }

    let sets = [("Y_t-", 0), ("Y_t+", 1)];
    for (name, s) in sets {
        let (a, b) = (set_d[s].value(), set_dp[s].value());
        rep.record(Check::Forward, a - e_eps * b, || format!("forward set {name} {}", tag(n)));
        rep.record(Check::Backward, b - e_eps * a - delta, || format!("backward set {name} {}", tag(n)));
    }
    let (a_plus, b_plus) = (set_d[1].value(), set_dp[1].value());
    rep.record(Check::Local, b_plus - e_eps * a_plus, || format!("pure bound on Y_t+ {}", tag(n)));
    rep.record(Check::Local, local_sum.value() - local_scale, || {
        format!("total local term on Y_t- {}", tag(n))
    });
    let all_d = set_d[0].value() + set_d[1].value();
    let all_dp = set_dp[0].value() + set_dp[1].value();
    rep.record(Check::Forward, all_d - e_eps * all_dp, || format!("forward universe {}", tag(n)));
    rep.record(Check::Backward, all_dp - e_eps * all_d - delta, || {
        format!("backward universe {}", tag(n))
    });
    Ok(rep)
}

fn entropy_bits(hist: &[u32], n: u32) -> f64 {
    let n = n as f64;
    -csum(hist.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / n;
        p * p.log2()
    }))
}

/// Largest entropy change over all histograms of `n` records in `bins` bins
/// and all moves of one record to another bin, with the bound
/// `(2 + 1/ln 2 + 2 log2 n) / n`.
pub fn sensitivity_bruteforce(bins: usize, n: usize) -> Result<(f64, f64)> {
    if bins == 0 || bins > 5 || n == 0 || n > 14 {
        return Err(Error::param(
            "bins, n",
            format!("need 1 <= bins <= 5 and 1 <= n <= 14, got {bins}, {n}"),
        ));
    }
    let nf = n as f64;
    let bound = (2.0 + std::f64::consts::LOG2_E + 2.0 * nf.log2()) / nf;
    let mut max = 0.0f64;
    let mut hist = vec![0u32; bins];
    let n = n as u32;
    // walk all compositions of n into `bins` parts
    fn walk(hist: &mut [u32], at: usize, left: u32, n: u32, max: &mut f64) {
        if at + 1 == hist.len() {
            hist[at] = left;
            let h = entropy_bits(hist, n);
            for a in 0..hist.len() {
                if hist[a] == 0 {
                    continue;
                }
                for b in 0..hist.len() {
                    if a == b {
                        continue;
                    }
                    hist[a] -= 1;
                    hist[b] += 1;
                    *max = max.max((h - entropy_bits(hist, n)).abs());
                    hist[b] -= 1;
                    hist[a] += 1;
                }
            }
            return;
        }
        for c in 0..=left {
            hist[at] = c;
            walk(hist, at + 1, left - c, n, max);
        }
    }
    walk(&mut hist, 0, n, n, &mut max);
    Ok((max, bound))
}

/// Sizes of the exhaustive sweep run by `pdsynth verify`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub cardinalities: Vec<usize>,
    pub dataset_size: usize,
    /// Random datasets drawn per model.
    pub datasets: usize,
    /// Random explicit matrices.
    pub explicit_models: usize,
    /// Random matrices with entries at bracket edges for the largest gamma.
    pub edge_models: usize,
    /// Random chain-structured synthesizers, each checked at every omega.
    pub synth_models: usize,
    pub k: Vec<usize>,
    pub gamma: Vec<f64>,
    pub eps0: Vec<f64>,
    pub t: Vec<usize>,
    pub gamma_factor: f64,
    pub sensitivity_bins: usize,
    pub sensitivity_n: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            cardinalities: vec![2, 2, 2],
            dataset_size: 6,
            datasets: 4,
            explicit_models: 4,
            edge_models: 4,
            synth_models: 2,
            k: vec![3, 5],
            gamma: vec![2.0, 4.0],
            eps0: vec![0.5, 1.0],
            t: vec![1, 2],
            gamma_factor: 1.0,
            sensitivity_bins: 4,
            sensitivity_n: 12,
            seed: 1,
            workers: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let universe: usize = self.cardinalities.iter().product();
        if self.cardinalities.len() < 2 || universe > 64 {
            return Err(Error::param(
                "cardinalities",
                "need at least two attributes and at most 64 universe records",
            ));
        }
        if self.k.is_empty() || self.gamma.is_empty() || self.eps0.is_empty() || self.t.is_empty() {
            return Err(Error::param("k, gamma, eps0, t", "parameter lists must be nonempty"));
        }
        if let Some(&k) = self.k.iter().max() {
            if self.dataset_size < k {
                return Err(Error::param(
                    "dataset_size",
                    format!("{} is smaller than the largest k = {k}", self.dataset_size),
                ));
            }
        }
        for &k in &self.k {
            for &gamma in &self.gamma {
                for &eps0 in &self.eps0 {
                    for &t in &self.t {
                        OracleParams { k, gamma, eps0, t }.validate()?;
                    }
                }
            }
        }
        if !(self.gamma_factor > 0.0) {
            return Err(Error::param("gamma_factor", "must be positive"));
        }
        sensitivity_bruteforce(self.sensitivity_bins, self.sensitivity_n.max(1)).map(|_| ())
    }

    fn params(&self) -> Vec<OracleParams> {
        let mut out = Vec::new();
        for &k in &self.k {
            for &gamma in &self.gamma {
                for &eps0 in &self.eps0 {
                    for &t in &self.t {
                        out.push(OracleParams { k, gamma, eps0, t });
                    }
                }
            }
        }
        out
    }
}

/// Chain `a0 -> a1 -> ...` with Dirichlet(1) tables.
pub fn random_chain_model<R: Rng + ?Sized>(schema: Arc<Schema>, rng: &mut R) -> Result<GenerativeModel> {
    let m = schema.len();
    let graph = DependencyGraph::new((0..m).map(|i| if i == 0 { vec![] } else { vec![i - 1] }).collect())?;
    let mut tables = Vec::new();
    for i in 0..m {
        let ones = vec![1.0; schema.cardinality(i)];
        if i == 0 {
            tables.push((ConfigurationKey::new(0, vec![]), sample_dirichlet(&ones, rng)?));
        } else {
            for b in 0..schema.bucket_count(i - 1) as u32 {
                tables.push((ConfigurationKey::new(i, vec![b]), sample_dirichlet(&ones, rng)?));
            }
        }
    }
    GenerativeModel::fixed(schema, graph, tables, [])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub bins: usize,
    pub n: usize,
    pub max_observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub sensitivity: Vec<SensitivityRow>,
    pub sensitivity_violations: usize,
    pub models: usize,
    pub datasets: usize,
    pub parameter_sets: usize,
    pub universe: usize,
    pub gamma_factor: f64,
    pub theorem: Theorem1Report,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.sensitivity_violations == 0 && self.theorem.passed()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let worst_gap = self
            .sensitivity
            .iter()
            .map(|r| r.max_observed - r.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let th = &self.theorem;
        let _ = writeln!(s, "[sensitivity]");
        let _ = writeln!(s, "histogram_sizes = {}", self.sensitivity.len());
        let _ = writeln!(s, "worst_gap = {worst_gap:.6e}");
        let _ = writeln!(s, "violations = {}", self.sensitivity_violations);
        let _ = writeln!(s);
        let _ = writeln!(s, "[theorem]");
        let _ = writeln!(s, "universe = {}", self.universe);
        let _ = writeln!(s, "models = {}", self.models);
        let _ = writeln!(s, "datasets = {}", self.datasets);
        let _ = writeln!(s, "parameter_sets = {}", self.parameter_sets);
        let _ = writeln!(s, "gamma_factor = {}", self.gamma_factor);
        let _ = writeln!(s, "configurations = {}", th.configurations);
        let _ = writeln!(s, "checks = {}", th.checks);
        let _ = writeln!(s, "worst_forward = {:.6e}", th.worst_forward);
        let _ = writeln!(s, "worst_backward = {:.6e}", th.worst_backward);
        let _ = writeln!(s, "worst_local = {:.6e}", th.worst_local);
        let _ = writeln!(s, "worst_sandwich = {:.6e}", th.worst_sandwich);
        let _ = writeln!(s, "worst_monotone = {:.6e}", th.worst_monotone);
        let _ = writeln!(s, "max_local_delta = {:.6e}", th.max_local_delta);
        let _ = writeln!(s, "violations = {}", th.violations);
        if let Some(v) = &th.first_violation {
            let _ = writeln!(s, "first_violation = {v}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "result = {}", if self.passed() { "pass" } else { "FAIL" });
        s
    }
}

/// Runs the sensitivity enumeration and the neighbor sweep over random
/// explicit matrices, bracket-edge matrices and random synthesizers at every
/// omega.
pub fn run_sweep(cfg: &SweepConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    let mut sensitivity = Vec::new();
    let mut sensitivity_violations = 0;
    for bins in 1..=cfg.sensitivity_bins {
        for n in 1..=cfg.sensitivity_n {
            let (max_observed, bound) = sensitivity_bruteforce(bins, n)?;
            if max_observed > bound + NUMERICAL_ZERO {
                sensitivity_violations += 1;
            }
            sensitivity.push(SensitivityRow {
                bins,
                n,
                max_observed,
                bound,
            });
        }
    }

    let schema = Arc::new(Schema::from_cardinalities(&cfg.cardinalities)?);
    let universe = schema.enumerate_universe();
    let mut rng = rng_from_seed(cfg.seed);
    let mut models = Vec::new();
    for _ in 0..cfg.explicit_models {
        models.push(ExplicitModel::random(universe.clone(), &mut rng)?);
    }
    let top_gamma = cfg.gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..cfg.edge_models {
        models.push(ExplicitModel::random_edges(universe.clone(), top_gamma, &mut rng)?);
    }
    for _ in 0..cfg.synth_models {
        let gm = random_chain_model(schema.clone(), &mut rng)?;
        for omega in 1..=schema.len() {
            models.push(ExplicitModel::from_model(universe.clone(), &OmegaModel::new(&gm, omega)?)?);
        }
    }
    let mut instances = Vec::new();
    for (mi, _) in models.iter().enumerate() {
        // one dataset of a single repeated record, the rest uniform draws
        let repeated = rng.random_range(0..universe.len());
        instances.push((mi, vec![repeated; cfg.dataset_size]));
        for _ in 1..cfg.datasets {
            let d: Vec<usize> = (0..cfg.dataset_size)
                .map(|_| rng.random_range(0..universe.len()))
                .collect();
            instances.push((mi, d));
        }
    }
    let params = cfg.params();

    let tasks: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|a| (0..universe.len()).map(move |dp| (a, dp)))
        .collect();
    let workers = if cfg.workers == 0 {
        thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.workers
    }
    .min(tasks.len())
    .max(1);
    let chunk = tasks.len().div_ceil(workers);
    let partials: Vec<Result<Theorem1Report>> = thread::scope(|scope| {
        let handles: Vec<_> = tasks
            .chunks(chunk)
            .map(|batch| {
                let (models, instances, params) = (&models, &instances, &params);
                scope.spawn(move || {
                    let mut rep = Theorem1Report::default();
                    for &(a, dp) in batch {
                        let (mi, d) = &instances[a];
                        for p in params {
                            rep.merge(&check_theorem1(d, dp, &models[*mi], p, cfg.gamma_factor)?);
                        }
                    }
                    Ok(rep)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Verification("sweep worker panicked".into()))))
            .collect()
    });
    let mut theorem = Theorem1Report::default();
    for p in partials {
        theorem.merge(&p?);
    }
    Ok(VerificationReport {
        sensitivity,
        sensitivity_violations,
        models: models.len(),
        datasets: instances.len(),
        parameter_sets: params.len(),
        universe: universe.len(),
        gamma_factor: cfg.gamma_factor,
        theorem,
    })
}
