//! Plausible-deniability privacy tests and the release mechanism.
//!
//! A candidate `y` generated from seed `d` is released only if enough other
//! records of the seed dataset could have produced `y` with a similar
//! probability: those whose generation probability falls in the same
//! `gamma`-partition as the seed's.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Record;
use crate::noise::{laplace_scale, sample_laplace, substream, SimRng};
use crate::params::GenerativeModel;
use crate::synthesis::{OmegaModel, OmegaRange, SeedModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Pass iff `k' >= k`.
    Deterministic,
    /// Pass iff `k' >= k + Lap(1/eps0)`.
    Randomized,
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" | "1" => Ok(TestKind::Deterministic),
            "randomized" | "2" => Ok(TestKind::Randomized),
            _ => Err(Error::param("test", format!("expected `deterministic` or `randomized`, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub k: usize,
    pub gamma: f64,
    pub eps0: f64,
    /// Stop counting once this many plausible seeds were found.
    pub max_plausible: Option<usize>,
    /// Examine at most this many records of the seed dataset.
    pub max_check_plausible: Option<usize>,
}

impl Default for PrivacyParams {
    fn default() -> Self {
        PrivacyParams {
            k: 50,
            gamma: 4.0,
            eps0: 1.0,
            max_plausible: Some(100),
            max_check_plausible: Some(50_000),
        }
    }
}

impl PrivacyParams {
    /// Same parameters with both early-termination caps removed.
    pub fn uncapped(self) -> Self {
        PrivacyParams {
            max_plausible: None,
            max_check_plausible: None,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if !(self.gamma > 1.0) || !self.gamma.is_finite() {
            return Err(Error::param("gamma", format!("must be a finite value above 1, got {}", self.gamma)));
        }
        if !(self.eps0 > 0.0) {
            return Err(Error::param("eps0", format!("must be positive, got {}", self.eps0)));
        }
        if self.max_plausible == Some(0) || self.max_check_plausible == Some(0) {
            return Err(Error::param("max_plausible", "caps must be positive when set"));
        }
        Ok(())
    }
}

/// The unique `i >= 0` with `gamma^-(i+1) < p <= gamma^-i`.
///
/// Computed as `floor(-ln p / ln gamma)`, nudged by a relative 1e-12 toward
/// the upper boundary so that `p = gamma^-i` lands in partition `i` despite
/// rounding.
pub fn partition_number(p: f64, gamma: f64) -> Result<u32> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("p", format!("probability must lie in (0, 1], got {p}")));
    }
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::param("gamma", format!("must be a finite value above 1, got {gamma}")));
    }
    let x = -p.ln() / gamma.ln();
    let x = x + 1e-12 * x.max(1.0);
    Ok(x.floor().max(0.0) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlausibleCount {
    /// Number of records found in the partition (possibly capped).
    pub count: usize,
    /// Whether a cap stopped the scan early.
    pub capped: bool,
    pub examined: usize,
}

/// Counts records of `d` whose probability of generating `y` lies in
/// partition `i`. With `max_check_plausible` below `|d|` a uniformly random
/// subset of that size is examined; the `max_plausible` cap stops the count
/// as soon as it is reached.
pub fn count_plausible_seeds<M: SeedModel + ?Sized, R: Rng + ?Sized>(
    d: &[Record],
    y: &Record,
    i: u32,
    model: &M,
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<PlausibleCount> {
    let eval = model.seed_probabilities(y)?;
    let in_partition = |s: &Record| -> Result<bool> {
        let p = eval(s)?;
        Ok(p > 0.0 && partition_number(p, params.gamma)? == i)
    };
    let target = params.max_plausible.unwrap_or(usize::MAX);
    let mut count = 0;
    let mut examined = 0;
    let mut scan = |s: &Record| -> Result<bool> {
        examined += 1;
        if in_partition(s)? {
            count += 1;
        }
        Ok(count >= target)
    };
    let mut hit_target = false;
    match params.max_check_plausible {
        Some(limit) if limit < d.len() => {
            for idx in rand::seq::index::sample(rng, d.len(), limit).iter() {
                if scan(&d[idx])? {
                    hit_target = true;
                    break;
                }
            }
        }
        _ => {
            for s in d {
                if scan(s)? {
                    hit_target = true;
                    break;
                }
            }
        }
    }
    Ok(PlausibleCount {
        count,
        capped: hit_target || examined < d.len(),
        examined,
    })
}

/// Outcome of one candidate; written to the private audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseDecision {
    pub candidate: Record,
    pub seed_index: usize,
    pub omega: Option<usize>,
    pub partition: u32,
    pub plausible: PlausibleCount,
    /// `k` for the deterministic test, `k + Lap(1/eps0)` for the randomized one.
    pub threshold: f64,
    pub passed: bool,
}

/// Runs the chosen privacy test for candidate `y` generated from
/// `d[seed_index]`. The seed counts toward `k'`.
pub fn privacy_test<M: SeedModel + ?Sized, R: Rng + ?Sized>(
    kind: TestKind,
    d: &[Record],
    seed_index: usize,
    y: &Record,
    model: &M,
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<ReleaseDecision> {
    params.validate()?;
    let seed = d
        .get(seed_index)
        .ok_or_else(|| Error::Inconsistent(format!("seed index {seed_index} out of range")))?;
    let p = model.generation_probability(seed, y)?;
    if !(p > 0.0) {
        return Err(Error::Inconsistent(format!(
            "candidate has probability {p} under its own seed"
        )));
    }
    let i = partition_number(p, params.gamma)?;
    let plausible = count_plausible_seeds(d, y, i, model, params, rng)?;
    let threshold = match kind {
        TestKind::Deterministic => params.k as f64,
        TestKind::Randomized => {
            let scale = laplace_scale("eps0", 1.0, params.eps0)?;
            params.k as f64 + sample_laplace(scale, rng)
        }
    };
    Ok(ReleaseDecision {
        candidate: y.clone(),
        seed_index,
        omega: None,
        partition: i,
        passed: plausible.count as f64 >= threshold,
        plausible,
        threshold,
    })
}

pub fn privacy_test_deterministic<M: SeedModel + ?Sized, R: Rng + ?Sized>(
    d: &[Record],
    seed_index: usize,
    y: &Record,
    model: &M,
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<ReleaseDecision> {
    privacy_test(TestKind::Deterministic, d, seed_index, y, model, params, rng)
}

pub fn privacy_test_randomized<M: SeedModel + ?Sized, R: Rng + ?Sized>(
    d: &[Record],
    seed_index: usize,
    y: &Record,
    model: &M,
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<ReleaseDecision> {
    privacy_test(TestKind::Randomized, d, seed_index, y, model, params, rng)
}

/// One round of the release mechanism with a fixed synthesizer: uniform
/// seed, candidate, privacy test.
pub fn mechanism_step_with<M: SeedModel + ?Sized>(
    d: &[Record],
    model: &M,
    params: &PrivacyParams,
    kind: TestKind,
    rng: &mut SimRng,
) -> Result<ReleaseDecision> {
    if d.len() < params.k {
        return Err(Error::param(
            "k",
            format!("seed dataset has {} records, fewer than k = {}", d.len(), params.k),
        ));
    }
    let seed_index = rng.random_range(0..d.len());
    let y = model.generate(&d[seed_index], rng)?;
    privacy_test(kind, d, seed_index, &y, model, params, rng)
}

/// One round with the seed-based synthesizer, drawing `omega` from `omega`
/// after the seed.
pub fn mechanism_step(
    d: &[Record],
    model: &GenerativeModel,
    omega: OmegaRange,
    params: &PrivacyParams,
    kind: TestKind,
    rng: &mut SimRng,
) -> Result<ReleaseDecision> {
    omega.validate(model.schema().len())?;
    if d.len() < params.k {
        return Err(Error::param(
            "k",
            format!("seed dataset has {} records, fewer than k = {}", d.len(), params.k),
        ));
    }
    let seed_index = rng.random_range(0..d.len());
    let w = omega.draw(rng);
    let om = OmegaModel::new(model, w)?;
    let y = om.generate(&d[seed_index], rng)?;
    let mut decision = privacy_test(kind, d, seed_index, &y, &om, params, rng)?;
    decision.omega = Some(w);
    Ok(decision)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub count: usize,
    pub omega: OmegaRange,
    pub kind: TestKind,
    pub workers: usize,
    pub seed: u64,
    /// Stop after this many candidates even if fewer than `count` passed.
    pub max_candidates: usize,
    /// Wall-clock limit. Runs that hit it are not reproducible.
    pub time_budget: Option<Duration>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GenerationStats {
    pub candidates: usize,
    pub passed: usize,
    pub failed: usize,
    /// Candidates whose count hit a cap (pass or fail).
    pub capped: usize,
    pub capped_failed: usize,
    pub timed_out: bool,
}

#[derive(Debug, Clone)]
pub struct GenerationOutput {
    /// Decisions for candidates `0..stats.candidates`, in candidate order.
    pub decisions: Vec<ReleaseDecision>,
    pub stats: GenerationStats,
}

impl GenerationOutput {
    pub fn released(&self) -> impl Iterator<Item = &Record> {
        self.decisions.iter().filter(|d| d.passed).map(|d| &d.candidate)
    }
}

/// Runs the mechanism until `count` candidates pass.
///
/// Candidate `c` uses the random stream `substream(seed, c)` regardless of
/// which worker evaluates it, and the output is cut at the candidate that
/// completes the `count`-th release, so results do not depend on the number
/// of workers.
pub fn generate(
    d: &[Record],
    model: &GenerativeModel,
    params: &PrivacyParams,
    config: &GenerationConfig,
) -> Result<GenerationOutput> {
    params.validate()?;
    config.omega.validate(model.schema().len())?;
    if config.workers == 0 {
        return Err(Error::param("workers", "need at least one worker"));
    }
    if d.len() < params.k {
        return Err(Error::param(
            "k",
            format!("seed dataset has {} records, fewer than k = {}", d.len(), params.k),
        ));
    }
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let passed = AtomicUsize::new(0);
    let stop = AtomicBool::new(config.count == 0);
    let timed_out = AtomicBool::new(false);
    let results: Mutex<Vec<(usize, Result<ReleaseDecision>)>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..config.workers {
            scope.spawn(|| {
                let mut local = Vec::new();
                while !stop.load(Ordering::Acquire) {
                    if let Some(limit) = config.time_budget {
                        if start.elapsed() >= limit {
                            timed_out.store(true, Ordering::Release);
                            stop.store(true, Ordering::Release);
                            break;
                        }
                    }
                    let c = next.fetch_add(1, Ordering::AcqRel);
                    if c >= config.max_candidates {
                        break;
                    }
                    let mut rng = substream(config.seed, c as u64);
                    let r = mechanism_step(d, model, config.omega, params, config.kind, &mut rng);
                    let done = match &r {
                        Ok(dec) if dec.passed => passed.fetch_add(1, Ordering::AcqRel) + 1 >= config.count,
                        Ok(_) => false,
                        Err(_) => true,
                    };
                    local.push((c, r));
                    if done {
                        stop.store(true, Ordering::Release);
                    }
                }
                results.lock().expect("result buffer poisoned").append(&mut local);
            });
        }
    });

    let mut results = results.into_inner().expect("result buffer poisoned");
    results.sort_by_key(|(c, _)| *c);
    let mut decisions = Vec::new();
    let mut stats = GenerationStats {
        timed_out: timed_out.load(Ordering::Acquire),
        ..GenerationStats::default()
    };
    for (c, r) in results {
        if stats.passed >= config.count {
            break;
        }
        if c != decisions.len() {
            // gap left by a timed-out run; later candidates are discarded
            break;
        }
        let dec = r?;
        stats.candidates += 1;
        if dec.passed {
            stats.passed += 1;
        } else {
            stats.failed += 1;
            if dec.plausible.capped {
                stats.capped_failed += 1;
            }
        }
        if dec.plausible.capped {
            stats.capped += 1;
        }
        decisions.push(dec);
    }
    Ok(GenerationOutput { decisions, stats })
}
