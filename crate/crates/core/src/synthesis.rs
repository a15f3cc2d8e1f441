//! Seed-based synthesis and exact generation probabilities.
//!
//! A synthetic record keeps the seed's values on the first `m - omega`
//! attributes of the topological order and resamples the remaining `omega`
//! from the conditional tables, in order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Record;
use crate::noise::SimRng;
use crate::params::GenerativeModel;
use crate::{Error, Result};

/// Number of resampled attributes, either fixed or drawn uniformly per
/// candidate from `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaRange {
    pub lo: usize,
    pub hi: usize,
}

impl OmegaRange {
    pub fn fixed(omega: usize) -> Self {
        OmegaRange { lo: omega, hi: omega }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.lo < 1 || self.hi < self.lo || self.hi > m {
            return Err(Error::param(
                "omega",
                format!("range {self} must satisfy 1 <= lo <= hi <= {m}"),
            ));
        }
        Ok(())
    }

    /// One uniform draw from the range. Always consumes randomness, also
    /// for a fixed omega.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

impl fmt::Display for OmegaRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}-{}", self.lo, self.hi)
        }
    }
}

impl FromStr for OmegaRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("omega", format!("expected `<w>` or `<lo>-<hi>`, got `{s}`"));
        let (lo, hi) = match s.split_once('-') {
            Some((lo, hi)) => (lo.trim(), hi.trim()),
            None => (s.trim(), s.trim()),
        };
        Ok(OmegaRange {
            lo: lo.parse().map_err(|_| bad())?,
            hi: hi.parse().map_err(|_| bad())?,
        })
    }
}

fn check_omega(model: &GenerativeModel, omega: usize) -> Result<()> {
    OmegaRange::fixed(omega).validate(model.schema().len())
}

/// Resamples the last `omega` attributes of the model's order, conditioning
/// each on its parents' current values.
pub fn synthesize<R: Rng + ?Sized>(seed: &Record, omega: usize, model: &GenerativeModel, rng: &mut R) -> Result<Record> {
    check_omega(model, omega)?;
    let sigma = model.graph().sigma();
    let m = sigma.len();
    if seed.len() != m {
        return Err(Error::Inconsistent("seed does not match the model schema".into()));
    }
    let mut out = seed.clone();
    for &a in &sigma[m - omega..] {
        let table = model.conditional(a, &out)?;
        out.values_mut()[a] = table.sample(rng);
    }
    Ok(out)
}

/// Draws every attribute independently from its marginal.
pub fn synthesize_marginal<R: Rng + ?Sized>(model: &GenerativeModel, rng: &mut R) -> Result<Record> {
    (0..model.schema().len())
        .map(|a| Ok(model.marginal(a)?.sample(rng)))
        .collect::<Result<Vec<u32>>>()
        .map(Record::new)
}

/// Product of the resampled attributes' conditionals evaluated at `y`. This is
/// the generation probability of `y` from any seed that agrees with `y` on
/// the retained attributes.
pub fn resampled_probability(model: &GenerativeModel, y: &Record, omega: usize) -> Result<f64> {
    check_omega(model, omega)?;
    let sigma = model.graph().sigma();
    let m = sigma.len();
    if y.len() != m {
        return Err(Error::Inconsistent("record does not match the model schema".into()));
    }
    let mut p = 1.0;
    for &a in &sigma[m - omega..] {
        p *= model.conditional(a, y)?.prob(y[a]);
    }
    Ok(p)
}

/// Pr[y = M(d)] for the seed-based synthesizer with `omega` resampled
/// attributes.
pub fn record_probability(model: &GenerativeModel, d: &Record, y: &Record, omega: usize) -> Result<f64> {
    check_omega(model, omega)?;
    let sigma = model.graph().sigma();
    let m = sigma.len();
    if d.len() != m || y.len() != m {
        return Err(Error::Inconsistent("record does not match the model schema".into()));
    }
    if sigma[..m - omega].iter().any(|&a| d[a] != y[a]) {
        return Ok(0.0);
    }
    resampled_probability(model, y, omega)
}

/// A randomized map from seed records to synthetic records with computable
/// output probabilities. Privacy tests and the release mechanism are written
/// against this interface.
pub trait SeedModel: Sync {
    fn generation_probability(&self, seed: &Record, y: &Record) -> Result<f64>;

    fn generate(&self, seed: &Record, rng: &mut SimRng) -> Result<Record>;

    /// Evaluator of `seed -> Pr[y = M(seed)]` for a fixed output `y`.
    /// Implementations can precompute the parts that depend only on `y`.
    fn seed_probabilities<'a>(&'a self, y: &'a Record) -> Result<SeedProbabilities<'a>> {
        Ok(Box::new(move |s| self.generation_probability(s, y)))
    }
}

/// Evaluator returned by [`SeedModel::seed_probabilities`].
pub type SeedProbabilities<'a> = Box<dyn Fn(&Record) -> Result<f64> + 'a>;

/// The seed-based synthesizer with a fixed `omega`.
#[derive(Debug, Clone, Copy)]
pub struct OmegaModel<'a> {
    pub model: &'a GenerativeModel,
    pub omega: usize,
}

impl<'a> OmegaModel<'a> {
    pub fn new(model: &'a GenerativeModel, omega: usize) -> Result<Self> {
        check_omega(model, omega)?;
        Ok(OmegaModel { model, omega })
    }

    /// Attributes copied from the seed.
    pub fn retained(&self) -> &'a [usize] {
        let sigma = self.model.graph().sigma();
        &sigma[..sigma.len() - self.omega]
    }
}

impl SeedModel for OmegaModel<'_> {
    fn generation_probability(&self, seed: &Record, y: &Record) -> Result<f64> {
        record_probability(self.model, seed, y, self.omega)
    }

    fn generate(&self, seed: &Record, rng: &mut SimRng) -> Result<Record> {
        synthesize(seed, self.omega, self.model, rng)
    }

    fn seed_probabilities<'b>(&'b self, y: &'b Record) -> Result<SeedProbabilities<'b>> {
        let p = resampled_probability(self.model, y, self.omega)?;
        let retained = self.retained();
        let m = self.model.schema().len();
        Ok(Box::new(move |s: &Record| {
            if s.len() != m {
                return Err(Error::Inconsistent("seed does not match the model schema".into()));
            }
            Ok(if retained.iter().all(|&a| s[a] == y[a]) { p } else { 0.0 })
        }))
    }
}
