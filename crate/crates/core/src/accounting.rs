//! (ε, δ) budget arithmetic for the release mechanism and model learning.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default δ for structure and parameter learning.
pub const DEFAULT_DELTA: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpBudget {
    pub eps: f64,
    pub delta: f64,
}

impl DpBudget {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::param("eps", format!("must be nonnegative, got {eps}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::param("delta", format!("must lie in [0, 1], got {delta}")));
        }
        Ok(DpBudget { eps, delta })
    }
}

/// Per-release guarantee of the randomized test:
/// `(eps0 + ln(1 + gamma/t), e^(-eps0 (k - t)))` for `1 <= t < k`.
pub fn theorem1_params(k: usize, gamma: f64, eps0: f64, t: usize) -> Result<DpBudget> {
    if t < 1 || t >= k {
        return Err(Error::param("t", format!("need 1 <= t < k = {k}, got {t}")));
    }
    if !(gamma > 1.0) {
        return Err(Error::param("gamma", format!("must exceed 1, got {gamma}")));
    }
    if !(eps0 > 0.0) {
        return Err(Error::param("eps0", format!("must be positive, got {eps0}")));
    }
    Ok(DpBudget {
        eps: eps0 + (gamma / t as f64).ln_1p(),
        delta: (-eps0 * (k - t) as f64).exp(),
    })
}

/// Largest `t` with `e^(-eps0 (k - t)) <= n^-c`, if any.
pub fn max_t_for_delta(k: usize, eps0: f64, n: f64, c: f64) -> Option<usize> {
    let need = c / eps0 * n.ln();
    let t = (k as f64 - need).floor();
    if t >= 1.0 {
        Some(t as usize)
    } else {
        None
    }
}

/// Sequential composition: componentwise sums.
pub fn seq_compose(budgets: &[DpBudget]) -> Result<DpBudget> {
    if budgets.is_empty() {
        return Err(Error::param("budgets", "cannot compose an empty list"));
    }
    Ok(DpBudget {
        eps: budgets.iter().map(|b| b.eps).sum(),
        delta: budgets.iter().map(|b| b.delta).sum(),
    })
}

/// Advanced composition of `count` mechanisms, each (eps, delta):
/// `eps * sqrt(2 count ln(1/slack)) + count * eps * (e^eps - 1)`,
/// `count * delta + slack`.
pub fn adv_compose(eps: f64, delta: f64, count: usize, delta_slack: f64) -> Result<DpBudget> {
    if !(eps >= 0.0) {
        return Err(Error::param("eps", format!("must be nonnegative, got {eps}")));
    }
    if count < 1 {
        return Err(Error::param("count", "must be at least 1"));
    }
    if !(delta_slack > 0.0 && delta_slack < 1.0) {
        return Err(Error::param("delta_slack", format!("must lie in (0, 1), got {delta_slack}")));
    }
    let k = count as f64;
    Ok(DpBudget {
        eps: eps * (2.0 * k * (1.0 / delta_slack).ln()).sqrt() + k * eps * eps.exp_m1(),
        delta: k * delta + delta_slack,
    })
}

/// Amplification by Bernoulli(p) subsampling: `ln(1 + p (e^eps - 1))`, `p delta`.
pub fn amplify(eps: f64, delta: f64, p: f64) -> Result<DpBudget> {
    if !(p > delta && p < 1.0) {
        return Err(Error::param("p", format!("need delta < p < 1, got p = {p}, delta = {delta}")));
    }
    Ok(DpBudget {
        eps: (p * eps.exp_m1()).ln_1p(),
        delta: p * delta,
    })
}

/// Noisy record count plus advanced composition over the `m(m+1)` noisy
/// entropies.
pub fn structure_budget(m: usize, eps_h: f64, eps_nt: f64, delta_l: f64) -> Result<DpBudget> {
    check_positive("eps_H", eps_h)?;
    check_positive("eps_nT", eps_nt)?;
    let entropies = adv_compose(eps_h, 0.0, m * (m + 1), delta_l)?;
    seq_compose(&[DpBudget { eps: eps_nt, delta: 0.0 }, entropies])
}

/// Advanced composition of the per-attribute count vectors over `m`
/// attributes.
pub fn parameter_budget(m: usize, eps_p: f64, delta_p: f64) -> Result<DpBudget> {
    check_positive("eps_p", eps_p)?;
    adv_compose(eps_p, 0.0, m, delta_p)
}

/// Structure and parameters are learned on disjoint subsets, so the model
/// budget is the componentwise maximum, optionally amplified by the
/// probability that a record is sampled into either subset.
pub fn model_budget(structure: DpBudget, parameters: DpBudget, sampling_p: Option<f64>) -> Result<DpBudget> {
    let b = DpBudget {
        eps: structure.eps.max(parameters.eps),
        delta: structure.delta.max(parameters.delta),
    };
    match sampling_p {
        Some(p) => amplify(b.eps, b.delta, p),
        None => Ok(b),
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) {
        return Err(Error::param(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

/// Per-query epsilons for structure and parameter learning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerQuery {
    pub eps_h: f64,
    pub eps_nt: f64,
    pub eps_p: f64,
    pub delta_l: f64,
    pub delta_p: f64,
}

impl PerQuery {
    pub fn structure(&self, m: usize) -> Result<DpBudget> {
        structure_budget(m, self.eps_h, self.eps_nt, self.delta_l)
    }

    pub fn parameters(&self, m: usize) -> Result<DpBudget> {
        parameter_budget(m, self.eps_p, self.delta_p)
    }

    pub fn model(&self, m: usize, sampling_p: Option<f64>) -> Result<DpBudget> {
        model_budget(self.structure(m)?, self.parameters(m)?, sampling_p)
    }
}

/// Chooses per-query epsilons whose model budget meets `target.eps`.
///
/// The pre-amplification target `eps*` is found by inverting the
/// amplification formula. Structure learning then uses `eps_nT = eps_H = s`
/// with `s` bisected so that the structure budget equals `eps*`, and `eps_p`
/// is bisected separately so that the parameter budget equals `eps*`.
/// `target.delta` is used for both δ_L and δ_P.
pub fn solve_per_query(target: DpBudget, m: usize, sampling_p: Option<f64>) -> Result<PerQuery> {
    let infeasible = |msg: String| Error::InfeasibleBudget(msg);
    if !(target.eps > 0.0) || !target.eps.is_finite() {
        return Err(infeasible(format!("target epsilon must be positive and finite, got {}", target.eps)));
    }
    if !(target.delta > 0.0 && target.delta < 1.0) {
        return Err(infeasible(format!("target delta must lie in (0, 1), got {}", target.delta)));
    }
    if m < 1 {
        return Err(infeasible("schema has no attributes".into()));
    }
    let inner = match sampling_p {
        None => target.eps,
        Some(p) => {
            if !(p > target.delta && p < 1.0) {
                return Err(infeasible(format!("sampling probability {p} outside (delta, 1)")));
            }
            // ln(1 + p (e^x - 1)) = eps  <=>  x = eps + ln((1 - e^-eps)/p + e^-eps)
            let e = (-target.eps).exp();
            target.eps + ((1.0 - e) / p + e).ln()
        }
    };
    if !inner.is_finite() {
        return Err(infeasible(format!("cannot invert amplification for epsilon {}", target.eps)));
    }
    let delta = target.delta;
    let s = bisect(inner, |s| Ok(structure_budget(m, s, s, delta)?.eps))
        .map_err(|e| infeasible(format!("structure budget: {e}")))?;
    let eps_p = bisect(inner, |x| Ok(parameter_budget(m, x, delta)?.eps))
        .map_err(|e| infeasible(format!("parameter budget: {e}")))?;
    Ok(PerQuery {
        eps_h: s,
        eps_nt: s,
        eps_p,
        delta_l: delta,
        delta_p: delta,
    })
}

/// Largest `x > 0` with `f(x) <= goal` for increasing `f`, up to 1e-12
/// relative width in `x`.
fn bisect(goal: f64, f: impl Fn(f64) -> Result<f64>) -> std::result::Result<f64, String> {
    let eval = |x: f64| f(x).map_err(|e| e.to_string());
    let mut hi = goal.max(1.0);
    let mut steps = 0;
    while eval(hi)? < goal {
        hi *= 2.0;
        steps += 1;
        if steps > 2000 || !hi.is_finite() {
            return Err("no bracket found".into());
        }
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = eval(mid)?;
        if !v.is_finite() {
            hi = mid;
        } else if v <= goal {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    if lo > 0.0 {
        Ok(lo)
    } else {
        Err(format!("no positive epsilon reaches {goal}"))
    }
}
