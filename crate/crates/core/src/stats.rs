//! Event sampling, fidelity estimation with Wilson intervals, and
//! required-sample-count planning.
//!
//! Throughout, `d = 0` in a plan stands for the `d → ∞` limit, where the
//! gate fidelity tends to `2P − 1` and the P-to-F slope tends to 2.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::choi::fidelity_from_bunching;
use crate::error::{Error, Result};
use crate::hom::OutcomeDistribution;
use crate::rng::RandomStream;
use crate::EventClass;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTally {
    pub n_bunch: u64,
    pub n_anti: u64,
}

impl EventTally {
    pub fn total(&self) -> u64 {
        self.n_bunch + self.n_anti
    }

    pub fn record(&mut self, class: EventClass) {
        match class {
            EventClass::Bunching => self.n_bunch += 1,
            EventClass::AntiBunching => self.n_anti += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub p_hat: f64,
    pub f_gate_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub d: usize,
    pub shots: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMethod {
    Analytic,
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub n_required: u64,
    #[serde(rename = "P")]
    pub p: f64,
    /// Module dimension; 0 means `d → ∞`.
    pub d: usize,
    pub epsilon: f64,
    pub confidence: f64,
    pub method: PlanMethod,
    /// Set when `P ∈ {0, 1}`: zero variance, so no sample count is meaningful.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub degenerate: bool,
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Range(format!("{what} {p} outside [0, 1]")))
    }
}

fn check_confidence(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::Range(format!("confidence {c} outside (0, 1)")))
    }
}

/// `dF/dP = 2d/(d + 1)`; 2 in the `d → ∞` limit (`d = 0`).
pub fn fidelity_slope(d: usize) -> f64 {
    if d == 0 {
        2.0
    } else {
        let d = d as f64;
        2.0 * d / (d + 1.0)
    }
}

/// Affine map from bunching probability to gate fidelity, unclamped.
/// `d = 0` gives the `2P − 1` limit.
pub fn gate_fidelity_affine(p: f64, d: usize) -> f64 {
    if d == 0 {
        2.0 * p - 1.0
    } else {
        let d = d as f64;
        (d * (2.0 * p - 1.0) + 1.0) / (d + 1.0)
    }
}

/// Two-sided standard-normal quantile `z` with `P(|Z| ≤ z) = confidence`.
pub fn normal_quantile(confidence: f64) -> Result<f64> {
    check_confidence(confidence)?;
    let n = Normal::standard();
    Ok(n.inverse_cdf(1.0 - (1.0 - confidence) / 2.0))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(p_hat: f64, n: f64, z: f64) -> (f64, f64) {
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn sample_events(p: f64, n: u64, rng: &mut RandomStream) -> Result<EventTally> {
    check_probability(p, "bunching probability")?;
    if n == 0 {
        return Err(Error::Range("need at least one event".into()));
    }
    let mut tally = EventTally::default();
    for _ in 0..n {
        if rng.random::<f64>() < p {
            tally.n_bunch += 1;
        } else {
            tally.n_anti += 1;
        }
    }
    Ok(tally)
}

/// Multinomial draw of `n` detector-pair events, classified per event.
pub fn sample_from_distribution(
    dist: &OutcomeDistribution,
    n: u64,
    rng: &mut RandomStream,
) -> Result<EventTally> {
    let weights: Vec<f64> = dist.outcomes().iter().map(|o| o.probability.max(0.0)).collect();
    let index = WeightedIndex::new(&weights)
        .map_err(|e| Error::Validation(format!("unusable outcome distribution: {e}")))?;
    let classes: Vec<EventClass> = dist.outcomes().iter().map(|o| dist.class_of(o)).collect();
    let mut tally = EventTally::default();
    for _ in 0..n {
        tally.record(classes[index.sample(rng)]);
    }
    Ok(tally)
}

pub fn estimate_fidelity(t: &EventTally, d: usize, confidence: f64) -> Result<FidelityEstimate> {
    if t.total() == 0 {
        return Err(Error::Validation("empty tally".into()));
    }
    estimate_from_rate(t.n_bunch as f64 / t.total() as f64, t.total(), d, confidence)
}

/// Estimate from an observed bunching rate, e.g. one derived from unfolded counts.
pub fn estimate_from_rate(
    p_hat: f64,
    shots: u64,
    d: usize,
    confidence: f64,
) -> Result<FidelityEstimate> {
    check_probability(p_hat, "observed bunching rate")?;
    if shots == 0 {
        return Err(Error::Validation("no shots".into()));
    }
    if d == 0 {
        return Err(Error::Dimension("estimate needs a finite d >= 1".into()));
    }
    let z = normal_quantile(confidence)?;
    let (p_lo, p_hi) = wilson_interval(p_hat, shots as f64, z);
    // Physical gate fidelities of unitary pairs lie in [1/(d+1), 1].
    let floor = 1.0 / (d as f64 + 1.0);
    let clamp = |f: f64| f.clamp(floor, 1.0);
    let f_hat = clamp(fidelity_from_bunching(p_hat, d)?);
    Ok(FidelityEstimate {
        p_hat,
        f_gate_hat: f_hat,
        ci_low: clamp(fidelity_from_bunching(p_lo, d)?).min(f_hat),
        ci_high: clamp(fidelity_from_bunching(p_hi, d)?).max(f_hat),
        confidence,
        d,
        shots,
        seed: None,
    })
}

/// `n = ⌈z² P(1−P) (2d/(d+1))² / ε²⌉`, the normal-approximation count that
/// puts the fidelity estimate within `±ε` at the given confidence.
pub fn required_samples_analytic(p: f64, d: usize, epsilon: f64, confidence: f64) -> Result<SamplePlan> {
    check_probability(p, "bunching probability")?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Range(format!("precision {epsilon} must be positive")));
    }
    let z = normal_quantile(confidence)?;
    let mut plan = SamplePlan {
        n_required: 1,
        p,
        d,
        epsilon,
        confidence,
        method: PlanMethod::Analytic,
        degenerate: false,
    };
    if p == 0.0 || p == 1.0 {
        plan.degenerate = true;
        return Ok(plan);
    }
    let slope = fidelity_slope(d);
    let n = (z * z * p * (1.0 - p) * slope * slope / (epsilon * epsilon)).ceil();
    plan.n_required = (n as u64).max(1);
    Ok(plan)
}

/// Fraction of `trials` simulated experiments of `n` events whose fidelity
/// estimate lands within `±epsilon` of the truth. Trial `k` draws from
/// `rng.split(k)`, so the result does not depend on thread count.
pub fn coverage_check(
    n: u64,
    p_true: f64,
    d: usize,
    epsilon: f64,
    trials: u64,
    rng: &RandomStream,
) -> Result<f64> {
    check_probability(p_true, "bunching probability")?;
    if trials < 100 {
        return Err(Error::Range(format!("coverage needs >= 100 trials, got {trials}")));
    }
    if n == 0 {
        return Err(Error::Range("need at least one event".into()));
    }
    let binom = Binomial::new(n, p_true).map_err(|e| Error::Range(e.to_string()))?;
    let f_true = gate_fidelity_affine(p_true, d);
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&k| {
            let mut s = rng.split(k);
            let p_hat = binom.sample(&mut s) as f64 / n as f64;
            (gate_fidelity_affine(p_hat, d) - f_true).abs() <= epsilon
        })
        .count();
    Ok(hits as f64 / trials as f64)
}

const MAX_BRACKET_STEPS: usize = 40;

/// Smallest `n` whose simulated coverage reaches `confidence`, found by
/// bracketing around the analytic plan and bisecting.
pub fn required_samples_empirical(
    p: f64,
    d: usize,
    epsilon: f64,
    confidence: f64,
    trials: u64,
    rng: &RandomStream,
) -> Result<SamplePlan> {
    let analytic = required_samples_analytic(p, d, epsilon, confidence)?;
    let mut plan = SamplePlan {
        method: PlanMethod::Empirical,
        ..analytic.clone()
    };
    if analytic.degenerate {
        return Ok(plan);
    }
    let passes = |n: u64| -> Result<bool> {
        Ok(coverage_check(n, p, d, epsilon, trials, &rng.split(n))? >= confidence)
    };

    let mut hi = analytic.n_required;
    let mut steps = 0;
    while !passes(hi)? {
        hi = hi.checked_mul(2).ok_or_else(|| Error::Planner("sample count overflow".into()))?;
        steps += 1;
        if steps > MAX_BRACKET_STEPS {
            return Err(Error::Planner("no passing sample count found".into()));
        }
    }
    let mut lo = hi;
    loop {
        if lo == 1 {
            plan.n_required = 1;
            return Ok(plan);
        }
        lo /= 2;
        if !passes(lo)? {
            break;
        }
        hi = lo;
        steps += 1;
        if steps > 2 * MAX_BRACKET_STEPS {
            return Err(Error::Planner("bracket search did not terminate".into()));
        }
    }
    // Invariant: lo fails, hi passes.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    plan.n_required = hi;
    Ok(plan)
}
