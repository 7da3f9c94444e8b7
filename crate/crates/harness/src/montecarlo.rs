//! Monte Carlo validation of the Bloom-filter estimators.
//!
//! Each trial draws a fresh hash pool, family and private functions from a
//! per-trial seed, builds the initiator filter, inserts the responder set and
//! records `q₁*`, `q′*` and `P*`.

use std::fmt::Write as _;

use privmatch::bloom::{
    build_indexed_set, chebyshev_bounds, choose_family, eps2_lower_bound, estimate_q1, estimate_qprime, estimate_similarity, variance_q1,
    variance_qprime, AttributePool, BloomError, EstimatorParams, IndexedBloomFilter, IndexedElement,
};
use privmatch::similarity::{priority_ochiai, weighted_intersection_size, AttributeProfile};
use rayon::prelude::*;
use serde::Serialize;
use statrs::statistics::Statistics;
use thiserror::Error;

use crate::scenario::Prepared;

pub const MIN_TRIALS: u32 = 100;

#[derive(Debug, Error, PartialEq)]
pub enum MonteCarloError {
    #[error("need at least {MIN_TRIALS} trials, got {0}")]
    TooFewTrials(u32),
    #[error(transparent)]
    Bloom(#[from] BloomError),
    #[error("unknown candidate {0:?}")]
    UnknownCandidate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McParams {
    pub lambda: u32,
    pub l: u32,
    pub lprime: u32,
    pub trials: u32,
    pub seed: u64,
}

impl McParams {
    fn check(&self) -> Result<(), MonteCarloError> {
        if self.trials < MIN_TRIALS {
            return Err(MonteCarloError::TooFewTrials(self.trials));
        }
        choose_family(b"check", self.l, self.lprime, b"check")?;
        Ok(())
    }

    fn trial_seed(&self, t: u32) -> Vec<u8> {
        format!("{}/{}/{}/{}/{t}", self.seed, self.lambda, self.l, self.lprime).into_bytes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
}

impl SampleStats {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            n: xs.len(),
            mean: xs.mean(),
            variance: xs.variance(),
        }
    }
}

/// Estimates from one trial; `None` where an estimator was undefined (saturation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub q1: Option<f64>,
    pub qprime: Option<f64>,
    pub p: Option<f64>,
}

fn initiator_filter(elems: &[IndexedElement], params: &McParams, seed: &[u8]) -> Result<IndexedBloomFilter, BloomError> {
    let spec = choose_family(seed, params.l, params.lprime, seed)?;
    let mut f = IndexedBloomFilter::new(params.lambda, spec)?;
    f.insert_initiator(elems, seed);
    Ok(f)
}

fn estimate(filter: &IndexedBloomFilter, responder: &[IndexedElement], params: &McParams) -> Trial {
    let d1 = filter.count_zero_bits();
    let mut merged = filter.clone();
    merged.insert_responder(responder);
    let d0 = merged.count_zero_bits();
    let q2 = responder.len() as u64;
    Trial {
        q1: estimate_q1(d1, params.lambda, params.l).ok(),
        qprime: estimate_qprime(d0, d1, params.lambda, params.l, params.lprime, q2).ok(),
        p: estimate_similarity(d0, d1, params.lambda, params.l, params.lprime, q2).ok(),
    }
}

/// Runs `params.trials` independent filter trials for one pair of profiles.
pub fn simulate_pair(
    a: &AttributeProfile,
    b: &AttributeProfile,
    pool: &AttributePool,
    params: &McParams,
) -> Result<Vec<Trial>, MonteCarloError> {
    params.check()?;
    let sa = build_indexed_set(a, pool)?;
    let sb = build_indexed_set(b, pool)?;
    (0..params.trials)
        .into_par_iter()
        .map(|t| {
            let seed = params.trial_seed(t);
            Ok(estimate(&initiator_filter(&sa, params, &seed)?, &sb, params))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub q1: SampleStats,
    pub qprime: SampleStats,
    pub p: SampleStats,
    pub true_q1: f64,
    pub true_q2: f64,
    pub true_qprime: f64,
    pub true_p: f64,
    pub formula_var_q1: f64,
    pub formula_var_qprime: f64,
    /// Trials where at least one estimator was undefined.
    pub saturated: usize,
}

fn collect(trials: &[Trial], f: impl Fn(&Trial) -> Option<f64>) -> Vec<f64> {
    trials.iter().filter_map(f).collect()
}

pub fn summarize(trials: &[Trial], a: &AttributeProfile, b: &AttributeProfile, params: &McParams) -> EstimatorSummary {
    let (q1, q2) = (a.weighted_size() as f64, b.weighted_size() as f64);
    let qprime = weighted_intersection_size(a, b) as f64;
    let (lam, l, lp) = (f64::from(params.lambda), f64::from(params.l), f64::from(params.lprime));
    EstimatorSummary {
        q1: SampleStats::of(&collect(trials, |t| t.q1)),
        qprime: SampleStats::of(&collect(trials, |t| t.qprime)),
        p: SampleStats::of(&collect(trials, |t| t.p)),
        true_q1: q1,
        true_q2: q2,
        true_qprime: qprime,
        true_p: priority_ochiai(a, b),
        formula_var_q1: variance_q1(lam, l, q1),
        formula_var_qprime: variance_qprime(lam, l, lp, q1, q2, qprime),
        saturated: trials
            .iter()
            .filter(|t| t.q1.is_none() || t.qprime.is_none() || t.p.is_none())
            .count(),
    }
}

/// Empirical coverage against the Chebyshev guarantee at one `(ε₁, ε₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageRow {
    pub lambda: u32,
    pub l: u32,
    pub lprime: u32,
    pub eps1: f64,
    pub eps2: f64,
    pub p1: f64,
    pub p2: f64,
    pub empirical_q1: f64,
    pub empirical_qprime: f64,
}

impl CoverageRow {
    pub fn holds_q1(&self) -> bool {
        self.empirical_q1 >= 1.0 - self.p1
    }

    pub fn holds_qprime(&self) -> bool {
        self.empirical_qprime >= 1.0 - self.p2
    }
}

/// `ε₂` defaults to the larger of `ε₁` and its admissible lower bound.
pub fn coverage(trials: &[Trial], summary: &EstimatorSummary, params: &McParams, eps1: f64) -> Result<CoverageRow, MonteCarloError> {
    let ep = EstimatorParams {
        lambda: f64::from(params.lambda),
        l: f64::from(params.l),
        lprime: f64::from(params.lprime),
        q1: summary.true_q1,
        q2: summary.true_q2,
        qprime: summary.true_qprime,
    };
    let eps2 = eps1.max(eps2_lower_bound(&ep));
    let (p1, p2) = chebyshev_bounds(eps1, eps2, &ep)?;
    let n = trials.len() as f64;
    let within = |get: fn(&Trial) -> Option<f64>, truth: f64, eps: f64| {
        trials
            .iter()
            .filter(|t| get(t).is_some_and(|v| (v - truth).abs() <= eps * truth))
            .count() as f64
            / n
    };
    Ok(CoverageRow {
        lambda: params.lambda,
        l: params.l,
        lprime: params.lprime,
        eps1,
        eps2,
        p1,
        p2,
        empirical_q1: within(|t| t.q1, summary.true_q1, eps1),
        empirical_qprime: within(|t| t.qprime, summary.true_qprime, eps2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankAccuracy {
    pub trials: u32,
    pub hits: u32,
    pub accuracy: f64,
    pub expected_best: String,
    /// Candidate sessions whose estimate was undefined.
    pub saturated: u64,
}

/// Fraction of trials in which the highest `P*` names the true best match.
///
/// The initiator's filter is built once per trial and reused for every candidate.
pub fn rank_accuracy(prepared: &Prepared, params: &McParams) -> Result<RankAccuracy, MonteCarloError> {
    params.check()?;
    let sa = build_indexed_set(&prepared.initiator, &prepared.pool)?;
    let sets: Vec<(&str, Vec<IndexedElement>)> = prepared
        .candidates
        .iter()
        .map(|c| Ok((c.name.as_str(), build_indexed_set(&c.profile, &prepared.pool)?)))
        .collect::<Result<_, BloomError>>()?;
    let expected_best = prepared
        .candidates
        .iter()
        .max_by(|x, y| priority_ochiai(&prepared.initiator, &x.profile).total_cmp(&priority_ochiai(&prepared.initiator, &y.profile)))
        .map(|c| c.name.clone())
        .unwrap_or_default();
    let outcomes: Vec<(bool, u64)> = (0..params.trials)
        .into_par_iter()
        .map(|t| {
            let filter = initiator_filter(&sa, params, &params.trial_seed(t))?;
            let mut best: Option<(&str, f64)> = None;
            let mut saturated = 0;
            for (name, sb) in &sets {
                match estimate(&filter, sb, params).p {
                    Some(p) if best.is_none_or(|(_, b)| p > b) => best = Some((name, p)),
                    Some(_) => {}
                    None => saturated += 1,
                }
            }
            Ok((best.is_some_and(|(n, _)| n == expected_best), saturated))
        })
        .collect::<Result<_, BloomError>>()?;
    let hits = outcomes.iter().filter(|o| o.0).count() as u32;
    Ok(RankAccuracy {
        trials: params.trials,
        hits,
        accuracy: f64::from(hits) / f64::from(params.trials),
        expected_best,
        saturated: outcomes.iter().map(|o| o.1).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub params: McParams,
    pub candidate: String,
    pub estimators: EstimatorSummary,
    pub coverage: Vec<CoverageRow>,
    pub rank: RankAccuracy,
}

pub const COVERAGE_EPS: [f64; 2] = [0.2, 0.3];

/// Full Monte Carlo run: estimator moments for the initiator against
/// `candidate`, Chebyshev coverage and rank accuracy over all candidates.
pub fn monte_carlo_estimators(prepared: &Prepared, candidate: &str, params: &McParams) -> Result<MonteCarloReport, MonteCarloError> {
    let b = prepared
        .candidates
        .iter()
        .find(|c| c.name == candidate)
        .ok_or_else(|| MonteCarloError::UnknownCandidate(candidate.to_owned()))?;
    let trials = simulate_pair(&prepared.initiator, &b.profile, &prepared.pool, params)?;
    let estimators = summarize(&trials, &prepared.initiator, &b.profile, params);
    let coverage = COVERAGE_EPS
        .iter()
        .map(|&e| coverage(&trials, &estimators, params, e))
        .collect::<Result<_, _>>()?;
    let rank = rank_accuracy(prepared, params)?;
    Ok(MonteCarloReport {
        params: *params,
        candidate: candidate.to_owned(),
        estimators,
        coverage,
        rank,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub schema: &'static str,
    pub metric: String,
    pub value: f64,
    pub reference: Option<f64>,
}

pub const MONTECARLO_SCHEMA: &str = "privmatch-montecarlo/1";

impl MonteCarloReport {
    pub fn rows(&self) -> Vec<SummaryRow> {
        let e = &self.estimators;
        let row = |metric: &str, value: f64, reference: Option<f64>| SummaryRow {
            schema: MONTECARLO_SCHEMA,
            metric: metric.to_owned(),
            value,
            reference,
        };
        let mut rows = vec![
            row("q1.mean", e.q1.mean, Some(e.true_q1)),
            row("q1.variance", e.q1.variance, Some(e.formula_var_q1)),
            row("qprime.mean", e.qprime.mean, Some(e.true_qprime)),
            row("qprime.variance", e.qprime.variance, Some(e.formula_var_qprime)),
            row("p.mean", e.p.mean, Some(e.true_p)),
            row("p.variance", e.p.variance, None),
            row("saturated", e.saturated as f64, None),
        ];
        for c in &self.coverage {
            rows.push(row(&format!("coverage.q1@{}", c.eps1), c.empirical_q1, Some(1.0 - c.p1)));
            rows.push(row(&format!("coverage.qprime@{:.4}", c.eps2), c.empirical_qprime, Some(1.0 - c.p2)));
        }
        rows.push(row("rank.accuracy", self.rank.accuracy, None));
        rows.push(row("rank.saturated", self.rank.saturated as f64, None));
        rows
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        writeln!(
            s,
            "lambda={} l={} l'={} trials={} seed={} (pair with {})",
            p.lambda, p.l, p.lprime, p.trials, p.seed, self.candidate
        )
        .unwrap();
        writeln!(s, "{:<24} {:>12} {:>12}", "metric", "value", "reference").unwrap();
        for r in self.rows() {
            let reference = r.reference.map_or_else(|| "-".into(), |x| format!("{x:.5}"));
            writeln!(s, "{:<24} {:>12.5} {:>12}", r.metric, r.value, reference).unwrap();
        }
        writeln!(s, "best match expected: {}", self.rank.expected_best).unwrap();
        s
    }
}
