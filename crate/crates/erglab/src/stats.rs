//! Empirical-distribution machinery and convergence verdicts.
//!
//! Kolmogorov–Smirnov distances against closed-form laws and against exact
//! discrete oracles, the distribution-free DKW confidence band, and the
//! n-sweep verdict machine used by the limit-law checks: since the theorems
//! provide no convergence rates, a sweep passes when the KS sequence is
//! nonincreasing within DKW noise *and* the final KS clears the stated
//! threshold.

use crate::limits::AlphaLaw;
use crate::rng::replica_rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample contains NaN")]
    NaNSample,
    #[error("n_list must be strictly increasing with at least 3 entries")]
    InvalidNList,
    #[error("all paths were censored at n = {0}")]
    AllCensored(u64),
}

/// Sorted sample with step-function evaluation.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    xs: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut xs: Vec<f64>) -> Result<Self, StatsError> {
        if xs.is_empty() {
            return Err(StatsError::EmptySample);
        }
        if xs.iter().any(|v| v.is_nan()) {
            return Err(StatsError::NaNSample);
        }
        xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { xs })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one point
    }

    pub fn values(&self) -> &[f64] {
        &self.xs
    }

    /// `F_n(x)` = fraction of sample `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.xs.partition_point(|&v| v <= x) as f64 / self.xs.len() as f64
    }

    /// Fraction of sample strictly below `x` (the left limit of the step).
    pub fn eval_left(&self, x: f64) -> f64 {
        self.xs.partition_point(|&v| v < x) as f64 / self.xs.len() as f64
    }

    /// KS distance to a continuous CDF: the sup over sample points of both
    /// one-sided gaps.
    pub fn ks_to_cdf<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.xs.len() as f64;
        let mut sup = 0.0_f64;
        for (i, &x) in self.xs.iter().enumerate() {
            let f = cdf(x);
            sup = sup.max(((i + 1) as f64 / n - f).abs());
            sup = sup.max((i as f64 / n - f).abs());
        }
        sup
    }

    pub fn ks_to_law(&self, law: &AlphaLaw) -> f64 {
        self.ks_to_cdf(|x| law.cdf(x))
    }
}

/// A discrete law as sorted atoms with cumulative probabilities, used for
/// the exact renewal oracles.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    /// (value, P(X <= value)) sorted by value.
    atoms: Vec<(f64, f64)>,
}

impl DiscreteLaw {
    /// Build from (value, probability) pairs; probabilities are normalized.
    pub fn from_pmf(pairs: &[(f64, f64)]) -> Result<Self, StatsError> {
        if pairs.is_empty() {
            return Err(StatsError::EmptySample);
        }
        let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
        if sorted.iter().any(|(v, p)| v.is_nan() || p.is_nan()) {
            return Err(StatsError::NaNSample);
        }
        sorted.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total: f64 = sorted.iter().map(|(_, p)| p).sum();
        let mut atoms = Vec::with_capacity(sorted.len());
        let mut acc = 0.0;
        for (v, p) in sorted {
            acc += p / total;
            match atoms.last_mut() {
                Some((last_v, last_c)) if *last_v == v => *last_c = acc,
                _ => atoms.push((v, acc)),
            }
        }
        Ok(Self { atoms })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.atoms.partition_point(|&(v, _)| v <= x) {
            0 => 0.0,
            i => self.atoms[i - 1].1,
        }
    }

    fn cdf_left(&self, x: f64) -> f64 {
        match self.atoms.partition_point(|&(v, _)| v < x) {
            0 => 0.0,
            i => self.atoms[i - 1].1,
        }
    }

    /// KS distance to a continuous law: the sup is attained at the atoms,
    /// checking the cumulative value from both sides of each jump.
    pub fn ks_to_law(&self, law: &AlphaLaw) -> f64 {
        let mut sup = 0.0_f64;
        let mut below = 0.0;
        for &(v, c) in &self.atoms {
            let f = law.cdf(v);
            sup = sup.max((c - f).abs());
            sup = sup.max((below - f).abs());
            below = c;
        }
        sup
    }

    /// KS distance between an empirical CDF and this law (both step
    /// functions; the sup is attained at a jump of either).
    pub fn ks_to_ecdf(&self, ecdf: &EmpiricalCdf) -> f64 {
        let mut sup = 0.0_f64;
        for &(v, _) in &self.atoms {
            sup = sup.max((ecdf.eval(v) - self.cdf(v)).abs());
            sup = sup.max((ecdf.eval_left(v) - self.cdf_left(v)).abs());
        }
        for &x in ecdf.values() {
            sup = sup.max((ecdf.eval(x) - self.cdf(x)).abs());
            sup = sup.max((ecdf.eval_left(x) - self.cdf_left(x)).abs());
        }
        sup
    }
}

/// DKW band half-width: `sqrt(ln(2/(1-confidence)) / (2n))`.
///
/// Confidence is capped at 0.9999 to keep the bound finite.
pub fn dkw_bound(n: u64, confidence: f64) -> f64 {
    assert!(n >= 1);
    let conf = confidence.min(0.9999);
    ((2.0 / (1.0 - conf)).ln() / (2.0 * n as f64)).sqrt()
}

/// One row of a convergence sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub n: u64,
    pub samples: u64,
    pub censored: u64,
    pub ks: f64,
    pub dkw95: f64,
}

/// Verdict of a convergence sweep: a monotone-trend flag (each KS at most
/// the previous plus the two DKW bounds) and a final-gate flag (last KS at
/// or below the threshold).
#[derive(Debug, Clone)]
pub struct SweepVerdict {
    pub rows: Vec<SweepRow>,
    pub monotone_trend: bool,
    pub final_gate: bool,
}

impl SweepVerdict {
    pub fn pass(&self) -> bool {
        self.monotone_trend && self.final_gate
    }

    /// Evaluate the two flags from KS rows. Exposed so exact (noise-free)
    /// sweeps can reuse the verdict logic with zero noise allowance.
    pub fn from_rows(rows: Vec<SweepRow>, threshold: f64) -> Self {
        let mut monotone = true;
        for w in rows.windows(2) {
            let allowance = w[0].dkw95 + w[1].dkw95;
            if w[1].ks > w[0].ks + allowance {
                monotone = false;
            }
        }
        let final_gate = rows.last().map(|r| r.ks <= threshold).unwrap_or(false);
        SweepVerdict { rows, monotone_trend: monotone, final_gate }
    }
}

/// Monte-Carlo convergence sweep of a [0,1]-valued path statistic against a
/// closed-form law.
///
/// For each horizon in `n_list` (strictly increasing, at least 3 entries),
/// `samples_per_n` replicas of the statistic are drawn in parallel, each on
/// its own deterministic RNG stream keyed by `(master_seed, lane, replica)`;
/// censored paths (generator returns `None`) are counted and excluded.
pub fn convergence_sweep<G>(
    generator: G,
    law: &AlphaLaw,
    n_list: &[u64],
    samples_per_n: u64,
    threshold: f64,
    master_seed: u64,
) -> Result<SweepVerdict, StatsError>
where
    G: Fn(u64, &mut ChaCha8Rng) -> Option<f64> + Sync,
{
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StatsError::InvalidNList);
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for (lane, &n) in n_list.iter().enumerate() {
        let outcomes: Vec<Option<f64>> = (0..samples_per_n)
            .into_par_iter()
            .map(|replica| {
                let mut rng = replica_rng(master_seed, lane as u64, replica);
                generator(n, &mut rng)
            })
            .collect();
        let censored = outcomes.iter().filter(|o| o.is_none()).count() as u64;
        let xs: Vec<f64> = outcomes.into_iter().flatten().collect();
        if xs.is_empty() {
            return Err(StatsError::AllCensored(n));
        }
        let retained = xs.len() as u64;
        let ecdf = EmpiricalCdf::new(xs)?;
        rows.push(SweepRow {
            n,
            samples: retained,
            censored,
            ks: ecdf.ks_to_law(law),
            dkw95: dkw_bound(retained, 0.95),
        });
    }
    Ok(SweepVerdict::from_rows(rows, threshold))
}
