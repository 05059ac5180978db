//! The example dynamical systems and the renewal-shift chain.
//!
//! Two infinite measure preserving interval maps with an indifferent fixed
//! point at 0, each with two increasing full branches:
//!
//! - Thaler map: `f(x) = x + x^2 e^{-1/x}` on `[0, a]` and `(x-a)/(1-a)` on
//!   `(a, 1]`, where `a` solves `f(a) = 1`.
//! - Lasota–Yorke map: `x/(1-x)` on `[0, 1/2]` and `2x - 1` on `(1/2, 1]`.
//!
//! The renewal shift is the exactly solvable Markov-chain counterpart: visits
//! to the marked state are separated by i.i.d. return times with a prescribed
//! heavy tail `P(phi > n)`, infinite in mean (the null-recurrent regime).
//! It is the only model with a noise-free distribution oracle downstream.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("point {0} outside the unit interval")]
    OutsideUnitInterval(f64),
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("iteration cap must be at least 1")]
    InvalidCap,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Closed subinterval of [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, DynamicsError> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(DynamicsError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

fn thaler_left(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x + x * x * (-1.0 / x).exp()
    }
}

/// Branch point of the Thaler map: the unique `a` in (0, 1) with `f(a) = 1`.
///
/// Bisection on [0.5, 1]; the bracket is analytically valid since
/// `f(0.5) < 1 < f(1)`. The residual `|f(a) - 1|` is at most 1e-14.
pub fn thaler_branch_point() -> f64 {
    let (mut lo, mut hi) = (0.5_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket is one ulp wide
        }
        if thaler_left(mid) > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    debug_assert!((thaler_left(a) - 1.0).abs() <= 1e-14);
    a
}

/// Thaler's example map with `f(x) = x + x^2 e^{-1/x}`.
#[derive(Debug, Clone, Copy)]
pub struct ThalerMap {
    a: f64,
}

impl ThalerMap {
    pub fn new() -> Self {
        Self { a: thaler_branch_point() }
    }

    pub fn branch_point(&self) -> f64 {
        self.a
    }
}

impl Default for ThalerMap {
    fn default() -> Self {
        Self::new()
    }
}

/// The Lasota–Yorke map.
#[derive(Debug, Clone, Copy, Default)]
pub struct LasotaYorkeMap;

/// One of the two interval maps, as a value object usable in hot loops.
#[derive(Debug, Clone, Copy)]
pub enum IntervalMap {
    Thaler(ThalerMap),
    LasotaYorke(LasotaYorkeMap),
}

impl IntervalMap {
    pub fn thaler() -> Self {
        Self::Thaler(ThalerMap::new())
    }

    pub fn lasota_yorke() -> Self {
        Self::LasotaYorke(LasotaYorkeMap)
    }

    /// One application of the map; `x` must lie in [0, 1].
    ///
    /// The branch boundary belongs to the left-closed branch; the output is
    /// clamped into [0, 1] against rounding.
    pub fn eval(&self, x: f64) -> Result<f64, DynamicsError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(DynamicsError::OutsideUnitInterval(x));
        }
        Ok(self.step(x))
    }

    /// Unchecked variant of [`eval`](Self::eval) for orbit loops.
    #[inline]
    pub fn step(&self, x: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&x));
        match self {
            IntervalMap::Thaler(m) => {
                if x <= m.a {
                    thaler_left(x).min(1.0)
                } else {
                    ((x - m.a) / (1.0 - m.a)).clamp(0.0, 1.0)
                }
            }
            IntervalMap::LasotaYorke(_) => {
                if x <= 0.5 {
                    x / (1.0 - x)
                } else {
                    2.0 * x - 1.0
                }
            }
        }
    }
}

/// First-return (or first-entry) time outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnTime {
    Hit(u64),
    Exceeded(u64),
}

/// Smallest `n >= 1` with `T^n(x) in A`, or `Exceeded(cap)`.
///
/// Conservativity makes the return time a.s. finite; the cap is an
/// engineering guard against unbounded loops near the indifferent fixed
/// point. `Exceeded` is a value, not a failure.
pub fn return_time(
    map: &IntervalMap,
    a: &Interval,
    x: f64,
    cap: u64,
) -> Result<ReturnTime, DynamicsError> {
    if cap == 0 {
        return Err(DynamicsError::InvalidCap);
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(DynamicsError::OutsideUnitInterval(x));
    }
    let mut y = x;
    for n in 1..=cap {
        y = map.step(y);
        if a.contains(y) {
            return Ok(ReturnTime::Hit(n));
        }
    }
    Ok(ReturnTime::Exceeded(cap))
}

/// Return-time tail family for the renewal shift: `tail(n) = P(phi > n)`.
///
/// All three have `tail(0) = 1`, decrease to 0 and sum to infinity, so the
/// mean return time is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailKind {
    /// `P(phi > n) = (n+1)^{-alpha}`, `alpha` in (0, 1). Wandering rate
    /// regularly varying with exponent `1 - alpha`.
    PurePower { alpha: f64 },
    /// `P(phi > n) = 1/(n+1)`. Wandering rate `~ ln n` (slowly varying).
    Harmonic,
    /// `P(phi > n) = 1/ln(n+e)`. Wandering rate `~ n/ln n`.
    InverseLog,
}

impl TailKind {
    pub fn pure_power(alpha: f64) -> Result<Self, DynamicsError> {
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(DynamicsError::InvalidParameter("alpha must lie in (0, 1)"));
        }
        Ok(Self::PurePower { alpha })
    }

    /// `P(phi > n)`; exactly 1 at n = 0 for every kind.
    #[inline]
    pub fn tail(&self, n: u64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        match self {
            TailKind::PurePower { alpha } => ((n + 1) as f64).powf(-alpha),
            TailKind::Harmonic => 1.0 / (n + 1) as f64,
            TailKind::InverseLog => 1.0 / (n as f64 + std::f64::consts::E).ln(),
        }
    }

    /// `P(phi = k) = tail(k-1) - tail(k)`, `k >= 1`.
    #[inline]
    pub fn increment(&self, k: u64) -> f64 {
        debug_assert!(k >= 1);
        self.tail(k - 1) - self.tail(k)
    }

    /// Inverse-transform sample of `phi`, clamped to `cap`.
    ///
    /// Returns `min(phi, cap)` where `phi = min{n >= 1 : tail(n) < u}`, so
    /// `P(phi > n) = tail(n)` for `u` uniform on (0, 1]. The clamp keeps the
    /// closed-form candidates (e.g. `ceil(e^{1/u} - e)` for the inverse-log
    /// tail) from overflowing; callers only ever consume `min(phi, horizon)`.
    pub fn sample_phi(&self, u: f64, cap: u64) -> u64 {
        debug_assert!(0.0 < u && u <= 1.0);
        debug_assert!(cap >= 1);
        let cand = match self {
            TailKind::PurePower { alpha } => u.powf(-1.0 / alpha) - 1.0,
            TailKind::Harmonic => 1.0 / u - 1.0,
            TailKind::InverseLog => {
                if 1.0 / u > 690.0 {
                    return cap; // e^{1/u} would overflow; phi certainly exceeds any horizon
                }
                (1.0 / u).exp() - std::f64::consts::E
            }
        };
        if !cand.is_finite() || cand >= cap as f64 {
            return cap;
        }
        let mut n = (cand.ceil() as u64).max(1);
        // float-boundary fixups: enforce tail(n) < u <= tail(n-1) exactly
        while n < cap && self.tail(n) >= u {
            n += 1;
        }
        while n > 1 && self.tail(n - 1) < u {
            n -= 1;
        }
        n
    }
}

/// Renewal probabilities `u_n = P(chain is in the marked state at time n)`
/// for the at-renewal start: `u_0 = 1`, `u_n = sum_{k=1..n} p_k u_{n-k}`.
///
/// O(n^2); the caller accepts the cost.
pub fn renewal_u_sequence(tail: &TailKind, n_max: usize) -> Vec<f64> {
    let p: Vec<f64> = (0..=n_max).map(|k| if k == 0 { 0.0 } else { tail.increment(k as u64) }).collect();
    let mut u = vec![0.0; n_max + 1];
    u[0] = 1.0;
    for n in 1..=n_max {
        let mut acc = 0.0;
        for k in 1..=n {
            acc += p[k] * u[n - k];
        }
        u[n] = acc;
    }
    u
}

/// Initial-delay law for the renewal shift.
#[derive(Debug, Clone)]
pub enum DelayKind {
    /// Time 0 is a renewal (start in the marked state).
    AtRenewal,
    /// Stationary-like delay: `P(D = k) ∝ tail(k)` for `k <= cap`. The cap is
    /// required because the untruncated weights are not summable here.
    DelayTail { cap: u64 },
}

/// The renewal-shift model.
#[derive(Debug, Clone)]
pub struct RenewalShift {
    pub tail: TailKind,
    pub delay: DelayKind,
    delay_cum: Option<Vec<f64>>,
}

impl RenewalShift {
    pub fn new(tail: TailKind, delay: DelayKind) -> Self {
        let delay_cum = match &delay {
            DelayKind::AtRenewal => None,
            DelayKind::DelayTail { cap } => {
                let mut cum = Vec::with_capacity(*cap as usize + 1);
                let mut acc = 0.0;
                for k in 0..=*cap {
                    acc += tail.tail(k);
                    cum.push(acc);
                }
                let total = acc;
                for c in &mut cum {
                    *c /= total;
                }
                Some(cum)
            }
        };
        Self { tail, delay, delay_cum }
    }

    pub fn at_renewal(tail: TailKind) -> Self {
        Self::new(tail, DelayKind::AtRenewal)
    }

    /// Draw the initial delay (0 means the start is a renewal).
    pub fn sample_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.delay_cum {
            None => 0,
            Some(cum) => {
                let u: f64 = rng.random();
                cum.partition_point(|&c| c < u) as u64
            }
        }
    }
}

/// Admissible initial distributions (absolutely continuous), plus a point
/// mass for deterministic debugging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDistribution {
    LebesgueOn(Interval),
    UniformOnA,
    PointMass(f64),
}

impl InitialDistribution {
    /// Point masses are not absolutely continuous and are excluded from
    /// distributional statements; they exist for debugging only.
    pub fn is_admissible(&self) -> bool {
        !matches!(self, InitialDistribution::PointMass(_))
    }

    pub fn sample<R: Rng + ?Sized>(&self, a: &Interval, rng: &mut R) -> f64 {
        match self {
            InitialDistribution::LebesgueOn(iv) => iv.lo + rng.random::<f64>() * iv.length(),
            InitialDistribution::UniformOnA => a.lo + rng.random::<f64>() * a.length(),
            InitialDistribution::PointMass(x) => *x,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn thaler_bracket_endpoints() {
        // f(1) = 1 + e^{-1}, f(0.5) = 0.5 + 0.25 e^{-2}
        assert_relative_eq!(thaler_left(1.0), 1.0 + (-1.0_f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(thaler_left(0.5), 0.5 + 0.25 * (-2.0_f64).exp(), max_relative = 1e-15);
        assert!(thaler_left(0.5) < 1.0 && thaler_left(1.0) > 1.0);
    }

    #[test]
    fn thaler_branch_point_value() {
        let a = thaler_branch_point();
        assert!((thaler_left(a) - 1.0).abs() <= 1e-14);
        // frozen from the bisection oracle
        assert_abs_diff_eq!(a, 0.8094896579684965, epsilon = 1e-12);
    }

    #[test]
    fn map_eval_reference_points() {
        let ly = IntervalMap::lasota_yorke();
        assert_relative_eq!(ly.eval(0.25).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(ly.eval(0.75).unwrap(), 0.5);
        assert_eq!(ly.eval(0.5).unwrap(), 1.0);
        assert_eq!(ly.eval(1.0).unwrap(), 1.0);

        let th = IntervalMap::thaler();
        assert_eq!(th.eval(0.0).unwrap(), 0.0);
        let a = thaler_branch_point();
        assert!((th.eval(a).unwrap() - 1.0).abs() <= 1e-14);
        assert_eq!(th.eval(1.0).unwrap(), 1.0);
        assert!(th.eval(1.5).is_err());
    }

    #[test]
    fn branches_strictly_increasing_and_full() {
        let a = thaler_branch_point();
        let cases: [(IntervalMap, f64, f64); 4] = [
            (IntervalMap::thaler(), 0.0, a),
            (IntervalMap::thaler(), a + 1e-12, 1.0),
            (IntervalMap::lasota_yorke(), 0.0, 0.5),
            (IntervalMap::lasota_yorke(), 0.5 + 1e-12, 1.0),
        ];
        for (map, lo, hi) in cases {
            let mut prev = -1.0;
            for i in 0..=10_000u32 {
                let x = lo + (hi - lo) * i as f64 / 10_000.0;
                let y = map.step(x);
                assert!(y > prev, "branch not strictly increasing at x = {x}");
                prev = y;
            }
            // full branch: image endpoints reach the whole interval
            assert!(map.step(lo) <= 1e-12 || map.step(lo) < map.step(hi));
            assert!((map.step(hi) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn indifferent_fixed_point_ratios() {
        let th = IntervalMap::thaler();
        // (T(x) - x) / (x^2 e^{-1/x}) -> 1; the subtraction cancels ~1e-6 of
        // precision at the small end of the grid
        for &x in &[0.05, 0.1, 0.2, 0.4] {
            let ratio = (th.step(x) - x) / (x * x * (-1.0 / x).exp());
            assert_relative_eq!(ratio, 1.0, max_relative = 1e-5);
        }
        // T(x) - x = o(x) for both maps
        for map in [IntervalMap::thaler(), IntervalMap::lasota_yorke()] {
            let mut prev = f64::INFINITY;
            for &x in &[0.4, 0.2, 0.1, 0.05] {
                let r = (map.step(x) - x) / x;
                assert!(r < prev);
                assert!(r >= 0.0);
                prev = r;
            }
            assert!(prev < 0.06);
        }
    }

    #[test]
    fn return_time_reference_cases() {
        let ly = IntervalMap::lasota_yorke();
        let a = Interval::new(0.5, 1.0).unwrap();
        // T(3/4) = 1/2 exactly in binary
        assert_eq!(return_time(&ly, &a, 0.75, 10).unwrap(), ReturnTime::Hit(1));
        // T(1/3) = 1/2 in exact arithmetic; in doubles the image lands one
        // ulp below, so check the image and use a boundary nudged by one ulp
        let img = ly.eval(1.0 / 3.0).unwrap();
        assert_relative_eq!(img, 0.5, max_relative = 1e-15);
        let a_eps = Interval::new(img, 1.0).unwrap();
        assert_eq!(return_time(&ly, &a_eps, 1.0 / 3.0, 10).unwrap(), ReturnTime::Hit(1));
        assert_eq!(return_time(&ly, &a, 0.75, 0), Err(DynamicsError::InvalidCap));
    }

    #[test]
    fn return_time_can_exceed_cap() {
        let ly = IntervalMap::lasota_yorke();
        let a = Interval::new(0.9, 1.0).unwrap();
        // starting near 0 the climb takes ~1/x steps
        assert_eq!(return_time(&ly, &a, 1e-4, 100).unwrap(), ReturnTime::Exceeded(100));
    }

    #[test]
    fn tail_values_and_sampling() {
        let pp = TailKind::pure_power(0.5).unwrap();
        assert_eq!(pp.tail(0), 1.0);
        assert_relative_eq!(pp.tail(1), 0.5_f64.sqrt(), max_relative = 1e-15);

        // inverse-transform by hand: u = 0.8 -> phi = 1; u = 0.5 -> phi = 4
        assert_eq!(pp.sample_phi(0.8, u64::MAX - 1), 1);
        assert_eq!(pp.sample_phi(0.5, u64::MAX - 1), 4);

        // harmonic with u near 1
        assert_eq!(TailKind::Harmonic.sample_phi(0.999999, u64::MAX - 1), 1);

        // inverse log: tail(0) = 1 exactly, and sampling clamps at the horizon
        let il = TailKind::InverseLog;
        assert_eq!(il.tail(0), 1.0);
        assert_eq!(il.sample_phi(1e-4, 1000), 1000);
    }

    #[test]
    fn tail_normalization_telescopes() {
        for kind in [TailKind::pure_power(0.3).unwrap(), TailKind::Harmonic, TailKind::InverseLog] {
            for cap in [1u64, 10, 1000] {
                let sum: f64 = (1..=cap).map(|k| kind.increment(k)).sum();
                assert_abs_diff_eq!(sum + kind.tail(cap), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn u_sequence_by_hand() {
        let pp = TailKind::pure_power(0.5).unwrap();
        let u = renewal_u_sequence(&pp, 2);
        assert_eq!(u[0], 1.0);
        let p1 = 1.0 - 0.5_f64.sqrt();
        let p2 = 0.5_f64.sqrt() - (1.0 / 3.0_f64).sqrt();
        assert_relative_eq!(u[1], p1, max_relative = 1e-15);
        assert_relative_eq!(u[2], p1 * p1 + p2, max_relative = 1e-14);
        assert_abs_diff_eq!(u[2], 0.21555, epsilon = 1e-5);
    }

    #[test]
    fn point_mass_is_not_admissible() {
        assert!(!InitialDistribution::PointMass(0.3).is_admissible());
        assert!(InitialDistribution::UniformOnA.is_admissible());
        assert!(InitialDistribution::LebesgueOn(Interval::new(0.0, 1.0).unwrap()).is_admissible());
    }

    #[test]
    fn delay_tail_distribution() {
        use crate::rng::master_rng;
        let shift = RenewalShift::new(TailKind::Harmonic, DelayKind::DelayTail { cap: 3 });
        let mut rng = master_rng(11);
        let mut counts = [0u64; 4];
        let n = 200_000;
        for _ in 0..n {
            counts[shift.sample_delay(&mut rng) as usize] += 1;
        }
        // weights tail(0..=3) = 1, 1/2, 1/3, 1/4 normalized by 25/12
        let total: f64 = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        for (k, &c) in counts.iter().enumerate() {
            let expect = TailKind::Harmonic.tail(k as u64) / total;
            assert_abs_diff_eq!(c as f64 / n as f64, expect, epsilon = 5e-3);
        }
    }

    proptest! {
        #[test]
        fn maps_preserve_unit_interval(x in 0.0..=1.0f64) {
            for map in [IntervalMap::thaler(), IntervalMap::lasota_yorke()] {
                let y = map.step(x);
                prop_assert!((0.0..=1.0).contains(&y));
            }
        }

        #[test]
        fn sampled_phi_inverts_the_tail(u in 1e-6..1.0f64) {
            for kind in [TailKind::pure_power(0.5).unwrap(), TailKind::Harmonic] {
                let phi = kind.sample_phi(u, u64::MAX - 1);
                prop_assert!(kind.tail(phi) < u);
                prop_assert!(kind.tail(phi - 1) >= u);
            }
        }
    }
}
