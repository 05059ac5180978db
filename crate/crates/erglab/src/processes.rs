//! Wandering rates, the last-visit process `Z_n`, Kac pairs, exact renewal
//! oracles and the pathwise shift identities.
//!
//! For a reference set `A`, `Z_n(x) = max{k <= n : T^k(x) in A}` (0 when the
//! orbit misses `A` up to time `n`), and the wandering rate is
//! `W_n = sum_{k<=n} mu(A ∩ {phi > k})`. The normalized Kac processes are
//! `Phi_n = W_{Z_n}/W_n` and `Psi_n = W_{n-Z_n}/W_n`.
//!
//! The renewal model admits an exact law: with an at-renewal start,
//! `P(Z_n = k) = u_k P(phi > n - k)`, where `(u_n)` solves the renewal
//! recursion. This is the noise-free oracle the acceptance suite leans on.

use crate::dynamics::{
    renewal_u_sequence, DynamicsError, InitialDistribution, Interval, IntervalMap, RenewalShift,
    TailKind,
};
use crate::regvar::RegVarSpec;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("index {n} beyond tail table (max {max})")]
    IndexBeyondTable { n: u64, max: u64 },
    #[error("invalid tail values: {0}")]
    InvalidTail(&'static str),
    #[error("size guard: n = {0} too large for the O(n^2) recursion")]
    SizeGuard(u64),
    #[error("censoring rate {rate:.4} exceeds 1%")]
    ExcessCensoring { rate: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Where a tail table came from.
#[derive(Debug, Clone, PartialEq)]
pub enum TailSource {
    Exact(TailKind),
    Empirical { sample_count: u64, censored: u64 },
}

/// Table of `t_k ~ mu_A(phi > k)` with cumulative wandering rates.
///
/// `W_n = a_mass * sum_{k<=n} t_k`; `a_mass` is the measure `mu(A)` in the
/// normalization convention of the model (1 for renewal models).
#[derive(Debug, Clone)]
pub struct TailTable {
    t: Vec<f64>,
    w: Vec<f64>,
    a_mass: f64,
    source: TailSource,
}

impl TailTable {
    pub fn from_values(t: Vec<f64>, a_mass: f64, source: TailSource) -> Result<Self, ProcessError> {
        if t.is_empty() {
            return Err(ProcessError::InvalidTail("empty table"));
        }
        if t[0] != 1.0 {
            return Err(ProcessError::InvalidTail("t_0 must equal 1"));
        }
        if !(a_mass > 0.0) {
            return Err(ProcessError::InvalidTail("a_mass must be positive"));
        }
        let mut prev = f64::INFINITY;
        for &v in &t {
            if !(0.0..=1.0).contains(&v) {
                return Err(ProcessError::InvalidTail("values must lie in [0, 1]"));
            }
            if v > prev + 1e-15 {
                return Err(ProcessError::InvalidTail("values must be nonincreasing"));
            }
            prev = v;
        }
        let mut w = Vec::with_capacity(t.len());
        let mut acc = 0.0;
        for &v in &t {
            acc += v;
            w.push(a_mass * acc);
        }
        Ok(Self { t, w, a_mass, source })
    }

    /// Exact table for a renewal tail, `a_mass = 1`.
    pub fn exact(kind: TailKind, k_max: usize) -> Self {
        let t: Vec<f64> = (0..=k_max as u64).map(|k| kind.tail(k)).collect();
        Self::from_values(t, 1.0, TailSource::Exact(kind)).expect("exact tails are valid")
    }

    pub fn k_max(&self) -> u64 {
        (self.t.len() - 1) as u64
    }

    pub fn a_mass(&self) -> f64 {
        self.a_mass
    }

    pub fn source(&self) -> &TailSource {
        &self.source
    }

    pub fn tail_value(&self, k: u64) -> Result<f64, ProcessError> {
        self.t
            .get(k as usize)
            .copied()
            .ok_or(ProcessError::IndexBeyondTable { n: k, max: self.k_max() })
    }

    /// `W_n = a_mass * sum_{k<=n} t_k` (equals the integral of `min(phi, n+1)`
    /// over `A` for exact tails).
    pub fn wandering_rate(&self, n: u64) -> Result<f64, ProcessError> {
        self.w
            .get(n as usize)
            .copied()
            .ok_or(ProcessError::IndexBeyondTable { n, max: self.k_max() })
    }

    /// `(Phi_n, Psi_n) = (W_{Z_n}/W_n, W_{n-Z_n}/W_n)`.
    pub fn kac_pair(&self, sample: &PathSample) -> Result<KacPair, ProcessError> {
        let wn = self.wandering_rate(sample.n)?;
        Ok(KacPair {
            phi: self.wandering_rate(sample.z_n)? / wn,
            psi: self.wandering_rate(sample.n - sample.z_n)? / wn,
        })
    }
}

/// One simulated path summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub n: u64,
    /// Last visit time `<= n`, 0 when the orbit missed `A` entirely.
    pub z_n: u64,
    pub started_in_a: bool,
    /// First return/entry time, when it occurred uncensored within the horizon.
    pub phi_first: Option<u64>,
}

impl PathSample {
    /// Whether the path visited `A` by time `n` (time 0 counts).
    pub fn entered(&self) -> bool {
        self.started_in_a || self.phi_first.map(|p| p <= self.n).unwrap_or(false)
    }
}

/// Normalized Kac pair for one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KacPair {
    pub phi: f64,
    pub psi: f64,
}

/// A dynamical model paired with its reference-set data.
#[derive(Debug, Clone)]
pub enum DynamicsModel {
    Interval { map: IntervalMap, set_a: Interval, init: InitialDistribution },
    Renewal { shift: RenewalShift },
}

impl DynamicsModel {
    pub fn renewal(shift: RenewalShift) -> Self {
        DynamicsModel::Renewal { shift }
    }
}

/// Simulate `Z_n` for one path.
///
/// Interval maps iterate the orbit for exactly `n` steps recording the last
/// hit; renewal models sum i.i.d. return times until the horizon is passed,
/// which costs O(number of returns) instead of O(n).
pub fn simulate_zn<R: Rng + ?Sized>(model: &DynamicsModel, n: u64, rng: &mut R) -> PathSample {
    match model {
        DynamicsModel::Interval { map, set_a, init } => {
            let x0 = init.sample(set_a, rng);
            let started = set_a.contains(x0);
            let mut last = if started { Some(0u64) } else { None };
            let mut first: Option<u64> = None;
            let mut x = x0;
            for k in 1..=n {
                x = map.step(x);
                if set_a.contains(x) {
                    last = Some(k);
                    if first.is_none() {
                        first = Some(k);
                    }
                }
            }
            PathSample { n, z_n: last.unwrap_or(0), started_in_a: started, phi_first: first }
        }
        DynamicsModel::Renewal { shift } => {
            let delay = shift.sample_delay(rng);
            let started = delay == 0;
            if delay > n {
                return PathSample { n, z_n: 0, started_in_a: started, phi_first: Some(delay) };
            }
            let mut last = delay;
            let mut first: Option<u64> = if started { None } else { Some(delay) };
            loop {
                let remaining = n - last + 1; // phi >= remaining means no further renewal by n
                let u = 1.0 - rng.random::<f64>(); // in (0, 1]
                let phi = shift.tail.sample_phi(u, remaining);
                if first.is_none() && phi < remaining {
                    first = Some(phi);
                }
                if last + phi > n {
                    break;
                }
                last += phi;
            }
            PathSample { n, z_n: last, started_in_a: started, phi_first: first }
        }
    }
}

/// Exact pmf of `Z_n` on `{0, ..., n}` for a renewal tail with at-renewal
/// start: `P(Z_n = k) = u_k * P(phi > n-k)`.
pub fn exact_zn_pmf(tail: &TailKind, n: u64) -> Result<Vec<f64>, ProcessError> {
    const GUARD: u64 = 100_000;
    if n > GUARD {
        return Err(ProcessError::SizeGuard(n));
    }
    let u = renewal_u_sequence(tail, n as usize);
    Ok((0..=n).map(|k| u[k as usize] * tail.tail(n - k)).collect())
}

/// Default orbit cap for induced-map sampling.
const INDUCED_CAP_FLOOR: u64 = 1_000_000;

/// Estimate the tail table of a model.
///
/// Renewal models: i.i.d. sampling of `phi` (pass-through check against the
/// exact tail). Interval maps: a long induced-map trajectory from a uniform
/// start on `A`; each step computes one return time and the return point.
/// Orbit segments that exceed the cap are censored (the trajectory restarts
/// from a fresh uniform point); the censoring rate above 1% is an error.
pub fn estimate_tail<R: Rng + ?Sized>(
    model: &DynamicsModel,
    sample_size: u64,
    k_max: u64,
    rng: &mut R,
) -> Result<TailTable, ProcessError> {
    let cap = (10 * k_max).max(INDUCED_CAP_FLOOR);
    let mut exceed_kmax = 0u64; // returns known to exceed k_max (includes censored)
    let mut hist = vec![0u64; k_max as usize + 1]; // hist[j] = #returns with phi = j, j >= 1
    let mut censored = 0u64;

    match model {
        DynamicsModel::Renewal { shift } => {
            for _ in 0..sample_size {
                let u = 1.0 - rng.random::<f64>();
                let phi = shift.tail.sample_phi(u, k_max + 1);
                if phi > k_max {
                    exceed_kmax += 1;
                } else {
                    hist[phi as usize] += 1;
                }
            }
        }
        DynamicsModel::Interval { map, set_a, .. } => {
            let mut x = InitialDistribution::UniformOnA.sample(set_a, rng);
            let mut produced = 0u64;
            while produced < sample_size {
                match one_return(map, set_a, x, cap) {
                    Some((phi, x_ret)) => {
                        if phi > k_max {
                            exceed_kmax += 1;
                        } else {
                            hist[phi as usize] += 1;
                        }
                        x = x_ret;
                    }
                    None => {
                        censored += 1;
                        exceed_kmax += 1; // cap >= k_max, so phi > k_max is still known
                        x = InitialDistribution::UniformOnA.sample(set_a, rng);
                    }
                }
                produced += 1;
            }
            let rate = censored as f64 / sample_size as f64;
            if rate > 0.01 {
                return Err(ProcessError::ExcessCensoring { rate });
            }
        }
    }

    // t_k = fraction of returns with phi > k, via suffix sums
    let total = sample_size as f64;
    let mut t = vec![0.0; k_max as usize + 1];
    let mut beyond = exceed_kmax;
    for k in (0..=k_max as usize).rev() {
        // returns with phi > k: those with phi in (k, k_max] plus the overflow
        t[k] = beyond as f64 / total;
        if k >= 1 {
            beyond += hist[k];
        }
    }
    t[0] = 1.0;

    let a_mass = match model {
        DynamicsModel::Renewal { .. } => 1.0,
        DynamicsModel::Interval { map, set_a, .. } => {
            set_a.length() * estimate_density_scale(map, set_a, rng)
        }
    };

    TailTable::from_values(t, a_mass, TailSource::Empirical { sample_count: sample_size, censored })
}

fn one_return(map: &IntervalMap, a: &Interval, x: f64, cap: u64) -> Option<(u64, f64)> {
    let mut y = x;
    for n in 1..=cap {
        y = map.step(y);
        if a.contains(y) {
            return Some((n, y));
        }
    }
    None
}

/// Occupation-ratio estimate of the mean invariant density over `A`, in the
/// normalization where the density behaves like `1/x` at the indifferent
/// fixed point (the convention in which the slowly-varying wandering rates
/// of the examples carry unit constant).
///
/// By the ratio ergodic theorem, visits to a window `w = [c, d]` near 0 and
/// to `A` along one long orbit satisfy `V_w / V_A -> mu(w)/mu(A)`; with
/// `mu(w) = ln(d/c)` in the anchored normalization this pins
/// `mu(A) = ln(d/c) * V_A / V_w`, and the scale is `mu(A)/lambda(A)`.
pub fn estimate_density_scale<R: Rng + ?Sized>(
    map: &IntervalMap,
    a: &Interval,
    rng: &mut R,
) -> f64 {
    const STEPS: u64 = 20_000_000;
    // keep the window disjoint from A
    let hi = (0.5 * a.lo).min(0.05);
    if hi < 1e-4 {
        return 1.0; // A reaches into the fixed-point region; no anchor available
    }
    let window = Interval::new(hi / 10.0, hi).expect("window below A");
    let mut x: f64 = rng.random();
    let mut visits_w = 0u64;
    let mut visits_a = 0u64;
    for _ in 0..STEPS {
        x = map.step(x);
        if window.contains(x) {
            visits_w += 1;
        } else if a.contains(x) {
            visits_a += 1;
        }
    }
    if visits_w == 0 || visits_a == 0 {
        return 1.0; // degenerate orbit; fall back to Lebesgue scale
    }
    let mu_w = (window.hi / window.lo).ln();
    let mu_a = mu_w * visits_a as f64 / visits_w as f64;
    mu_a / a.length()
}

/// Report of the pathwise shift identity and the associated small quantities.
#[derive(Debug, Clone, Copy)]
pub struct ShiftIdentityReport {
    /// Whether one of the two displayed cases applied to this path.
    pub applicable: bool,
    /// The exact identity held (vacuously true when not applicable).
    pub exact_identity_ok: bool,
    pub z_n: u64,
    pub z_n_shifted: u64,
    /// `|Psi_n(Tx) - Psi_n(x)|`.
    pub psi_abs_diff: f64,
    /// `|F(Z_n ∘ T) - F(Z_n)| / F(n)` when a regularly varying `F` was
    /// supplied (arguments clamped to its domain floor).
    pub f_ratio_diff: Option<f64>,
}

/// Check the shift identity for `Z_n` pathwise: with `orbit_k = T^k x`,
/// `Z_n(Tx) = Z_n(x) - 1` on `{phi <= n} ∩ T^{-(n+1)}A^c` and `Z_n(Tx) = n`
/// on `T^{-(n+1)}A`. Mismatches indicate implementation bugs, not model
/// noise. Also reports `|Psi_n ∘ T - Psi_n|` and the regularly-varying
/// difference ratio used in the continuity arguments.
pub fn shift_identity_check(
    map: &IntervalMap,
    set_a: &Interval,
    x: f64,
    n: u64,
    tail: &TailTable,
    f_spec: Option<&RegVarSpec>,
) -> Result<ShiftIdentityReport, ProcessError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(DynamicsError::OutsideUnitInterval(x).into());
    }
    // orbit[k] = T^k x for k = 0..=n+1
    let mut orbit = Vec::with_capacity(n as usize + 2);
    orbit.push(x);
    let mut y = x;
    for _ in 0..=n {
        y = map.step(y);
        orbit.push(y);
    }
    let z_of = |offset: usize| -> u64 {
        let mut z = 0u64;
        for k in (0..=n).rev() {
            if set_a.contains(orbit[k as usize + offset]) {
                z = k;
                break;
            }
        }
        z
    };
    let z_x = z_of(0);
    let z_tx = z_of(1);

    let phi_le_n = (1..=n).any(|k| set_a.contains(orbit[k as usize]));
    let hits_at_n1 = set_a.contains(orbit[n as usize + 1]);

    let (applicable, ok) = if hits_at_n1 {
        (true, z_tx == n)
    } else if phi_le_n {
        (true, z_x >= 1 && z_tx == z_x - 1)
    } else {
        (false, true)
    };

    let wn = tail.wandering_rate(n)?;
    let psi_x = tail.wandering_rate(n - z_x)? / wn;
    let psi_tx = tail.wandering_rate(n - z_tx)? / wn;

    let f_ratio_diff = match f_spec {
        None => None,
        Some(spec) => {
            let clamp = |v: u64| (v as f64).max(spec.x0());
            let fn_val = spec.eval((n as f64).max(spec.x0())).map_err(|_| {
                ProcessError::InvalidTail("regvar spec does not cover the horizon")
            })?;
            let fa = spec.eval(clamp(z_tx)).unwrap_or(f64::NAN);
            let fb = spec.eval(clamp(z_x)).unwrap_or(f64::NAN);
            Some((fa - fb).abs() / fn_val)
        }
    };

    Ok(ShiftIdentityReport {
        applicable,
        exact_identity_ok: ok,
        z_n: z_x,
        z_n_shifted: z_tx,
        psi_abs_diff: (psi_tx - psi_x).abs(),
        f_ratio_diff,
    })
}

/// Truncation horizon making `e^{-ns} < 1e-12`.
pub fn laplace_truncation(s: f64) -> u64 {
    assert!(s > 0.0);
    (27.64 / s).ceil() as u64
}

/// `s * U(s) * Q(s)` with `Q(s) = sum tail(n) e^{-ns}` and
/// `U(s) = sum u_n e^{-ns}`, truncated at `n_truncate`. Tends to 1 as s -> 0.
pub fn laplace_product(tail: &TailKind, s: f64, n_truncate: u64) -> Result<f64, ProcessError> {
    const GUARD: u64 = 200_000;
    if n_truncate > GUARD {
        return Err(ProcessError::SizeGuard(n_truncate));
    }
    let n = n_truncate as usize;
    let u = renewal_u_sequence(tail, n);
    let q_decay = (-s).exp();
    let mut pow = 1.0;
    let mut q_sum = 0.0;
    let mut u_sum = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        q_sum += tail.tail(k as u64) * pow;
        u_sum += uk * pow;
        pow *= q_decay;
    }
    Ok(s * u_sum * q_sum)
}
