//! Regularly and slowly varying functions.
//!
//! A regularly varying function with exponent `beta` satisfies
//! `F(lambda x)/F(x) -> lambda^beta`. Two parametric families are supported:
//!
//! - `PowerLog`: `F(x) = x^beta (ln x)^gamma`, the workhorse for the wandering
//!   rates appearing in the examples (`ln n`, `n / ln n`, powers).
//! - `Karamata`: `F(x) = x^beta psi(x) exp(int_B^x zeta(t)/t dt)` with
//!   tabulated `psi -> C > 0` and `|zeta| < delta < 1`. The tables are
//!   piecewise linear in `ln x` with constant extrapolation, which makes the
//!   exponential integral exact on the knots.
//!
//! On top of evaluation the module provides the asymptotic inverse
//! `F'(y) = inf{t : F(t) > y}` by bracket-doubling plus bisection, the
//! Erickson scale `a_n(x) = L^{-1}(x L(n))` for slowly varying `L`, and two
//! Tauberian ratio diagnostics (partial sums vs. Laplace transform, and the
//! `n^{p+1} a_n / sum k^p a_k -> p + rho + 1` limit).

use crate::special::gamma_fn;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RegVarError {
    #[error("argument {x} below domain floor x0 = {x0}")]
    BelowFloor { x: f64, x0: f64 },
    #[error("invalid spec: {0}")]
    InvalidSpec(&'static str),
    #[error("search range exhausted: F stays <= {y} up to {reached:e}")]
    RangeExhausted { y: f64, reached: f64 },
    #[error("operation requires a slowly varying spec (beta = 0)")]
    NotSlowlyVarying,
    #[error("partial sum is zero, ratio undefined")]
    ZeroPartialSum,
}

/// Positive function tabulated against `ln x`, piecewise linear with constant
/// extrapolation on both sides.
#[derive(Debug, Clone)]
pub struct LogTable {
    ln_x: Vec<f64>,
    y: Vec<f64>,
}

impl LogTable {
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self, RegVarError> {
        if points.is_empty() {
            return Err(RegVarError::InvalidSpec("empty table"));
        }
        let mut ln_x = Vec::with_capacity(points.len());
        let mut y = Vec::with_capacity(points.len());
        for &(x, v) in points {
            if !(x > 0.0) {
                return Err(RegVarError::InvalidSpec("table abscissae must be positive"));
            }
            if let Some(&last) = ln_x.last() {
                if x.ln() <= last {
                    return Err(RegVarError::InvalidSpec("table abscissae must increase"));
                }
            }
            ln_x.push(x.ln());
            y.push(v);
        }
        Ok(Self { ln_x, y })
    }

    /// Tabulate `f` on a geometric grid of `knots` points over `[x_lo, x_hi]`.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, x_lo: f64, x_hi: f64, knots: usize) -> Self {
        assert!(knots >= 2 && x_hi > x_lo && x_lo > 0.0);
        let (s0, s1) = (x_lo.ln(), x_hi.ln());
        let pts: Vec<(f64, f64)> = (0..knots)
            .map(|i| {
                let s = s0 + (s1 - s0) * i as f64 / (knots - 1) as f64;
                (s.exp(), f(s.exp()))
            })
            .collect();
        Self::from_points(&pts).expect("geometric grid is strictly increasing")
    }

    pub fn constant(v: f64) -> Self {
        Self { ln_x: vec![0.0], y: vec![v] }
    }

    pub fn value(&self, x: f64) -> f64 {
        let s = x.ln();
        match self.ln_x.binary_search_by(|t| t.partial_cmp(&s).unwrap()) {
            Ok(i) => self.y[i],
            Err(0) => self.y[0],
            Err(i) if i == self.ln_x.len() => *self.y.last().unwrap(),
            Err(i) => {
                let (s0, s1) = (self.ln_x[i - 1], self.ln_x[i]);
                let w = (s - s0) / (s1 - s0);
                self.y[i - 1] * (1.0 - w) + self.y[i] * w
            }
        }
    }

    /// Exact integral of the piecewise-linear interpolant over `ln t` from
    /// `ln_a` to `ln_b` (`a <= b`).
    fn integrate_dlog(&self, ln_a: f64, ln_b: f64) -> f64 {
        debug_assert!(ln_b >= ln_a);
        let val_at = |s: f64| -> f64 {
            // same interpolation as value(), but in log abscissa
            match self.ln_x.binary_search_by(|t| t.partial_cmp(&s).unwrap()) {
                Ok(i) => self.y[i],
                Err(0) => self.y[0],
                Err(i) if i == self.ln_x.len() => *self.y.last().unwrap(),
                Err(i) => {
                    let (s0, s1) = (self.ln_x[i - 1], self.ln_x[i]);
                    let w = (s - s0) / (s1 - s0);
                    self.y[i - 1] * (1.0 - w) + self.y[i] * w
                }
            }
        };
        // breakpoints: ln_a, interior knots, ln_b; trapezoid is exact on each
        let mut acc = 0.0;
        let mut prev_s = ln_a;
        let mut prev_v = val_at(ln_a);
        for (&s, _) in self.ln_x.iter().zip(&self.y) {
            if s <= ln_a || s >= ln_b {
                continue;
            }
            let v = val_at(s);
            acc += 0.5 * (prev_v + v) * (s - prev_s);
            prev_s = s;
            prev_v = v;
        }
        acc += 0.5 * (prev_v + val_at(ln_b)) * (ln_b - prev_s);
        acc
    }

    fn min_value(&self) -> f64 {
        self.y.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn max_abs(&self) -> f64 {
        self.y.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub enum RegVarForm {
    /// `x^beta (ln x)^gamma`
    PowerLog { beta: f64, gamma: f64 },
    /// `x^beta psi(x) exp(int_B^x zeta(t)/t dt)`
    Karamata { beta: f64, psi: LogTable, zeta: LogTable, b: f64 },
}

/// A regularly varying function together with its domain floor `x0`.
#[derive(Debug, Clone)]
pub struct RegVarSpec {
    form: RegVarForm,
    x0: f64,
}

impl RegVarSpec {
    pub fn power_log(beta: f64, gamma: f64, x0: f64) -> Result<Self, RegVarError> {
        if !(x0 > 1.0) {
            return Err(RegVarError::InvalidSpec("PowerLog requires x0 > 1"));
        }
        Ok(Self { form: RegVarForm::PowerLog { beta, gamma }, x0 })
    }

    pub fn karamata(
        beta: f64,
        psi: LogTable,
        zeta: LogTable,
        b: f64,
        x0: f64,
    ) -> Result<Self, RegVarError> {
        if !(b > 0.0) {
            return Err(RegVarError::InvalidSpec("Karamata threshold B must be positive"));
        }
        if x0 < b {
            return Err(RegVarError::InvalidSpec("x0 must be >= B"));
        }
        if !(psi.min_value() > 0.0) {
            return Err(RegVarError::InvalidSpec("psi must be positive"));
        }
        if !(zeta.max_abs() < 1.0) {
            return Err(RegVarError::InvalidSpec("|zeta| must stay below 1"));
        }
        Ok(Self { form: RegVarForm::Karamata { beta, psi, zeta, b }, x0 })
    }

    /// `L(x) = ln x` as a PowerLog spec.
    pub fn log_law() -> Self {
        Self::power_log(0.0, 1.0, 1.5).expect("valid")
    }

    /// `ln x * ln ln x` as a Karamata spec with `zeta(t) = 1/ln t + 1/(ln t ln ln t)`.
    ///
    /// Exact value of the representation on the knots; between knots the
    /// log-linear interpolation of `zeta` keeps the relative error below 1e-6
    /// for the default grid. Valid from `B = e^3` where `|zeta| < 1`.
    pub fn log_loglog_law() -> Self {
        let b = (3.0_f64).exp();
        let zeta = LogTable::from_fn(
            |t| {
                let l = t.ln();
                1.0 / l + 1.0 / (l * l.ln())
            },
            b,
            1e12,
            4000,
        );
        let c = 3.0 * 3.0_f64.ln(); // ln B * ln ln B
        let psi = LogTable::constant(c);
        Self::karamata(0.0, psi, zeta, b, b).expect("valid")
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn beta(&self) -> f64 {
        match &self.form {
            RegVarForm::PowerLog { beta, .. } => *beta,
            RegVarForm::Karamata { beta, .. } => *beta,
        }
    }

    /// Evaluate `F(x)` for `x >= x0`. Computed in log space so large exponents
    /// cannot overflow intermediate terms.
    pub fn eval(&self, x: f64) -> Result<f64, RegVarError> {
        if !(x >= self.x0) {
            return Err(RegVarError::BelowFloor { x, x0: self.x0 });
        }
        let ln_x = x.ln();
        let ln_f = match &self.form {
            RegVarForm::PowerLog { beta, gamma } => beta * ln_x + gamma * ln_x.ln(),
            RegVarForm::Karamata { beta, psi, zeta, b } => {
                beta * ln_x + psi.value(x).ln() + zeta.integrate_dlog(b.ln(), ln_x)
            }
        };
        Ok(ln_f.exp())
    }

    /// Asymptotic inverse `F'(y) = inf{t >= x0 : F(t) > y}`.
    ///
    /// Bracket-doubling from `x0`, then bisection to relative tolerance 1e-12.
    /// Requires `F` eventually increasing to infinity; if `F` never exceeds
    /// `y` before the bracket cap the range is reported exhausted.
    pub fn asymptotic_inverse(&self, y: f64) -> Result<f64, RegVarError> {
        const REL_TOL: f64 = 1e-12;
        const HI_CAP: f64 = 1e300;
        if self.eval(self.x0)? > y {
            return Ok(self.x0);
        }
        let mut lo = self.x0;
        let mut hi = self.x0 * 2.0;
        while self.eval(hi)? <= y {
            lo = hi;
            hi *= 2.0;
            if hi > HI_CAP {
                return Err(RegVarError::RangeExhausted { y, reached: hi });
            }
        }
        while hi - lo > REL_TOL * hi {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid)? > y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Erickson scale `a_n(x) = L^{-1}(x L(n))` for slowly varying `L`.
    pub fn erickson_scale(&self, n: f64, x: f64) -> Result<f64, RegVarError> {
        if self.beta() != 0.0 {
            return Err(RegVarError::NotSlowlyVarying);
        }
        if !(0.0 < x && x < 1.0) {
            return Err(RegVarError::InvalidSpec("x must lie in (0, 1)"));
        }
        let target = x * self.eval(n)?;
        self.asymptotic_inverse(target)
    }
}

/// Ratio diagnostics for Karamata's Tauberian theorem.
///
/// `partial_sum_rows`: per `n`, `sum_{k<n} b_k / (n^rho L(n) / Gamma(rho+1))`.
/// `laplace_rows`: per `s`, `B(s) / (s^{-rho} L(1/s))` with
/// `B(s) = sum b_n e^{-ns}` truncated once a term drops below 1e-15 of the
/// running sum. Both ratios tend to 1 when the theorem's hypothesis holds.
#[derive(Debug, Clone)]
pub struct TauberianDiagnostic {
    pub partial_sum_rows: Vec<(f64, f64)>,
    pub laplace_rows: Vec<(f64, f64)>,
}

pub fn karamata_tauberian_ratio<F: Fn(u64) -> f64>(
    b: F,
    rho: f64,
    l: &RegVarSpec,
    n_grid: &[u64],
    s_grid: &[f64],
) -> Result<TauberianDiagnostic, RegVarError> {
    if rho < 0.0 {
        return Err(RegVarError::InvalidSpec("rho must be nonnegative"));
    }
    let gamma_rho1 = gamma_fn(rho + 1.0);

    let mut partial_sum_rows = Vec::with_capacity(n_grid.len());
    let mut sorted_n = n_grid.to_vec();
    sorted_n.sort_unstable();
    let mut sum = 0.0;
    let mut k = 0u64;
    for &n in &sorted_n {
        while k < n {
            sum += b(k);
            k += 1;
        }
        let nf = n as f64;
        let denom = nf.powf(rho) * l.eval(nf)? / gamma_rho1;
        partial_sum_rows.push((nf, sum / denom));
    }

    let mut laplace_rows = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        if !(s > 0.0) {
            return Err(RegVarError::InvalidSpec("s must be positive"));
        }
        let q = (-s).exp();
        let mut pow = 1.0; // e^{-ns}
        let mut bs = 0.0;
        let mut n = 0u64;
        loop {
            let term = b(n) * pow;
            bs += term;
            n += 1;
            pow *= q;
            // truncation rule: stop once terms are negligible relative to the
            // running sum (and at least past the 1/s time scale)
            if n as f64 * s > 3.0 && term < 1e-15 * bs {
                break;
            }
            if n > 500_000_000 {
                break;
            }
        }
        let denom = s.powf(-rho) * l.eval(1.0 / s)?;
        laplace_rows.push((s, bs / denom));
    }

    Ok(TauberianDiagnostic { partial_sum_rows, laplace_rows })
}

/// Karamata's lemma ratio table: per `n`, `n^{p+1} a_n / sum_{k<=n} k^p a_k`.
/// Converges to `p + rho + 1` for `a` regularly varying with exponent `rho`.
#[derive(Debug, Clone)]
pub struct KaramataLemmaTable {
    pub rows: Vec<(f64, f64)>,
    pub expected: f64,
}

pub fn karamata_lemma_ratio<F: Fn(u64) -> f64>(
    a: F,
    p: f64,
    rho: f64,
    n_grid: &[u64],
) -> Result<KaramataLemmaTable, RegVarError> {
    if p < -rho - 1.0 {
        return Err(RegVarError::InvalidSpec("requires p >= -rho - 1"));
    }
    let mut sorted_n = n_grid.to_vec();
    sorted_n.sort_unstable();
    let mut rows = Vec::with_capacity(sorted_n.len());
    let mut sum = 0.0;
    let mut k = 1u64;
    for &n in &sorted_n {
        while k <= n {
            sum += (k as f64).powf(p) * a(k);
            k += 1;
        }
        if sum == 0.0 {
            return Err(RegVarError::ZeroPartialSum);
        }
        let nf = n as f64;
        rows.push((nf, nf.powf(p + 1.0) * a(n) / sum));
    }
    Ok(KaramataLemmaTable { rows, expected: p + rho + 1.0 })
}
