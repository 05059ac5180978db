//! Gamma and incomplete-beta special functions.
//!
//! Self-contained double-precision implementations: Lanczos log-gamma and the
//! regularized incomplete beta function via the modified Lentz continued
//! fraction with the usual symmetry switch. The incomplete beta is the CDF
//! backbone of the generalized arc-sine laws.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecialError {
    #[error("argument out of domain: {0}")]
    Domain(&'static str),
    #[error("continued fraction failed to converge")]
    NoConvergence,
}

/// Lanczos coefficients, g = 7, n = 9, kept at their published precision.
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let s = (std::f64::consts::PI * x).sin();
        std::f64::consts::PI.ln() - s.ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// The gamma function for x > 0.
pub fn gamma_fn(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// ln B(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const MAX_ITER: usize = 400;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-30;

/// Regularized incomplete beta function I_x(a, b), a, b > 0, x in [0, 1].
///
/// Continued fraction (modified Lentz), switching to 1 − I_{1−x}(b, a) when
/// x > (a+1)/(a+b+2) so the fraction always converges quickly. Absolute
/// error is well below 1e−12 over the parameter ranges used here.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64, SpecialError> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(SpecialError::Domain("a and b must be positive"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(SpecialError::Domain("x must lie in [0, 1]"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - beta_cf(b, a, 1.0 - x)?)
    } else {
        beta_cf(a, b, x)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64, SpecialError> {
    // prefactor x^a (1-x)^b / (a B(a,b)), evaluated in log space
    let ln_prefix = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let prefix = ln_prefix.exp() / a;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;

        // even step
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        // odd step
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() < CF_EPS {
            return Ok((prefix * h).clamp(0.0, 1.0));
        }
    }
    Err(SpecialError::NoConvergence)
}
