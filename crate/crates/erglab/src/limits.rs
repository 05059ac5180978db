//! Closed-form limit laws: the generalized arc-sine law and the limits of
//! the normalized Kac processes.
//!
//! For `alpha` in (0, 1):
//!
//! - `Xi(alpha)` has density `sin(pi a)/pi * x^{a-1} (1-x)^{-a}` — the
//!   Dynkin–Lamperti limit of `Z_n/n`; as a distribution it is
//!   `Beta(alpha, 1-alpha)`.
//! - `KacX(alpha)` is the limit of `Phi_n`, distributed as `Xi^{1-alpha}`.
//! - `KacY(alpha)` is the limit of `Psi_n`, distributed as `(1-Xi)^{1-alpha}`.
//!
//! Boundary conventions: `Xi(0) = KacX(0) = delta_0`, `Xi(1) = KacX(1) =
//! delta_1`, `KacY(0) = delta_1`, and `KacY(alpha) -> Uniform01` as
//! `alpha -> 1`. At `alpha = 1/2` both Kac limits share the arc-sine density
//! `(2/pi)(1-x^2)^{-1/2}`.

use crate::special::{reg_inc_beta, SpecialError};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LimitsError {
    #[error("alpha = {0} outside the admissible range")]
    AlphaOutOfRange(f64),
    #[error("point masses have no density")]
    NoDensity,
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// One of the closed-form limit laws on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaLaw {
    Xi(f64),
    KacX(f64),
    KacY(f64),
    Uniform01,
    Dirac(f64),
}

impl AlphaLaw {
    /// Generalized arc-sine law; degenerates to point masses at the ends.
    pub fn xi(alpha: f64) -> Result<Self, LimitsError> {
        if alpha == 0.0 {
            Ok(AlphaLaw::Dirac(0.0))
        } else if alpha == 1.0 {
            Ok(AlphaLaw::Dirac(1.0))
        } else if (0.0..=1.0).contains(&alpha) {
            Ok(AlphaLaw::Xi(alpha))
        } else {
            Err(LimitsError::AlphaOutOfRange(alpha))
        }
    }

    /// Limit of the normalized Kac process `Phi_n`.
    pub fn kac_x(alpha: f64) -> Result<Self, LimitsError> {
        if alpha == 0.0 {
            Ok(AlphaLaw::Dirac(0.0))
        } else if alpha == 1.0 {
            Ok(AlphaLaw::Dirac(1.0))
        } else if (0.0..=1.0).contains(&alpha) {
            Ok(AlphaLaw::KacX(alpha))
        } else {
            Err(LimitsError::AlphaOutOfRange(alpha))
        }
    }

    /// Limit of the spent-time Kac process `Psi_n`; `alpha` in [0, 1).
    pub fn kac_y(alpha: f64) -> Result<Self, LimitsError> {
        if alpha == 0.0 {
            Ok(AlphaLaw::Dirac(1.0))
        } else if (0.0..1.0).contains(&alpha) {
            Ok(AlphaLaw::KacY(alpha))
        } else {
            Err(LimitsError::AlphaOutOfRange(alpha))
        }
    }

    /// Density at an interior point `x` in (0, 1).
    ///
    /// `1 - x^{1/(1-a)}` is evaluated as `-expm1(ln(x)/(1-a))`, which is the
    /// same expression without intermediate cancellation.
    pub fn pdf(&self, x: f64) -> Result<f64, LimitsError> {
        let pi = std::f64::consts::PI;
        match *self {
            AlphaLaw::Dirac(_) => Err(LimitsError::NoDensity),
            AlphaLaw::Uniform01 => Ok(1.0),
            AlphaLaw::Xi(a) => {
                Ok((pi * a).sin() / pi / (x.powf(1.0 - a) * (1.0 - x).powf(a)))
            }
            AlphaLaw::KacX(a) => {
                let q = 1.0 - a;
                let one_minus_inner = -(x.ln() / q).exp_m1();
                Ok((pi * a).sin() / (pi * q)
                    / (x.powf((1.0 - 2.0 * a) / q) * one_minus_inner.powf(a)))
            }
            AlphaLaw::KacY(a) => {
                let q = 1.0 - a;
                let one_minus_inner = -(x.ln() / q).exp_m1();
                Ok((pi * a).sin() / (pi * q) / one_minus_inner.powf(q))
            }
        }
    }

    /// Density evaluated at `1 - s`, written directly in the distance `s`
    /// from the upper endpoint.
    ///
    /// The densities here are singular at 1; once `x = 1 - s` is rounded,
    /// `s` below machine precision is unrecoverable from `x`, so quadrature
    /// against the upper endpoint must go through this form.
    pub fn pdf_at_complement(&self, s: f64) -> Result<f64, LimitsError> {
        let pi = std::f64::consts::PI;
        match *self {
            AlphaLaw::Dirac(_) => Err(LimitsError::NoDensity),
            AlphaLaw::Uniform01 => Ok(1.0),
            AlphaLaw::Xi(a) => Ok((pi * a).sin() / pi / ((1.0 - s).powf(1.0 - a) * s.powf(a))),
            AlphaLaw::KacX(a) => {
                let q = 1.0 - a;
                // 1 - (1-s)^{1/q} without cancellation
                let one_minus_inner = -((-s).ln_1p() / q).exp_m1();
                Ok((pi * a).sin() / (pi * q)
                    / ((1.0 - s).powf((1.0 - 2.0 * a) / q) * one_minus_inner.powf(a)))
            }
            AlphaLaw::KacY(a) => {
                let q = 1.0 - a;
                let one_minus_inner = -((-s).ln_1p() / q).exp_m1();
                Ok((pi * a).sin() / (pi * q) / one_minus_inner.powf(q))
            }
        }
    }

    /// Distribution function, total on [0, 1] (0 below, 1 above).
    ///
    /// `Xi`: `I_x(a, 1-a)`. The Kac laws follow from the distributional
    /// identities `X = Xi^{1-a}` and `Y = (1-Xi)^{1-a}`:
    /// `KacX`: `I_{x^{1/(1-a)}}(a, 1-a)`; `KacY`: `I_{x^{1/(1-a)}}(1-a, a)`.
    /// The `KacY` form is confirmed against numeric integration of its
    /// density in the test suite.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return match self {
                AlphaLaw::Dirac(c) if *c <= 0.0 && x >= *c => 1.0,
                _ => 0.0,
            };
        }
        if x >= 1.0 {
            return 1.0;
        }
        match *self {
            AlphaLaw::Uniform01 => x,
            AlphaLaw::Dirac(c) => {
                if x >= c {
                    1.0
                } else {
                    0.0
                }
            }
            AlphaLaw::Xi(a) => reg_inc_beta(a, 1.0 - a, x).expect("valid beta arguments"),
            AlphaLaw::KacX(a) => {
                reg_inc_beta(a, 1.0 - a, x.powf(1.0 / (1.0 - a))).expect("valid beta arguments")
            }
            AlphaLaw::KacY(a) => {
                reg_inc_beta(1.0 - a, a, x.powf(1.0 / (1.0 - a))).expect("valid beta arguments")
            }
        }
    }

    /// Generalized inverse of the CDF, by bisection (the CDFs are continuous
    /// and strictly increasing on (0, 1) for the non-degenerate laws).
    pub fn quantile(&self, u: f64) -> Result<f64, LimitsError> {
        if let AlphaLaw::Dirac(c) = self {
            return Ok(*c);
        }
        let u = u.clamp(0.0, 1.0);
        if let AlphaLaw::Uniform01 = self {
            return Ok(u);
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Draw one sample.
    ///
    /// `Xi(alpha)` is `Beta(alpha, 1-alpha)`, drawn as a two-gamma ratio; the
    /// Kac laws apply their distributional identities to a `Xi` draw. Point
    /// masses return their atom.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AlphaLaw::Dirac(c) => c,
            AlphaLaw::Uniform01 => rng.random(),
            AlphaLaw::Xi(a) => sample_beta(a, 1.0 - a, rng),
            AlphaLaw::KacX(a) => sample_beta(a, 1.0 - a, rng).powf(1.0 - a),
            AlphaLaw::KacY(a) => (1.0 - sample_beta(a, 1.0 - a, rng)).powf(1.0 - a),
        }
    }
}

fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let ga = Gamma::new(a, 1.0).expect("positive shape");
    let gb = Gamma::new(b, 1.0).expect("positive shape");
    loop {
        let x: f64 = ga.sample(rng);
        let y: f64 = gb.sample(rng);
        let s = x + y;
        if s > 0.0 && s.is_finite() {
            return x / s;
        }
        // tiny shapes can underflow both gammas to zero; redraw
    }
}
