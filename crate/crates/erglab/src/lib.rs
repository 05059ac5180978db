//! erglab — a numerical laboratory for return-time processes of infinite
//! measure preserving interval maps and null-recurrent renewal chains.
//!
//! The crate simulates the last-visit process `Z_n`, the normalized Kac
//! processes `Phi_n = W_{Z_n}/W_n` and `Psi_n = W_{n-Z_n}/W_n`, and checks
//! their limit laws (generalized arc-sine laws, their distorted variants and
//! the two uniform distribution laws) against closed-form densities and exact
//! renewal oracles.
//!
//! Module map:
//! - [`regvar`]: regularly/slowly varying functions, asymptotic inversion,
//!   Erickson scaling and Tauberian ratio diagnostics.
//! - [`dynamics`]: the Thaler and Lasota–Yorke interval maps, a renewal-shift
//!   chain with heavy-tailed return times, first-return times.
//! - [`processes`]: wandering rates, `Z_n` path simulation, Kac pairs, exact
//!   renewal distributions of `Z_n`, pathwise shift identities.
//! - [`transfer`]: Ulam discretization of the transfer operator and the
//!   uniform / uniformly-returning set diagnostics.
//! - [`limits`]: the closed-form limit laws (xi_alpha, X_alpha, Y_alpha,
//!   uniform) with densities, CDFs and samplers.
//! - [`stats`]: empirical CDFs, Kolmogorov–Smirnov distances, DKW bounds and
//!   convergence sweeps.
//! - [`cli`]: the command-line experiment runner emitting CSV artifacts.

// negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod csvio;
pub mod dynamics;
pub mod limits;
pub mod processes;
pub mod quad;
pub mod regvar;
pub mod rng;
pub mod special;
pub mod stats;
pub mod transfer;
