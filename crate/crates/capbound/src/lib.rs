//! Distributions, bounds, and transforms for cumulative wireless channel
//! capacity under explicit temporal dependence.
//!
//! A fading channel delivers an instantaneous capacity `C(i)` in bits per
//! channel use at each slot `i`; the cumulative capacity over a window is
//! `S(s,t) = C(s+1) + ... + C(t)`. The joint law of `(C(1), ..., C(t))` is
//! split Sklar-style into per-slot marginals and a copula, and everything
//! this crate computes is explicit about which dependence structure it
//! assumes:
//!
//! * [`marginals`]: per-slot capacity distributions (Rayleigh fading closed
//!   forms, or tabulated CDFs loaded from CSV).
//! * [`copulas`]: bivariate families, Markov chains driven by them, orthant
//!   probabilities, and the product operator that composes transition
//!   copulas.
//! * [`cumulative`]: exact CDFs of `S(s,t)` where they exist (comonotonic,
//!   i.i.d., low-dimensional copula integrals) and dependence-free standard
//!   and dual bounds with sharpness diagnostics.
//! * [`markov_additive`]: exponential change of measure for Markov-additive
//!   net processes, Lundberg roots, and refined tail bounds for the running
//!   maximum.
//! * [`extremes`]: path functionals (max / min / range over windows) and
//!   tail bounds for them.
//! * [`transforms`]: Laplace and Mellin transforms of cumulative capacity,
//!   effective capacity, and stochastic service curves.
//! * [`simulate`]: seeded Monte Carlo with deterministic batching, used to
//!   verify every bound empirically.
//! * [`config`] and [`cli`]: the scenario file format and the `capbound`
//!   command-line front end.
//!
//! The `examples/` directory is the guided tour: each runnable example
//! exercises one capability end to end (`cargo run --example bound_sandwich`,
//! `cargo run --example effective_capacity`, ...).

pub mod cli;
pub mod config;
pub mod copulas;
pub mod cumulative;
pub mod error;
pub mod extremes;
pub mod marginals;
pub mod markov_additive;
pub mod numeric;
pub mod simulate;
pub mod transforms;

pub use error::{Error, Result};
