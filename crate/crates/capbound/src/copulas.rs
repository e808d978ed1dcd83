//! Dependence structures for capacity processes.
//!
//! Sklar's theorem splits the joint law of `(C(1), ..., C(t))` into the
//! per-slot marginals and a copula. This module provides:
//!
//! * three parametric bivariate families (Gaussian, Clayton, FGM) plus the
//!   Fréchet upper bound `M(u,v) = min(u,v)`, each with its conditional CDF
//!   `D1 C(u, .) = dC/du` and the inverse of that conditional, which is all
//!   a stationary Markov construction needs;
//! * process-level dependence specs: comonotonic, independent, or
//!   first-order Markov driven by a transition copula;
//! * orthant probabilities `P(C_i <= x_i forall i)` and their survival
//!   counterparts, computed in the Markov case by stage-wise quadrature
//!   along the chain;
//! * the product operator `(A * B)(u,v) = int dA(u,t)/dt * dB(t,v)/dt dt`
//!   that composes transition copulas, with `M` acting as its identity.
//!
//! Uniform variables live on `[0,1]`; rate-level thresholds are converted
//! through a marginal's CDF before any copula evaluation.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::marginals::Marginal;
use crate::numeric::GlRule;

/// Nodes per quadrature stage in Markov-chain orthant integration.
const STAGE_NODES: usize = 64;
/// Dimension cap for chain quadrature; beyond this, use Monte Carlo.
pub const MAX_CHAIN_DIM: usize = 8;

/// Relative breakpoints for boundary-refined composite quadrature. The
/// conditional CDFs D1C(s, .) of every family develop steep layers as s
/// approaches 0 or 1 (the Gaussian through the quantile blow-up, the
/// Clayton through its generator), so single-panel Gauss rules stall near
/// 1e-5 accuracy; geometric panels toward both endpoints restore fast
/// convergence.
const REFINE_BREAKS: [f64; 13] = [
    0.0, 1e-4, 1e-3, 1e-2, 0.05, 0.2, 0.5, 0.8, 0.95, 0.99, 0.999, 0.9999, 1.0,
];
/// Nodes per refined panel.
const REFINE_NODES: usize = 24;

/// Gauss-Legendre nodes and weights over [lo, hi] with geometric
/// refinement toward both endpoints.
fn boundary_refined_nodes(lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = GlRule::get(REFINE_NODES);
    let w = hi - lo;
    let mut xs = Vec::with_capacity(REFINE_NODES * (REFINE_BREAKS.len() - 1));
    let mut ws = Vec::with_capacity(xs.capacity());
    for pair in REFINE_BREAKS.windows(2) {
        let (a, b) = (lo + w * pair[0], lo + w * pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            xs.push(mid + half * x);
            ws.push(wt * half);
        }
    }
    (xs, ws)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

fn phi_inv(p: f64) -> f64 {
    // Clamp away from the endpoints; the copula formulas only ever see
    // interior arguments but quadrature nodes can graze the boundary.
    std_normal().inverse_cdf(p.clamp(1e-300, 1.0 - 1e-16))
}

// --- Bivariate families -------------------------------------------------------

/// A bivariate copula family with closed-form conditionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BivariateCopula {
    /// Gaussian copula with correlation `rho` in (-1, 1).
    Gaussian { rho: f64 },
    /// Clayton copula with `theta > 0` (lower tail dependence).
    Clayton { theta: f64 },
    /// Farlie-Gumbel-Morgenstern copula with `alpha` in [-1, 1].
    Fgm { alpha: f64 },
    /// Fréchet upper bound `min(u, v)`: perfect positive dependence and the
    /// identity of the product operator. Has no density.
    Comonotone,
}

impl BivariateCopula {
    pub fn gaussian(rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho.abs() >= 1.0 {
            return Err(Error::Domain(format!(
                "gaussian correlation must satisfy |rho| < 1, got {rho}"
            )));
        }
        Ok(BivariateCopula::Gaussian { rho })
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::Domain(format!(
                "clayton parameter must be positive, got {theta}"
            )));
        }
        Ok(BivariateCopula::Clayton { theta })
    }

    pub fn fgm(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha.abs() > 1.0 {
            return Err(Error::Domain(format!(
                "FGM parameter must lie in [-1, 1], got {alpha}"
            )));
        }
        Ok(BivariateCopula::Fgm { alpha })
    }

    /// C(u, v). Arguments are clamped to the unit square.
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = v.clamp(0.0, 1.0);
        if u == 0.0 || v == 0.0 {
            return 0.0;
        }
        if u == 1.0 {
            return v;
        }
        if v == 1.0 {
            return u;
        }
        match *self {
            BivariateCopula::Gaussian { rho } => gaussian_cdf(u, v, rho),
            BivariateCopula::Clayton { theta } => {
                (u.powf(-theta) + v.powf(-theta) - 1.0).powf(-1.0 / theta)
            }
            BivariateCopula::Fgm { alpha } => u * v * (1.0 + alpha * (1.0 - u) * (1.0 - v)),
            BivariateCopula::Comonotone => u.min(v),
        }
    }

    /// Copula density c(u, v). The Fréchet upper bound concentrates on the
    /// diagonal and has none.
    pub fn density(&self, u: f64, v: f64) -> Result<f64> {
        match *self {
            BivariateCopula::Gaussian { rho } => {
                let x = phi_inv(u);
                let y = phi_inv(v);
                let r2 = 1.0 - rho * rho;
                Ok((-(rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)).exp()
                    / r2.sqrt())
            }
            BivariateCopula::Clayton { theta } => {
                let a = u.powf(-theta) + v.powf(-theta) - 1.0;
                Ok((1.0 + theta) * (u * v).powf(-theta - 1.0) * a.powf(-2.0 - 1.0 / theta))
            }
            BivariateCopula::Fgm { alpha } => {
                Ok(1.0 + alpha * (1.0 - 2.0 * u) * (1.0 - 2.0 * v))
            }
            BivariateCopula::Comonotone => Err(Error::Capability(
                "the comonotone copula is singular and has no density".into(),
            )),
        }
    }

    /// Conditional CDF `D1 C(u, v) = P(V <= v | U = u)`, closed form per
    /// family. For the comonotone copula this is the step `1{v >= u}`.
    pub fn d1(&self, u: f64, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        if v == 0.0 {
            return 0.0;
        }
        if v == 1.0 {
            return 1.0;
        }
        match *self {
            BivariateCopula::Gaussian { rho } => {
                let s = (1.0 - rho * rho).sqrt();
                phi((phi_inv(v) - rho * phi_inv(u)) / s)
            }
            BivariateCopula::Clayton { theta } => {
                let a = u.powf(-theta) + v.powf(-theta) - 1.0;
                u.powf(-theta - 1.0) * a.powf(-(1.0 + theta) / theta)
            }
            BivariateCopula::Fgm { alpha } => {
                v * (1.0 + alpha * (1.0 - v) * (1.0 - 2.0 * u))
            }
            BivariateCopula::Comonotone => {
                if v >= u {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `D2 C(u, v) = P(U <= u | V = v)`. All supported families are
    /// exchangeable, so this is `d1` with the arguments swapped.
    pub fn d2(&self, u: f64, v: f64) -> f64 {
        self.d1(v, u)
    }

    /// Inverse of the conditional CDF in its second argument: the `v` with
    /// `D1 C(u, v) = w`. This is the Markov transition sampler.
    pub fn d1_inverse(&self, u: f64, w: f64) -> f64 {
        let w = w.clamp(0.0, 1.0);
        match *self {
            BivariateCopula::Gaussian { rho } => {
                let s = (1.0 - rho * rho).sqrt();
                phi(rho * phi_inv(u) + s * phi_inv(w))
            }
            BivariateCopula::Clayton { theta } => {
                if w == 0.0 {
                    return 0.0;
                }
                if w == 1.0 {
                    return 1.0;
                }
                let a = (w * u.powf(theta + 1.0)).powf(-theta / (1.0 + theta));
                (a - u.powf(-theta) + 1.0).powf(-1.0 / theta)
            }
            BivariateCopula::Fgm { alpha } => {
                let a = alpha * (1.0 - 2.0 * u);
                if a.abs() < 1e-12 {
                    return w;
                }
                // Stable root of a v^2 - (1+a) v + w = 0 inside [0, 1].
                let disc = (1.0 + a) * (1.0 + a) - 4.0 * a * w;
                2.0 * w / ((1.0 + a) + disc.sqrt())
            }
            BivariateCopula::Comonotone => u,
        }
    }
}

fn gaussian_cdf(u: f64, v: f64, rho: f64) -> f64 {
    // C(u,v) = int_{-inf}^{Phi^{-1}(u)} phi(x) Phi((y - rho x)/s) dx.
    // The inner factor transitions sharply around x = y/rho when |rho| is
    // close to 1, so the range is split there before quadrature.
    let xu = phi_inv(u).clamp(-8.5, 8.5);
    let y = phi_inv(v);
    let s = (1.0 - rho * rho).sqrt();
    let lo = -8.5f64;
    let mut cuts = vec![lo, xu];
    if rho.abs() > 1e-12 {
        let xc = y / rho;
        for k in [20.0, 6.0, 2.0, 0.0] {
            for sgn in [-1.0, 1.0] {
                let p = xc + sgn * k * s;
                if p > lo && p < xu {
                    cuts.push(p);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let norm = std_normal();
    let rule = GlRule::get(STAGE_NODES);
    let mut acc = 0.0;
    for pair in cuts.windows(2) {
        acc += rule.integrate(pair[0], pair[1], |x| {
            norm.pdf_checked(x) * phi((y - rho * x) / s)
        });
    }
    acc.clamp(0.0, u.min(v))
}

trait PdfExt {
    fn pdf_checked(&self, x: f64) -> f64;
}

impl PdfExt for Normal {
    fn pdf_checked(&self, x: f64) -> f64 {
        (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

// --- Process-level dependence -------------------------------------------------

/// How the capacity sequence depends across slots.
#[derive(Debug, Clone, PartialEq)]
pub enum DependenceSpec {
    /// One fading state drives every slot: `C(i) = F^{-1}(U)` for a single U.
    Comonotonic,
    /// Slots are independent.
    Independent,
    /// Stationary first-order Markov chain on uniforms, driven by a
    /// transition copula: `U_{i+1} = D1C^{-1}(U_i, W_i)`.
    Markov { copula: BivariateCopula },
}

impl DependenceSpec {
    /// C(u_1, ..., u_d), the copula of d consecutive slots.
    pub fn copula_cdf(&self, u: &[f64]) -> Result<f64> {
        if u.is_empty() {
            return Err(Error::Domain("copula argument vector is empty".into()));
        }
        let u: Vec<f64> = u.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        match self {
            DependenceSpec::Comonotonic => Ok(u.iter().copied().fold(1.0, f64::min)),
            DependenceSpec::Independent => Ok(u.iter().product()),
            DependenceSpec::Markov { copula } => match copula {
                BivariateCopula::Comonotone => Ok(u.iter().copied().fold(1.0, f64::min)),
                _ => {
                    if u.len() == 1 {
                        return Ok(u[0]);
                    }
                    if u.len() == 2 {
                        return Ok(copula.cdf(u[0], u[1]));
                    }
                    let raw = chain_orthant(copula, &u, OrthantSide::Lower)?;
                    // The exact value provably sits inside the Frechet band,
                    // so clamping only removes residual quadrature error. The
                    // band edges are themselves computed in floating point,
                    // so guard against summation dust inverting them.
                    let hi = u.iter().copied().fold(1.0, f64::min);
                    let lo = (u.iter().sum::<f64>() - (u.len() as f64 - 1.0))
                        .max(0.0)
                        .min(hi);
                    Ok(raw.clamp(lo, hi))
                }
            },
        }
    }

    /// Survival copula evaluated at `v`: `P(U_i > 1 - v_i forall i)`.
    pub fn copula_survival(&self, v: &[f64]) -> Result<f64> {
        if v.is_empty() {
            return Err(Error::Domain("copula argument vector is empty".into()));
        }
        let a: Vec<f64> = v.iter().map(|x| 1.0 - x.clamp(0.0, 1.0)).collect();
        match self {
            DependenceSpec::Comonotonic => {
                Ok(v.iter().copied().fold(1.0, f64::min).clamp(0.0, 1.0))
            }
            DependenceSpec::Independent => Ok(v.iter().map(|x| x.clamp(0.0, 1.0)).product()),
            DependenceSpec::Markov { copula } => match copula {
                BivariateCopula::Comonotone => {
                    Ok(v.iter().copied().fold(1.0, f64::min).clamp(0.0, 1.0))
                }
                _ => {
                    if a.len() == 1 {
                        return Ok(1.0 - a[0]);
                    }
                    let raw = chain_orthant(copula, &a, OrthantSide::Upper)?;
                    // The survival copula is a copula in the clamped v, so
                    // the same Frechet band applies (dust-guarded as above).
                    let v: Vec<f64> = v.iter().map(|x| x.clamp(0.0, 1.0)).collect();
                    let hi = v.iter().copied().fold(1.0, f64::min);
                    let lo = (v.iter().sum::<f64>() - (v.len() as f64 - 1.0))
                        .max(0.0)
                        .min(hi);
                    Ok(raw.clamp(lo, hi))
                }
            },
        }
    }

    /// P(C_1 <= x_1, ..., C_d <= x_d) for identically distributed slots with
    /// marginal `m`. Thresholds may be infinite (that slot is unconstrained).
    pub fn joint_orthant_prob(&self, m: &Marginal, x: &[f64]) -> Result<f64> {
        let u: Vec<f64> = x
            .iter()
            .map(|&xi| if xi.is_infinite() && xi > 0.0 { 1.0 } else { m.cdf(xi) })
            .collect();
        self.copula_cdf(&u)
    }

    /// P(C_1 > x_1, ..., C_d > x_d), the survival orthant.
    pub fn survival_orthant_prob(&self, m: &Marginal, x: &[f64]) -> Result<f64> {
        let v: Vec<f64> = x
            .iter()
            .map(|&xi| {
                if xi.is_infinite() && xi > 0.0 {
                    0.0
                } else {
                    m.survival(xi)
                }
            })
            .collect();
        self.copula_survival(&v)
    }

    /// Draw one capacity path of length `t`: uniforms from the dependence
    /// structure pushed through the marginal quantile slot-wise.
    /// Deterministic for a fixed RNG state.
    pub fn sample_path(&self, m: &Marginal, rng: &mut impl Rng, t: usize) -> Result<Vec<f64>> {
        if t == 0 {
            return Err(Error::Domain("path length must be at least 1".into()));
        }
        let mut u = Vec::with_capacity(t);
        self.sample_uniforms(rng, t, &mut u);
        u.iter()
            .map(|&ui| m.quantile(ui.min(1.0 - 1e-16)))
            .collect()
    }

    /// Draw the uniform layer of one path of length `t`. Deterministic for a
    /// fixed RNG state; capacity paths are `quantile` applied slot-wise.
    pub fn sample_uniforms(&self, rng: &mut impl Rng, t: usize, out: &mut Vec<f64>) {
        out.clear();
        match self {
            DependenceSpec::Comonotonic => {
                let u: f64 = rng.gen();
                out.extend(std::iter::repeat(u).take(t));
            }
            DependenceSpec::Independent => {
                out.extend((0..t).map(|_| rng.gen::<f64>()));
            }
            DependenceSpec::Markov { copula } => {
                let mut u: f64 = rng.gen();
                out.push(u);
                for _ in 1..t {
                    let w: f64 = rng.gen();
                    u = copula.d1_inverse(u, w).clamp(1e-15, 1.0 - 1e-15);
                    out.push(u);
                }
            }
        }
    }
}

enum OrthantSide {
    /// Integrate each coordinate over [0, u_j].
    Lower,
    /// Integrate each coordinate over [a_j, 1].
    Upper,
}

/// Stage-wise Gauss-Legendre integration along the chain:
/// P = int_{I_1} h_1, with h_j(s) = int_{I_{j+1}} c(s,t) h_{j+1}(t) dt and
/// the innermost stage folded into the closed-form conditional CDF.
fn chain_orthant(copula: &BivariateCopula, bounds: &[f64], side: OrthantSide) -> Result<f64> {
    let d = bounds.len();
    if d > MAX_CHAIN_DIM {
        return Err(Error::Capability(format!(
            "chain orthant quadrature supports up to {MAX_CHAIN_DIM} slots, got {d}"
        )));
    }
    let interval = |b: f64| match side {
        OrthantSide::Lower => (0.0, b),
        OrthantSide::Upper => (b, 1.0),
    };
    // Degenerate coordinates: an empty interval kills the probability.
    for &b in bounds {
        let (lo, hi) = interval(b);
        if hi <= lo {
            return Ok(0.0);
        }
    }
    let nodes_on = |b: f64| -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = interval(b);
        boundary_refined_nodes(lo, hi)
    };

    // Innermost stage: h_{d-1}(s) = D1C(s, u_d) or 1 - D1C(s, a_d).
    let last = bounds[d - 1];
    let (xs_prev, ws_prev) = nodes_on(bounds[d - 2]);
    let mut h: Vec<f64> = xs_prev
        .iter()
        .map(|&s| match side {
            OrthantSide::Lower => copula.d1(s, last),
            OrthantSide::Upper => 1.0 - copula.d1(s, last),
        })
        .collect();
    let mut xs = xs_prev;
    let mut ws = ws_prev;

    // Walk the remaining transitions backward.
    for j in (0..d.saturating_sub(2)).rev() {
        let (xs_j, ws_j) = nodes_on(bounds[j]);
        let mut h_j = vec![0.0; xs_j.len()];
        for (i, &s) in xs_j.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..xs.len() {
                acc += ws[k] * copula.density(s, xs[k])? * h[k];
            }
            h_j[i] = acc;
        }
        h = h_j;
        xs = xs_j;
        ws = ws_j;
    }

    let p: f64 = ws.iter().zip(&h).map(|(w, v)| w * v).sum();
    Ok(p.clamp(0.0, 1.0))
}

// --- Product operator ----------------------------------------------------------

/// A copula tabulated on a uniform lattice, the output of the product
/// operator. Evaluation is bilinear between lattice points.
#[derive(Debug, Clone)]
pub struct GridCopula {
    /// Lattice has `n + 1` points per axis including both boundaries.
    pub n: usize,
    /// Row-major `(n+1) x (n+1)` values, `values[i][j] = C(i/n, j/n)`.
    pub values: Vec<Vec<f64>>,
}

impl GridCopula {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let n = self.n as f64;
        let x = (u.clamp(0.0, 1.0) * n).min(n - 1e-12);
        let y = (v.clamp(0.0, 1.0) * n).min(n - 1e-12);
        let (i, j) = (x.floor() as usize, y.floor() as usize);
        let (fx, fy) = (x - i as f64, y - j as f64);
        let g = &self.values;
        (1.0 - fx) * (1.0 - fy) * g[i][j]
            + fx * (1.0 - fy) * g[i + 1][j]
            + (1.0 - fx) * fy * g[i][j + 1]
            + fx * fy * g[i + 1][j + 1]
    }
}

/// Darsow-style product `(A * B)(u, v) = int_0^1 D2A(u,t) D1B(t,v) dt`,
/// tabulated on an `(n+1)^2` lattice. Two copulas compose into the copula of
/// `(U_1, U_3)` when `A` links slots 1-2 and `B` links slots 2-3.
pub fn product_operator(a: &BivariateCopula, b: &BivariateCopula, grid_n: usize) -> Result<GridCopula> {
    if grid_n < 16 {
        return Err(Error::Domain(format!(
            "product operator lattice needs at least 16 cells, got {grid_n}"
        )));
    }
    let n = grid_n;
    // M is the identity element of the product: D2 M(u, t) = 1{t < u}
    // turns the integral into int_0^u D1 B(t, v) dt = B(u, v), and
    // symmetrically on the right. Tabulating the factor directly is exact
    // where quadrature across the step would not be.
    let identity_of = |c: &BivariateCopula| -> GridCopula {
        let mut values = vec![vec![0.0; n + 1]; n + 1];
        for (i, row) in values.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = c.cdf(i as f64 / n as f64, j as f64 / n as f64);
            }
        }
        GridCopula { n, values }
    };
    if matches!(a, BivariateCopula::Comonotone) {
        return Ok(identity_of(b));
    }
    if matches!(b, BivariateCopula::Comonotone) {
        return Ok(identity_of(a));
    }
    let rule = GlRule::get(REFINE_NODES);
    let mut values = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        let u = i as f64 / n as f64;
        for j in 0..=n {
            let v = j as f64 / n as f64;
            values[i][j] = if i == 0 || j == 0 {
                0.0
            } else if i == n {
                v
            } else if j == n {
                u
            } else {
                // Refined panels toward 0 and 1 where the conditionals
                // develop layers, with extra cuts at the arguments.
                let mut cuts: Vec<f64> = REFINE_BREAKS.to_vec();
                cuts.extend_from_slice(&[u, v]);
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let mut acc = 0.0;
                for pair in cuts.windows(2) {
                    acc += rule.integrate(pair[0], pair[1], |t| a.d2(u, t) * b.d1(t, v));
                }
                acc.clamp(0.0, u.min(v))
            };
        }
    }
    Ok(GridCopula { n, values })
}
