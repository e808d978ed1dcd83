//! Distribution of the cumulative capacity S(s,t) = C(s+1) + ... + C(t).
//!
//! The joint law of the per-slot capacities is split, Sklar-style, into the
//! marginals and a copula. This module covers the sum's distribution from
//! every angle the split admits:
//!
//! * exact closed form under comonotonicity, `F_S(x) = F(x/tau)`;
//! * exact copula-measure integration for small dimension, integrating the
//!   copula density over `B_z = {u : sum_i Q_i(u_i) <= z}`;
//! * i.i.d. machinery (transform-domain convolution, a central-limit
//!   approximation, Chernoff tails);
//! * dependence-free Frechet bounds: the standard bounds
//!
//!   ```text
//!   [sup_{sum u_i = s} sum_i F_i(u_i) - (d-1)]+  <=  P(sum X_i <= s)
//!   P(sum X_i < s)  <=  min(inf_{sum u_i = s} sum_i F_i(u_i), 1)
//!   ```
//!
//!   and the dual bounds, which improve the same-split standard bounds by
//!   trading the piecewise-constant dual functions for piecewise-linear
//!   ones:
//!
//!   ```text
//!   D(s) = inf_{u < s/n}  min( n int_u^{s-(n-1)u} Fbar / (s - nu), 1 )
//!   d(s) = sup_{u > s/n}  max( n int_{s-(n-1)u}^u Fbar / (nu - s) - n + 1, 0 )
//!   ```
//!
//!   (tail bounds: P(sum >= s) <= D(s), P(sum > s) >= d(s)), plus the
//!   attainment/ordering sharpness diagnostics for the upper dual.
//!
//! Everything here is dependence-free or dependence-explicit; nothing
//! assumes independence unless the name says `iid`.

use rand::{Rng, SeedableRng};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::copulas::DependenceSpec;
use crate::error::{Error, Result};
use crate::marginals::Marginal;
use crate::numeric;

/// Nodes for the copula-measure integration (per axis).
const COPULA_INTEGRAL_NODES: usize = 96;
/// Grid for the Chernoff exponent search.
const CHERNOFF_THETA_LO: f64 = 1e-3;
const CHERNOFF_THETA_HI: f64 = 50.0;
/// Coordinate-descent restarts for the standard-bound optimizer.
const STANDARD_RESTARTS: usize = 20;
/// Random starts for the heterogeneous dual optimizer.
const HET_DUAL_STARTS: usize = 10;

// ---------------------------------------------------------------------------
// Curves and bound pairs
// ---------------------------------------------------------------------------

/// A sampled CDF: strictly increasing abscissae, nondecreasing probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    xs: Vec<f64>,
    ps: Vec<f64>,
}

impl CdfCurve {
    /// Validates monotonicity on construction; every curve in the crate is
    /// a genuine CDF sample or a bound curve, and both must be monotone.
    pub fn new(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        if xs.len() != ps.len() || xs.is_empty() {
            return Err(Error::Domain(format!(
                "curve needs matching nonempty grids, got {} xs and {} ps",
                xs.len(),
                ps.len()
            )));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Domain(format!(
                    "curve grid must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for (i, &p) in ps.iter().enumerate() {
            if !(0.0..=1.0 + 1e-12).contains(&p) {
                return Err(Error::Domain(format!(
                    "curve probability {p} at index {i} outside [0, 1]"
                )));
            }
            if i > 0 && p < ps[i - 1] - 1e-12 {
                return Err(Error::Domain(format!(
                    "curve probabilities decrease at index {i}: {} then {p}",
                    ps[i - 1]
                )));
            }
        }
        let ps = ps.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
        Ok(CdfCurve { xs, ps })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => self.ps[i],
            Err(0) => self.ps[0],
            Err(i) if i == self.xs.len() => *self.ps.last().unwrap(),
            Err(i) => {
                let t = (x - self.xs[i - 1]) / (self.xs[i] - self.xs[i - 1]);
                self.ps[i - 1] + t * (self.ps[i] - self.ps[i - 1])
            }
        }
    }

    /// Conservative evaluation of a curve used as a lower bound: the value
    /// at the nearest knot to the left, 0 before the grid. A nondecreasing
    /// bound function is at least its left-knot sample, so this never
    /// overstates the bound.
    pub fn eval_as_lower(&self, x: f64) -> f64 {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => self.ps[i],
            Err(0) => 0.0,
            Err(i) => self.ps[i - 1],
        }
    }

    /// Conservative evaluation of a curve used as an upper bound: the value
    /// at the nearest knot to the right, 1 past the grid.
    pub fn eval_as_upper(&self, x: f64) -> f64 {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => self.ps[i],
            Err(i) if i == self.xs.len() => 1.0,
            Err(i) => self.ps[i],
        }
    }
}

/// How a [`BoundPair`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMethod {
    /// Hyperplane-optimized standard bounds.
    Standard,
    /// Standard bounds evaluated at the equal split only (closed form).
    StandardEqualSplit,
    /// Equal-split standard bounds sharpened by the homogeneous duals.
    Dual,
}

impl BoundMethod {
    pub fn label(&self) -> &'static str {
        match self {
            BoundMethod::Standard => "standard",
            BoundMethod::StandardEqualSplit => "standard-equal-split",
            BoundMethod::Dual => "dual",
        }
    }
}

/// Lower and upper CDF envelopes for S over a shared grid.
#[derive(Debug, Clone)]
pub struct BoundPair {
    pub lower: CdfCurve,
    pub upper: CdfCurve,
    pub method: BoundMethod,
    pub tau: usize,
}

impl BoundPair {
    pub fn new(lower: CdfCurve, upper: CdfCurve, method: BoundMethod, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::Domain("bound pair needs horizon tau >= 1".into()));
        }
        if lower.xs != upper.xs {
            return Err(Error::Domain(
                "bound pair curves must share one grid".into(),
            ));
        }
        for i in 0..lower.ps.len() {
            if lower.ps[i] > upper.ps[i] + 1e-12 {
                return Err(Error::Domain(format!(
                    "lower bound {} exceeds upper bound {} at x = {}",
                    lower.ps[i], upper.ps[i], lower.xs[i]
                )));
            }
        }
        Ok(BoundPair {
            lower,
            upper,
            method,
            tau,
        })
    }
}

// ---------------------------------------------------------------------------
// Exact CDFs
// ---------------------------------------------------------------------------

/// Comonotone slots are one uniform pushed through the quantile repeatedly,
/// so S = tau * C and F_S(x) = F(x / tau) exactly.
pub fn exact_cdf_comonotonic(m: &Marginal, tau: usize, x: f64) -> Result<f64> {
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be >= 1".into()));
    }
    Ok(m.cdf(x / tau as f64))
}

/// Exact CDF of the sum by integrating the copula density over the region
/// below the boundary u_d = tau_z(u_1, ..., u_{d-1}), for d <= 3. The last
/// coordinate integrates in closed form through the conditional CDF, so a
/// d-dimensional problem needs a (d-1)-dimensional quadrature.
pub fn exact_cdf_copula_integral(
    spec: &DependenceSpec,
    marginals: &[Marginal],
    z: f64,
) -> Result<f64> {
    let d = marginals.len();
    if d == 0 {
        return Err(Error::Domain("need at least one marginal".into()));
    }
    if d > 3 {
        return Err(Error::Capability(format!(
            "copula-measure integration implemented for d <= 3, got {d}"
        )));
    }
    let dens_err = || {
        Error::Capability(
            "dependence spec has no copula density; use the comonotonic closed form".into(),
        )
    };
    // Conditional CDF of the next uniform given the previous one. The
    // independent spec is the product copula, whose conditional is the
    // identity in the second slot.
    enum Cond<'a> {
        Indep,
        Chain(&'a crate::copulas::BivariateCopula),
    }
    let cond = match spec {
        DependenceSpec::Independent => Cond::Indep,
        DependenceSpec::Markov { copula } => {
            if matches!(copula, crate::copulas::BivariateCopula::Comonotone) {
                return Err(dens_err());
            }
            Cond::Chain(copula)
        }
        DependenceSpec::Comonotonic => return Err(dens_err()),
    };
    let d1 = |u: f64, w: f64| -> f64 {
        match &cond {
            Cond::Indep => w,
            Cond::Chain(c) => c.d1(u, w),
        }
    };
    let density = |u: f64, v: f64| -> Result<f64> {
        match &cond {
            Cond::Indep => Ok(1.0),
            Cond::Chain(c) => c.density(u, v),
        }
    };

    if z <= 0.0 {
        return Ok(0.0);
    }
    match d {
        1 => Ok(marginals[0].cdf(z)),
        2 => {
            // F(z) = int_0^{F1(z)} D1C(u, F2(z - Q1(u))) du; beyond F1(z)
            // the remaining budget is negative and the integrand vanishes.
            let cut = marginals[0].cdf(z).min(1.0 - 1e-14);
            if cut <= 0.0 {
                return Ok(0.0);
            }
            let rule = numeric::GlRule::get(COPULA_INTEGRAL_NODES);
            let mut acc = 0.0;
            // Panel split keeps the boundary curvature resolved near u = cut.
            let cuts = [0.0, 0.5 * cut, 0.9 * cut, cut];
            for w in cuts.windows(2) {
                let mut panel = 0.0;
                for k in 0..rule.nodes.len() {
                    let u = 0.5 * (w[0] + w[1]) + 0.5 * (w[1] - w[0]) * rule.nodes[k];
                    let rem = z - marginals[0].quantile(u)?;
                    let wv = marginals[1].cdf(rem);
                    let val = if wv <= 0.0 { 0.0 } else { d1(u, wv) };
                    panel += rule.weights[k] * val;
                }
                acc += panel * 0.5 * (w[1] - w[0]);
            }
            Ok(acc.clamp(0.0, 1.0))
        }
        _ => {
            // Chain factorization: U3 is independent of U1 given U2, so
            // F(z) = int int c(u1, u2) D1C(u2, F3(z - Q1(u1) - Q2(u2))) du.
            let cut1 = marginals[0].cdf(z).min(1.0 - 1e-14);
            if cut1 <= 0.0 {
                return Ok(0.0);
            }
            let rule = numeric::GlRule::get(COPULA_INTEGRAL_NODES);
            // The same panel split as d = 2, on both axes: the integrand
            // dies algebraically at the budget boundary, and a bare
            // whole-range rule leaves a 1e-4 scale residue there.
            let split = |cut: f64| [0.0, 0.5 * cut, 0.9 * cut, cut];
            let outer_cuts = split(cut1);
            let mut acc = 0.0;
            for w1 in outer_cuts.windows(2) {
                let mut outer_panel = 0.0;
                for k1 in 0..rule.nodes.len() {
                    let u1 = 0.5 * (w1[0] + w1[1]) + 0.5 * (w1[1] - w1[0]) * rule.nodes[k1];
                    let rem1 = z - marginals[0].quantile(u1)?;
                    let cut2 = marginals[1].cdf(rem1).min(1.0 - 1e-14);
                    if cut2 <= 0.0 {
                        continue;
                    }
                    let inner_cuts = split(cut2);
                    let mut inner = 0.0;
                    for w2 in inner_cuts.windows(2) {
                        let mut panel = 0.0;
                        for k2 in 0..rule.nodes.len() {
                            let u2 =
                                0.5 * (w2[0] + w2[1]) + 0.5 * (w2[1] - w2[0]) * rule.nodes[k2];
                            let rem2 = rem1 - marginals[1].quantile(u2)?;
                            let wv = marginals[2].cdf(rem2);
                            if wv <= 0.0 {
                                continue;
                            }
                            panel += rule.weights[k2] * density(u1, u2)? * d1(u2, wv);
                        }
                        inner += panel * 0.5 * (w2[1] - w2[0]);
                    }
                    outer_panel += rule.weights[k1] * inner;
                }
                acc += outer_panel * 0.5 * (w1[1] - w1[0]);
            }
            Ok(acc.clamp(0.0, 1.0))
        }
    }
}

// ---------------------------------------------------------------------------
// Independent slots: convolution, CLT, Chernoff
// ---------------------------------------------------------------------------

/// tau-fold convolution of the marginal via FFT exponentiation. The single
/// slot is discretized into `grid_n` cells with midpoint mass assignment
/// (second-order accurate), the spectrum is raised to the tau-th power by
/// repeated squaring, and the inverse transform is cumulated into a CDF.
pub fn cdf_iid_convolution(m: &Marginal, tau: usize, grid_n: usize) -> Result<CdfCurve> {
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be >= 1".into()));
    }
    if grid_n < 64 {
        return Err(Error::Domain(format!(
            "convolution grid needs at least 64 cells, got {grid_n}"
        )));
    }
    // Truncate each slot where at most 1e-12 of mass remains; across tau
    // slots the union carries < tau * 1e-12 <= 1e-10 at desk horizons.
    let top = match m {
        Marginal::Tabulated { xs, .. } => *xs.last().unwrap(),
        _ => m.quantile(1.0 - 1e-12)?,
    };
    let h = top / grid_n as f64;
    let n_fft = (grid_n * tau + 1).next_power_of_two();
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut prev = 0.0;
    for (k, slot) in buf.iter_mut().enumerate().take(grid_n) {
        let hi = m.cdf((k + 1) as f64 * h);
        slot.re = (hi - prev).max(0.0);
        prev = hi;
    }
    // Any residual beyond the truncation point piles onto the last cell so
    // the pmf keeps total mass one and the CDF reaches 1.
    buf[grid_n - 1].re += (1.0 - prev).max(0.0);

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n_fft).process(&mut buf);
    for c in buf.iter_mut() {
        *c = powu(*c, tau as u32);
    }
    planner.plan_fft_inverse(n_fft).process(&mut buf);

    let scale = 1.0 / n_fft as f64;
    let count = grid_n * tau;
    let mut xs = Vec::with_capacity(count);
    let mut ps = Vec::with_capacity(count);
    let mut cum = 0.0;
    for (k, c) in buf.iter().enumerate().take(count) {
        cum += (c.re * scale).max(0.0);
        // Midpoint atoms put the sum lattice at (k + tau/2) * h, and the
        // running total through cell k is the CDF at that cell's upper
        // edge, half a step further (the lattice continuity correction).
        // At tau = 1 this reproduces the marginal exactly on its grid.
        xs.push((k as f64 + 0.5 * (tau as f64 + 1.0)) * h);
        ps.push(cum.min(1.0));
    }
    if let Some(last) = ps.last_mut() {
        *last = 1.0;
    }
    CdfCurve::new(xs, ps)
}

fn powu(c: Complex<f64>, mut e: u32) -> Complex<f64> {
    let mut base = c;
    let mut acc = Complex::new(1.0, 0.0);
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// Central-limit approximation Phi((x - tau*mu) / (sigma * sqrt(tau))).
pub fn cdf_iid_clt(m: &Marginal, tau: usize, x: f64) -> Result<f64> {
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be >= 1".into()));
    }
    let (mu, var) = m.moments()?;
    let sd = (var * tau as f64).sqrt();
    if sd <= 0.0 {
        return Ok(if x >= tau as f64 * mu { 1.0 } else { 0.0 });
    }
    let z = (x - tau as f64 * mu) / sd;
    let normal = Normal::new(0.0, 1.0).expect("unit normal is well formed");
    Ok(normal.cdf(z))
}

/// Log moment generating function log E[e^{theta C}], finite for every
/// theta because C grows like log2 of an exponential variable.
pub(crate) fn log_mgf_pos(m: &Marginal, theta: f64) -> Result<f64> {
    let top = match m {
        Marginal::Tabulated { xs, .. } => *xs.last().unwrap(),
        _ => m.quantile(1.0 - 1e-15)?,
    };
    // E[e^{theta C}] = 1 + theta int_0^inf e^{theta r} Fbar(r) dr by parts;
    // the survival form needs no density and is exact for tabulated atoms.
    let i = numeric::integrate(
        |r| (theta * r).exp() * m.survival(r),
        0.0,
        top,
        1e-12,
    ) + numeric::integrate_to_inf(|r| (theta * r).exp() * m.survival(r), top, 1e-12);
    Ok((1.0 + theta * i).ln())
}

/// Chernoff upper-tail bound P(S_tau >= x) <= min_theta exp(tau k(theta) -
/// theta x), scanned on a log grid and polished by golden section.
pub fn tail_iid_chernoff(m: &Marginal, tau: usize, x: f64) -> Result<f64> {
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be >= 1".into()));
    }
    let (mu, _) = m.moments()?;
    if x <= tau as f64 * mu {
        return Ok(1.0); // vacuous below the mean: the optimum is theta = 0
    }
    let exponent = |theta: f64| -> Result<f64> {
        Ok(tau as f64 * log_mgf_pos(m, theta)? - theta * x)
    };
    let grid: Vec<f64> = (0..120)
        .map(|i| {
            let t = i as f64 / 119.0;
            CHERNOFF_THETA_LO * (CHERNOFF_THETA_HI / CHERNOFF_THETA_LO).powf(t)
        })
        .collect();
    let mut best = (grid[0], exponent(grid[0])?);
    for &th in &grid[1..] {
        let e = exponent(th)?;
        if e < best.1 {
            best = (th, e);
        }
    }
    let lo = best.0 / 1.6;
    let hi = (best.0 * 1.6).min(CHERNOFF_THETA_HI);
    let (th, e) = numeric::golden_min(
        |t| exponent(t).unwrap_or(f64::INFINITY),
        lo,
        hi,
        1e-9,
    );
    let e = e.min(best.1);
    let _ = th;
    Ok(e.exp().min(1.0))
}

/// The optimizing exponent of [`tail_iid_chernoff`], exposed for reporting.
pub fn chernoff_exponent(m: &Marginal, tau: usize, x: f64) -> Result<f64> {
    let (mu, _) = m.moments()?;
    if x <= tau as f64 * mu {
        return Ok(0.0);
    }
    let exponent = |theta: f64| tau as f64 * log_mgf_pos(m, theta).unwrap_or(f64::NAN) - theta * x;
    let grid: Vec<f64> = (0..120)
        .map(|i| {
            let t = i as f64 / 119.0;
            CHERNOFF_THETA_LO * (CHERNOFF_THETA_HI / CHERNOFF_THETA_LO).powf(t)
        })
        .collect();
    let mut best = (grid[0], exponent(grid[0]));
    for &th in &grid[1..] {
        let e = exponent(th);
        if e < best.1 {
            best = (th, e);
        }
    }
    let (th, _) = numeric::golden_min(
        exponent,
        best.0 / 1.6,
        (best.0 * 1.6).min(CHERNOFF_THETA_HI),
        1e-9,
    );
    Ok(th)
}

// ---------------------------------------------------------------------------
// Standard bounds
// ---------------------------------------------------------------------------

/// Result of the hyperplane optimization behind the standard bounds.
#[derive(Debug, Clone, Copy)]
pub struct StandardBounds {
    /// [sup sum F_i(u_i) - (d-1)]+ over the hyperplane, a CDF lower bound.
    pub lower: f64,
    /// min(inf sum F_i(u_i), 1), a CDF upper bound.
    pub upper: f64,
    /// False when a restart failed to move and the equal split was kept.
    pub converged: bool,
}

/// Frechet standard bounds on P(sum X_i <= s) for arbitrary marginals:
/// coordinate descent over the simplex {u >= 0, sum u = s} from the equal
/// split plus perturbed restarts. Coordinates never profit from leaving the
/// simplex: below 0 a CDF is flat at 0, so mass only shifts to where it
/// cannot change the objective's optimum.
pub fn standard_bounds(marginals: &[Marginal], s: f64) -> Result<StandardBounds> {
    let d = marginals.len();
    if d == 0 {
        return Err(Error::Domain("need at least one marginal".into()));
    }
    if !s.is_finite() {
        return Err(Error::Domain(format!("threshold s must be finite, got {s}")));
    }
    if d == 1 {
        let p = marginals[0].cdf(s);
        return Ok(StandardBounds {
            lower: p,
            upper: p,
            converged: true,
        });
    }
    if s <= 0.0 {
        // Every u on the simplex has all F_i evaluated at <= 0.
        return Ok(StandardBounds {
            lower: 0.0,
            upper: 0.0,
            converged: true,
        });
    }
    let objective = |u: &[f64]| -> f64 { u.iter().zip(marginals).map(|(x, m)| m.cdf(*x)).sum() };
    let descend = |start: &[f64], maximize: bool| -> (f64, bool) {
        let mut u = start.to_vec();
        let mut cur = objective(&u);
        let mut moved_any = false;
        for _ in 0..60 {
            let mut improved = false;
            for i in 0..d {
                for j in (i + 1)..d {
                    let tot = u[i] + u[j];
                    if tot <= 0.0 {
                        continue;
                    }
                    let pair = |t: f64| -> f64 {
                        let rest: f64 = cur - marginals[i].cdf(u[i]) - marginals[j].cdf(u[j]);
                        let v = rest + marginals[i].cdf(t) + marginals[j].cdf(tot - t);
                        if maximize {
                            -v
                        } else {
                            v
                        }
                    };
                    let (t, val) = numeric::golden_min(pair, 0.0, tot, 1e-10);
                    let val = if maximize { -val } else { val };
                    let better = if maximize { val > cur + 1e-13 } else { val < cur - 1e-13 };
                    if better {
                        u[i] = t;
                        u[j] = tot - t;
                        cur = val;
                        improved = true;
                        moved_any = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (cur, moved_any)
    };

    let equal = vec![s / d as f64; d];
    let mut sup = objective(&equal);
    let mut inf = sup;
    // Vertices are the natural candidates for the infimum when the CDFs are
    // concave; include them outright so descent starts from both regimes.
    for i in 0..d {
        let mut v = vec![0.0; d];
        v[i] = s;
        let val = objective(&v);
        sup = sup.max(val);
        inf = inf.min(val);
    }
    let mut any_moved = false;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x5eed);
    for r in 0..STANDARD_RESTARTS {
        let start: Vec<f64> = if r == 0 {
            equal.clone()
        } else {
            // Random point of the simplex via normalized exponentials.
            let mut w: Vec<f64> = (0..d).map(|_| -rng.gen::<f64>().ln()).collect();
            let tot: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x *= s / tot);
            w
        };
        let (hi, m1) = descend(&start, true);
        let (lo, m2) = descend(&start, false);
        sup = sup.max(hi);
        inf = inf.min(lo);
        any_moved |= m1 || m2;
    }
    Ok(StandardBounds {
        lower: (sup - (d as f64 - 1.0)).clamp(0.0, 1.0),
        upper: inf.min(1.0).max(0.0),
        converged: any_moved || d == 1,
    })
}

/// Standard bounds at the equal split only: upper = min(tau F(s/tau), 1),
/// lower = [1 - tau Fbar(s/tau)]+. These are the closed forms the service
/// curve section inverts, and the limit points of the homogeneous duals.
pub fn standard_bounds_equal_split(m: &Marginal, tau: usize, s: f64) -> Result<(f64, f64)> {
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be >= 1".into()));
    }
    let t = tau as f64;
    let upper = (t * m.cdf(s / t)).min(1.0);
    let lower = (1.0 - t * m.survival(s / t)).max(0.0);
    Ok((lower, upper))
}

// ---------------------------------------------------------------------------
// Dual bounds
// ---------------------------------------------------------------------------

/// Integral of the survival function over [a, b] allowing a < 0, where the
/// survival function is identically 1.
fn survival_integral_signed(m: &Marginal, a: f64, b: f64) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    if b <= 0.0 {
        return Ok(b - a);
    }
    let head = (-a).max(0.0);
    Ok(head + m.survival_integral(a.max(0.0), b)?)
}

/// Upper dual bound D(s) on the tail P(sum >= s) for n identical marginals:
/// one-dimensional infimum over u in [0, s/n), with the analytic limit
/// n Fbar(s/n) at the right endpoint and a clamp at 1.
pub fn dual_upper_bound_homogeneous(m: &Marginal, n: usize, s: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("dual bounds need n >= 2, got {n}")));
    }
    if !(s > 0.0) {
        return Err(Error::Domain(format!("dual bounds need s > 0, got {s}")));
    }
    let nf = n as f64;
    let sn = s / nf;
    let limit = nf * m.survival(sn);
    let g = |u: f64| -> f64 {
        let b = s - (nf - 1.0) * u;
        let den = s - nf * u;
        if den <= 1e-13 {
            return limit;
        }
        match survival_integral_signed(m, u, b) {
            Ok(i) => nf * i / den,
            Err(_) => f64::INFINITY,
        }
    };
    // The search interval starts where the survival function is still
    // essentially 1; for nonnegative supports that is u = 0.
    let (_, interior) = numeric::golden_min(g, 1e-12, sn - sn * 1e-10, 1e-10);
    Ok(interior.min(limit).min(1.0))
}

/// Lower dual bound d(s) on P(sum > s): supremum over u > s/n of the
/// mirrored integrand minus (n-1), clamped at 0. The limit point at
/// u -> s/n is n Fbar(s/n) - n + 1, the equal-split standard tail bound,
/// so the dual always dominates it.
pub fn dual_lower_bound_homogeneous(m: &Marginal, n: usize, s: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("dual bounds need n >= 2, got {n}")));
    }
    if !(s > 0.0) {
        return Err(Error::Domain(format!("dual bounds need s > 0, got {s}")));
    }
    let nf = n as f64;
    let sn = s / nf;
    let limit = nf * m.survival(sn) - nf + 1.0;
    let h = |u: f64| -> f64 {
        let b = s - (nf - 1.0) * u; // b < u on this side
        let den = nf * u - s;
        if den <= 1e-13 {
            return limit;
        }
        match survival_integral_signed(m, b, u) {
            Ok(i) => nf * i / den - nf + 1.0,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    // Far from s/n the objective decays toward (n mu - s)/(n u - s); the
    // prescan inside golden_min covers the interior maximum.
    let span = (4.0 * sn + 12.0).max(16.0);
    let (_, neg_best) = numeric::golden_min(|u| -h(u), sn + sn.max(1.0) * 1e-10, sn + span, 1e-10);
    Ok((-neg_best).max(limit).max(0.0))
}

/// Heterogeneous dual bounds (D, d) by Nelder-Mead over the n-dimensional
/// split vector from random feasible starts. Dimension is capped where the
/// simplex search stays trustworthy.
pub fn dual_bounds_heterogeneous(marginals: &[Marginal], s: f64) -> Result<(f64, f64)> {
    let d = marginals.len();
    if d < 2 {
        return Err(Error::Domain(format!("dual bounds need n >= 2, got {d}")));
    }
    if d > 4 {
        return Err(Error::Capability(format!(
            "heterogeneous dual optimization supports n <= 4, got {d}"
        )));
    }
    if !(s > 0.0) {
        return Err(Error::Domain(format!("dual bounds need s > 0, got {s}")));
    }
    let df = d as f64;
    let upper_obj = |u: &[f64]| -> f64 {
        let tot: f64 = u.iter().sum();
        let den = s - tot;
        if den <= 1e-9 {
            return f64::INFINITY;
        }
        let mut num = 0.0;
        for (i, m) in marginals.iter().enumerate() {
            match survival_integral_signed(m, u[i], u[i] + den) {
                Ok(v) => num += v,
                Err(_) => return f64::INFINITY,
            }
        }
        num / den
    };
    let lower_obj = |u: &[f64]| -> f64 {
        let tot: f64 = u.iter().sum();
        let den = tot - s;
        if den <= 1e-9 {
            return f64::NEG_INFINITY;
        }
        let mut num = 0.0;
        for (i, m) in marginals.iter().enumerate() {
            match survival_integral_signed(m, u[i] - den, u[i]) {
                Ok(v) => num += v,
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        num / den - df + 1.0
    };

    // Hyperplane limit at the equal split is a feasible value for both
    // sides (the integrand degenerates to sum Fbar_i there).
    let eq_tail: f64 = marginals.iter().map(|m| m.survival(s / df)).sum();
    let mut best_upper = eq_tail.min(1.0);
    let mut best_lower = (eq_tail - df + 1.0).max(0.0);

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xd0a1);
    for _ in 0..HET_DUAL_STARTS {
        let start_u: Vec<f64> = (0..d)
            .map(|_| s / df - rng.gen_range(0.05..0.8) * (s / df).max(0.5))
            .collect();
        let (_, v) = numeric::nelder_mead(upper_obj, &start_u, 0.15 * (s / df).max(0.5), 600);
        best_upper = best_upper.min(v.max(0.0));

        let start_l: Vec<f64> = (0..d)
            .map(|_| s / df + rng.gen_range(0.05..2.0))
            .collect();
        let (_, v) = numeric::nelder_mead(|u| -lower_obj(u), &start_l, 0.2, 600);
        best_lower = best_lower.max(-v);
    }
    Ok((best_upper.clamp(0.0, 1.0), best_lower.clamp(0.0, 1.0)))
}

// ---------------------------------------------------------------------------
// Sharpness diagnostics for the upper dual
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharpnessVerdict {
    ConditionsHold,
    Violated,
    Inconclusive,
}

/// Attainment and ordering diagnostics at the dual minimizer.
#[derive(Debug, Clone)]
pub struct SharpnessReport {
    /// Located minimizer of the dual objective, a < s/n.
    pub a: f64,
    /// Conjugate point b = s - (n-1) a.
    pub b: f64,
    /// a* = F^{-1}(1 - D(s)).
    pub a_star: f64,
    pub dual_value: f64,
    /// |objective(a) - (Fbar(a) + (n-1) Fbar(b))|, the first-order identity.
    pub first_order_residual: f64,
    /// f(a) - (n-1)^2 f(b); nonnegative at a genuine minimum.
    pub second_order_margin: f64,
    /// Ordering condition spot-checked on a y-grid at and beyond b.
    pub ordering_ok: bool,
    pub verdict: SharpnessVerdict,
    /// Mixability is a distributional property this crate does not test.
    pub mixability: &'static str,
}

pub fn sharpness_check(m: &Marginal, n: usize, s: f64) -> Result<SharpnessReport> {
    if n < 2 {
        return Err(Error::Domain(format!("sharpness check needs n >= 2, got {n}")));
    }
    if !(s > 0.0) {
        return Err(Error::Domain(format!("sharpness check needs s > 0, got {s}")));
    }
    let nf = n as f64;
    let sn = s / nf;
    let g = |u: f64| -> f64 {
        let b = s - (nf - 1.0) * u;
        let den = s - nf * u;
        if den <= 1e-13 {
            return nf * m.survival(sn);
        }
        survival_integral_signed(m, u, b)
            .map(|i| nf * i / den)
            .unwrap_or(f64::INFINITY)
    };
    let (a, at_a) = numeric::golden_min(g, 1e-12, sn - sn * 1e-10, 1e-11);
    let dual_value = at_a.min(nf * m.survival(sn)).min(1.0);
    let b = s - (nf - 1.0) * a;
    let a_star = m.quantile((1.0 - dual_value).clamp(0.0, 1.0 - 1e-15))?;
    let first_order_residual = (g(a) - (m.survival(a) + (nf - 1.0) * m.survival(b))).abs();
    let second_order_margin = m.pdf(a) - (nf - 1.0).powi(2) * m.pdf(b);

    // Ordering condition: (n-1)(F(y) - F(b)) <= F(a) - F((s-y)/(n-1)) for
    // y >= b, spot-checked on 50 points spanning b to deep in the tail.
    let y_hi = b + (m.quantile(1.0 - 1e-9)? - b).max(1.0) + 2.0;
    let mut ordering_ok = true;
    for k in 0..50 {
        let y = b + (y_hi - b) * k as f64 / 49.0;
        let lhs = (nf - 1.0) * (m.cdf(y) - m.cdf(b));
        let rhs = m.cdf(a) - m.cdf((s - y) / (nf - 1.0));
        if lhs > rhs + 1e-9 {
            ordering_ok = false;
            break;
        }
    }
    // The minimum can sit at the boundary (equal-split limit); the
    // first-order identity only characterizes interior minima.
    let interior = a > 1e-9 && a < sn * (1.0 - 1e-6) && at_a <= nf * m.survival(sn);
    let verdict = if !interior {
        SharpnessVerdict::Inconclusive
    } else if first_order_residual < 1e-6 && second_order_margin >= -1e-9 && ordering_ok {
        SharpnessVerdict::ConditionsHold
    } else {
        SharpnessVerdict::Violated
    };
    Ok(SharpnessReport {
        a,
        b,
        a_star,
        dual_value,
        first_order_residual,
        second_order_margin,
        ordering_ok,
        verdict,
        mixability: "not checked",
    })
}

// ---------------------------------------------------------------------------
// Bound-curve assembly
// ---------------------------------------------------------------------------

/// Equal-split standard bound curves over a grid.
pub fn standard_pair(m: &Marginal, tau: usize, xs: &[f64]) -> Result<BoundPair> {
    let mut lo = Vec::with_capacity(xs.len());
    let mut hi = Vec::with_capacity(xs.len());
    for &x in xs {
        let (l, u) = standard_bounds_equal_split(m, tau, x)?;
        lo.push(l);
        hi.push(u);
    }
    BoundPair::new(
        CdfCurve::new(xs.to_vec(), lo)?,
        CdfCurve::new(xs.to_vec(), hi)?,
        BoundMethod::StandardEqualSplit,
        tau,
    )
}

/// Equal-split standard bounds sharpened by the homogeneous dual bounds:
/// P(S >= x) <= D(x) lifts the CDF lower bound to 1 - D(x), and
/// P(S > x) >= d(x) caps the CDF at 1 - d(x).
pub fn dual_improved_pair(m: &Marginal, tau: usize, xs: &[f64]) -> Result<BoundPair> {
    if tau < 2 {
        return Err(Error::Domain(
            "dual improvement needs tau >= 2; tau = 1 is exact already".into(),
        ));
    }
    let mut lo = Vec::with_capacity(xs.len());
    let mut hi = Vec::with_capacity(xs.len());
    let mut prev_lo = 0.0f64;
    let mut prev_hi = 0.0f64;
    for &x in xs {
        let (l, u) = standard_bounds_equal_split(m, tau, x)?;
        let (dl, du) = if x > 0.0 {
            (
                1.0 - dual_upper_bound_homogeneous(m, tau, x)?,
                1.0 - dual_lower_bound_homogeneous(m, tau, x)?,
            )
        } else {
            (0.0, 1.0)
        };
        // Monotone envelope: each pointwise bound is valid, so the running
        // max (min) of lower (upper) bounds is a valid monotone curve.
        prev_lo = prev_lo.max(l.max(dl));
        let cand_hi = u.min(du);
        prev_hi = if prev_hi > cand_hi { prev_hi.max(cand_hi) } else { cand_hi };
        lo.push(prev_lo.clamp(0.0, 1.0));
        hi.push(prev_hi.clamp(0.0, 1.0));
    }
    BoundPair::new(
        CdfCurve::new(xs.to_vec(), lo)?,
        CdfCurve::new(xs.to_vec(), hi)?,
        BoundMethod::Dual,
        tau,
    )
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::BivariateCopula;
    use proptest::prelude::*;

    // Frozen external quadrature anchors (adaptive double/triple integrals
    // cross-checked by Monte Carlo in the oracle run).
    const IID_D2_CDF_AT_2: f64 = 0.651_094_735_350;
    const IID_D3_CDF_AT_3: f64 = 0.672_514_918_115;
    const FGM1_D2_CDF_AT_2: f64 = 0.632_784_577_226;
    const GAUSS05_D2_CDF_AT_2: f64 = 0.640_135_185_423;
    const CLAYTON2_D3_CDF_AT_3: f64 = 0.601_889_458_154;
    const DUAL_D_N3_S3: f64 = 0.839_748_726_872;
    const DUAL_D_N3_S6: f64 = 0.120_128_881_546;
    const DUAL_LOW_N3_S1: f64 = 0.546_923_867_528;
    const DUAL_LOW_N3_S15: f64 = 0.338_830_519_120;
    const DUAL_LOW_N3_S2: f64 = 0.155_988_185_337;
    const HET_DUAL_D_S3: f64 = 0.855_155_252_597; // gammas 0.8 / 1.0 / 1.3
    const CHERNOFF_T8_X10: f64 = 0.230_461_693_386_3;
    const CHERNOFF_T8_X10_THETA: f64 = 0.898_139_563_4;

    fn ray() -> Marginal {
        Marginal::rayleigh(1.0).unwrap()
    }

    #[test]
    fn curve_construction_rejects_bad_input() {
        assert!(CdfCurve::new(vec![0.0, 0.0], vec![0.1, 0.2]).is_err(), "flat grid");
        assert!(CdfCurve::new(vec![0.0, 1.0], vec![0.5, 0.2]).is_err(), "decreasing ps");
        assert!(CdfCurve::new(vec![0.0, 1.0], vec![-0.1, 0.2]).is_err(), "negative p");
        assert!(CdfCurve::new(vec![0.0], vec![1.5]).is_err(), "p above one");
        assert!(CdfCurve::new(vec![], vec![]).is_err(), "empty");
    }

    #[test]
    fn curve_eval_interpolates_and_clamps() {
        let c = CdfCurve::new(vec![1.0, 2.0, 3.0], vec![0.2, 0.4, 1.0]).unwrap();
        // 0.2 + 0.5 * 0.2 lands on a rounding tie, so allow one ulp.
        assert!((c.eval(1.5) - 0.3).abs() < 1e-15, "midpoint: {}", c.eval(1.5));
        assert_eq!(c.eval(0.0), 0.2);
        assert_eq!(c.eval(9.0), 1.0);
        assert_eq!(c.eval_as_lower(0.5), 0.0);
        assert_eq!(c.eval_as_lower(2.5), 0.4);
        assert_eq!(c.eval_as_upper(2.5), 1.0);
        assert_eq!(c.eval_as_upper(0.5), 0.2);
        assert_eq!(c.eval_as_upper(5.0), 1.0);
    }

    #[test]
    fn comonotonic_cdf_is_the_rescaled_marginal() {
        let m = ray();
        let v = exact_cdf_comonotonic(&m, 4, 4.0).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-12, "F(1) at tau=4, x=4: {v}");
        assert_eq!(exact_cdf_comonotonic(&m, 1, 2.0).unwrap(), m.cdf(2.0));
        assert_eq!(exact_cdf_comonotonic(&m, 3, 0.0).unwrap(), 0.0);
        assert!(exact_cdf_comonotonic(&m, 0, 1.0).is_err(), "tau = 0 rejected");
    }

    #[test]
    fn copula_integral_matches_frozen_independent_anchors() {
        let m = ray();
        let two = vec![m.clone(), m.clone()];
        let three = vec![m.clone(), m.clone(), m.clone()];
        let v2 = exact_cdf_copula_integral(&DependenceSpec::Independent, &two, 2.0).unwrap();
        assert!(
            (v2 - IID_D2_CDF_AT_2).abs() < 2e-6,
            "independent d=2 at z=2: {v2} vs {IID_D2_CDF_AT_2}"
        );
        let v3 = exact_cdf_copula_integral(&DependenceSpec::Independent, &three, 3.0).unwrap();
        assert!(
            (v3 - IID_D3_CDF_AT_3).abs() < 5e-6,
            "independent d=3 at z=3: {v3} vs {IID_D3_CDF_AT_3}"
        );
    }

    #[test]
    fn copula_integral_matches_frozen_dependent_anchors() {
        let m = ray();
        let two = vec![m.clone(), m.clone()];
        let fgm = DependenceSpec::Markov {
            copula: BivariateCopula::fgm(1.0).unwrap(),
        };
        let v = exact_cdf_copula_integral(&fgm, &two, 2.0).unwrap();
        assert!(
            (v - FGM1_D2_CDF_AT_2).abs() < 2e-6,
            "fgm(1) d=2 at z=2: {v} vs {FGM1_D2_CDF_AT_2}"
        );
        let gauss = DependenceSpec::Markov {
            copula: BivariateCopula::gaussian(0.5).unwrap(),
        };
        let v = exact_cdf_copula_integral(&gauss, &two, 2.0).unwrap();
        assert!(
            (v - GAUSS05_D2_CDF_AT_2).abs() < 5e-6,
            "gaussian(0.5) d=2 at z=2: {v} vs {GAUSS05_D2_CDF_AT_2}"
        );
        let clay = DependenceSpec::Markov {
            copula: BivariateCopula::clayton(2.0).unwrap(),
        };
        let three = vec![m.clone(), m.clone(), m];
        let v = exact_cdf_copula_integral(&clay, &three, 3.0).unwrap();
        assert!(
            (v - CLAYTON2_D3_CDF_AT_3).abs() < 1e-4,
            "clayton(2) chain d=3 at z=3: {v} vs {CLAYTON2_D3_CDF_AT_3}"
        );
    }

    #[test]
    fn copula_integral_is_monotone_and_saturates() {
        let m = ray();
        let two = vec![m.clone(), m];
        let spec = DependenceSpec::Markov {
            copula: BivariateCopula::clayton(1.0).unwrap(),
        };
        let mut prev = -1.0;
        for k in 0..50 {
            let z = 0.2 * k as f64;
            let v = exact_cdf_copula_integral(&spec, &two, z).unwrap();
            assert!(v >= prev - 1e-9, "CDF dips at z = {z}: {v} < {prev}");
            prev = v;
        }
        let far = exact_cdf_copula_integral(&spec, &two, 40.0).unwrap();
        assert!(far > 1.0 - 1e-9, "still {far} at z = 40");
    }

    #[test]
    fn copula_integral_rejects_unsupported_inputs() {
        let m = ray();
        let four = vec![m.clone(), m.clone(), m.clone(), m.clone()];
        assert!(matches!(
            exact_cdf_copula_integral(&DependenceSpec::Independent, &four, 2.0),
            Err(Error::Capability(_))
        ));
        let two = vec![m.clone(), m];
        assert!(matches!(
            exact_cdf_copula_integral(&DependenceSpec::Comonotonic, &two, 2.0),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn convolution_reproduces_the_marginal_at_tau_one() {
        let m = ray();
        let curve = cdf_iid_convolution(&m, 1, 4096).unwrap();
        for &x in &[0.3, 0.7, 1.0, 1.8, 3.0] {
            let v = curve.eval(x);
            assert!(
                (v - m.cdf(x)).abs() < 1e-5,
                "tau=1 convolution at {x}: {v} vs {}",
                m.cdf(x)
            );
        }
    }

    #[test]
    fn convolution_matches_copula_integral_for_two_slots() {
        let m = ray();
        let curve = cdf_iid_convolution(&m, 2, 4096).unwrap();
        let two = vec![m.clone(), m];
        for &x in &[0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
            let a = curve.eval(x);
            let b = exact_cdf_copula_integral(&DependenceSpec::Independent, &two, x).unwrap();
            assert!((a - b).abs() < 1e-3, "two-slot CDF at {x}: fft {a} vs integral {b}");
        }
    }

    #[test]
    fn convolution_mean_is_tau_times_marginal_mean() {
        let m = ray();
        let tau = 8;
        let curve = cdf_iid_convolution(&m, tau, 2048).unwrap();
        // E[S] = int (1 - F) over the grid; the curve starts at ~0 mass.
        let mut mean = 0.0;
        for i in 1..curve.xs.len() {
            let w = curve.xs[i] - curve.xs[i - 1];
            mean += w * (1.0 - 0.5 * (curve.ps[i] + curve.ps[i - 1]));
        }
        mean += curve.xs[0]; // below the first lattice point survival is ~1
        let want = tau as f64 * m.mean().unwrap();
        assert!((mean - want).abs() < 1e-3, "convolution mean {mean} vs {want}");
    }

    #[test]
    fn clt_matches_convolution_at_long_horizons() {
        let m = ray();
        let tau = 64;
        let conv = cdf_iid_convolution(&m, tau, 2048).unwrap();
        let mut worst = 0.0f64;
        for k in 0..200 {
            let x = tau as f64 * (0.3 + 1.2 * k as f64 / 199.0);
            let diff = (cdf_iid_clt(&m, tau, x).unwrap() - conv.eval(x)).abs();
            worst = worst.max(diff);
        }
        assert!(worst < 0.03, "CLT vs convolution sup-gap {worst}");
        assert!((cdf_iid_clt(&m, 4, 4.0 * m.mean().unwrap()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn chernoff_matches_frozen_anchor_and_clamps_below_mean() {
        let m = ray();
        let b = tail_iid_chernoff(&m, 8, 10.0).unwrap();
        assert!(
            (b - CHERNOFF_T8_X10).abs() < 1e-6,
            "chernoff tau=8 x=10: {b} vs {CHERNOFF_T8_X10}"
        );
        let th = chernoff_exponent(&m, 8, 10.0).unwrap();
        assert!(
            (th - CHERNOFF_T8_X10_THETA).abs() < 1e-4,
            "chernoff exponent: {th} vs {CHERNOFF_T8_X10_THETA}"
        );
        assert_eq!(tail_iid_chernoff(&m, 8, 5.0).unwrap(), 1.0, "below the mean");
        let mut prev = 1.0;
        for k in 0..30 {
            let x = 7.0 + 0.4 * k as f64;
            let v = tail_iid_chernoff(&m, 8, x).unwrap();
            assert!(v <= prev + 1e-12, "chernoff bound rises at x = {x}");
            prev = v;
        }
    }

    #[test]
    fn standard_bounds_cover_the_equal_split_and_order() {
        let m = ray();
        let two = vec![m.clone(), m.clone()];
        let sb = standard_bounds(&two, 2.0).unwrap();
        let eq_lower = 2.0 * m.cdf(1.0) - 1.0;
        assert!(
            sb.lower >= eq_lower - 1e-9,
            "optimized lower {} below equal-split value {eq_lower}",
            sb.lower
        );
        assert!(sb.upper <= 1.0 + 1e-12);
        // Concave CDF: the infimum sits at a vertex of the simplex.
        assert!(
            (sb.upper - m.cdf(2.0)).abs() < 1e-6,
            "upper {} should reach the vertex value {}",
            sb.upper,
            m.cdf(2.0)
        );
        for k in 1..50 {
            let s = 0.2 * k as f64;
            let b = standard_bounds(&two, s).unwrap();
            assert!(b.lower <= b.upper + 1e-9, "bounds crossed at s = {s}");
        }
        let one = vec![m.clone()];
        let b1 = standard_bounds(&one, 1.3).unwrap();
        assert_eq!(b1.lower, b1.upper);
        assert_eq!(b1.lower, m.cdf(1.3));
    }

    #[test]
    fn equal_split_closed_form_matches_statement() {
        let m = ray();
        let (lo, hi) = standard_bounds_equal_split(&m, 2, 2.0).unwrap();
        let want_lo = 1.0 - 2.0 * (-1.0f64).exp();
        assert!((lo - want_lo).abs() < 1e-12, "equal-split lower {lo} vs {want_lo}");
        assert_eq!(hi, 1.0, "2 F(1) > 1 clamps");
        let (lo0, hi0) = standard_bounds_equal_split(&m, 4, 0.0).unwrap();
        assert_eq!((lo0, hi0), (0.0, 0.0));
    }

    #[test]
    fn dual_upper_matches_frozen_anchors() {
        let m = ray();
        // At n=2, s=2 the infimum is the equal-split limit 2 Fbar(1) itself.
        let d22 = dual_upper_bound_homogeneous(&m, 2, 2.0).unwrap();
        assert!(
            (d22 - 2.0 * (-1.0f64).exp()).abs() < 1e-8,
            "D(2) for n=2: {d22}"
        );
        let d33 = dual_upper_bound_homogeneous(&m, 3, 3.0).unwrap();
        assert!((d33 - DUAL_D_N3_S3).abs() < 1e-6, "D(3) n=3: {d33} vs {DUAL_D_N3_S3}");
        let d36 = dual_upper_bound_homogeneous(&m, 3, 6.0).unwrap();
        assert!((d36 - DUAL_D_N3_S6).abs() < 1e-6, "D(6) n=3: {d36} vs {DUAL_D_N3_S6}");
        let tiny = dual_upper_bound_homogeneous(&m, 3, 1e-9).unwrap();
        assert_eq!(tiny, 1.0, "s -> 0 clamps to 1");
    }

    #[test]
    fn dual_lower_matches_frozen_anchors() {
        let m = ray();
        for (s, want) in [
            (1.0, DUAL_LOW_N3_S1),
            (1.5, DUAL_LOW_N3_S15),
            (2.0, DUAL_LOW_N3_S2),
        ] {
            let v = dual_lower_bound_homogeneous(&m, 3, s).unwrap();
            assert!((v - want).abs() < 1e-6, "d({s}) n=3: {v} vs {want}");
        }
        // Far beyond n*mu the supremum degenerates to the clamp.
        let v = dual_lower_bound_homogeneous(&m, 3, 6.0).unwrap();
        assert_eq!(v, 0.0, "d(6) n=3");
        // In the far-field regime the objective depends on u and s/n only,
        // so matching s/n across n gives matching bounds.
        let v5 = dual_lower_bound_homogeneous(&m, 5, 2.5).unwrap();
        assert!(
            (v5 - DUAL_LOW_N3_S15).abs() < 1e-6,
            "d depends on s/n in the far region: {v5} vs {DUAL_LOW_N3_S15}"
        );
    }

    #[test]
    fn duals_dominate_their_equal_split_limits() {
        let m = ray();
        for n in [3usize, 5, 8] {
            for k in 1..=20 {
                let s = 0.35 * n as f64 * k as f64 / 10.0;
                let du = dual_upper_bound_homogeneous(&m, n, s).unwrap();
                let dl = dual_lower_bound_homogeneous(&m, n, s).unwrap();
                let (eq_lo, eq_hi) = standard_bounds_equal_split(&m, n, s).unwrap();
                assert!(
                    1.0 - du >= eq_lo - 1e-9,
                    "CDF lower via dual loses to standard at n={n}, s={s}"
                );
                assert!(
                    dl >= (1.0 - eq_hi) - 1e-9,
                    "tail lower via dual loses to standard at n={n}, s={s}"
                );
                assert!(dl <= du + 1e-9, "duals crossed at n={n}, s={s}");
            }
        }
    }

    #[test]
    fn heterogeneous_dual_agrees_with_homogeneous_and_anchor() {
        let m = ray();
        let same = vec![m.clone(), m.clone(), m.clone()];
        let (het_d, het_l) = dual_bounds_heterogeneous(&same, 3.0).unwrap();
        let hom_d = dual_upper_bound_homogeneous(&m, 3, 3.0).unwrap();
        let hom_l = dual_lower_bound_homogeneous(&m, 3, 3.0).unwrap();
        assert!((het_d - hom_d).abs() < 1e-4, "het {het_d} vs hom {hom_d}");
        assert!((het_l - hom_l).abs() < 1e-4, "het {het_l} vs hom {hom_l}");

        let mixed = vec![
            Marginal::rayleigh(0.8).unwrap(),
            Marginal::rayleigh(1.0).unwrap(),
            Marginal::rayleigh(1.3).unwrap(),
        ];
        let (d, _) = dual_bounds_heterogeneous(&mixed, 3.0).unwrap();
        assert!(
            (d - HET_DUAL_D_S3).abs() < 5e-3,
            "heterogeneous D at s=3: {d} vs {HET_DUAL_D_S3}"
        );

        let five = vec![m.clone(), m.clone(), m.clone(), m.clone(), m];
        assert!(matches!(
            dual_bounds_heterogeneous(&five, 3.0),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn sharpness_report_states_the_first_order_identity() {
        let m = ray();
        let rep = sharpness_check(&m, 3, 4.0).unwrap();
        assert!(rep.a > 0.0 && rep.a < 4.0 / 3.0, "minimizer location {}", rep.a);
        assert!((rep.b - (4.0 - 2.0 * rep.a)).abs() < 1e-12);
        assert!(
            rep.first_order_residual < 1e-6,
            "first-order residual {} at a = {}",
            rep.first_order_residual,
            rep.a
        );
        assert_eq!(rep.mixability, "not checked");
        assert!(rep.a_star <= rep.a + 1e-9, "a* should not exceed a");
        // Density is decreasing past r = 1; with a* in that region the
        // ordering spot-check is expected to pass.
        if rep.a_star >= 1.0 {
            assert!(rep.ordering_ok, "ordering condition failed with a* = {}", rep.a_star);
        }
        assert_eq!(rep.verdict, SharpnessVerdict::ConditionsHold);
    }

    #[test]
    fn bound_pair_rejects_crossed_curves() {
        let xs = vec![0.0, 1.0, 2.0];
        let lo = CdfCurve::new(xs.clone(), vec![0.0, 0.6, 0.9]).unwrap();
        let hi = CdfCurve::new(xs.clone(), vec![0.1, 0.5, 1.0]).unwrap();
        assert!(BoundPair::new(lo, hi, BoundMethod::Standard, 2).is_err());
    }

    #[test]
    fn dual_improved_pair_tightens_the_standard_pair() {
        let m = ray();
        let xs: Vec<f64> = (1..=60).map(|k| 0.15 * k as f64).collect();
        let std_pair = standard_pair(&m, 3, &xs).unwrap();
        let dual_pair = dual_improved_pair(&m, 3, &xs).unwrap();
        let mut strictly_better = 0;
        for i in 0..xs.len() {
            assert!(
                dual_pair.lower.ps[i] >= std_pair.lower.ps[i] - 1e-9,
                "dual lower loses at x = {}",
                xs[i]
            );
            assert!(
                dual_pair.upper.ps[i] <= std_pair.upper.ps[i] + 1e-9,
                "dual upper loses at x = {}",
                xs[i]
            );
            if dual_pair.lower.ps[i] > std_pair.lower.ps[i] + 1e-6
                || dual_pair.upper.ps[i] < std_pair.upper.ps[i] - 1e-6
            {
                strictly_better += 1;
            }
        }
        assert!(
            strictly_better > 10,
            "dual pair should strictly improve somewhere, got {strictly_better} points"
        );
        assert!(dual_improved_pair(&m, 1, &xs).is_err(), "tau = 1 has no dual");
    }

    proptest! {
        #[test]
        fn comonotonic_cdf_monotone_in_x(a in 0.0f64..6.0, b in 0.0f64..6.0) {
            let m = ray();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let fa = exact_cdf_comonotonic(&m, 4, lo).unwrap();
            let fb = exact_cdf_comonotonic(&m, 4, hi).unwrap();
            prop_assert!(fa <= fb + 1e-12);
        }

        #[test]
        fn equal_split_bounds_sandwich_everywhere(s in 0.01f64..20.0, tau in 1usize..12) {
            let m = ray();
            let (lo, hi) = standard_bounds_equal_split(&m, tau, s).unwrap();
            prop_assert!((0.0..=1.0).contains(&lo));
            prop_assert!((0.0..=1.0).contains(&hi));
            prop_assert!(lo <= hi + 1e-12);
        }

        #[test]
        fn dual_bounds_stay_in_unit_interval(s in 0.05f64..15.0, n in 2usize..9) {
            let m = ray();
            let du = dual_upper_bound_homogeneous(&m, n, s).unwrap();
            let dl = dual_lower_bound_homogeneous(&m, n, s).unwrap();
            prop_assert!((0.0..=1.0).contains(&du), "D = {}", du);
            prop_assert!((0.0..=1.0).contains(&dl), "d = {}", dl);
            prop_assert!(dl <= du + 1e-9);
        }
    }
}
