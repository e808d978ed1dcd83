//! Transform-domain views of cumulative capacity: Laplace-side MGFs, the
//! Mellin transform of the SNR-domain process, effective capacity, and
//! stochastic strict service curves.
//!
//! The Laplace-side MGF of the cumulative capacity S(s,t) is
//! `Mbar_S(theta) = E[e^{-theta S}]`. Independent slots factorize it,
//!
//! ```text
//! Mbar_S(theta) = ( Mbar_C(theta) )^tau,        tau = t - s,
//! ```
//!
//! while under unknown dependence the equal-split Frechet envelopes of the
//! CDF transfer to the transform domain by monotone integration:
//!
//! ```text
//! Mbar^dl(theta)  <=  Mbar^d(theta)  <=  Mbar^du(theta),
//! ```
//!
//! with the lower MGF read from the lower CDF curve and the upper from the
//! upper. Three derived quantities reuse that sandwich:
//!
//! ```text
//! effective capacity   r(theta) = -log Mbar_S(theta) / (theta tau)
//! Mellin transform     M_S(v)   = E[ S_snr^{v-1} ],  S_snr = 2^S
//! service curve        beta(tau) = -log Mbar_S(theta) / theta
//! ```
//!
//! The Mellin and Laplace views are the same object in different units:
//! `E[2^{(v-1) S}] = E[e^{-theta S}]` at `theta = (1 - v) ln 2`, which is
//! how the dependence bounds carry over verbatim. For the Rayleigh marginal
//! everything has closed or one-integral forms, including the points where
//! the equal-split envelopes saturate:
//!
//! ```text
//! Omega_l = tau log2(1 - gamma ln(1/tau))        lower bound leaves 0
//! Omega_u = tau log2(1 - gamma ln(1 - 1/tau))    upper bound reaches 1
//! ```

use crate::cumulative::{self, BoundPair, CdfCurve};
use crate::error::{Error, Result};
use crate::marginals::Marginal;
use crate::numeric;

/// Quadrature tolerance for the one-dimensional transform integrals.
const QUAD_TOL: f64 = 1e-12;
/// Knots per active region when sampling equal-split bound curves.
const PAIR_POINTS_PER_SIDE: usize = 2500;
/// Horizon cap for the dependence-mode effective capacity trend.
pub const DEFAULT_TAU_LIMIT: usize = 256;

// ---------------------------------------------------------------------------
// Laplace-side MGFs
// ---------------------------------------------------------------------------

/// E[e^{-theta C}] for one slot, by survival-form quadrature.
///
/// Uses the parts identity `E[e^{-theta X}] = theta int e^{-theta r} F(r) dr`
/// which needs no density and is exact for tabulated atoms.
fn mgf_single_laplace(m: &Marginal, theta: f64) -> Result<f64> {
    if theta < 0.0 {
        return Err(Error::Domain(format!(
            "Laplace-side MGF needs theta >= 0, got {theta}"
        )));
    }
    if theta == 0.0 {
        return Ok(1.0);
    }
    let (lo, top) = match m {
        Marginal::Tabulated { xs, .. } => (xs[0].min(0.0), *xs.last().unwrap()),
        _ => (0.0, m.quantile(1.0 - 1e-15)?),
    };
    let body = numeric::integrate(|r| (-theta * r).exp() * m.cdf(r), lo, top, QUAD_TOL);
    // Beyond `top` write F = 1 - Fbar so the remainder is a closed form
    // minus a vanishing survival integral.
    let tail_bar =
        numeric::integrate_to_inf(|r| (-theta * r).exp() * m.survival(r), top, QUAD_TOL);
    Ok((theta * body + (-theta * top).exp() - theta * tail_bar).min(1.0))
}

/// MGF of the i.i.d. cumulative capacity, `(Mbar_C(theta))^tau`.
pub fn mgf_iid(m: &Marginal, tau: usize, theta: f64) -> Result<f64> {
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be >= 1".into()));
    }
    Ok(mgf_single_laplace(m, theta)?.powi(tau as i32))
}

/// Log of `int e^{-theta x} dF` for the measure a bound curve carries: an
/// atom where the curve leaves zero, linear density between knots, and any
/// mass the curve never accrues sitting beyond every knot (contributing
/// nothing). Shifting by the leftmost knot keeps the arithmetic alive even
/// when `theta * x` reaches hundreds, which it does for long horizons.
fn log_laplace_stieltjes(curve: &CdfCurve, theta: f64) -> f64 {
    let xs = curve.xs();
    let ps = curve.ps();
    let total = *ps.last().unwrap();
    if total <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if theta == 0.0 {
        return total.ln();
    }
    let x0 = xs[0];
    let mut acc = ps[0];
    for i in 0..xs.len() - 1 {
        let dp = ps[i + 1] - ps[i];
        if dp <= 0.0 {
            continue;
        }
        let a = xs[i] - x0;
        let w = theta * (xs[i + 1] - xs[i]);
        // Mean of e^{-theta u} over the piece, relative to its left end;
        // the expm1 form survives w -> 0 without cancellation.
        let frac = if w < 1e-12 { 1.0 } else { -(-w).exp_m1() / w };
        acc += dp * (-theta * a).exp() * frac;
    }
    -theta * x0 + acc.ln()
}

/// Transform-domain envelopes `(Mbar^dl, Mbar^du)` read from a CDF bound
/// pair by Stieltjes integration of e^{-theta x}.
///
/// The integrand decreases in x, so the lower CDF curve (stochastically
/// larger measure) yields the lower MGF and the upper curve the upper one.
/// At theta = 0 both sides report the curve's total mass, which is 1
/// exactly when the curve reaches 1. Underflow returns 0; use
/// [`log_mgf_bounds_dependent`] for long horizons.
pub fn mgf_bounds_dependent(bounds: &BoundPair, theta: f64) -> Result<(f64, f64)> {
    let (ll, lu) = log_mgf_bounds_dependent(bounds, theta)?;
    Ok((ll.exp(), lu.exp()))
}

/// Log-space version of [`mgf_bounds_dependent`].
pub fn log_mgf_bounds_dependent(bounds: &BoundPair, theta: f64) -> Result<(f64, f64)> {
    if theta < 0.0 {
        return Err(Error::Domain(format!(
            "Laplace-side MGF needs theta >= 0, got {theta}"
        )));
    }
    Ok((
        log_laplace_stieltjes(&bounds.lower, theta),
        log_laplace_stieltjes(&bounds.upper, theta),
    ))
}

// ---------------------------------------------------------------------------
// Equal-split bound curves for the transform routes
// ---------------------------------------------------------------------------

/// Sample the equal-split standard bounds on a grid adapted to where each
/// curve actually moves: the upper curve rises on marginal quantile levels
/// below 1/tau, the lower on levels above 1 - 1/tau, and both are flat in
/// between, so knots are spent only on the two active regions.
pub fn equal_split_pair(m: &Marginal, tau: usize, per_side: usize) -> Result<BoundPair> {
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be >= 1".into()));
    }
    if per_side < 16 {
        return Err(Error::Domain(format!(
            "equal-split sampling needs at least 16 knots per side, got {per_side}"
        )));
    }
    let t = tau as f64;
    let n = per_side as f64;
    // Squared ladders: rung j sits at level (j/n)^2, so the deepest rung
    // reaches within 1/n^2 of the end of each active region and the mass
    // the grid never accrues is too small to register in any transform.
    let rung = |j: usize| (j as f64 / n).powi(2);
    let mut xs = Vec::with_capacity(2 * per_side);
    if tau == 1 {
        // Degenerate pair: both curves are the marginal CDF itself,
        // sampled densely toward both tails.
        for j in 1..=per_side {
            xs.push(m.quantile(rung(j) / 2.0)?);
        }
        for j in (1..=per_side).rev() {
            xs.push(m.quantile(1.0 - rung(j) / 2.0)?);
        }
    } else {
        // Upper-active: tau F(x/tau) = q, ending exactly at Omega_u where
        // the upper bound reaches 1.
        for j in 1..=per_side {
            xs.push(t * m.quantile(rung(j) / t)?);
        }
        // Lower-active: tau Fbar(x/tau) = q descending from 1 at Omega_l.
        for j in (1..=per_side).rev() {
            xs.push(t * m.quantile(1.0 - rung(j) / t)?);
        }
    }
    let mut grid = Vec::with_capacity(xs.len());
    for x in xs {
        if grid.last().is_none_or(|&l| x > l + 1e-12) {
            grid.push(x);
        }
    }
    cumulative::standard_pair(m, tau, &grid)
}

// ---------------------------------------------------------------------------
// Effective capacity
// ---------------------------------------------------------------------------

/// Which transform route feeds the effective-capacity formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectiveCapacityMode {
    /// Closed-form i.i.d. rate, `-(1/theta) log Mbar_C(theta)`.
    Iid,
    /// Lower rate from the upper MGF envelope (upper CDF curve).
    DependenceLower,
    /// Upper rate from the lower MGF envelope (lower CDF curve).
    DependenceUpper,
}

/// Effective capacity with the horizon trail that produced it: the
/// dependence modes approach a limit monotonically in tau, so the last two
/// horizon values and their gap make the convergence auditable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCapacityReport {
    /// Rate at the largest horizon evaluated.
    pub rate: f64,
    /// Rate at the previous horizon, when more than one was evaluated.
    pub previous: Option<f64>,
    /// `previous - rate`, signed, when available.
    pub gap: Option<f64>,
    /// Largest horizon evaluated (1 for the i.i.d. closed form).
    pub horizon: usize,
}

/// Long-run rate the channel sustains under a QoS exponent theta,
/// `-(1/(theta tau)) log Mbar_S(theta)` in the tau -> infinity sense.
///
/// The i.i.d. mode is the exact closed form at every horizon. The
/// dependence modes evaluate the equal-split MGF envelopes on doubling
/// horizons up to `tau_limit`; the upper CDF curve gives the smaller MGF
/// exponent and therefore the lower rate, and vice versa, so the two modes
/// bracket every dependence structure with the given marginal.
pub fn effective_capacity(
    m: &Marginal,
    theta: f64,
    mode: EffectiveCapacityMode,
    tau_limit: usize,
) -> Result<EffectiveCapacityReport> {
    if theta <= 0.0 {
        return Err(Error::Domain(format!(
            "effective capacity needs theta > 0, got {theta}"
        )));
    }
    if let EffectiveCapacityMode::Iid = mode {
        let rate = -mgf_single_laplace(m, theta)?.ln() / theta;
        return Ok(EffectiveCapacityReport {
            rate,
            previous: None,
            gap: None,
            horizon: 1,
        });
    }
    if tau_limit == 0 {
        return Err(Error::Domain("tau_limit must be >= 1".into()));
    }
    let mut taus = vec![];
    let mut tau = 1usize;
    while tau < tau_limit {
        taus.push(tau);
        tau = (tau * 2).min(tau_limit);
    }
    taus.push(tau_limit);
    let mut rates = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let pair = equal_split_pair(m, tau, PAIR_POINTS_PER_SIDE)?;
        let (ll, lu) = log_mgf_bounds_dependent(&pair, theta)?;
        let log_mgf = match mode {
            EffectiveCapacityMode::DependenceLower => lu,
            EffectiveCapacityMode::DependenceUpper => ll,
            EffectiveCapacityMode::Iid => unreachable!("handled above"),
        };
        rates.push(-log_mgf / (theta * tau as f64));
    }
    let rate = *rates.last().unwrap();
    let previous = rates.len().checked_sub(2).map(|i| rates[i]);
    Ok(EffectiveCapacityReport {
        rate,
        previous,
        gap: previous.map(|p| p - rate),
        horizon: *taus.last().unwrap(),
    })
}

// ---------------------------------------------------------------------------
// Mellin transforms of the SNR-domain process
// ---------------------------------------------------------------------------

/// Mellin transform E[(2^S)^{v-1}] of the i.i.d. SNR-domain cumulative
/// capacity for a Rayleigh slot, via the one-integral closed form
///
/// ```text
/// M(v) = ( e^{1/gamma} gamma^{v-1} int_{1/gamma}^inf r^{v-1} e^{-r} dr )^tau.
/// ```
///
/// The integral is evaluated in the shifted variable r = 1/gamma + s so the
/// e^{1/gamma} prefactor cancels analytically and no range of gamma
/// overflows.
pub fn mellin_iid_rayleigh(gamma: f64, tau: usize, v: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "Rayleigh scale gamma must be positive and finite, got {gamma}"
        )));
    }
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be >= 1".into()));
    }
    let a = 1.0 / gamma;
    let shifted =
        numeric::integrate_to_inf(|s| (a + s).powf(v - 1.0) * (-s).exp(), 0.0, QUAD_TOL);
    let single = gamma.powf(v - 1.0) * shifted;
    Ok(single.powi(tau as i32))
}

/// Dependence envelopes `(lower, upper)` for the Mellin transform of the
/// SNR-domain cumulative capacity under a Rayleigh marginal.
///
/// Valid only for v < 1, where s -> s^{v-1} decreases and the CDF envelopes
/// transfer monotonically; the computation is the Laplace sandwich at
/// `theta = (1 - v) ln 2` because `E[(2^S)^{v-1}] = E[e^{-theta S}]`.
pub fn mellin_bounds_dependent(gamma: f64, tau: usize, v: f64) -> Result<(f64, f64)> {
    if v >= 1.0 {
        return Err(Error::Domain(format!(
            "Mellin envelopes need v < 1 (decreasing kernel), got {v}"
        )));
    }
    let theta = (1.0 - v) * std::f64::consts::LN_2;
    let m = Marginal::rayleigh(gamma)?;
    let pair = equal_split_pair(&m, tau, PAIR_POINTS_PER_SIDE)?;
    mgf_bounds_dependent(&pair, theta)
}

/// The saturation abscissae of the equal-split envelopes for a Rayleigh
/// marginal: `(Omega_l, Omega_u)` where the lower bound leaves 0 and the
/// upper bound reaches 1. Defined for real tau > 1 (at tau = 1 the upper
/// saturation point runs to -infinity).
pub fn omega_points(gamma: f64, tau: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "Rayleigh scale gamma must be positive and finite, got {gamma}"
        )));
    }
    if !(tau > 1.0) {
        return Err(Error::Domain(format!(
            "omega points need tau > 1 (the upper saturation point is \
             undefined at tau = 1), got {tau}"
        )));
    }
    let omega_l = tau * (1.0 + gamma * tau.ln()).log2();
    let omega_u = tau * (1.0 - gamma * (-1.0 / tau).ln_1p()).log2();
    Ok((omega_l, omega_u))
}

// ---------------------------------------------------------------------------
// Stochastic strict service curves
// ---------------------------------------------------------------------------

/// How a service curve states its violation guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationBound {
    /// P(S(tau) < beta(tau) - x) <= e^{-theta x} for every slack x >= 0.
    ExponentialTail { theta: f64 },
    /// P(S(tau) < beta(tau)) <= epsilon at each tabulated tau.
    FixedProbability { epsilon: f64 },
}

/// A guaranteed-service lower envelope: beta(tau) bits over any window of
/// tau slots, violated with probability controlled by `bound`. The curve
/// implicitly anchors at beta(0) = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceCurve {
    pub taus: Vec<usize>,
    pub beta: Vec<f64>,
    pub bound: ViolationBound,
}

impl ServiceCurve {
    /// Validates that the tabulation is a genuine service curve: windows
    /// strictly increasing from at least 1, guarantees nondecreasing.
    pub fn new(taus: Vec<usize>, beta: Vec<f64>, bound: ViolationBound) -> Result<Self> {
        if taus.is_empty() || taus.len() != beta.len() {
            return Err(Error::Domain(format!(
                "service curve needs matching nonempty tabulations, got {} windows and {} values",
                taus.len(),
                beta.len()
            )));
        }
        if taus[0] == 0 {
            return Err(Error::Domain(
                "service curve windows start at tau >= 1 (beta(0) = 0 is implicit)".into(),
            ));
        }
        for w in taus.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Domain(format!(
                    "service curve windows must increase, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for w in beta.windows(2) {
            if w[1] < w[0] - 1e-9 {
                return Err(Error::Domain(format!(
                    "guaranteed service must be nondecreasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(ServiceCurve { taus, beta, bound })
    }
}

/// The i.i.d. stochastic strict service curve: the linear envelope
/// `beta(tau) = tau (-1/theta) log Mbar_C(theta)` with bounding function
/// e^{-theta x}, tabulated for windows 1..=horizon.
///
/// The slope is exactly the i.i.d. effective capacity, and the Chernoff
/// argument gives `P(S(tau) < beta(tau) - x) <= e^{-theta x}` per window.
pub fn sssc_iid(m: &Marginal, theta: f64, horizon: usize) -> Result<ServiceCurve> {
    if theta <= 0.0 {
        return Err(Error::Domain(format!(
            "service curve exponent must be positive, got {theta}"
        )));
    }
    if horizon == 0 {
        return Err(Error::Domain("horizon must be >= 1".into()));
    }
    let slope = -mgf_single_laplace(m, theta)?.ln() / theta;
    let taus: Vec<usize> = (1..=horizon).collect();
    let beta = taus.iter().map(|&t| slope * t as f64).collect();
    ServiceCurve::new(taus, beta, ViolationBound::ExponentialTail { theta })
}

/// Epsilon-form service guarantees for a Rayleigh marginal under unknown
/// dependence, from inverting the equal-split envelopes at level epsilon:
///
/// ```text
/// beta_l(tau) = tau log2(1 - gamma ln(1 - epsilon/tau))
/// beta_u(tau) = tau log2(1 - gamma ln((1 - epsilon)/tau))
/// ```
///
/// beta_l inverts the upper CDF bound (guaranteed under any dependence)
/// and beta_u the lower one (no dependence can guarantee more).
pub fn sssc_rayleigh_dependent(gamma: f64, tau: usize, epsilon: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "Rayleigh scale gamma must be positive and finite, got {gamma}"
        )));
    }
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be >= 1".into()));
    }
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "violation probability must lie in (0, 1), got {epsilon}"
        )));
    }
    let t = tau as f64;
    let beta_l = t * (1.0 - gamma * (-epsilon / t).ln_1p()).log2();
    let beta_u = t * (1.0 - gamma * ((1.0 - epsilon) / t).ln()).log2();
    Ok((beta_l, beta_u))
}

/// MGF-form service envelopes `(beta_dl, beta_du)` at the pair's horizon,
/// from plugging the transform sandwich into
/// `beta = -(1/theta) log Mbar_S(theta)`.
///
/// The upper MGF gives the smaller guarantee, so beta_dl comes from the
/// upper CDF curve and beta_du from the lower.
pub fn sssc_dependent_mgf(bounds: &BoundPair, theta: f64) -> Result<(f64, f64)> {
    if theta <= 0.0 {
        return Err(Error::Domain(format!(
            "service curve exponent must be positive, got {theta}"
        )));
    }
    let (ll, lu) = log_mgf_bounds_dependent(bounds, theta)?;
    Ok((-lu / theta, -ll / theta))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
