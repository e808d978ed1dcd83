//! Seeded Monte Carlo engine for cumulative capacity and its extremes.
//!
//! A scenario bundles a marginal law, a dependence structure, a horizon, and
//! an optional reference rate. Running it draws capacity paths, reduces each
//! path to its window statistics in one sweep, and aggregates every statistic
//! into an empirical distribution on a quantile-spaced grid:
//!
//! ```text
//! statistic    path functional                      reference rate applied?
//! ---------    ----------------------------------   ----------------------
//! s_total      S(1,t), the full cumulative sum      never (always raw)
//! fwd_max/min  extremes of prefix sums S(1,k)       yes, when present
//! bwd_max/min  extremes of suffix sums S(j,t)       yes, when present
//! gen_max/min  extremes of window sums S(j,k)       yes, when present
//! range_gen    gen_max - gen_min                    yes, when present
//! range_fwd    fwd_max - fwd_min                    yes, when present
//! ```
//!
//! With a reference rate c the eight extremal statistics describe the net
//! process with increments C(i) - c, which is the object whose supremum the
//! light-tail decay machinery bounds; `s_total` always reports the raw sum so
//! that the same run feeds both tail estimates and cdf bound checks.
//!
//! Sampling is deterministic for a fixed (seed, n_samples): paths are
//! partitioned into fixed-size batches, batch b draws from an independent
//! ChaCha stream derived as (seed, stream b), and aggregation concatenates
//! batches by index, so thread scheduling cannot reorder anything observable.
//!
//! Bound verification compares the empirical cdf of the raw sum against a
//! bound pair pointwise with binomial slack,
//!
//! ```text
//! lower(x) - k sigma(x) <= p_hat(x) <= upper(x) + k sigma(x),
//! sigma(x) = sqrt(p_hat (1 - p_hat) / n),
//! ```
//!
//! evaluating the lower curve by its left knot and the upper curve by its
//! right knot so discretization of the bound grid can only loosen the check,
//! never fabricate a violation.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::copulas::DependenceSpec;
use crate::cumulative::{BoundPair, CdfCurve};
use crate::error::{Error, Result};
use crate::extremes::{path_extremes, PathExtremes};
use crate::marginals::Marginal;

/// Number of grid points an empirical distribution is reported on.
pub const SIM_GRID_POINTS: usize = 200;

/// Paths per RNG stream. Fixed so that (seed, n_samples) pins every draw.
const BATCH: usize = 4096;

/// Names of the reported statistics, in report order.
pub const STATISTICS: [&str; 9] = [
    "s_total",
    "fwd_max",
    "bwd_max",
    "gen_max",
    "fwd_min",
    "bwd_min",
    "gen_min",
    "range_gen",
    "range_fwd",
];

/// One simulation setup: marginal, dependence, horizon, optional net rate.
#[derive(Debug, Clone)]
pub struct ChannelScenario {
    pub marginal: Marginal,
    pub dependence: DependenceSpec,
    /// Number of slots t in each path.
    pub horizon: usize,
    /// Optional constant rate c subtracted per slot for the net process.
    pub reference_rate: Option<f64>,
    pub label: String,
}

impl ChannelScenario {
    pub fn new(
        marginal: Marginal,
        dependence: DependenceSpec,
        horizon: usize,
        reference_rate: Option<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Domain(
                "scenario horizon must be at least 1 slot".into(),
            ));
        }
        if let Some(c) = reference_rate {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Domain(format!(
                    "reference rate must be a positive finite number, got {c}"
                )));
            }
        }
        Ok(ChannelScenario {
            marginal,
            dependence,
            horizon,
            reference_rate,
            label: label.into(),
        })
    }
}

/// Empirical distribution of one path statistic.
#[derive(Debug, Clone)]
pub struct StatisticCdf {
    /// One of [`STATISTICS`].
    pub name: &'static str,
    /// Empirical cdf on a quantile-spaced grid; monotone by construction.
    pub curve: CdfCurve,
    /// Binomial standard error sqrt(p (1 - p) / n) per grid point.
    pub stderr: Vec<f64>,
    /// Plain arithmetic mean of the underlying sample.
    pub sample_mean: f64,
}

/// Everything one seeded run produces.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub label: String,
    pub horizon: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub reference_rate: Option<f64>,
    /// One entry per name in [`STATISTICS`], in that order.
    pub statistics: Vec<StatisticCdf>,
}

impl SimResult {
    /// Look up one statistic by name.
    pub fn statistic(&self, name: &str) -> Result<&StatisticCdf> {
        self.statistics
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "unknown statistic {name:?}; expected one of {STATISTICS:?}"
                ))
            })
    }

    /// Render every statistic as CSV rows `x,p_hat,stderr,statistic_name`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,p_hat,stderr,statistic_name\n");
        for stat in &self.statistics {
            for i in 0..stat.curve.xs().len() {
                out.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{}\n",
                    stat.curve.xs()[i],
                    stat.curve.ps()[i],
                    stat.stderr[i],
                    stat.name
                ));
            }
        }
        out
    }
}

/// Draw `n_samples` paths for `scn` and aggregate every window statistic.
///
/// Deterministic for fixed (seed, n_samples); batches run in parallel on
/// independent RNG streams and are concatenated by batch index.
pub fn run(scn: &ChannelScenario, n_samples: usize, seed: u64) -> Result<SimResult> {
    if n_samples < 1_000 {
        return Err(Error::Domain(format!(
            "need at least 1000 samples for stable empirical tails, got {n_samples}"
        )));
    }
    let t = scn.horizon;
    let c = scn.reference_rate.unwrap_or(0.0);
    let n_batches = n_samples.div_ceil(BATCH);

    let batches: Vec<Vec<[f64; 9]>> = (0..n_batches)
        .into_par_iter()
        .map(|b| -> Result<Vec<[f64; 9]>> {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BATCH.min(n_samples - b * BATCH);
            let mut rows = Vec::with_capacity(count);
            let mut net = vec![0.0; t];
            for _ in 0..count {
                let path = scn.dependence.sample_path(&scn.marginal, &mut rng, t)?;
                debug_assert!(
                    !matches!(scn.dependence, DependenceSpec::Comonotonic)
                        || path.windows(2).all(|w| w[0] == w[1]),
                    "comonotonic paths must repeat one draw across all slots"
                );
                let raw_total: f64 = path.iter().sum();
                for (ni, &pi) in net.iter_mut().zip(&path) {
                    *ni = pi - c;
                }
                let pe = path_extremes(&net)?;
                debug_assert!(
                    net.iter().any(|&x| x < 0.0) || pe.fwd_max == pe.s_total,
                    "a nondecreasing prefix walk must peak at its endpoint"
                );
                rows.push(statistic_row(raw_total, &pe));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut statistics = Vec::with_capacity(STATISTICS.len());
    for (k, &name) in STATISTICS.iter().enumerate() {
        let values: Vec<f64> = batches
            .iter()
            .flat_map(|rows| rows.iter().map(move |r| r[k]))
            .collect();
        let (curve, stderr, sample_mean) = empirical_curve(values, SIM_GRID_POINTS);
        statistics.push(StatisticCdf {
            name,
            curve,
            stderr,
            sample_mean,
        });
    }

    Ok(SimResult {
        label: scn.label.clone(),
        horizon: t,
        n_samples,
        seed,
        reference_rate: scn.reference_rate,
        statistics,
    })
}

fn statistic_row(raw_total: f64, pe: &PathExtremes) -> [f64; 9] {
    [
        raw_total,
        pe.fwd_max,
        pe.bwd_max,
        pe.gen_max,
        pe.fwd_min,
        pe.bwd_min,
        pe.gen_min,
        pe.range_gen,
        pe.range_fwd,
    ]
}

/// Reduce a sample to an empirical cdf on a quantile-spaced grid of at most
/// `points` knots, with per-knot binomial standard errors and the sample
/// mean. Ties collapse onto one knot carrying the full tied mass.
pub(crate) fn empirical_curve(
    mut values: Vec<f64>,
    points: usize,
) -> (CdfCurve, Vec<f64>, f64) {
    assert!(
        !values.is_empty() && points >= 1,
        "empirical reduction needs data and a positive grid size"
    );
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    values.sort_by(f64::total_cmp);

    let mut xs: Vec<f64> = Vec::with_capacity(points);
    let mut ps: Vec<f64> = Vec::with_capacity(points);
    for j in 0..points {
        // Knot j sits at the ceil((j+1) n / points)-th order statistic, so
        // the last knot is always the sample maximum with p_hat = 1.
        let mut idx = ((j + 1) * n).div_ceil(points) - 1;
        while idx + 1 < n && values[idx + 1] == values[idx] {
            idx += 1;
        }
        let x = values[idx];
        let p = (idx + 1) as f64 / n as f64;
        if xs.last() == Some(&x) {
            *ps.last_mut().unwrap() = p;
        } else {
            xs.push(x);
            ps.push(p);
        }
    }
    let stderr = ps
        .iter()
        .map(|&p| (p * (1.0 - p) / n as f64).sqrt())
        .collect();
    let curve = CdfCurve::new(xs, ps)
        .expect("sorted sample quantiles always form a valid cdf curve");
    (curve, stderr, mean)
}

/// One grid point where the empirical cdf escaped the bound band.
#[derive(Debug, Clone, Copy)]
pub struct BoundViolation {
    pub x: f64,
    pub p_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub stderr: f64,
}

/// Outcome of checking a simulated cdf against a bound pair.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// Grid points examined.
    pub checked: usize,
    /// Multiples of the binomial standard error granted as slack.
    pub sigmas: f64,
    pub violations: Vec<BoundViolation>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the empirical cdf of the raw cumulative sum against `bounds`
/// pointwise with `sigmas` binomial standard errors of slack.
pub fn verify_bounds(sim: &SimResult, bounds: &BoundPair, sigmas: f64) -> Result<VerifyReport> {
    if !(sigmas >= 0.0) || !sigmas.is_finite() {
        return Err(Error::Domain(format!(
            "slack must be a nonnegative finite sigma multiple, got {sigmas}"
        )));
    }
    let stat = sim.statistic("s_total")?;
    let mut violations = Vec::new();
    for i in 0..stat.curve.xs().len() {
        let x = stat.curve.xs()[i];
        let p_hat = stat.curve.ps()[i];
        let se = stat.stderr[i];
        let lower = bounds.lower.eval_as_lower(x);
        let upper = bounds.upper.eval_as_upper(x);
        if p_hat < lower - sigmas * se - 1e-12 || p_hat > upper + sigmas * se + 1e-12 {
            violations.push(BoundViolation {
                x,
                p_hat,
                lower,
                upper,
                stderr: se,
            });
        }
    }
    Ok(VerifyReport {
        checked: stat.curve.xs().len(),
        sigmas,
        violations,
    })
}

/// Sup-norm distance between two cdf curves.
///
/// Both curves are piecewise linear with clamped tails, so their difference
/// is piecewise linear on the union of the knot sets and the supremum is
/// attained at a union knot; evaluating there is exact, not a discretization.
pub fn ks_distance(a: &CdfCurve, b: &CdfCurve) -> f64 {
    let mut best = 0.0_f64;
    for &x in a.xs().iter().chain(b.xs()) {
        best = best.max((a.eval(x) - b.eval(x)).abs());
    }
    best
}
