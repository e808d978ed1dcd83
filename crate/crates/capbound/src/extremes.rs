//! Extremes of cumulative capacity: running maxima, minima, and range.
//!
//! For a capacity path C(1), ..., C(t) write S(j,k) = C(j) + ... + C(k).
//! Three families of window statistics matter:
//!
//! ```text
//! forward   Sbar^f(0,t) = max_{1<=k<=t} S(1,k)     (prefixes)
//! backward  Sbar^b(0,t) = max_{1<=j<=t} S(j,t)     (suffixes)
//! general   Sbar(0,t)   = max_{1<=j<=k<=t} S(j,k)  (all windows)
//! ```
//!
//! and the mirrored minima, plus the range R(0,t) = Sbar(0,t) - Sunder(0,t).
//! For nonnegative capacities the forward and backward maxima collapse to
//! the total sum, so the informative extremes are the minima and maxima of
//! net processes C - c.
//!
//! Analytic pieces:
//!
//! * a lower bound on P(max of forward windows <= x) built from per-window
//!   joint orthants at equal split x/k, glued by the slot copula itself
//!   (valid under hierarchical dependence of the running sums);
//! * the mirrored upper bound on P(min of forward windows <= x) through
//!   survival orthants and the survival copula;
//! * the classical light-tailed sup bound for i.i.d. net increments,
//!
//!   ```text
//!   P( sup_t sum_{i<=t} (C_i - c) >= x ) <= e^{-theta* x},
//!   ```
//!
//!   with theta* > 0 the root of the net-increment log MGF.

use crate::copulas::DependenceSpec;
use crate::cumulative;
use crate::error::{Error, Result};
use crate::marginals::Marginal;
use crate::numeric;

// ---------------------------------------------------------------------------
// Path statistics
// ---------------------------------------------------------------------------

/// All window statistics of one capacity path, computed in a single pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathExtremes {
    /// S(1,t), the full sum.
    pub s_total: f64,
    /// Largest prefix sum S(1,k).
    pub fwd_max: f64,
    /// Largest suffix sum S(j,t).
    pub bwd_max: f64,
    /// Largest window sum S(j,k) over all windows.
    pub gen_max: f64,
    /// Smallest prefix sum.
    pub fwd_min: f64,
    /// Smallest suffix sum.
    pub bwd_min: f64,
    /// Smallest window sum over all windows.
    pub gen_min: f64,
    /// gen_max - gen_min.
    pub range_gen: f64,
    /// fwd_max - fwd_min.
    pub range_fwd: f64,
}

/// Compute every window statistic of `path` in one O(t) sweep.
///
/// Prefix and suffix sums give the forward and backward families directly;
/// the general max and min are the classic best-subarray recursions (the
/// windows are required to be nonempty, so a path of all negative entries
/// still reports its least-bad window).
pub fn path_extremes(path: &[f64]) -> Result<PathExtremes> {
    if path.is_empty() {
        return Err(Error::Domain("capacity path must have length >= 1".into()));
    }
    let mut prefix = 0.0;
    let mut fwd_max = f64::NEG_INFINITY;
    let mut fwd_min = f64::INFINITY;
    // Best window ending at the current slot, for max and min separately.
    let mut end_max = 0.0_f64;
    let mut end_min = 0.0_f64;
    let mut gen_max = f64::NEG_INFINITY;
    let mut gen_min = f64::INFINITY;
    for &c in path {
        prefix += c;
        fwd_max = fwd_max.max(prefix);
        fwd_min = fwd_min.min(prefix);
        end_max = c + end_max.max(0.0);
        end_min = c + end_min.min(0.0);
        gen_max = gen_max.max(end_max);
        gen_min = gen_min.min(end_min);
    }
    let s_total = prefix;
    // Suffix sums: S(j,t) = S(1,t) - S(1,j-1), so the suffix extremes come
    // from prefix extremes over the first t-1 entries plus the empty prefix.
    let mut pre = 0.0;
    let mut pre_max = 0.0_f64;
    let mut pre_min = 0.0_f64;
    for &c in &path[..path.len() - 1] {
        pre += c;
        pre_max = pre_max.max(pre);
        pre_min = pre_min.min(pre);
    }
    let bwd_max = s_total - pre_min;
    let bwd_min = s_total - pre_max;
    Ok(PathExtremes {
        s_total,
        fwd_max,
        bwd_max,
        gen_max,
        fwd_min,
        bwd_min,
        gen_min,
        range_gen: gen_max - gen_min,
        range_fwd: fwd_max - fwd_min,
    })
}

// ---------------------------------------------------------------------------
// Copula bounds on running extremes
// ---------------------------------------------------------------------------

/// Lower bound on P(max_{1<=k<=t} S(1,k) <= x) under hierarchical
/// dependence of the running sums.
///
/// Each running sum obeys S(1,k) <= x whenever every one of its k slots
/// stays below the equal split x/k, so
///
/// ```text
/// P(max_k S(1,k) <= x) >= C( F(x), F(x/2,x/2), ..., F(x/t,..,x/t) )
/// ```
///
/// with the inner joint CDFs taken at equal thresholds and the outer glue
/// the same copula that couples the slots. Comonotonic paths make the bound
/// exact: every window is t identical draws, so the max is t C and the
/// bound collapses to F(x/t).
pub fn max_cdf_lower_bound_nongranger(
    spec: &DependenceSpec,
    m: &Marginal,
    t: usize,
    x: f64,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::Domain("horizon t must be >= 1".into()));
    }
    let mut inner = Vec::with_capacity(t);
    for k in 1..=t {
        let thresholds = vec![x / k as f64; k];
        inner.push(spec.joint_orthant_prob(m, &thresholds)?);
    }
    spec.copula_cdf(&inner)
}

/// Upper bound on P(min_{1<=k<=t} S(1,k) <= x), the survival mirror of the
/// max bound.
///
/// Every running sum exceeds x once all its slots clear the equal split, so
/// the joint survival of the running sums dominates the survival copula of
/// the per-window survival orthants:
///
/// ```text
/// P(min_k S(1,k) <= x) <= 1 - Chat( Fbar(x), Fbar(x/2,x/2), ... )
/// ```
///
/// For t = 1 both routes degenerate to F(x) exactly.
pub fn min_cdf_upper_bound_nongranger(
    spec: &DependenceSpec,
    m: &Marginal,
    t: usize,
    x: f64,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::Domain("horizon t must be >= 1".into()));
    }
    let mut inner = Vec::with_capacity(t);
    for k in 1..=t {
        let thresholds = vec![x / k as f64; k];
        inner.push(spec.survival_orthant_prob(m, &thresholds)?);
    }
    Ok(1.0 - spec.copula_survival(&inner)?)
}

// ---------------------------------------------------------------------------
// Light-tailed sup bound for net processes
// ---------------------------------------------------------------------------

/// Exponential bound on the all-time supremum of the net process
/// `sum_{i<=t} (C_i - c)` for i.i.d. slots, valid when the drift is
/// negative (c above the mean capacity).
///
/// The decay rate theta* is the positive root of the net-increment log MGF
/// `kappa(theta) = log E[e^{theta C}] - theta c`; kappa is convex, vanishes
/// at zero with negative slope, and grows without bound because the
/// capacity itself is unbounded, so the root exists and is unique.
pub fn iid_sup_tail_lundberg(m: &Marginal, c: f64, x: f64) -> Result<f64> {
    let theta = iid_net_decay_rate(m, c)?;
    if x < 0.0 {
        // The sup includes the empty prefix, so levels below zero are
        // certain; the bound saturates.
        return Ok(1.0);
    }
    Ok((-theta * x).exp())
}

/// The positive root theta* of the net-increment log MGF described at
/// [`iid_sup_tail_lundberg`].
pub fn iid_net_decay_rate(m: &Marginal, c: f64) -> Result<f64> {
    let mean = m.mean()?;
    if c <= mean {
        return Err(Error::Domain(format!(
            "reference rate {c} must exceed the mean capacity {mean} for the \
             net process to drift downward"
        )));
    }
    let kappa = |theta: f64| -> Result<f64> {
        Ok(cumulative::log_mgf_pos(m, theta)? - theta * c)
    };
    // kappa(0) = 0 with kappa'(0) = mean - c < 0; expand the bracket right
    // until the convex branch crosses back above zero.
    let mut hi = 1.0;
    let mut k_hi = kappa(hi)?;
    let mut guard = 0;
    while k_hi <= 0.0 {
        hi *= 2.0;
        k_hi = kappa(hi)?;
        guard += 1;
        if guard > 60 {
            return Err(Error::Numeric(
                "net-increment log MGF never crossed zero; no positive decay rate".into(),
            ));
        }
    }
    // The root is isolated from 0 by convexity; bracket its left edge by
    // halving until kappa goes negative.
    let mut lo = hi / 2.0;
    while kappa(lo)? > 0.0 {
        lo /= 2.0;
        if lo < 1e-12 {
            break;
        }
    }
    numeric::bisect_root(
        |theta| kappa(theta).unwrap_or(f64::INFINITY),
        lo,
        hi,
        1e-12,
        200,
    )
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::BivariateCopula;
    use proptest::prelude::*;
    use rand::SeedableRng;

    /// Exhaustive window enumeration, the O(t^2) oracle for the O(t) pass.
    fn brute_extremes(path: &[f64]) -> PathExtremes {
        let t = path.len();
        let mut gen_max = f64::NEG_INFINITY;
        let mut gen_min = f64::INFINITY;
        let mut fwd_max = f64::NEG_INFINITY;
        let mut fwd_min = f64::INFINITY;
        let mut bwd_max = f64::NEG_INFINITY;
        let mut bwd_min = f64::INFINITY;
        for j in 0..t {
            for k in j..t {
                let s: f64 = path[j..=k].iter().sum();
                gen_max = gen_max.max(s);
                gen_min = gen_min.min(s);
                if j == 0 {
                    fwd_max = fwd_max.max(s);
                    fwd_min = fwd_min.min(s);
                }
                if k == t - 1 {
                    bwd_max = bwd_max.max(s);
                    bwd_min = bwd_min.min(s);
                }
            }
        }
        PathExtremes {
            s_total: path.iter().sum(),
            fwd_max,
            bwd_max,
            gen_max,
            fwd_min,
            bwd_min,
            gen_min,
            range_gen: gen_max - gen_min,
            range_fwd: fwd_max - fwd_min,
        }
    }

    #[test]
    fn rejects_empty_path() {
        assert!(matches!(path_extremes(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn single_element_path_is_degenerate() {
        let e = path_extremes(&[2.5]).unwrap();
        assert_eq!(e.s_total, 2.5);
        assert_eq!(e.fwd_max, 2.5);
        assert_eq!(e.bwd_max, 2.5);
        assert_eq!(e.gen_max, 2.5);
        assert_eq!(e.fwd_min, 2.5);
        assert_eq!(e.bwd_min, 2.5);
        assert_eq!(e.gen_min, 2.5);
        assert_eq!(e.range_gen, 0.0);
    }

    #[test]
    fn one_two_three_window_statistics() {
        let e = path_extremes(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.s_total, 6.0, "total");
        assert_eq!(e.fwd_max, 6.0, "forward max is the full prefix");
        assert_eq!(e.bwd_max, 6.0, "backward max is the full suffix");
        assert_eq!(e.gen_max, 6.0, "general max picks the whole path");
        assert_eq!(e.fwd_min, 1.0, "smallest prefix is the first slot");
        assert_eq!(e.bwd_min, 3.0, "smallest suffix is the last slot");
        assert_eq!(e.gen_min, 1.0, "smallest window is the first slot");
        assert_eq!(e.range_gen, 5.0);
        assert_eq!(e.range_fwd, 5.0);
    }

    #[test]
    fn constant_path_closed_forms() {
        let c = 0.7;
        let t = 9;
        let e = path_extremes(&vec![c; t]).unwrap();
        assert!((e.gen_max - t as f64 * c).abs() < 1e-12);
        assert!((e.gen_min - c).abs() < 1e-12);
        assert!((e.range_gen - (t as f64 - 1.0) * c).abs() < 1e-12);
    }

    #[test]
    fn mixed_sign_path_matches_brute_force() {
        let path = [1.5, -2.0, 0.5, 3.0, -1.0, -1.0, 2.5];
        let fast = path_extremes(&path).unwrap();
        let slow = brute_extremes(&path);
        assert!((fast.gen_max - slow.gen_max).abs() < 1e-12, "gen max");
        assert!((fast.gen_min - slow.gen_min).abs() < 1e-12, "gen min");
        assert!((fast.fwd_max - slow.fwd_max).abs() < 1e-12, "fwd max");
        assert!((fast.fwd_min - slow.fwd_min).abs() < 1e-12, "fwd min");
        assert!((fast.bwd_max - slow.bwd_max).abs() < 1e-12, "bwd max");
        assert!((fast.bwd_min - slow.bwd_min).abs() < 1e-12, "bwd min");
    }

    #[test]
    fn max_bound_is_marginal_cdf_at_horizon_one() {
        let m = Marginal::rayleigh(1.0).unwrap();
        let spec = DependenceSpec::Independent;
        let b = max_cdf_lower_bound_nongranger(&spec, &m, 1, 1.3).unwrap();
        assert!((b - m.cdf(1.3)).abs() < 1e-14, "t = 1 degenerates to F(x)");
        let b = min_cdf_upper_bound_nongranger(&spec, &m, 1, 1.3).unwrap();
        assert!((b - m.cdf(1.3)).abs() < 1e-14, "min mirror at t = 1");
    }

    #[test]
    fn comonotonic_max_bound_is_exact_equal_split() {
        // All slots share one uniform, so every window of length k sums to
        // k C and the running max is t C: the bound should equal F(x/t).
        let m = Marginal::rayleigh(1.0).unwrap();
        let spec = DependenceSpec::Comonotonic;
        for &(t, x) in &[(2usize, 1.0), (4, 3.0), (7, 5.5)] {
            let b = max_cdf_lower_bound_nongranger(&spec, &m, t, x).unwrap();
            let exact = m.cdf(x / t as f64);
            assert!(
                (b - exact).abs() < 1e-13,
                "comonotonic bound at t={t}, x={x}: {b} vs {exact}"
            );
        }
    }

    #[test]
    fn independent_max_bound_is_product_of_powers() {
        // Independence factorizes both layers, so the bound has the closed
        // form prod_k F(x/k)^k; the frozen value pins the t=3, x=3 case.
        let m = Marginal::rayleigh(1.0).unwrap();
        let spec = DependenceSpec::Independent;
        let b = max_cdf_lower_bound_nongranger(&spec, &m, 3, 3.0).unwrap();
        let closed: f64 = (1..=3)
            .map(|k| m.cdf(3.0 / k as f64).powi(k as i32))
            .product();
        assert!((b - closed).abs() < 1e-13, "{b} vs {closed}");
        assert!(
            (b - 0.177_775_984_600).abs() < 1e-10,
            "frozen t=3 x=3 anchor, got {b}"
        );
    }

    #[test]
    fn comonotonic_min_bound_is_marginal_cdf() {
        // The binding window is the single first slot: the bound is F(x).
        let m = Marginal::rayleigh(1.0).unwrap();
        let spec = DependenceSpec::Comonotonic;
        for &(t, x) in &[(3usize, 0.8), (5, 1.2)] {
            let b = min_cdf_upper_bound_nongranger(&spec, &m, t, x).unwrap();
            assert!(
                (b - m.cdf(x)).abs() < 1e-13,
                "comonotonic min bound at t={t}, x={x}: {b} vs {}",
                m.cdf(x)
            );
        }
    }

    #[test]
    fn markov_bounds_stay_probabilities_and_order_sanely() {
        let m = Marginal::rayleigh(1.0).unwrap();
        let spec = DependenceSpec::Markov {
            copula: BivariateCopula::fgm(1.0).unwrap(),
        };
        let mut prev = 1.0;
        for &x in &[4.0, 3.0, 2.0, 1.0] {
            let b = max_cdf_lower_bound_nongranger(&spec, &m, 4, x).unwrap();
            assert!((0.0..=1.0).contains(&b), "bound {b} must be a probability");
            assert!(
                b <= prev + 1e-12,
                "bound should shrink as x shrinks: {b} after {prev}"
            );
            prev = b;
        }
        let lo = min_cdf_upper_bound_nongranger(&spec, &m, 4, 0.5).unwrap();
        let hi = min_cdf_upper_bound_nongranger(&spec, &m, 4, 2.0).unwrap();
        assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        assert!(lo <= hi + 1e-12, "min bound should grow with x");
    }

    #[test]
    fn max_bound_under_simulation_for_independent_slots() {
        // The bound must sit below the empirical P(max_k S(1,k) <= x).
        use rand::Rng;
        let m = Marginal::rayleigh(1.0).unwrap();
        let spec = DependenceSpec::Independent;
        let (t, x, n) = (3usize, 3.0, 40_000usize);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let mut hits = 0usize;
        for _ in 0..n {
            let mut s = 0.0;
            let mut max = f64::NEG_INFINITY;
            for _ in 0..t {
                let u: f64 = rng.gen();
                s += m.quantile(u.min(1.0 - 1e-16)).unwrap();
                max = max.max(s);
            }
            if max <= x {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / n as f64;
        let sigma = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        let bound = max_cdf_lower_bound_nongranger(&spec, &m, t, x).unwrap();
        assert!(
            bound <= p_hat + 3.0 * sigma,
            "lower bound {bound} above empirical {p_hat} + 3 sigma"
        );
    }

    #[test]
    fn min_bound_under_simulation_for_independent_slots() {
        use rand::Rng;
        let m = Marginal::rayleigh(1.0).unwrap();
        let spec = DependenceSpec::Independent;
        let (t, x, n) = (3usize, 1.0, 40_000usize);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let mut hits = 0usize;
        for _ in 0..n {
            let mut s = 0.0;
            let mut min = f64::INFINITY;
            for _ in 0..t {
                let u: f64 = rng.gen();
                s += m.quantile(u.min(1.0 - 1e-16)).unwrap();
                min = min.min(s);
            }
            if min <= x {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / n as f64;
        let sigma = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        let bound = min_cdf_upper_bound_nongranger(&spec, &m, t, x).unwrap();
        assert!(
            bound >= p_hat - 3.0 * sigma,
            "upper bound {bound} below empirical {p_hat} - 3 sigma"
        );
    }

    #[test]
    fn sup_tail_rejects_subcritical_rate() {
        let m = Marginal::rayleigh(1.0).unwrap();
        let mean = m.mean().unwrap();
        assert!(matches!(
            iid_sup_tail_lundberg(&m, mean * 0.9, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            iid_sup_tail_lundberg(&m, mean, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sup_tail_decay_rate_matches_frozen_root() {
        let m = Marginal::rayleigh(1.0).unwrap();
        let theta = iid_net_decay_rate(&m, 1.2).unwrap();
        assert!(
            (theta - 1.545_567_128_860_548).abs() < 1e-9,
            "net decay rate at c = 1.2: {theta}"
        );
        // The root actually zeroes the net log MGF.
        let kappa = cumulative::log_mgf_pos(&m, theta).unwrap() - theta * 1.2;
        assert!(kappa.abs() < 1e-10, "kappa at the root: {kappa}");
    }

    #[test]
    fn sup_tail_is_one_at_zero_and_decays_geometrically() {
        let m = Marginal::rayleigh(1.0).unwrap();
        let b0 = iid_sup_tail_lundberg(&m, 1.2, 0.0).unwrap();
        assert!((b0 - 1.0).abs() < 1e-14, "level 0 is certain: {b0}");
        let theta = iid_net_decay_rate(&m, 1.2).unwrap();
        let b1 = iid_sup_tail_lundberg(&m, 1.2, 1.0).unwrap();
        let b2 = iid_sup_tail_lundberg(&m, 1.2, 2.0).unwrap();
        assert!(
            (b2 / b1 - (-theta).exp()).abs() < 1e-12,
            "unit steps decay by e^-theta"
        );
    }

    #[test]
    fn sup_tail_dominates_truncated_simulation() {
        use rand::Rng;
        let m = Marginal::rayleigh(1.0).unwrap();
        let c = 1.2;
        let n = 20_000usize;
        let t_max = 300usize;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        let levels = [1.0, 2.0];
        let mut hits = [0usize; 2];
        for _ in 0..n {
            let mut s = 0.0;
            let mut sup = 0.0_f64;
            for _ in 0..t_max {
                let u: f64 = rng.gen();
                s += m.quantile(u.min(1.0 - 1e-16)).unwrap() - c;
                sup = sup.max(s);
                if sup >= levels[1] {
                    break; // both levels already crossed
                }
            }
            for (i, &x) in levels.iter().enumerate() {
                if sup >= x {
                    hits[i] += 1;
                }
            }
        }
        for (i, &x) in levels.iter().enumerate() {
            let p_hat = hits[i] as f64 / n as f64;
            let sigma = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
            let bound = iid_sup_tail_lundberg(&m, c, x).unwrap();
            assert!(
                bound >= p_hat - 3.0 * sigma,
                "sup tail bound {bound} below empirical {p_hat} at level {x}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_single_pass_matches_brute_force(
            path in prop::collection::vec(-5.0..5.0f64, 1..40)
        ) {
            let fast = path_extremes(&path).unwrap();
            let slow = brute_extremes(&path);
            prop_assert!((fast.gen_max - slow.gen_max).abs() < 1e-9);
            prop_assert!((fast.gen_min - slow.gen_min).abs() < 1e-9);
            prop_assert!((fast.fwd_max - slow.fwd_max).abs() < 1e-9);
            prop_assert!((fast.fwd_min - slow.fwd_min).abs() < 1e-9);
            prop_assert!((fast.bwd_max - slow.bwd_max).abs() < 1e-9);
            prop_assert!((fast.bwd_min - slow.bwd_min).abs() < 1e-9);
        }

        #[test]
        fn prop_general_extremes_envelop_directional_ones(
            path in prop::collection::vec(-5.0..5.0f64, 1..40)
        ) {
            let e = path_extremes(&path).unwrap();
            prop_assert!(e.gen_max >= e.fwd_max.max(e.bwd_max) - 1e-12);
            prop_assert!(e.gen_min <= e.fwd_min.min(e.bwd_min) + 1e-12);
            prop_assert!(e.range_gen >= -1e-12);
            prop_assert!(e.range_gen + 1e-12 >= e.range_fwd);
        }

        #[test]
        fn prop_nonnegative_paths_collapse_to_total(
            path in prop::collection::vec(0.0..5.0f64, 1..40)
        ) {
            let e = path_extremes(&path).unwrap();
            prop_assert!((e.fwd_max - e.s_total).abs() < 1e-9,
                "nonnegative slots make the last prefix largest");
            prop_assert!((e.bwd_max - e.s_total).abs() < 1e-9);
            prop_assert!((e.gen_max - e.s_total).abs() < 1e-9);
            prop_assert!((e.fwd_min - path[0]).abs() < 1e-12,
                "the first slot is the smallest prefix");
        }
    }
}
