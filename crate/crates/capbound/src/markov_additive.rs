//! Finite-state Markov additive processes and Lundberg-type tail bounds.
//!
//! A modulating chain J_n with transition matrix P drives lattice-valued
//! increments: given a transition i -> j, the step Y_n draws from a finite
//! discrete distribution H_ij. The additive part is S_n = Y_1 + ... + Y_n
//! and the running maximum is M_n = max_{0 <= k <= n} S_k (with S_0 = 0).
//!
//! The exponential family around the model is built from the kernel
//! transform
//!
//! ```text
//! Fhat[theta]_ij = p_ij * Hhat_ij[theta],   Hhat_ij[theta] = E[e^{theta Y} | i -> j]
//! ```
//!
//! whose Perron root e^{kappa(theta)} and positive right eigenvector
//! h^{theta} define the tilted model
//!
//! ```text
//! ptilde_ij = e^{-kappa} p_ij Hhat_ij[theta] h_j / h_i
//! Htilde_ij(dx) = e^{theta x} H_ij(dx) / Hhat_ij[theta]
//! ```
//!
//! and the mean-one likelihood ratio W_n = h(J_n)/h(J_0) e^{theta S_n -
//! n kappa(theta)} connecting the two measures by E[phi] = Etilde[phi / W_n].
//!
//! With negative drift and some positive increment mass, the Lundberg
//! equation kappa(theta) = 0 has a positive root theta*, and the running
//! maximum obeys
//!
//! ```text
//! P_i(M > u) <= h_i / (min_j h_j) * e^{-theta* u}
//! C- h_i e^{-theta* u} <= P_i(M > u) <= C+ h_i e^{-theta* u}
//! ```
//!
//! where the refinement constants come from sweeping the per-state step
//! mixtures B_j = sum_k p_jk H_jk. Everything is verified against an exact
//! path-enumeration oracle at short horizons, which also records the
//! first-passage triple (crossing time, overshoot, state at crossing).
//!
//! Rates in this crate are nonnegative, so the running maximum of raw
//! cumulative capacity is degenerate; Lundberg machinery is meant for the
//! net process C_i - c against a reference rate c above the mean. Building
//! that net model is the caller's decision (see `simulate` and the CLI).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric;

/// Row-sum and distribution-sum validation slack.
const MASS_TOL: f64 = 1e-12;
/// Eigen residual required of every tilted model.
const EIGEN_TOL: f64 = 1e-10;
/// Lundberg root bisection tolerance.
const ROOT_TOL: f64 = 1e-10;
/// Path guard for the enumeration oracle.
const MAX_PATHS: f64 = 1e7;
/// Quantization grid for lattice sums (keys at 1e-9 resolution).
const LATTICE_SCALE: f64 = 1e9;

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A finite-state Markov additive model: labels, transition matrix, and a
/// finite increment distribution per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct MapModel {
    labels: Vec<String>,
    p: Vec<Vec<f64>>,
    /// incr[i][j] lists (value, probability); empty exactly when p[i][j] = 0.
    incr: Vec<Vec<Vec<(f64, f64)>>>,
}

impl MapModel {
    pub fn new(
        labels: Vec<String>,
        p: Vec<Vec<f64>>,
        incr: Vec<Vec<Vec<(f64, f64)>>>,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Model("model needs at least one state".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::Model(format!("state {i} has an empty label")));
            }
            if labels[..i].contains(l) {
                return Err(Error::Model(format!("duplicate state label '{l}'")));
            }
        }
        if p.len() != n || incr.len() != n {
            return Err(Error::Model(format!(
                "matrix shape mismatch: {n} states, {} P rows, {} increment rows",
                p.len(),
                incr.len()
            )));
        }
        for i in 0..n {
            if p[i].len() != n || incr[i].len() != n {
                return Err(Error::Model(format!(
                    "row '{}' must have {n} columns",
                    labels[i]
                )));
            }
            let row_sum: f64 = p[i].iter().sum();
            if (row_sum - 1.0).abs() > MASS_TOL {
                return Err(Error::Model(format!(
                    "transition row '{}' sums to {row_sum}, expected 1",
                    labels[i]
                )));
            }
            for j in 0..n {
                let pij = p[i][j];
                if !(0.0..=1.0).contains(&pij) {
                    return Err(Error::Model(format!(
                        "transition probability {pij} from '{}' to '{}' outside [0, 1]",
                        labels[i], labels[j]
                    )));
                }
                let dist = &incr[i][j];
                if pij == 0.0 {
                    if !dist.is_empty() {
                        return Err(Error::Model(format!(
                            "increment distribution given for zero-probability transition '{}' -> '{}'",
                            labels[i], labels[j]
                        )));
                    }
                    continue;
                }
                if dist.is_empty() {
                    return Err(Error::Model(format!(
                        "transition '{}' -> '{}' has probability {pij} but no increment distribution",
                        labels[i], labels[j]
                    )));
                }
                let mut mass = 0.0;
                for &(x, q) in dist {
                    if !x.is_finite() {
                        return Err(Error::Model(format!(
                            "increment value {x} on '{}' -> '{}' is not finite",
                            labels[i], labels[j]
                        )));
                    }
                    if !(0.0..=1.0).contains(&q) {
                        return Err(Error::Model(format!(
                            "increment probability {q} on '{}' -> '{}' outside [0, 1]",
                            labels[i], labels[j]
                        )));
                    }
                    mass += q;
                }
                if (mass - 1.0).abs() > MASS_TOL {
                    return Err(Error::Model(format!(
                        "increment distribution on '{}' -> '{}' sums to {mass}, expected 1",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(MapModel { labels, p, incr })
    }

    /// The two-state on/off fading model used throughout tests, examples,
    /// and the acceptance suite: a "good" state that mostly drains and a
    /// "bad" state with heavier negative steps, overall drift -0.872.
    pub fn reference_two_state() -> Self {
        MapModel::new(
            vec!["g".into(), "b".into()],
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            vec![
                vec![
                    vec![(-1.0, 0.9), (1.0, 0.1)],
                    vec![(-2.0, 0.8), (0.0, 0.2)],
                ],
                vec![
                    vec![(-1.0, 0.8), (1.0, 0.2)],
                    vec![(-2.0, 0.6), (1.0, 0.4)],
                ],
            ],
        )
        .expect("reference model is well formed")
    }

    /// Shift every increment by `-c`, turning raw per-slot gains into the
    /// net process against a constant reference rate c. Decay-rate
    /// operations on the result still require the shifted drift to be
    /// negative; they report that themselves.
    pub fn with_reference_rate(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!(
                "reference rate must be a positive finite number, got {c}"
            )));
        }
        let incr = self
            .incr
            .iter()
            .map(|row| {
                row.iter()
                    .map(|dist| dist.iter().map(|&(x, q)| (x - c, q)).collect())
                    .collect()
            })
            .collect();
        Ok(MapModel {
            labels: self.labels.clone(),
            p: self.p.clone(),
            incr,
        })
    }

    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.p
    }

    pub fn increments(&self, i: usize, j: usize) -> &[(f64, f64)] {
        &self.incr[i][j]
    }

    pub fn state_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Model(format!("unknown state label '{label}'")))
    }

    /// Stationary distribution of the modulating chain by damped power
    /// iteration on the transpose; the half-identity mix removes any
    /// periodicity without moving the fixed point.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.n_states();
        let mut pi = vec![1.0 / n as f64; n];
        for it in 0..200_000 {
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[j] += pi[i] * self.p[i][j];
                }
            }
            for j in 0..n {
                next[j] = 0.5 * (next[j] + pi[j]);
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= total);
            let delta = next
                .iter()
                .zip(&pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            pi = next;
            if delta < 1e-15 && it > 2 {
                return Ok(pi);
            }
        }
        Err(Error::Model(
            "stationary distribution iteration stalled; chain may be reducible".into(),
        ))
    }

    /// Mean conditional increment from state i.
    pub fn state_mean(&self, i: usize) -> f64 {
        (0..self.n_states())
            .map(|j| {
                self.p[i][j]
                    * self.incr[i][j]
                        .iter()
                        .map(|&(x, q)| x * q)
                        .sum::<f64>()
            })
            .sum()
    }

    /// Long-run drift sum_i pi_i E[Y | J = i].
    pub fn mean_drift(&self) -> Result<f64> {
        let pi = self.stationary()?;
        Ok((0..self.n_states()).map(|i| pi[i] * self.state_mean(i)).sum())
    }

    /// Largest per-transition support size, the branching factor of the
    /// enumeration oracle.
    fn max_support(&self) -> usize {
        self.incr
            .iter()
            .flatten()
            .map(|d| d.len())
            .max()
            .unwrap_or(0)
    }

    // -----------------------------------------------------------------------
    // Kernel transform and tilting
    // -----------------------------------------------------------------------

    /// Entry-wise transformed kernel Fhat[theta]_ij = sum_x p_ij H_ij(x)
    /// e^{theta x}.
    pub fn f_hat(&self, theta: f64) -> Result<Vec<Vec<f64>>> {
        if !theta.is_finite() {
            return Err(Error::Domain(format!("tilt parameter must be finite, got {theta}")));
        }
        let n = self.n_states();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for &(x, q) in &self.incr[i][j] {
                    acc += q * (theta * x).exp();
                }
                let v = self.p[i][j] * acc;
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "transformed kernel overflowed at theta = {theta} on '{}' -> '{}'",
                        self.labels[i], self.labels[j]
                    )));
                }
                out[i][j] = v;
            }
        }
        Ok(out)
    }

    /// Perron root and eigenvector of the transformed kernel: kappa(theta)
    /// is the log of the spectral radius, h the positive right eigenvector
    /// normalized to max entry 1. A positive diagonal shift keeps power
    /// iteration convergent for periodic chains.
    pub fn kappa_and_h(&self, theta: f64) -> Result<(f64, Vec<f64>)> {
        let n = self.n_states();
        if theta == 0.0 {
            // Fhat[0] = P is row stochastic: spectral radius 1, flat h.
            return Ok((0.0, vec![1.0; n]));
        }
        let a = self.f_hat(theta)?;
        let shift = 1.0 + a
            .iter()
            .map(|row| row.iter().sum::<f64>())
            .fold(0.0f64, f64::max);
        let apply = |h: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = shift * h[i];
                for j in 0..n {
                    out[i] += a[i][j] * h[j];
                }
            }
        };
        let mut h = vec![1.0; n];
        let mut v = vec![0.0; n];
        let mut lam_shifted = 0.0;
        let mut converged = false;
        for _ in 0..200_000 {
            apply(&h, &mut v);
            lam_shifted = v.iter().copied().fold(0.0f64, f64::max);
            if lam_shifted <= 0.0 || !lam_shifted.is_finite() {
                return Err(Error::Model(
                    "power iteration collapsed; chain may be reducible".into(),
                ));
            }
            let mut delta = 0.0f64;
            for i in 0..n {
                let next = v[i] / lam_shifted;
                delta = delta.max((next - h[i]).abs());
                h[i] = next;
            }
            if delta < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Model(
                "power iteration stalled; chain may be reducible".into(),
            ));
        }
        let hmax = h.iter().copied().fold(0.0f64, f64::max);
        h.iter_mut().for_each(|x| *x /= hmax);
        if h.iter().any(|&x| x < 1e-12) {
            return Err(Error::Model(
                "Perron vector has a vanishing entry; chain is not irreducible".into(),
            ));
        }
        let lam = lam_shifted - shift;
        if lam <= 0.0 {
            return Err(Error::Model(format!(
                "spectral radius {lam} is not positive at theta = {theta}"
            )));
        }
        // Residual of the unshifted problem, the invariant every tilted
        // model must satisfy.
        let mut resid = 0.0f64;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += a[i][j] * h[j];
            }
            resid = resid.max((row - lam * h[i]).abs());
        }
        if resid > EIGEN_TOL {
            return Err(Error::Numeric(format!(
                "eigen residual {resid} exceeds {EIGEN_TOL} at theta = {theta}"
            )));
        }
        Ok((lam.ln(), h))
    }

    /// Exponential change of measure at tilt theta.
    pub fn tilt(&self, theta: f64) -> Result<TiltedMap> {
        let n = self.n_states();
        let (kappa, h) = self.kappa_and_h(theta)?;
        let ek = kappa.exp();
        let mut p_tilt = vec![vec![0.0; n]; n];
        let mut incr_tilt = vec![vec![Vec::new(); n]; n];
        for i in 0..n {
            for j in 0..n {
                if self.p[i][j] == 0.0 {
                    continue;
                }
                let hhat: f64 = self.incr[i][j]
                    .iter()
                    .map(|&(x, q)| q * (theta * x).exp())
                    .sum();
                p_tilt[i][j] = self.p[i][j] * hhat * h[j] / (ek * h[i]);
                incr_tilt[i][j] = self.incr[i][j]
                    .iter()
                    .map(|&(x, q)| (x, q * (theta * x).exp() / hhat))
                    .collect();
            }
            let row: f64 = p_tilt[i].iter().sum();
            if (row - 1.0).abs() > EIGEN_TOL {
                return Err(Error::Numeric(format!(
                    "tilted row '{}' sums to {row}; tilt at theta = {theta} lost stochasticity",
                    self.labels[i]
                )));
            }
            // Renormalize the float dust so the tilted model revalidates.
            p_tilt[i].iter_mut().for_each(|x| *x /= row);
        }
        Ok(TiltedMap {
            theta,
            kappa,
            h,
            model: MapModel::new(self.labels.clone(), p_tilt, incr_tilt)?,
        })
    }

    // -----------------------------------------------------------------------
    // Lundberg root and tail bounds
    // -----------------------------------------------------------------------

    /// Positive root of kappa(theta) = 0. Needs negative drift (else kappa
    /// leaves 0 upward immediately) and some positive increment mass (else
    /// kappa never comes back up).
    pub fn lundberg_root(&self) -> Result<f64> {
        let drift = self.mean_drift()?;
        if drift >= 0.0 {
            return Err(Error::Model(format!(
                "no Lundberg root: drift {drift} is nonnegative, kappa has no positive zero"
            )));
        }
        let has_up = self
            .incr
            .iter()
            .flatten()
            .flatten()
            .any(|&(x, q)| x > 0.0 && q > 0.0);
        if !has_up {
            return Err(Error::Model(
                "no Lundberg root: every increment is nonpositive, kappa never returns to 0".into(),
            ));
        }
        // Largest step bounds the usable theta range before e^{theta x}
        // overflows; kappa(theta) ~ theta * x_max at the far end.
        let x_max = self
            .incr
            .iter()
            .flatten()
            .flatten()
            .filter(|&&(_, q)| q > 0.0)
            .map(|&(x, _)| x.abs())
            .fold(1e-9f64, f64::max);
        let theta_cap = 650.0 / x_max;
        let mut hi = 1.0f64.min(theta_cap);
        let mut k_hi = self.kappa_and_h(hi)?.0;
        let mut lo = 0.0;
        while k_hi <= 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > theta_cap {
                return Err(Error::Model(format!(
                    "no Lundberg root: kappa stays negative up to theta = {theta_cap} \
                     where the transform overflows"
                )));
            }
            k_hi = self.kappa_and_h(hi)?.0;
        }
        if lo == 0.0 {
            // kappa also vanishes at zero, so a bracket pinned there would
            // bisect onto the trivial root. The drift is negative, hence
            // kappa dips below zero immediately to the right of the origin;
            // walk the left edge down until the dip shows up.
            lo = 0.5 * hi;
            loop {
                let k_lo = self.kappa_and_h(lo)?.0;
                if k_lo < 0.0 {
                    break;
                }
                if k_lo == 0.0 {
                    return Ok(lo);
                }
                hi = lo;
                lo *= 0.5;
                if lo < 1e-12 {
                    return Err(Error::Model(
                        "no isolated Lundberg root: kappa is nonnegative arbitrarily \
                         close to zero"
                            .into(),
                    ));
                }
            }
        }
        let root = numeric::bisect_root(
            |t| self.kappa_and_h(t).map(|kh| kh.0).unwrap_or(f64::INFINITY),
            lo,
            hi,
            ROOT_TOL,
            200,
        )?;
        Ok(root)
    }

    /// Lundberg and refined bounds on P_i(M > u) for the running maximum.
    pub fn sup_tail_bounds(&self, u: f64) -> Result<SupTailBounds> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("level u must be >= 0, got {u}")));
        }
        let theta = self.lundberg_root()?;
        let (_, h) = self.kappa_and_h(theta)?;
        let n = self.n_states();
        let h_min = h.iter().copied().fold(f64::INFINITY, f64::min);

        // Per-state step mixtures B_j = sum_k p_jk H_jk on the shared
        // lattice.
        let mut mixtures: Vec<Vec<(f64, f64)>> = Vec::with_capacity(n);
        for j in 0..n {
            let mut acc: HashMap<i64, f64> = HashMap::new();
            for k in 0..n {
                for &(x, q) in &self.incr[j][k] {
                    *acc.entry(lattice_key(x)).or_insert(0.0) += self.p[j][k] * q;
                }
            }
            let mut v: Vec<(f64, f64)> = acc
                .into_iter()
                .map(|(k, q)| (k as f64 / LATTICE_SCALE, q))
                .collect();
            v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            mixtures.push(v);
        }
        // Sweep points: nonnegative support values, zero, and midpoints.
        let mut pts: Vec<f64> = mixtures
            .iter()
            .flatten()
            .map(|&(x, _)| x)
            .filter(|&x| x >= 0.0)
            .chain(std::iter::once(0.0))
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mids: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        pts.extend(mids);

        let mut c_minus = f64::INFINITY;
        let mut c_plus = 0.0f64;
        for (j, bj) in mixtures.iter().enumerate() {
            for &x in &pts {
                let above: Vec<&(f64, f64)> = bj.iter().filter(|&&(y, _)| y > x + 1e-15).collect();
                let bbar: f64 = above.iter().map(|&&(_, q)| q).sum();
                if bbar <= 0.0 {
                    continue; // no mass above this x, ratio undefined
                }
                let den: f64 = above
                    .iter()
                    .map(|&&(y, q)| q * (theta * (y - x)).exp())
                    .sum();
                let r = bbar / den / h[j];
                c_minus = c_minus.min(r);
                c_plus = c_plus.max(r);
            }
        }
        if !c_minus.is_finite() {
            return Err(Error::Model(
                "refinement sweep found no mass above any sweep point".into(),
            ));
        }

        let decay = (-theta * u).exp();
        let lundberg: Vec<f64> = h.iter().map(|hi| (hi / h_min * decay).min(1.0)).collect();
        let refined_lower: Vec<f64> = h.iter().map(|hi| (c_minus * hi * decay).min(1.0)).collect();
        let refined_upper: Vec<f64> = h.iter().map(|hi| (c_plus * hi * decay).min(1.0)).collect();
        let pi = self.stationary()?;
        let mix = |v: &[f64]| -> f64 { v.iter().zip(&pi).map(|(b, p)| b * p).sum() };
        Ok(SupTailBounds {
            theta_star: theta,
            h: h.clone(),
            c_minus,
            c_plus,
            mixed_lundberg: mix(&lundberg),
            mixed_refined_lower: mix(&refined_lower),
            mixed_refined_upper: mix(&refined_upper),
            lundberg,
            refined_lower,
            refined_upper,
        })
    }

    // -----------------------------------------------------------------------
    // Enumeration oracle
    // -----------------------------------------------------------------------

    fn guard_paths(&self, t: usize) -> Result<()> {
        if t == 0 || t > 12 {
            return Err(Error::Domain(format!(
                "enumeration horizon must be in 1..=12, got {t}"
            )));
        }
        let paths = self.n_states() as f64 * (self.max_support() as f64).powi(t as i32);
        if paths > MAX_PATHS {
            return Err(Error::Capability(format!(
                "enumeration would touch ~{paths:.3e} paths, above the {MAX_PATHS:.0e} guard"
            )));
        }
        Ok(())
    }

    /// Exact joint law of (J_t, S_t) and of the running maximum M_t by
    /// dynamic programming over (state, lattice sum, lattice max), one
    /// table per starting state.
    pub fn enumerate_small(&self, t: usize) -> Result<Enumeration> {
        self.guard_paths(t)?;
        let n = self.n_states();
        let mut per_start = Vec::with_capacity(n);
        for start in 0..n {
            let mut cur: HashMap<(usize, i64, i64), f64> = HashMap::new();
            cur.insert((start, 0, 0), 1.0);
            for _ in 0..t {
                let mut next: HashMap<(usize, i64, i64), f64> =
                    HashMap::with_capacity(cur.len() * 2);
                for (&(j, s, m), &pr) in &cur {
                    for k in 0..n {
                        let pjk = self.p[j][k];
                        if pjk == 0.0 {
                            continue;
                        }
                        for &(x, q) in &self.incr[j][k] {
                            let s2 = s + lattice_key(x);
                            let m2 = m.max(s2);
                            *next.entry((k, s2, m2)).or_insert(0.0) += pr * pjk * q;
                        }
                    }
                }
                cur = next;
            }
            let mut terminal: HashMap<(usize, i64), f64> = HashMap::new();
            let mut max_dist: HashMap<i64, f64> = HashMap::new();
            for (&(j, s, m), &pr) in &cur {
                *terminal.entry((j, s)).or_insert(0.0) += pr;
                *max_dist.entry(m).or_insert(0.0) += pr;
            }
            let mut terminal: Vec<(usize, f64, f64)> = terminal
                .into_iter()
                .map(|((j, s), pr)| (j, s as f64 / LATTICE_SCALE, pr))
                .collect();
            terminal.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
            let mut running_max: Vec<(f64, f64)> = max_dist
                .into_iter()
                .map(|(m, pr)| (m as f64 / LATTICE_SCALE, pr))
                .collect();
            running_max.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            per_start.push(StartLaw {
                start,
                terminal,
                running_max,
            });
        }
        Ok(Enumeration {
            horizon: t,
            per_start,
        })
    }

    /// First-passage records over a level u within horizon t: exact
    /// probabilities of (crossing time tau, overshoot xi, state at
    /// crossing), one record set per starting state, alongside the mass
    /// that never crosses by t.
    pub fn first_passage(&self, t: usize, u: f64) -> Result<Vec<FirstPassageRecords>> {
        self.guard_paths(t)?;
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("level u must be >= 0, got {u}")));
        }
        let n = self.n_states();
        let u_key = lattice_key(u);
        let mut out = Vec::with_capacity(n);
        for start in 0..n {
            // Alive mass has never exceeded u; crossing freezes a record.
            let mut alive: HashMap<(usize, i64), f64> = HashMap::new();
            alive.insert((start, 0), 1.0);
            let mut records: HashMap<(usize, i64, usize), f64> = HashMap::new();
            for step in 1..=t {
                let mut next: HashMap<(usize, i64), f64> = HashMap::new();
                for (&(j, s), &pr) in &alive {
                    for k in 0..n {
                        let pjk = self.p[j][k];
                        if pjk == 0.0 {
                            continue;
                        }
                        for &(x, q) in &self.incr[j][k] {
                            let s2 = s + lattice_key(x);
                            let mass = pr * pjk * q;
                            if s2 > u_key {
                                *records.entry((step, s2 - u_key, k)).or_insert(0.0) += mass;
                            } else {
                                *next.entry((k, s2)).or_insert(0.0) += mass;
                            }
                        }
                    }
                }
                alive = next;
            }
            let not_crossed: f64 = alive.values().sum();
            let mut records: Vec<FirstPassageRecord> = records
                .into_iter()
                .map(|((tau, xi, state), pr)| FirstPassageRecord {
                    tau,
                    overshoot: xi as f64 / LATTICE_SCALE,
                    state,
                    probability: pr,
                })
                .collect();
            records.sort_by(|a, b| {
                (a.tau, a.state, a.overshoot)
                    .partial_cmp(&(b.tau, b.state, b.overshoot))
                    .unwrap()
            });
            out.push(FirstPassageRecords {
                start,
                level: u,
                horizon: t,
                records,
                not_crossed,
            });
        }
        Ok(out)
    }

    /// Loads a model from the structured text format:
    ///
    /// ```text
    /// states g b
    /// P g: 0.8 0.2
    /// P b: 0.3 0.7
    /// H g g: -1:0.9 1:0.1
    /// ...
    /// ```
    ///
    /// Comments run from `#` to end of line. Every state needs exactly one
    /// P row; every positive-probability transition needs exactly one H
    /// line. Violations carry the offending line number.
    pub fn from_text_reader(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut labels: Vec<String> = Vec::new();
        let mut p_rows: Vec<Option<(usize, Vec<f64>)>> = Vec::new();
        let mut h_cells: Vec<Vec<Option<(usize, Vec<(f64, f64)>)>>> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let raw = line.map_err(Error::Io)?;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let mut parts = text.split_whitespace();
            let head = parts.next().unwrap_or("");
            match head {
                "states" => {
                    if !labels.is_empty() {
                        return Err(err(lineno, "duplicate 'states' line".into()));
                    }
                    labels = parts.map(str::to_owned).collect();
                    if labels.is_empty() {
                        return Err(err(lineno, "'states' line lists no states".into()));
                    }
                    for (i, l) in labels.iter().enumerate() {
                        if labels[..i].contains(l) {
                            return Err(err(lineno, format!("duplicate state label '{l}'")));
                        }
                    }
                    p_rows = vec![None; labels.len()];
                    h_cells = vec![vec![None; labels.len()]; labels.len()];
                }
                "P" => {
                    if labels.is_empty() {
                        return Err(err(lineno, "'P' before 'states'".into()));
                    }
                    let rest = text[1..].trim();
                    let (label, nums) = rest.split_once(':').ok_or_else(|| {
                        err(lineno, "'P' line needs the form 'P <state>: p1 p2 ...'".into())
                    })?;
                    let i = find_label(&labels, label.trim()).map_err(|m| err(lineno, m))?;
                    if p_rows[i].is_some() {
                        return Err(err(
                            lineno,
                            format!("duplicate 'P' row for state '{}'", labels[i]),
                        ));
                    }
                    let row: Vec<f64> = nums
                        .split_whitespace()
                        .map(|tok| {
                            tok.parse::<f64>()
                                .map_err(|_| err(lineno, format!("bad probability '{tok}'")))
                        })
                        .collect::<std::result::Result<_, _>>()?;
                    if row.len() != labels.len() {
                        return Err(err(
                            lineno,
                            format!(
                                "'P' row for '{}' has {} entries, expected {}",
                                labels[i],
                                row.len(),
                                labels.len()
                            ),
                        ));
                    }
                    p_rows[i] = Some((lineno, row));
                }
                "H" => {
                    if labels.is_empty() {
                        return Err(err(lineno, "'H' before 'states'".into()));
                    }
                    let rest = text[1..].trim();
                    let (pair, items) = rest.split_once(':').ok_or_else(|| {
                        err(
                            lineno,
                            "'H' line needs the form 'H <from> <to>: v:p v:p ...'".into(),
                        )
                    })?;
                    let mut pw = pair.split_whitespace();
                    let (a, b) = (pw.next().unwrap_or(""), pw.next().unwrap_or(""));
                    if pw.next().is_some() || a.is_empty() || b.is_empty() {
                        return Err(err(
                            lineno,
                            "'H' line needs exactly two state labels before ':'".into(),
                        ));
                    }
                    let i = find_label(&labels, a).map_err(|m| err(lineno, m))?;
                    let j = find_label(&labels, b).map_err(|m| err(lineno, m))?;
                    if h_cells[i][j].is_some() {
                        return Err(err(
                            lineno,
                            format!("duplicate 'H' line for '{a}' -> '{b}'"),
                        ));
                    }
                    let mut dist = Vec::new();
                    for tok in items.split_whitespace() {
                        let (v, q) = tok.split_once(':').ok_or_else(|| {
                            err(lineno, format!("bad increment entry '{tok}', expected v:p"))
                        })?;
                        let v: f64 = v
                            .parse()
                            .map_err(|_| err(lineno, format!("bad increment value '{v}'")))?;
                        let q: f64 = q
                            .parse()
                            .map_err(|_| err(lineno, format!("bad increment probability '{q}'")))?;
                        dist.push((v, q));
                    }
                    if dist.is_empty() {
                        return Err(err(lineno, "'H' line lists no increments".into()));
                    }
                    h_cells[i][j] = Some((lineno, dist));
                }
                other => {
                    return Err(err(
                        lineno,
                        format!("unknown directive '{other}' (expected states, P, or H)"),
                    ));
                }
            }
        }
        if labels.is_empty() {
            return Err(err(0, "file has no 'states' line".into()));
        }
        let n = labels.len();
        let mut p = Vec::with_capacity(n);
        for i in 0..n {
            match &p_rows[i] {
                Some((_, row)) => p.push(row.clone()),
                None => {
                    return Err(err(0, format!("missing 'P' row for state '{}'", labels[i])))
                }
            }
        }
        let mut incr = vec![vec![Vec::new(); n]; n];
        for i in 0..n {
            for j in 0..n {
                match (&h_cells[i][j], p[i][j] > 0.0) {
                    (Some((_, d)), true) => incr[i][j] = d.clone(),
                    (Some((line, _)), false) => {
                        return Err(err(
                            *line,
                            format!(
                                "'H {} {}' given but the transition has probability 0",
                                labels[i], labels[j]
                            ),
                        ))
                    }
                    (None, true) => {
                        return Err(err(
                            0,
                            format!(
                                "missing 'H {} {}' for a positive-probability transition",
                                labels[i], labels[j]
                            ),
                        ))
                    }
                    (None, false) => {}
                }
            }
        }
        MapModel::new(labels, p, incr).map_err(|e| match e {
            Error::Model(msg) => Error::Parse {
                path: origin.to_path_buf(),
                line: 0,
                msg,
            },
            other => other,
        })
    }

    pub fn from_text_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_text_reader(std::io::BufReader::new(file), path)
    }

    /// Serializes back to the text format the loader reads.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "states {}", self.labels.join(" "));
        for i in 0..self.n_states() {
            let row: Vec<String> = self.p[i].iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(s, "P {}: {}", self.labels[i], row.join(" "));
        }
        for i in 0..self.n_states() {
            for j in 0..self.n_states() {
                if self.p[i][j] == 0.0 {
                    continue;
                }
                let items: Vec<String> = self.incr[i][j]
                    .iter()
                    .map(|(x, q)| format!("{x}:{q}"))
                    .collect();
                let _ = writeln!(s, "H {} {}: {}", self.labels[i], self.labels[j], items.join(" "));
            }
        }
        s
    }
}

fn find_label(labels: &[String], l: &str) -> std::result::Result<usize, String> {
    labels
        .iter()
        .position(|x| x == l)
        .ok_or_else(|| format!("unknown state label '{l}'"))
}

fn lattice_key(x: f64) -> i64 {
    (x * LATTICE_SCALE).round() as i64
}

// ---------------------------------------------------------------------------
// Tilted model
// ---------------------------------------------------------------------------

/// The exponential change of measure at a fixed tilt.
#[derive(Debug, Clone)]
pub struct TiltedMap {
    pub theta: f64,
    pub kappa: f64,
    /// Positive right eigenvector, max entry 1.
    pub h: Vec<f64>,
    model: MapModel,
}

impl TiltedMap {
    /// The tilted dynamics as a model in their own right (for enumeration
    /// or simulation under the new measure).
    pub fn model(&self) -> &MapModel {
        &self.model
    }

    /// Likelihood ratio W_t = h(J_t)/h(J_0) e^{theta S_t - t kappa} of the
    /// tilted measure against the base measure on horizon-t paths; it is
    /// mean one under the base measure and connects expectations by
    /// E[phi] = Etilde[phi / W_t].
    pub fn likelihood_ratio(&self, j0: usize, jt: usize, s_t: f64, t: usize) -> f64 {
        self.h[jt] / self.h[j0] * (self.theta * s_t - t as f64 * self.kappa).exp()
    }
}

// ---------------------------------------------------------------------------
// Bounds and enumeration outputs
// ---------------------------------------------------------------------------

/// Tail bounds on the running maximum at one level.
#[derive(Debug, Clone)]
pub struct SupTailBounds {
    pub theta_star: f64,
    pub h: Vec<f64>,
    pub c_minus: f64,
    pub c_plus: f64,
    /// Per-state h_i / min_j h_j e^{-theta* u}, clamped at 1.
    pub lundberg: Vec<f64>,
    /// Per-state C- h_i e^{-theta* u}.
    pub refined_lower: Vec<f64>,
    /// Per-state C+ h_i e^{-theta* u}, clamped at 1.
    pub refined_upper: Vec<f64>,
    /// Stationary mixtures of the per-state bounds.
    pub mixed_lundberg: f64,
    pub mixed_refined_lower: f64,
    pub mixed_refined_upper: f64,
}

/// Exact laws from the enumeration oracle.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub horizon: usize,
    pub per_start: Vec<StartLaw>,
}

/// Exact terminal and running-maximum laws for one starting state.
#[derive(Debug, Clone)]
pub struct StartLaw {
    pub start: usize,
    /// pmf of (J_t, S_t) as (state, sum, probability).
    pub terminal: Vec<(usize, f64, f64)>,
    /// pmf of M_t = max_{0 <= n <= t} S_n.
    pub running_max: Vec<(f64, f64)>,
}

impl StartLaw {
    pub fn prob_max_exceeds(&self, u: f64) -> f64 {
        self.running_max
            .iter()
            .filter(|&&(m, _)| m > u + 1e-12)
            .map(|&(_, p)| p)
            .sum()
    }

    pub fn expect_terminal(&self, f: impl Fn(usize, f64) -> f64) -> f64 {
        self.terminal.iter().map(|&(j, s, p)| p * f(j, s)).sum()
    }
}

/// One first-passage outcome: crossing at time tau into `state`, ending
/// `overshoot` above the level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstPassageRecord {
    pub tau: usize,
    pub overshoot: f64,
    pub state: usize,
    pub probability: f64,
}

/// All first-passage outcomes within a horizon from one starting state.
#[derive(Debug, Clone)]
pub struct FirstPassageRecords {
    pub start: usize,
    pub level: f64,
    pub horizon: usize,
    pub records: Vec<FirstPassageRecord>,
    /// Mass still at or below the level at the horizon.
    pub not_crossed: f64,
}

impl FirstPassageRecords {
    pub fn crossing_probability(&self) -> f64 {
        self.records.iter().map(|r| r.probability).sum()
    }
}

// ---------------------------------------------------------------------------
