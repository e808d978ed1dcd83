//! Small numeric toolkit: Gauss-Legendre rules, adaptive Simpson quadrature,
//! golden-section search, bisection, and a plain Nelder-Mead simplex.
//!
//! Everything here is deliberately boring. The interesting mathematics lives
//! in the modules that call into this one; those modules state tolerances in
//! their contracts and this module honours them mechanically.

use std::collections::BTreeMap;
use std::sync::Mutex;

use crate::error::{Error, Result};

// --- Gauss-Legendre rules ---------------------------------------------------

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub struct GlRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GlRule {
    fn compute(n: usize) -> GlRule {
        assert!(n >= 2, "Gauss-Legendre rule needs at least 2 nodes");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Chebyshev-based starting guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0f64, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GlRule { nodes, weights }
    }

    /// Cached rule lookup. Rules are small and the set of sizes used by the
    /// crate is bounded, so leaked boxes are fine.
    pub fn get(n: usize) -> &'static GlRule {
        static CACHE: Mutex<BTreeMap<usize, &'static GlRule>> = Mutex::new(BTreeMap::new());
        let mut cache = CACHE.lock().unwrap();
        cache
            .entry(n)
            .or_insert_with(|| Box::leak(Box::new(GlRule::compute(n))))
    }

    /// Integrate f over [a, b] with this rule.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// Convenience wrapper: n-point Gauss-Legendre integral of f over [a, b].
pub fn gl_integrate(n: usize, a: f64, b: f64, f: impl FnMut(f64) -> f64) -> f64 {
    GlRule::get(n).integrate(a, b, f)
}

// --- Adaptive Simpson -------------------------------------------------------

struct Simpson<'a> {
    f: &'a mut dyn FnMut(f64) -> f64,
    evals: usize,
}

impl Simpson<'_> {
    fn recurse(&mut self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        self.evals += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // Scale-aware acceptance: absolute for O(1) integrands, relative
        // for huge ones (exponentially tilted integrals overflow any fixed
        // absolute tolerance long before double precision runs out). The
        // roundoff arm stops refinement once delta sits at the rounding
        // noise of the function values; past that point subdivision cannot
        // improve a double precision estimate and only burns depth. The
        // noise floor is not a few ulp: integrands of the form
        // exp(a(r)) * exp(-b(r)) with large nearly cancelling exponents
        // carry jitter of order (|a| + |b|) * eps relative, a few hundred
        // ulp for the exponentially tilted tails integrated here. The
        // factor 1024 clears that jitter with margin while staying at the
        // 1e-13 relative scale, below every tolerance callers ask for.
        let roundoff = 1024.0 * f64::EPSILON * (left.abs() + right.abs() + whole.abs());
        if depth == 0
            || delta.abs() <= 15.0 * tol * 1.0f64.max((left + right).abs())
            || delta.abs() <= roundoff
        {
            return left + right + delta / 15.0;
        }
        self.recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + self.recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson integral of f over the finite interval [a, b] with an
/// absolute tolerance. Panics never; a pathological integrand simply exhausts
/// the depth budget and returns the best available estimate.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, tol);
    }
    // Seed with a few panels so a spike between the endpoints is not missed.
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    let mut fa = f(a);
    for i in 0..panels {
        let x0 = a + i as f64 * h;
        let x1 = x0 + h;
        let xm = 0.5 * (x0 + x1);
        let fm = f(xm);
        let fb = f(x1);
        let whole = h / 6.0 * (fa + 4.0 * fm + fb);
        let mut s = Simpson { f: &mut f, evals: 0 };
        // Depth 24 resolves a seed panel down to 6e-8 of its width, far
        // finer than any feature of the analytic integrands in this crate,
        // and caps the damage if an integrand defeats the noise guard.
        total += s.recurse(x0, x1, fa, fm, fb, whole, tol / panels as f64, 24);
        fa = fb;
    }
    total
}

/// Integral of f over [a, infinity) via the substitution t = 1/(1 + r - a),
/// which maps the tail onto (0, 1]. The integrand must decay fast enough
/// that f(r)/t^2 tends to zero; every tail integrated in this crate decays
/// at least exponentially.
pub fn integrate_to_inf(mut f: impl FnMut(f64) -> f64, a: f64, tol: f64) -> f64 {
    let g = move |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let r = a + 1.0 / t - 1.0;
        let v = f(r) / (t * t);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

// --- 1-D optimization and root finding --------------------------------------

/// Golden-section minimization of a unimodal function on [a, b].
/// Returns (argmin, min). A coarse pre-scan narrows the bracket first so a
/// mildly non-unimodal objective still lands in the global basin.
pub fn golden_min(f: impl Fn(f64) -> f64, a: f64, b: f64, xtol: f64) -> (f64, f64) {
    debug_assert!(b >= a);
    // Pre-scan on 65 points to find the best cell.
    let scan: usize = 64;
    let mut best_i: usize = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..=scan {
        let x = a + (b - a) * i as f64 / scan as f64;
        let v = f(x);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let lo = a + (b - a) * best_i.saturating_sub(1) as f64 / scan as f64;
    let hi = a + (b - a) * (best_i.min(scan - 1) + 1) as f64 / scan as f64;
    let (mut lo, mut hi) = (lo, hi.min(b));

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > xtol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (lo + hi);
    (xm, f(xm))
}

/// Bisection root of f on [a, b]. Requires a sign change on the bracket.
pub fn bisect_root(f: impl Fn(f64) -> f64, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut lo, mut hi) = (a, b);
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numeric(format!(
            "bisection bracket [{lo}, {hi}] has no sign change (f: {flo} .. {fhi})"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || hi - lo < xtol {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    if hi - lo < xtol * 4.0 {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::Numeric(format!(
            "bisection on [{a}, {b}] did not reach tolerance {xtol} within {max_iter} iterations"
        )))
    }
}

// --- Nelder-Mead ------------------------------------------------------------

/// Plain Nelder-Mead simplex minimization. Used only for low-dimensional
/// bound optimizations (n <= 4), so no restarts or adaptive parameters.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..iters {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let mut centroid = vec![0.0; n];
        for &i in order.iter().take(n) {
            for k in 0..n {
                centroid[k] += simplex[i][k] / n as f64;
            }
        }

        let reflect: Vec<f64> = (0..n)
            .map(|k| centroid[k] + alpha * (centroid[k] - simplex[worst][k]))
            .collect();
        let fr = f(&reflect);

        if fr < values[best] {
            let expand: Vec<f64> = (0..n)
                .map(|k| centroid[k] + gamma * (reflect[k] - centroid[k]))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[worst] = expand;
                values[worst] = fe;
            } else {
                simplex[worst] = reflect;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = fr;
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|k| centroid[k] + rho * (simplex[worst][k] - centroid[k]))
                .collect();
            let fc = f(&contract);
            if fc < values[worst] {
                simplex[worst] = contract;
                values[worst] = fc;
            } else {
                let best_pt = simplex[best].clone();
                for i in 0..=n {
                    if i == best {
                        continue;
                    }
                    for k in 0..n {
                        simplex[i][k] = best_pt[k] + sigma * (simplex[i][k] - best_pt[k]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_rule_integrates_polynomials_exactly() {
        // A 2n-1 degree polynomial is the classic exactness certificate.
        let exact = 2.0 / 7.0; // integral of x^6 over [-1,1]
        let got = gl_integrate(4, -1.0, 1.0, |x| x.powi(6));
        assert!(
            (got - exact).abs() < 1e-14,
            "4-point rule must integrate x^6 exactly, got {got}"
        );
    }

    #[test]
    fn adaptive_simpson_meets_tolerance_on_smooth_integrand() {
        let got = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((got - 2.0).abs() < 1e-10, "sin integral came out {got}");
    }

    #[test]
    fn tail_substitution_handles_exponential_decay() {
        let got = integrate_to_inf(|x: f64| (-x).exp(), 0.0, 1e-12);
        assert!((got - 1.0).abs() < 1e-9, "exp tail integral came out {got}");
        let shifted = integrate_to_inf(|x: f64| (-x).exp(), 2.0, 1e-12);
        assert!(
            (shifted - (-2.0f64).exp()).abs() < 1e-9,
            "shifted tail came out {shifted}"
        );
    }

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        // Near the minimum the quadratic is flat at double precision:
        // (x - 1.7)^2 drowns below eps * 3 within about 2.6e-8 of the
        // argmin, so locating it tighter than that is not possible.
        let (x, v) = golden_min(|x| (x - 1.7).powi(2) + 3.0, -5.0, 5.0, 1e-10);
        assert!((x - 1.7).abs() < 1e-7, "argmin came out {x}");
        assert!((v - 3.0).abs() < 1e-12, "min value came out {v}");
    }

    #[test]
    fn bisection_requires_bracket_and_converges() {
        let r = bisect_root(|x| x * x - 2.0, 0.0, 2.0, 1e-12, 200).unwrap();
        assert!((r - 2.0f64.sqrt()).abs() < 1e-10);
        assert!(bisect_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 200).is_err());
    }

    #[test]
    fn nelder_mead_minimizes_rosenbrock_nearby() {
        let f = |v: &[f64]| (1.0 - v[0]).powi(2) + 100.0 * (v[1] - v[0] * v[0]).powi(2);
        let (x, _) = nelder_mead(f, &[0.5, 0.5], 0.2, 4000);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4, "got {x:?}");
    }
}
