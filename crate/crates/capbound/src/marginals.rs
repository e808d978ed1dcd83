//! Per-slot capacity distributions.
//!
//! The instantaneous capacity of a flat Rayleigh-fading channel with mean
//! SNR `gamma` is `C = log2(1 + gamma * |h|^2)` with `|h|^2` unit-mean
//! exponential, which gives the closed forms
//!
//! ```text
//! F(r) = 1 - exp(-(2^r - 1)/gamma)          r >= 0
//! f(r) = (ln 2 / gamma) 2^r exp(-(2^r - 1)/gamma)
//! F^{-1}(p) = log2(1 - gamma ln(1 - p))
//! ```
//!
//! Rates are in bits per channel use throughout the crate; the transform
//! module owns the conversion to nats where a transform wants it.
//!
//! Measured channels come in as tabulated CDFs (two-column CSV), evaluated
//! by linear interpolation with clamping beyond the grid.

use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric;

/// Absolute tolerance for survival-function integrals.
const SURVIVAL_INTEGRAL_TOL: f64 = 1e-10;
/// Absolute tolerance for moment integrals.
const MOMENT_TOL: f64 = 1e-8;

/// A per-slot capacity distribution on the nonnegative rates.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    /// Rayleigh fading with mean SNR `gamma` (linear scale, not dB).
    Rayleigh { gamma: f64 },
    /// Piecewise-linear CDF through `(rate, probability)` knots.
    Tabulated { xs: Vec<f64>, ps: Vec<f64> },
}

impl Marginal {
    pub fn rayleigh(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "mean SNR must be positive and finite, got {gamma}"
            )));
        }
        Ok(Marginal::Rayleigh { gamma })
    }

    /// Build a tabulated marginal from `(rate, cdf)` knots.
    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain(format!(
                "tabulated CDF needs at least 2 knots, got {}",
                points.len()
            )));
        }
        for (i, &(x, p)) in points.iter().enumerate() {
            if !x.is_finite() || !p.is_finite() {
                return Err(Error::Domain(format!("non-finite knot at index {i}")));
            }
            if x < 0.0 {
                return Err(Error::Domain(format!(
                    "rates must be nonnegative, knot {i} has rate {x}"
                )));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!(
                    "CDF values must lie in [0, 1], knot {i} has {p}"
                )));
            }
            if i > 0 {
                if x <= points[i - 1].0 {
                    return Err(Error::Domain(format!(
                        "rates must be strictly increasing, knot {i} has {x} after {}",
                        points[i - 1].0
                    )));
                }
                if p < points[i - 1].1 {
                    return Err(Error::Domain(format!(
                        "CDF must be nondecreasing, knot {i} has {p} after {}",
                        points[i - 1].1
                    )));
                }
            }
        }
        let (xs, ps) = points.into_iter().unzip();
        Ok(Marginal::Tabulated { xs, ps })
    }

    /// Load a tabulated marginal from two-column CSV: a header row, then
    /// `rate,cdf` rows. Errors carry 1-based line numbers.
    pub fn from_csv_reader(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let mut points = Vec::new();
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let header = match lines.next() {
            Some((_, h)) => h?,
            None => return Err(parse_err(1, "empty file, expected a header row".into())),
        };
        if header.split(',').count() != 2 {
            return Err(parse_err(1, format!("expected two columns, got {header:?}")));
        }
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let (a, b) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), None) => (a, b),
                _ => return Err(parse_err(lineno, format!("expected two fields, got {line:?}"))),
            };
            let x: f64 = a
                .trim()
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad rate {a:?}: {e}")))?;
            let p: f64 = b
                .trim()
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad CDF value {b:?}: {e}")))?;
            points.push((x, p));
        }
        Marginal::tabulated(points).map_err(|e| match e {
            Error::Domain(msg) => Error::Parse {
                path: origin.to_path_buf(),
                line: 0,
                msg,
            },
            other => other,
        })
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file), path)
    }

    /// P(C <= r).
    pub fn cdf(&self, r: f64) -> f64 {
        match self {
            Marginal::Rayleigh { gamma } => {
                if r <= 0.0 {
                    0.0
                } else {
                    // expm1 keeps precision for small rates.
                    -(-(r * std::f64::consts::LN_2).exp_m1() / gamma).exp_m1()
                }
            }
            Marginal::Tabulated { xs, ps } => interp_clamped(xs, ps, r),
        }
    }

    /// P(C > r). Exact complement for Rayleigh, 1 - cdf for tables.
    pub fn survival(&self, r: f64) -> f64 {
        match self {
            Marginal::Rayleigh { gamma } => {
                if r <= 0.0 {
                    1.0
                } else {
                    (-(r * std::f64::consts::LN_2).exp_m1() / gamma).exp()
                }
            }
            Marginal::Tabulated { .. } => 1.0 - self.cdf(r),
        }
    }

    /// Smallest rate r with cdf(r) >= p. Defined for p in [0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("quantile level must be in [0, 1), got {p}")));
        }
        match self {
            Marginal::Rayleigh { gamma } => Ok((1.0 - gamma * (-p).ln_1p()).log2()),
            Marginal::Tabulated { xs, ps } => {
                if p <= ps[0] {
                    return Ok(xs[0]);
                }
                let last = *ps.last().unwrap();
                if p > last {
                    return Err(Error::Domain(format!(
                        "quantile level {p} exceeds the tabulated CDF range (max {last})"
                    )));
                }
                let i = match ps.binary_search_by(|v| v.total_cmp(&p)) {
                    Ok(i) => return Ok(xs[i]),
                    Err(i) => i, // first index with ps[i] > p
                };
                let (p0, p1) = (ps[i - 1], ps[i]);
                let (x0, x1) = (xs[i - 1], xs[i]);
                Ok(x0 + (p - p0) / (p1 - p0) * (x1 - x0))
            }
        }
    }

    /// Density at r. For tabulated CDFs this is the derivative of the linear
    /// interpolant: segment slope inside a segment, averaged at the knots.
    pub fn pdf(&self, r: f64) -> f64 {
        match self {
            Marginal::Rayleigh { gamma } => {
                if r < 0.0 {
                    0.0
                } else {
                    let two_r = (r * std::f64::consts::LN_2).exp();
                    std::f64::consts::LN_2 / gamma * two_r * ((-(two_r - 1.0)) / gamma).exp()
                }
            }
            Marginal::Tabulated { xs, ps } => {
                if r < xs[0] || r > *xs.last().unwrap() {
                    return 0.0;
                }
                let slope = |i: usize| (ps[i + 1] - ps[i]) / (xs[i + 1] - xs[i]);
                match xs.binary_search_by(|v| v.total_cmp(&r)) {
                    Ok(0) => slope(0),
                    Ok(i) if i == xs.len() - 1 => slope(i - 1),
                    Ok(i) => 0.5 * (slope(i - 1) + slope(i)),
                    Err(i) => slope(i - 1),
                }
            }
        }
    }

    /// Integral of the survival function over [a, b]; pass f64::INFINITY for
    /// an unbounded upper limit (mapped through u = 1/(1+r), the tail decays
    /// at least exponentially for every supported marginal).
    pub fn survival_integral(&self, a: f64, b: f64) -> Result<f64> {
        if a.is_nan() || b.is_nan() || b < a {
            return Err(Error::Domain(format!("bad survival integral limits [{a}, {b}]")));
        }
        if b.is_infinite() {
            if let Marginal::Tabulated { ps, xs } = self {
                let tail = 1.0 - ps.last().unwrap();
                if tail > 1e-9 {
                    return Err(Error::Domain(format!(
                        "tabulated CDF tops out at {} (rate {}), its survival integral \
                         to infinity diverges",
                        ps.last().unwrap(),
                        xs.last().unwrap()
                    )));
                }
            }
            // Split at the largest finite knot / unit scale so the mapped
            // tail integrand stays smooth.
            let split = match self {
                Marginal::Rayleigh { gamma } => (a + 1.0).max(gamma.log2().max(1.0)),
                Marginal::Tabulated { xs, .. } => *xs.last().unwrap(),
            };
            let head = if split > a {
                numeric::integrate(|r| self.survival(r), a, split, SURVIVAL_INTEGRAL_TOL)
            } else {
                0.0
            };
            let tail = numeric::integrate_to_inf(
                |r| self.survival(r),
                split.max(a),
                SURVIVAL_INTEGRAL_TOL,
            );
            Ok(head + tail)
        } else {
            Ok(numeric::integrate(|r| self.survival(r), a, b, SURVIVAL_INTEGRAL_TOL))
        }
    }

    /// Mean and variance. Computed from survival-function integrals, which
    /// behave for tabulated CDFs with atoms as well as for closed forms:
    /// E[C] = int survival, E[C^2] = int 2 r survival(r) dr.
    pub fn moments(&self) -> Result<(f64, f64)> {
        let mean = self.survival_integral(0.0, f64::INFINITY)?;
        let ex2 = match self {
            Marginal::Rayleigh { .. } => {
                let split = self.quantile(0.999999)?.max(1.0);
                numeric::integrate(|r| 2.0 * r * self.survival(r), 0.0, split, MOMENT_TOL)
                    + numeric::integrate_to_inf(|r| 2.0 * r * self.survival(r), split, MOMENT_TOL)
            }
            Marginal::Tabulated { xs, ps } => {
                let tail = 1.0 - ps.last().unwrap();
                if tail > 1e-9 {
                    return Err(Error::Domain(
                        "tabulated CDF does not reach 1, moments diverge".into(),
                    ));
                }
                numeric::integrate(
                    |r| 2.0 * r * self.survival(r),
                    0.0,
                    *xs.last().unwrap(),
                    MOMENT_TOL,
                )
            }
        };
        Ok((mean, ex2 - mean * mean))
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(self.moments()?.0)
    }
}

fn interp_clamped(xs: &[f64], ps: &[f64], r: f64) -> f64 {
    if r <= xs[0] {
        return ps[0];
    }
    if r >= *xs.last().unwrap() {
        return *ps.last().unwrap();
    }
    let i = xs.partition_point(|&x| x < r);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let (p0, p1) = (ps[i - 1], ps[i]);
    p0 + (r - x0) / (x1 - x0) * (p1 - p0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Frozen reference values, computed independently with 25-digit
    // arithmetic. Identities noted next to each.
    const F_AT_1: f64 = 0.632_120_558_828_557_67; // 1 - 1/e
    const MEDIAN: f64 = 0.759_707_388_138_908_59; // log2(1 + ln 2)
    const PDF_AT_1: f64 = 0.509_989_194_867_907_06; // 2 ln2 / e
    const MEAN: f64 = 0.860_347_382_270_886_81; // e E1(1) / ln 2
    const VARIANCE: f64 = 0.366_946_586_674_971_82; // 2 int r S(r) dr - mean^2
    const MEAN_SNR2: f64 = 1.331_478_592_667_974_6; // survival integral, gamma = 2

    fn ray(gamma: f64) -> Marginal {
        Marginal::rayleigh(gamma).unwrap()
    }

    #[test]
    fn rayleigh_closed_forms_hit_reference_values() {
        let m = ray(1.0);
        assert!((m.cdf(1.0) - F_AT_1).abs() < 1e-15, "F(1) = {}", m.cdf(1.0));
        assert!(
            (m.quantile(0.5).unwrap() - MEDIAN).abs() < 1e-15,
            "median = {}",
            m.quantile(0.5).unwrap()
        );
        assert!(
            (m.pdf(0.0) - std::f64::consts::LN_2).abs() < 1e-15,
            "density at the origin is ln 2 when gamma = 1"
        );
        assert!((m.pdf(1.0) - PDF_AT_1).abs() < 1e-15, "f(1) = {}", m.pdf(1.0));
    }

    #[test]
    fn cdf_survival_sum_to_one() {
        let m = ray(0.7);
        for r in [0.01, 0.5, 1.0, 3.0, 7.0] {
            let s = m.cdf(r) + m.survival(r);
            assert!((s - 1.0).abs() < 1e-15, "F + Fbar = {s} at r = {r}");
        }
    }

    #[test]
    fn quantile_round_trips_through_cdf() {
        for gamma in [0.5, 1.0, 4.0] {
            let m = ray(gamma);
            for k in 1..100 {
                let p = k as f64 / 100.0;
                let r = m.quantile(p).unwrap();
                assert!(
                    (m.cdf(r) - p).abs() < 1e-12,
                    "round trip off at gamma={gamma}, p={p}: cdf(q) = {}",
                    m.cdf(r)
                );
            }
        }
    }

    #[test]
    fn quantile_rejects_out_of_range_levels() {
        let m = ray(1.0);
        assert!(m.quantile(1.0).is_err());
        assert!(m.quantile(-0.1).is_err());
        assert!(m.quantile(0.0).unwrap() == 0.0);
    }

    #[test]
    fn moments_match_special_function_identities() {
        let (mean, var) = ray(1.0).moments().unwrap();
        assert!((mean - MEAN).abs() < 1e-8, "mean = {mean}");
        assert!((var - VARIANCE).abs() < 1e-8, "variance = {var}");
        let mean2 = ray(2.0).mean().unwrap();
        assert!((mean2 - MEAN_SNR2).abs() < 1e-8, "mean at gamma=2 = {mean2}");
    }

    #[test]
    fn survival_integral_is_additive_and_consistent_with_mean() {
        let m = ray(1.0);
        let head = m.survival_integral(0.0, 1.0).unwrap();
        let tail = m.survival_integral(1.0, f64::INFINITY).unwrap();
        assert!(
            (head + tail - MEAN).abs() < 1e-9,
            "split survival integral = {}",
            head + tail
        );
    }

    #[test]
    fn pdf_integrates_back_to_cdf() {
        let m = ray(1.3);
        for r in [0.4, 1.0, 2.5] {
            let mass = numeric::integrate(|x| m.pdf(x), 0.0, r, 1e-10);
            assert!(
                (mass - m.cdf(r)).abs() < 1e-7,
                "pdf mass up to {r} is {mass}, cdf is {}",
                m.cdf(r)
            );
        }
    }

    #[test]
    fn tabulated_interpolates_and_inverts() {
        let t = Marginal::tabulated(vec![(0.0, 0.0), (1.0, 0.25), (2.0, 0.75), (4.0, 1.0)]).unwrap();
        assert_eq!(t.cdf(0.5), 0.125);
        assert_eq!(t.cdf(-1.0), 0.0);
        assert_eq!(t.cdf(9.0), 1.0);
        assert_eq!(t.quantile(0.5).unwrap(), 1.5);
        assert_eq!(t.pdf(0.5), 0.25);
        assert_eq!(t.pdf(1.0), 0.375, "knot density is the mean of both slopes");
        let (mean, _) = t.moments().unwrap();
        // Piecewise-linear CDF means uniform mass on each segment.
        let expected = 0.25 * 0.5 + 0.5 * 1.5 + 0.25 * 3.0;
        assert!((mean - expected).abs() < 1e-8, "tabulated mean = {mean}");
    }

    #[test]
    fn tabulated_rejects_bad_grids() {
        assert!(Marginal::tabulated(vec![(0.0, 0.0)]).is_err(), "too short");
        assert!(
            Marginal::tabulated(vec![(0.0, 0.0), (0.0, 0.5)]).is_err(),
            "rates must strictly increase"
        );
        assert!(
            Marginal::tabulated(vec![(0.0, 0.5), (1.0, 0.2)]).is_err(),
            "cdf must not decrease"
        );
        assert!(
            Marginal::tabulated(vec![(0.0, 0.0), (1.0, 1.5)]).is_err(),
            "cdf must stay within [0,1]"
        );
        assert!(
            Marginal::tabulated(vec![(-1.0, 0.0), (1.0, 1.0)]).is_err(),
            "rates must be nonnegative"
        );
    }

    #[test]
    fn csv_loader_reports_line_numbers() {
        use std::io::Cursor;
        let good = "r,F\n0.0,0.0\n1.0,0.5\n2.0,1.0\n";
        let m = Marginal::from_csv_reader(Cursor::new(good), Path::new("mem")).unwrap();
        assert_eq!(m.quantile(0.25).unwrap(), 0.5);

        let bad = "r,F\n0.0,0.0\n1.0,zzz\n";
        match Marginal::from_csv_reader(Cursor::new(bad), Path::new("mem")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error with line number, got {other:?}"),
        }
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(Marginal::rayleigh(0.0).is_err());
        assert!(Marginal::rayleigh(-2.0).is_err());
        assert!(Marginal::rayleigh(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn prop_cdf_is_monotone(gamma in 0.2f64..8.0, a in 0.0f64..6.0, d in 0.0f64..3.0) {
            let m = ray(gamma);
            prop_assert!(m.cdf(a) <= m.cdf(a + d) + 1e-15);
        }

        #[test]
        fn prop_quantile_round_trip(gamma in 0.2f64..8.0, p in 0.001f64..0.999) {
            let m = ray(gamma);
            let r = m.quantile(p).unwrap();
            prop_assert!((m.cdf(r) - p).abs() < 1e-9);
        }
    }
}
