//! Command-line front end.
//!
//! Every subcommand reads its inputs (flags, an optional TOML scenario
//! config, CSV tables, model text files), writes one CSV artifact to the
//! path given by `--out`, and prints a one-line summary to stdout. Exit
//! codes separate the failure classes for scripting:
//!
//! ```text
//! 0   success
//! 1   input problems: bad flags, malformed files, violated preconditions
//! 2   numeric or capability problems: no convergence, unsupported request
//! ```
//!
//! CSV artifacts are UTF-8 with LF line endings, a header row, and floats
//! printed with 17 significant digits so a re-parse reproduces every bit.
//! Identical command lines, configs, and seeds produce byte-identical
//! artifacts.
//!
//! ```text
//! command              artifact columns
//! -------------------  -----------------------------------------------
//! marginal             r, cdf, pdf, survival
//! cdf-bounds           x, lower, upper, method
//! dual                 s, tail_lower, tail_upper, cdf_lower, cdf_upper
//! exact                x, cdf, route
//! simulate             x, p_hat, stderr, statistic_name
//! verify               x, p_hat, lower, upper, stderr   (violations)
//! extremes             x, max_cdf_lower, min_cdf_upper
//! map-lundberg         u, lundberg, refined_lower, refined_upper
//! mgf                  theta, iid, lower, upper
//! mellin               v, iid, lower, upper
//! effective-capacity   theta, lower, iid, upper
//! service-curve        tau, beta_lower, beta_upper
//! ```

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::copulas::DependenceSpec;
use crate::cumulative::{
    cdf_iid_clt, cdf_iid_convolution, dual_lower_bound_homogeneous,
    dual_upper_bound_homogeneous, exact_cdf_comonotonic, exact_cdf_copula_integral,
    standard_bounds, standard_bounds_equal_split,
};
use crate::error::{Error, Result};
use crate::extremes::{max_cdf_lower_bound_nongranger, min_cdf_upper_bound_nongranger};
use crate::marginals::Marginal;
use crate::markov_additive::MapModel;
use crate::simulate;
use crate::transforms::{
    effective_capacity, equal_split_pair, mellin_bounds_dependent, mellin_iid_rayleigh,
    mgf_bounds_dependent, mgf_iid, sssc_rayleigh_dependent, EffectiveCapacityMode,
};

/// Capacity-accumulation bounds and transforms for fading channels.
#[derive(Parser, Debug)]
#[command(name = "capbound", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate a marginal law (cdf, density, survival) and its moments.
    Marginal(MarginalArgs),
    /// Dependence-free lower/upper bounds on the cdf of the cumulative sum.
    CdfBounds(CdfBoundsArgs),
    /// Homogeneous dual bounds on the tail of the cumulative sum.
    Dual(DualArgs),
    /// Exact or asymptotic cdf of the cumulative sum by a chosen route.
    Exact(ExactArgs),
    /// Seeded Monte Carlo for cumulative capacity and its window extremes.
    Simulate(SimulateArgs),
    /// Simulate, then check the empirical cdf against analytic bounds.
    Verify(VerifyArgs),
    /// Copula bounds on the running maximum and minimum of the sum.
    Extremes(ExtremesArgs),
    /// Light-tail decay rates and prefactor bounds for a Markov gain model.
    MapLundberg(MapLundbergArgs),
    /// Laplace transform of the sum: exact i.i.d. plus dependence envelopes.
    Mgf(MgfArgs),
    /// Mellin transform of the accumulated gain 2^S with envelopes.
    Mellin(MellinArgs),
    /// Long-run guaranteed rate under an exponential QoS exponent.
    EffectiveCapacity(EffectiveCapacityArgs),
    /// Per-horizon guaranteed-service curves at a fixed violation level.
    ServiceCurve(ServiceCurveArgs),
}

/// Where the marginal law comes from: a scenario config or a direct SNR.
#[derive(Args, Debug)]
pub struct Source {
    /// Scenario config file (TOML sections [marginal], [dependence], [run]).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rayleigh mean SNR shortcut; mutually exclusive with --config.
    #[arg(long)]
    pub gamma: Option<f64>,
}

impl Source {
    fn load(&self) -> Result<(Marginal, Option<RunConfig>)> {
        match (&self.config, self.gamma) {
            (Some(_), Some(_)) => Err(Error::Domain(
                "--config and --gamma are mutually exclusive; pick one source".into(),
            )),
            (Some(path), None) => {
                let cfg = RunConfig::from_path(path)?;
                Ok((cfg.marginal.clone(), Some(cfg)))
            }
            (None, Some(g)) => Ok((Marginal::rayleigh(g)?, None)),
            (None, None) => Err(Error::Domain(
                "provide a marginal via --config FILE or --gamma SNR".into(),
            )),
        }
    }
}

#[derive(Args, Debug)]
pub struct MarginalArgs {
    #[command(flatten)]
    pub source: Source,
    /// Evaluation grid start:end:count; defaults to the body of the law.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = "capbound-marginal.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CdfBoundsArgs {
    #[command(flatten)]
    pub source: Source,
    /// Horizon tau in slots; defaults to [run] t from the config.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Evaluation grid start:end:count; defaults to the bound's active range.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, value_enum, default_value_t = BoundMethodArg::EqualSplit)]
    pub method: BoundMethodArg,
    #[arg(long, default_value = "capbound-cdf-bounds.csv")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundMethodArg {
    /// Closed-form bounds from the equal split of the threshold.
    EqualSplit,
    /// Split optimized over the whole threshold hyperplane (slower).
    Standard,
}

#[derive(Args, Debug)]
pub struct DualArgs {
    #[command(flatten)]
    pub source: Source,
    /// Number of identically distributed slots (n >= 2).
    #[arg(long)]
    pub n: usize,
    /// Evaluation grid start:end:count over thresholds s > 0.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = "capbound-dual.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExactArgs {
    #[command(flatten)]
    pub source: Source,
    /// Horizon tau in slots; defaults to [run] t from the config.
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long, value_enum, default_value_t = RouteArg::Auto)]
    pub route: RouteArg,
    /// Evaluation grid start:end:count.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = "capbound-exact.csv")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RouteArg {
    /// Pick from the config dependence: comonotonic, convolution, or copula.
    Auto,
    /// Closed form F(x / tau) for one shared fading state.
    Comonotonic,
    /// FFT convolution of independent slots.
    Convolution,
    /// Normal approximation of independent slots.
    Clt,
    /// Low-dimensional integration of the configured copula density.
    Copula,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario config file; the dependence structure comes from here.
    #[arg(long)]
    pub config: PathBuf,
    /// Override [run] samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Override [run] seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "capbound-simulate.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Scenario config file; the dependence structure comes from here.
    #[arg(long)]
    pub config: PathBuf,
    /// Override [run] samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Override [run] seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Binomial standard errors of slack granted per grid point.
    #[arg(long, default_value_t = 3.0)]
    pub sigmas: f64,
    /// Knots per saturation region of the analytic bound curves.
    #[arg(long, default_value_t = 600)]
    pub per_side: usize,
    #[arg(long, default_value = "capbound-verify.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExtremesArgs {
    /// Scenario config file; needs [dependence] and [run] t.
    #[arg(long)]
    pub config: PathBuf,
    /// Evaluation grid start:end:count.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = "capbound-extremes.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MapLundbergArgs {
    /// Markov gain model text file.
    #[arg(long)]
    pub model: PathBuf,
    /// Subtract this reference rate from every increment first.
    #[arg(long)]
    pub ref_rate: Option<f64>,
    /// Level grid start:end:count for the exceedance bounds.
    #[arg(long, default_value = "0:8:81")]
    pub u_grid: String,
    #[arg(long, default_value = "capbound-map-lundberg.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MgfArgs {
    #[command(flatten)]
    pub source: Source,
    /// Horizon tau in slots; defaults to [run] t from the config.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Exponent grid start:end:count over theta >= 0.
    #[arg(long, default_value = "0:4:41")]
    pub theta_grid: String,
    /// Knots per saturation region of the envelope curves.
    #[arg(long, default_value_t = 2500)]
    pub per_side: usize,
    #[arg(long, default_value = "capbound-mgf.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MellinArgs {
    /// Rayleigh mean SNR.
    #[arg(long)]
    pub gamma: f64,
    /// Horizon tau in slots.
    #[arg(long)]
    pub tau: usize,
    /// Order grid start:end:count over v < 1, where the envelopes hold.
    #[arg(long, default_value = "-2:0.9:59")]
    pub v_grid: String,
    #[arg(long, default_value = "capbound-mellin.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EffectiveCapacityArgs {
    #[command(flatten)]
    pub source: Source,
    /// QoS exponent grid start:end:count over theta > 0.
    #[arg(long, default_value = "0.25:4:16")]
    pub theta_grid: String,
    /// Largest horizon the dependence envelopes are pushed to.
    #[arg(long, default_value_t = 256)]
    pub tau_limit: usize,
    #[arg(long, default_value = "capbound-effective-capacity.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServiceCurveArgs {
    /// Rayleigh mean SNR.
    #[arg(long)]
    pub gamma: f64,
    /// Violation probability epsilon in (0, 1).
    #[arg(long)]
    pub eps: f64,
    /// Emit one row per horizon tau = 1 ..= tau-max.
    #[arg(long, default_value_t = 64)]
    pub tau_max: usize,
    #[arg(long, default_value = "capbound-service-curve.csv")]
    pub out: PathBuf,
}

/// Entry point for the binary: parse the process arguments, dispatch, and
/// map the outcome onto the documented exit codes. Never panics on input.
pub fn main_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("capbound: {e}");
            e.exit_code()
        }
    }
}

/// Run one subcommand to completion: write its CSV artifact and return the
/// one-line summary.
pub fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::Marginal(a) => cmd_marginal(a),
        Command::CdfBounds(a) => cmd_cdf_bounds(a),
        Command::Dual(a) => cmd_dual(a),
        Command::Exact(a) => cmd_exact(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Extremes(a) => cmd_extremes(a),
        Command::MapLundberg(a) => cmd_map_lundberg(a),
        Command::Mgf(a) => cmd_mgf(a),
        Command::Mellin(a) => cmd_mellin(a),
        Command::EffectiveCapacity(a) => cmd_effective_capacity(a),
        Command::ServiceCurve(a) => cmd_service_curve(a),
    }
}

fn cmd_marginal(a: MarginalArgs) -> Result<String> {
    let (m, _) = a.source.load()?;
    let grid = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => linspace(0.0, m.quantile(0.999)?, 201),
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &r in &grid {
        rows.push(format!(
            "{},{},{},{}",
            fmtf(r),
            fmtf(m.cdf(r)),
            fmtf(m.pdf(r)),
            fmtf(m.survival(r))
        ));
    }
    let (mean, var) = m.moments()?;
    write_csv(&a.out, "r,cdf,pdf,survival", &rows)?;
    Ok(format!(
        "marginal: mean={mean:.6} variance={var:.6} rows={} -> {}",
        rows.len(),
        a.out.display()
    ))
}

fn cmd_cdf_bounds(a: CdfBoundsArgs) -> Result<String> {
    let (m, cfg) = a.source.load()?;
    let tau = tau_of(a.tau, &cfg)?;
    let grid = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => auto_sum_grid(&m, tau, 201)?,
    };
    let label = match a.method {
        BoundMethodArg::EqualSplit => "standard-equal-split",
        BoundMethodArg::Standard => "standard-hyperplane",
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &x in &grid {
        let (lower, upper) = match a.method {
            BoundMethodArg::EqualSplit => standard_bounds_equal_split(&m, tau, x)?,
            BoundMethodArg::Standard => {
                if x <= 0.0 {
                    // The split hyperplane degenerates to a point at the
                    // origin, where it coincides with the equal split.
                    standard_bounds_equal_split(&m, tau, x)?
                } else {
                    let b = standard_bounds(&vec![m.clone(); tau], x)?;
                    (b.lower, b.upper)
                }
            }
        };
        rows.push(format!(
            "{},{},{},{label}",
            fmtf(x),
            fmtf(lower),
            fmtf(upper)
        ));
    }
    write_csv(&a.out, "x,lower,upper,method", &rows)?;
    Ok(format!(
        "cdf-bounds: tau={tau} method={label} rows={} -> {}",
        rows.len(),
        a.out.display()
    ))
}

fn cmd_dual(a: DualArgs) -> Result<String> {
    let (m, _) = a.source.load()?;
    if a.n < 2 {
        return Err(Error::Domain(format!(
            "dual bounds need n >= 2 slots, got {}",
            a.n
        )));
    }
    let grid = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => {
            let hi = a.n as f64 * m.quantile(1.0 - 1.0 / (8.0 * a.n as f64))?;
            let lo = hi / 201.0;
            linspace(lo, hi, 201)
        }
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &s in &grid {
        let upper = dual_upper_bound_homogeneous(&m, a.n, s)?;
        let lower = dual_lower_bound_homogeneous(&m, a.n, s)?;
        rows.push(format!(
            "{},{},{},{},{}",
            fmtf(s),
            fmtf(lower),
            fmtf(upper),
            fmtf((1.0 - upper).max(0.0)),
            fmtf((1.0 - lower).min(1.0))
        ));
    }
    write_csv(&a.out, "s,tail_lower,tail_upper,cdf_lower,cdf_upper", &rows)?;
    Ok(format!(
        "dual: n={} rows={} -> {}",
        a.n,
        rows.len(),
        a.out.display()
    ))
}

fn cmd_exact(a: ExactArgs) -> Result<String> {
    let (m, cfg) = a.source.load()?;
    let tau = tau_of(a.tau, &cfg)?;
    let route = match a.route {
        RouteArg::Auto => match cfg.as_ref().map(|c| &c.dependence) {
            Some(DependenceSpec::Comonotonic) => RouteArg::Comonotonic,
            Some(DependenceSpec::Markov { .. }) => RouteArg::Copula,
            Some(DependenceSpec::Independent) | None => RouteArg::Convolution,
        },
        r => r,
    };
    let grid = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => auto_sum_grid(&m, tau, 201)?,
    };
    let (label, values): (&str, Vec<f64>) = match route {
        RouteArg::Comonotonic => (
            "comonotonic",
            grid.iter()
                .map(|&x| exact_cdf_comonotonic(&m, tau, x))
                .collect::<Result<_>>()?,
        ),
        RouteArg::Convolution => {
            let curve = cdf_iid_convolution(&m, tau, 4096)?;
            ("convolution", grid.iter().map(|&x| curve.eval(x)).collect())
        }
        RouteArg::Clt => (
            "clt",
            grid.iter()
                .map(|&x| cdf_iid_clt(&m, tau, x))
                .collect::<Result<_>>()?,
        ),
        RouteArg::Copula => {
            let cfg = cfg.as_ref().ok_or_else(|| {
                Error::Domain("the copula route needs --config for the dependence".into())
            })?;
            let ms = vec![m.clone(); tau];
            (
                "copula",
                grid.iter()
                    .map(|&x| exact_cdf_copula_integral(&cfg.dependence, &ms, x))
                    .collect::<Result<_>>()?,
            )
        }
        RouteArg::Auto => unreachable!("auto resolved above"),
    };
    let rows: Vec<String> = grid
        .iter()
        .zip(&values)
        .map(|(&x, &p)| format!("{},{},{label}", fmtf(x), fmtf(p)))
        .collect();
    write_csv(&a.out, "x,cdf,route", &rows)?;
    Ok(format!(
        "exact: tau={tau} route={label} rows={} -> {}",
        rows.len(),
        a.out.display()
    ))
}

fn cmd_simulate(a: SimulateArgs) -> Result<String> {
    let cfg = RunConfig::from_path(&a.config)?;
    let scn = cfg.scenario()?;
    let samples = a.samples.unwrap_or(cfg.samples);
    let seed = a.seed.unwrap_or(cfg.seed);
    let sim = simulate::run(&scn, samples, seed)?;
    std::fs::write(&a.out, sim.to_csv())?;
    Ok(format!(
        "simulate: label={:?} t={} samples={samples} seed={seed} statistics={} -> {}",
        sim.label,
        sim.horizon,
        sim.statistics.len(),
        a.out.display()
    ))
}

fn cmd_verify(a: VerifyArgs) -> Result<String> {
    let cfg = RunConfig::from_path(&a.config)?;
    let scn = cfg.scenario()?;
    let samples = a.samples.unwrap_or(cfg.samples);
    let seed = a.seed.unwrap_or(cfg.seed);
    let pair = equal_split_pair(&cfg.marginal, cfg.t, a.per_side)?;
    let sim = simulate::run(&scn, samples, seed)?;
    let report = simulate::verify_bounds(&sim, &pair, a.sigmas)?;
    let rows: Vec<String> = report
        .violations
        .iter()
        .map(|v| {
            format!(
                "{},{},{},{},{}",
                fmtf(v.x),
                fmtf(v.p_hat),
                fmtf(v.lower),
                fmtf(v.upper),
                fmtf(v.stderr)
            )
        })
        .collect();
    write_csv(&a.out, "x,p_hat,lower,upper,stderr", &rows)?;
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    Ok(format!(
        "verify: {verdict} checked={} violations={} sigmas={} samples={samples} seed={seed} -> {}",
        report.checked,
        report.violations.len(),
        report.sigmas,
        a.out.display()
    ))
}

fn cmd_extremes(a: ExtremesArgs) -> Result<String> {
    let cfg = RunConfig::from_path(&a.config)?;
    let m = &cfg.marginal;
    let t = cfg.t;
    let grid = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => auto_sum_grid(m, t, 101)?,
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &x in &grid {
        let max_lower = max_cdf_lower_bound_nongranger(&cfg.dependence, m, t, x)?;
        let min_upper = min_cdf_upper_bound_nongranger(&cfg.dependence, m, t, x)?;
        rows.push(format!(
            "{},{},{}",
            fmtf(x),
            fmtf(max_lower),
            fmtf(min_upper)
        ));
    }
    write_csv(&a.out, "x,max_cdf_lower,min_cdf_upper", &rows)?;
    Ok(format!(
        "extremes: t={t} rows={} -> {}",
        rows.len(),
        a.out.display()
    ))
}

fn cmd_map_lundberg(a: MapLundbergArgs) -> Result<String> {
    let mut model = MapModel::from_text_path(&a.model)?;
    if let Some(c) = a.ref_rate {
        model = model.with_reference_rate(c)?;
    }
    let drift = model.mean_drift()?;
    let grid = parse_grid(&a.u_grid)?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut theta_star = f64::NAN;
    for &u in &grid {
        let b = model.sup_tail_bounds(u)?;
        theta_star = b.theta_star;
        rows.push(format!(
            "{},{},{},{}",
            fmtf(u),
            fmtf(b.mixed_lundberg),
            fmtf(b.mixed_refined_lower),
            fmtf(b.mixed_refined_upper)
        ));
    }
    write_csv(&a.out, "u,lundberg,refined_lower,refined_upper", &rows)?;
    Ok(format!(
        "map-lundberg: states={} drift={drift:.6} theta_star={theta_star:.6} rows={} -> {}",
        model.n_states(),
        rows.len(),
        a.out.display()
    ))
}

fn cmd_mgf(a: MgfArgs) -> Result<String> {
    let (m, cfg) = a.source.load()?;
    let tau = tau_of(a.tau, &cfg)?;
    let thetas = parse_grid(&a.theta_grid)?;
    let pair = equal_split_pair(&m, tau, a.per_side)?;
    let mut rows = Vec::with_capacity(thetas.len());
    for &theta in &thetas {
        let iid = mgf_iid(&m, tau, theta)?;
        let (lower, upper) = mgf_bounds_dependent(&pair, theta)?;
        rows.push(format!(
            "{},{},{},{}",
            fmtf(theta),
            fmtf(iid),
            fmtf(lower),
            fmtf(upper)
        ));
    }
    write_csv(&a.out, "theta,iid,lower,upper", &rows)?;
    Ok(format!(
        "mgf: tau={tau} rows={} -> {}",
        rows.len(),
        a.out.display()
    ))
}

fn cmd_mellin(a: MellinArgs) -> Result<String> {
    let vs = parse_grid(&a.v_grid)?;
    let mut rows = Vec::with_capacity(vs.len());
    for &v in &vs {
        let iid = mellin_iid_rayleigh(a.gamma, a.tau, v)?;
        let (lower, upper) = mellin_bounds_dependent(a.gamma, a.tau, v)?;
        rows.push(format!(
            "{},{},{},{}",
            fmtf(v),
            fmtf(iid),
            fmtf(lower),
            fmtf(upper)
        ));
    }
    write_csv(&a.out, "v,iid,lower,upper", &rows)?;
    Ok(format!(
        "mellin: gamma={} tau={} rows={} -> {}",
        a.gamma,
        a.tau,
        rows.len(),
        a.out.display()
    ))
}

fn cmd_effective_capacity(a: EffectiveCapacityArgs) -> Result<String> {
    let (m, _) = a.source.load()?;
    let thetas = parse_grid(&a.theta_grid)?;
    let mut rows = Vec::with_capacity(thetas.len());
    for &theta in &thetas {
        let iid = effective_capacity(&m, theta, EffectiveCapacityMode::Iid, a.tau_limit)?;
        let lower = effective_capacity(
            &m,
            theta,
            EffectiveCapacityMode::DependenceLower,
            a.tau_limit,
        )?;
        let upper = effective_capacity(
            &m,
            theta,
            EffectiveCapacityMode::DependenceUpper,
            a.tau_limit,
        )?;
        rows.push(format!(
            "{},{},{},{}",
            fmtf(theta),
            fmtf(lower.rate),
            fmtf(iid.rate),
            fmtf(upper.rate)
        ));
    }
    write_csv(&a.out, "theta,lower,iid,upper", &rows)?;
    Ok(format!(
        "effective-capacity: tau_limit={} rows={} -> {}",
        a.tau_limit,
        rows.len(),
        a.out.display()
    ))
}

fn cmd_service_curve(a: ServiceCurveArgs) -> Result<String> {
    if a.tau_max == 0 {
        return Err(Error::Domain("--tau-max must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(a.tau_max);
    let mut last = (0.0, 0.0);
    for tau in 1..=a.tau_max {
        let (bl, bu) = sssc_rayleigh_dependent(a.gamma, tau, a.eps)?;
        last = (bl, bu);
        rows.push(format!("{tau},{},{}", fmtf(bl), fmtf(bu)));
    }
    write_csv(&a.out, "tau,beta_lower,beta_upper", &rows)?;
    Ok(format!(
        "service-curve: eps={} tau_max={} beta_lower({})={:.6} beta_upper({})={:.6} -> {}",
        a.eps,
        a.tau_max,
        a.tau_max,
        last.0,
        a.tau_max,
        last.1,
        a.out.display()
    ))
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Print a float with 17 significant digits, enough to survive a re-parse
/// without losing a bit.
fn fmtf(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(header.len() + 1 + rows.len() * 72);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Parse a `start:end:count` grid description into an inclusive linspace.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Domain(format!(
            "grid must be start:end:count, got {spec:?}"
        )));
    }
    let bad = |what: &str| Error::Domain(format!("grid {what} in {spec:?} is not a number"));
    let a: f64 = parts[0].parse().map_err(|_| bad("start"))?;
    let b: f64 = parts[1].parse().map_err(|_| bad("end"))?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| Error::Domain(format!("grid count in {spec:?} is not an integer")))?;
    if !a.is_finite() || !b.is_finite() || b <= a {
        return Err(Error::Domain(format!(
            "grid needs finite start < end, got {spec:?}"
        )));
    }
    if n < 2 {
        return Err(Error::Domain(format!(
            "grid needs at least 2 points, got {n}"
        )));
    }
    Ok(linspace(a, b, n))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    let mut xs: Vec<f64> = (0..n).map(|i| a + step * i as f64).collect();
    xs[n - 1] = b;
    xs
}

fn tau_of(flag: Option<usize>, cfg: &Option<RunConfig>) -> Result<usize> {
    let tau = flag
        .or_else(|| cfg.as_ref().map(|c| c.t))
        .ok_or_else(|| Error::Domain("--tau is required when no config is given".into()))?;
    if tau == 0 {
        return Err(Error::Domain("horizon tau must be at least 1".into()));
    }
    Ok(tau)
}

/// Default threshold grid for sums of `tau` slots: from 0 to a deep
/// quantile of the comonotonic (largest-spread) law.
fn auto_sum_grid(m: &Marginal, tau: usize, n: usize) -> Result<Vec<f64>> {
    let p_hi = 1.0 - 1.0 / (8.0 * tau as f64);
    let hi = tau as f64 * m.quantile(p_hi)?;
    Ok(linspace(0.0, hi, n))
}
