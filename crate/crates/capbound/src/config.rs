//! Scenario configuration files.
//!
//! A config is a small TOML document with three sections:
//!
//! ```text
//! [marginal]                 [dependence]              [run]
//! kind = "rayleigh"          kind = "markov"           t = 8
//! gamma = 1.0                family = "fgm"            samples = 100000
//!                            parameter = 1.0           seed = 7
//! ```
//!
//! Parsing is strict: an unknown key or section is an error, not a warning,
//! so a typo like `gama` cannot silently fall back to a default. Marginal
//! kinds are `rayleigh` (requires `gamma`) and `tabulated` (requires `csv`,
//! a path resolved relative to the config file). Dependence kinds are
//! `comonotonic`, `independent`, and `markov`; the Markov kind needs a
//! transition copula `family` (`gaussian`, `clayton`, `fgm`, or `frechet`)
//! and, except for `frechet`, its `parameter`.
//!
//! The `[run]` section carries the horizon `t` (required), plus optional
//! `samples`, `seed`, `ref_rate`, and `label` with documented defaults.

use std::path::{Path, PathBuf};

use toml::Value;

use crate::copulas::{BivariateCopula, DependenceSpec};
use crate::error::{Error, Result};
use crate::marginals::Marginal;
use crate::simulate::ChannelScenario;

/// Default sample count when `[run] samples` is omitted.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// A fully validated scenario configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub marginal: Marginal,
    pub dependence: DependenceSpec,
    /// Horizon t in slots.
    pub t: usize,
    pub samples: usize,
    pub seed: u64,
    pub reference_rate: Option<f64>,
    pub label: String,
}

impl RunConfig {
    /// Load and validate a config file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        parse_config(&text, path)
    }

    /// Assemble the simulation scenario this config describes.
    pub fn scenario(&self) -> Result<ChannelScenario> {
        ChannelScenario::new(
            self.marginal.clone(),
            self.dependence.clone(),
            self.t,
            self.reference_rate,
            self.label.clone(),
        )
    }
}

/// Parse a config document. `origin` names the file in errors and anchors
/// relative CSV paths for tabulated marginals.
pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let root: Value = text.parse::<Value>().map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: line_of(text, e.span().map(|s| s.start)),
        msg: e.message().to_string(),
    })?;
    let table = root
        .as_table()
        .expect("a parsed toml document is always a table");

    for key in table.keys() {
        if !["marginal", "dependence", "run"].contains(&key.as_str()) {
            return Err(Error::Domain(format!(
                "unknown section [{key}]; expected [marginal], [dependence], [run]"
            )));
        }
    }

    let marginal = marginal_from(section(table, "marginal")?, origin)?;
    let dependence = dependence_from(section(table, "dependence")?)?;

    let run = section(table, "run")?;
    check_keys(run, "run", &["t", "samples", "seed", "ref_rate", "label"])?;
    let t = get_usize(run, "run", "t")?
        .ok_or_else(|| Error::Domain("[run] t is required (horizon, t >= 1)".into()))?;
    if t == 0 {
        return Err(Error::Domain("[run] t must satisfy t >= 1".into()));
    }
    let samples = get_usize(run, "run", "samples")?.unwrap_or(DEFAULT_SAMPLES);
    let seed = get_u64(run, "run", "seed")?.unwrap_or(0);
    let reference_rate = get_f64(run, "run", "ref_rate")?;
    if let Some(c) = reference_rate {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!(
                "[run] ref_rate must satisfy c > 0, got {c}"
            )));
        }
    }
    let label = match get_str(run, "run", "label")? {
        Some(l) => l.to_string(),
        None => format!("{} / {} / t={t}", kind_name(&marginal), dep_name(&dependence)),
    };

    Ok(RunConfig {
        marginal,
        dependence,
        t,
        samples,
        seed,
        reference_rate,
        label,
    })
}

fn marginal_from(tbl: &toml::map::Map<String, Value>, origin: &Path) -> Result<Marginal> {
    check_keys(tbl, "marginal", &["kind", "gamma", "csv"])?;
    let kind = get_str(tbl, "marginal", "kind")?
        .ok_or_else(|| Error::Domain("[marginal] kind is required".into()))?;
    match kind {
        "rayleigh" => {
            if tbl.contains_key("csv") {
                return Err(Error::Domain(
                    "[marginal] csv only applies to kind = \"tabulated\"".into(),
                ));
            }
            let gamma = get_f64(tbl, "marginal", "gamma")?.ok_or_else(|| {
                Error::Domain("[marginal] rayleigh requires gamma (mean SNR)".into())
            })?;
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(Error::Domain(format!(
                    "[marginal] gamma violates the precondition gamma_snr > 0, got {gamma}"
                )));
            }
            Marginal::rayleigh(gamma)
        }
        "tabulated" => {
            if tbl.contains_key("gamma") {
                return Err(Error::Domain(
                    "[marginal] gamma only applies to kind = \"rayleigh\"".into(),
                ));
            }
            let rel = get_str(tbl, "marginal", "csv")?.ok_or_else(|| {
                Error::Domain("[marginal] tabulated requires csv (two-column r,F file)".into())
            })?;
            let path = origin.parent().map_or_else(
                || PathBuf::from(rel),
                |dir| dir.join(rel),
            );
            Marginal::from_csv_path(path)
        }
        other => Err(Error::Domain(format!(
            "[marginal] kind must be \"rayleigh\" or \"tabulated\", got {other:?}"
        ))),
    }
}

fn dependence_from(tbl: &toml::map::Map<String, Value>) -> Result<DependenceSpec> {
    check_keys(tbl, "dependence", &["kind", "family", "parameter"])?;
    let kind = get_str(tbl, "dependence", "kind")?
        .ok_or_else(|| Error::Domain("[dependence] kind is required".into()))?;
    let forbid_copula_keys = |k: &str| -> Result<()> {
        if tbl.contains_key("family") || tbl.contains_key("parameter") {
            return Err(Error::Domain(format!(
                "[dependence] family/parameter only apply to kind = \"markov\", not {k:?}"
            )));
        }
        Ok(())
    };
    match kind {
        "comonotonic" => {
            forbid_copula_keys("comonotonic")?;
            Ok(DependenceSpec::Comonotonic)
        }
        "independent" => {
            forbid_copula_keys("independent")?;
            Ok(DependenceSpec::Independent)
        }
        "markov" => {
            let family = get_str(tbl, "dependence", "family")?.ok_or_else(|| {
                Error::Domain(
                    "[dependence] markov requires a transition copula family \
                     (gaussian, clayton, fgm, or frechet)"
                        .into(),
                )
            })?;
            let parameter = get_f64(tbl, "dependence", "parameter")?;
            let need = |name: &str| {
                parameter.ok_or_else(|| {
                    Error::Domain(format!(
                        "[dependence] family \"{name}\" requires parameter"
                    ))
                })
            };
            let copula = match family {
                "gaussian" => BivariateCopula::gaussian(need("gaussian")?)?,
                "clayton" => BivariateCopula::clayton(need("clayton")?)?,
                "fgm" => BivariateCopula::fgm(need("fgm")?)?,
                "frechet" => {
                    if parameter.is_some() {
                        return Err(Error::Domain(
                            "[dependence] the frechet family takes no parameter".into(),
                        ));
                    }
                    BivariateCopula::Comonotone
                }
                other => {
                    return Err(Error::Domain(format!(
                        "[dependence] unknown copula family {other:?}; expected \
                         gaussian, clayton, fgm, or frechet"
                    )))
                }
            };
            Ok(DependenceSpec::Markov { copula })
        }
        other => Err(Error::Domain(format!(
            "[dependence] kind must be \"comonotonic\", \"independent\", or \
             \"markov\", got {other:?}"
        ))),
    }
}

fn kind_name(m: &Marginal) -> &'static str {
    match m {
        Marginal::Rayleigh { .. } => "rayleigh",
        Marginal::Tabulated { .. } => "tabulated",
    }
}

fn dep_name(d: &DependenceSpec) -> &'static str {
    match d {
        DependenceSpec::Comonotonic => "comonotonic",
        DependenceSpec::Independent => "independent",
        DependenceSpec::Markov { .. } => "markov",
    }
}

fn line_of(text: &str, offset: Option<usize>) -> usize {
    match offset {
        Some(o) => text[..o.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1,
        None => 0,
    }
}

fn section<'a>(
    table: &'a toml::map::Map<String, Value>,
    name: &str,
) -> Result<&'a toml::map::Map<String, Value>> {
    table
        .get(name)
        .ok_or_else(|| Error::Domain(format!("missing required section [{name}]")))?
        .as_table()
        .ok_or_else(|| Error::Domain(format!("[{name}] must be a table of keys")))
}

fn check_keys(
    tbl: &toml::map::Map<String, Value>,
    section: &str,
    allowed: &[&str],
) -> Result<()> {
    for key in tbl.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Domain(format!(
                "unknown key \"{key}\" in [{section}]; allowed keys: {allowed:?}"
            )));
        }
    }
    Ok(())
}

fn get_str<'a>(
    tbl: &'a toml::map::Map<String, Value>,
    section: &str,
    key: &str,
) -> Result<Option<&'a str>> {
    match tbl.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(Error::Domain(format!(
            "[{section}] {key} must be a string, got {other}"
        ))),
    }
}

fn get_f64(
    tbl: &toml::map::Map<String, Value>,
    section: &str,
    key: &str,
) -> Result<Option<f64>> {
    match tbl.get(key) {
        None => Ok(None),
        Some(Value::Float(v)) => Ok(Some(*v)),
        Some(Value::Integer(v)) => Ok(Some(*v as f64)),
        Some(other) => Err(Error::Domain(format!(
            "[{section}] {key} must be a number, got {other}"
        ))),
    }
}

fn get_usize(
    tbl: &toml::map::Map<String, Value>,
    section: &str,
    key: &str,
) -> Result<Option<usize>> {
    match tbl.get(key) {
        None => Ok(None),
        Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as usize)),
        Some(other) => Err(Error::Domain(format!(
            "[{section}] {key} must be a nonnegative integer, got {other}"
        ))),
    }
}

fn get_u64(
    tbl: &toml::map::Map<String, Value>,
    section: &str,
    key: &str,
) -> Result<Option<u64>> {
    match tbl.get(key) {
        None => Ok(None),
        Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
        Some(other) => Err(Error::Domain(format!(
            "[{section}] {key} must be a nonnegative integer, got {other}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[marginal]
kind = "rayleigh"
gamma = 1.0

[dependence]
kind = "independent"

[run]
t = 8
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert!(matches!(cfg.marginal, Marginal::Rayleigh { .. }));
        assert!(matches!(cfg.dependence, DependenceSpec::Independent));
        assert_eq!(cfg.t, 8);
        assert_eq!(cfg.samples, DEFAULT_SAMPLES);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.reference_rate, None);
        assert_eq!(cfg.label, "rayleigh / independent / t=8");
        let scn = cfg.scenario().unwrap();
        assert_eq!(scn.horizon, 8);
    }

    #[test]
    fn full_markov_config_parses() {
        let cfg = parse(
            r#"
[marginal]
kind = "rayleigh"
gamma = 0.5

[dependence]
kind = "markov"
family = "fgm"
parameter = 1.0

[run]
t = 4
samples = 5000
seed = 9
ref_rate = 1.2
label = "bursty"
"#,
        )
        .unwrap();
        assert!(matches!(cfg.dependence, DependenceSpec::Markov { .. }));
        assert_eq!(cfg.samples, 5000);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.reference_rate, Some(1.2));
        assert_eq!(cfg.label, "bursty");
    }

    #[test]
    fn negative_gamma_names_the_precondition() {
        let err = parse(&MINIMAL.replace("gamma = 1.0", "gamma = -1.0")).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("gamma_snr > 0"),
            "error must name the violated precondition: {msg}"
        );
    }

    #[test]
    fn markov_without_family_is_rejected() {
        let err = parse(&MINIMAL.replace("kind = \"independent\"", "kind = \"markov\""))
            .unwrap_err();
        assert!(
            err.to_string().contains("family"),
            "error must point at the missing family: {err}"
        );
    }

    #[test]
    fn unknown_keys_are_errors_in_strict_mode() {
        for (needle, patch) in [
            ("gama", "gamma = 1.0\ngama = 2.0"),
            ("alpha", "kind = \"independent\"\nalpha = 0.5"),
        ] {
            let text = if needle == "gama" {
                MINIMAL.replace("gamma = 1.0", patch)
            } else {
                MINIMAL.replace("kind = \"independent\"", patch)
            };
            let err = parse(&text).unwrap_err();
            assert!(
                err.to_string().contains(needle),
                "strict mode must name the unknown key: {err}"
            );
        }
        let err = parse(&format!("{MINIMAL}\n[plotting]\ncolor = \"red\"\n")).unwrap_err();
        assert!(err.to_string().contains("plotting"));
    }

    #[test]
    fn malformed_toml_reports_the_line() {
        let err = parse("[marginal]\nkind = \"rayleigh\"\ngamma = = 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3, "line number should locate the typo"),
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn frechet_family_takes_no_parameter() {
        let markov = MINIMAL.replace(
            "kind = \"independent\"",
            "kind = \"markov\"\nfamily = \"frechet\"",
        );
        let cfg = parse(&markov).unwrap();
        assert!(matches!(
            cfg.dependence,
            DependenceSpec::Markov {
                copula: BivariateCopula::Comonotone
            }
        ));
        let err = parse(&markov.replace(
            "family = \"frechet\"",
            "family = \"frechet\"\nparameter = 0.5",
        ))
        .unwrap_err();
        assert!(err.to_string().contains("no parameter"));
    }

    #[test]
    fn tabulated_kind_loads_csv_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("law.csv"), "r,F\n0.0,0.0\n1.0,0.5\n2.0,1.0\n")
            .unwrap();
        let text = MINIMAL.replace(
            "kind = \"rayleigh\"\ngamma = 1.0",
            "kind = \"tabulated\"\ncsv = \"law.csv\"",
        );
        let cfg_path = dir.path().join("scn.toml");
        std::fs::write(&cfg_path, &text).unwrap();
        let cfg = RunConfig::from_path(&cfg_path).unwrap();
        assert!(matches!(cfg.marginal, Marginal::Tabulated { .. }));
        assert_eq!(cfg.marginal.cdf(1.0), 0.5);
    }

    #[test]
    fn run_section_requires_a_horizon() {
        let err = parse(&MINIMAL.replace("t = 8", "samples = 2000")).unwrap_err();
        assert!(err.to_string().contains("t is required"), "{err}");
        let err = parse(&MINIMAL.replace("t = 8", "t = 0")).unwrap_err();
        assert!(err.to_string().contains("t >= 1"), "{err}");
    }
}
