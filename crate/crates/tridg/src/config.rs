//! Experiment configuration: TOML parsing, validation, and defaults.
//!
//! A configuration names a problem (`advection` or `euler`) and the lists
//! that span the experiment matrix — polynomial degrees, inner-product
//! variants, correction levels, and upwinding parameters — plus mesh and
//! time-stepping controls.  Every field except `problem` has a default
//! reproducing the reference experiment setup, so the minimal configuration
//! is a single line.  Unknown keys are rejected.
//!
//! ```toml
//! problem = "advection"
//! p = [2, 3, 4]
//! variants = ["quadrature-i", "quadrature-ii", "collocation"]
//! c = ["c_dg", "c_plus"]
//! lambda = [0.0, 1.0]
//!
//! [mesh]
//! m = 8
//! p_map = 1
//! length = 1.0
//!
//! [time]
//! t_final = 1.0
//! beta = 2.5e-3
//! ```

use std::io;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::operators::{c_plus, InnerProductVariant};
use crate::physics::VortexParams;
use crate::solver::ResidualForm;

/// Errors produced while loading a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("failed to parse config {path}:\n{message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {message}")]
    Invalid { message: String },
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        message: message.into(),
    }
}

/// The two model problems of the experiment suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    /// Linear advection of a sine product with velocity `(1, 1)` on the
    /// periodic square, run over one period.
    Advection,
    /// The compressible Euler equations with an isentropic vortex initial
    /// condition on the periodic square.
    Euler,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Advection => "advection",
            Problem::Euler => "euler",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "advection" => Some(Problem::Advection),
            "euler" => Some(Problem::Euler),
            _ => None,
        }
    }
}

/// A requested correction level for the lifting operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrectionLevel {
    /// `c = 0`, recovering plain DG lifting.
    Dg,
    /// The tabulated `c_+` value for the degree at hand.
    Plus,
    /// An explicit numeric value.
    Fixed(f64),
}

impl CorrectionLevel {
    /// Resolve the numeric `c` for degree `p`.
    pub fn value(self, p: usize) -> Result<f64, ConfigError> {
        match self {
            CorrectionLevel::Dg => Ok(0.0),
            CorrectionLevel::Plus => c_plus(p).map_err(|_| {
                invalid(format!(
                    "c_plus is tabulated for degrees 2..=4 only, not p = {p}"
                ))
            }),
            CorrectionLevel::Fixed(c) => Ok(c),
        }
    }

    /// Whether the level is exactly zero, as the DG residual forms require.
    pub fn is_uncorrected(self) -> bool {
        matches!(self, CorrectionLevel::Dg | CorrectionLevel::Fixed(0.0))
    }

    /// Human-readable label for error messages.
    pub fn label(self) -> String {
        match self {
            CorrectionLevel::Dg => "c_dg".to_string(),
            CorrectionLevel::Plus => "c_plus".to_string(),
            CorrectionLevel::Fixed(c) => format!("{c}"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: String,
    p: Option<Vec<usize>>,
    variants: Option<Vec<String>>,
    c: Option<Vec<RawCorrection>>,
    lambda: Option<Vec<f64>>,
    forms: Option<Vec<String>>,
    volume_rule_file: Option<PathBuf>,
    mesh: Option<RawMesh>,
    time: Option<RawTime>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawCorrection {
    Named(String),
    Value(f64),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    m: Option<usize>,
    p_map: Option<usize>,
    length: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_final: Option<f64>,
    beta: Option<f64>,
}

/// A validated experiment configuration with all defaults resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    /// Polynomial degrees to run.
    pub p_values: Vec<usize>,
    /// Inner-product variants to run.
    pub variants: Vec<InnerProductVariant>,
    /// Correction levels to run.
    pub c_levels: Vec<CorrectionLevel>,
    /// Upwinding parameters (advection only; empty for euler).
    pub lambdas: Vec<f64>,
    /// Explicit (strong, weak) residual-form pair overriding the default
    /// pairing.
    pub forms: Option<(ResidualForm, ResidualForm)>,
    /// Optional external volume quadrature rule, resolved to an absolute or
    /// config-relative path.
    pub volume_rule_file: Option<PathBuf>,
    /// Mesh subdivisions per side (the mesh has `2 m²` triangles).
    pub m: usize,
    /// Mapping degree; `None` selects the per-problem default (1 for
    /// advection, `p` for euler).
    pub p_map: Option<usize>,
    /// Domain side length.
    pub length: f64,
    /// Final time; `None` selects the per-problem default.
    pub t_final_override: Option<f64>,
    /// Time-step safety factor `β` in `Δt* = β/(2p+1)·h/a`.
    pub beta: f64,
}

impl RunConfig {
    /// Mapping degree for a run at solution degree `p`.
    pub fn p_map_for(&self, p: usize) -> usize {
        self.p_map.unwrap_or(match self.problem {
            Problem::Advection => 1,
            Problem::Euler => p,
        })
    }

    /// Final time of the runs.
    pub fn t_final(&self) -> f64 {
        self.t_final_override.unwrap_or(match self.problem {
            Problem::Advection => 1.0,
            Problem::Euler => {
                let params = VortexParams::subsonic(self.length);
                2.0_f64.sqrt() * self.length / params.background_speed()
            }
        })
    }

    /// Characteristic wave speed used for the time-step size: the advection
    /// velocity magnitude, or the vortex background velocity magnitude.
    pub fn wave_speed(&self) -> f64 {
        match self.problem {
            Problem::Advection => 2.0_f64.sqrt(),
            Problem::Euler => VortexParams::subsonic(self.length).background_speed(),
        }
    }

    /// The (strong, weak) residual forms to pair for a correction level:
    /// the explicit override if one was configured, otherwise plain DG forms
    /// at `c = 0` and the FR/filtered pair at `c > 0`.
    pub fn form_pair(&self, level: CorrectionLevel) -> (ResidualForm, ResidualForm) {
        if let Some(pair) = self.forms {
            return pair;
        }
        if level.is_uncorrected() {
            (ResidualForm::StrongDg, ResidualForm::WeakDg)
        } else {
            (ResidualForm::StrongFr, ResidualForm::WeakFiltered)
        }
    }

    /// Parse and validate a TOML configuration body.  `origin` names the
    /// source in errors and anchors relative auxiliary paths.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|err| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: err.to_string(),
        })?;
        RunConfig::resolve(raw, origin)
    }

    fn resolve(raw: RawConfig, origin: &Path) -> Result<Self, ConfigError> {
        let problem = Problem::parse(&raw.problem).ok_or_else(|| {
            invalid(format!(
                "unknown problem `{}`; expected `advection` or `euler`",
                raw.problem
            ))
        })?;

        let p_values = raw.p.unwrap_or_else(|| vec![2]);
        if p_values.is_empty() {
            return Err(invalid("the degree list `p` must not be empty"));
        }
        for &p in &p_values {
            if !(1..=8).contains(&p) {
                return Err(invalid(format!(
                    "degree p = {p} outside the supported range 1..=8"
                )));
            }
        }
        check_distinct(&p_values, "p")?;

        let variants = match raw.variants {
            None => InnerProductVariant::ALL.to_vec(),
            Some(names) => {
                if names.is_empty() {
                    return Err(invalid("the `variants` list must not be empty"));
                }
                names
                    .iter()
                    .map(|name| {
                        InnerProductVariant::parse(name).ok_or_else(|| {
                            invalid(format!(
                                "unknown variant `{name}`; expected one of \
                                 quadrature-i, quadrature-ii, collocation"
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        check_distinct(&variants, "variants")?;

        let c_levels = match raw.c {
            None => vec![CorrectionLevel::Dg, CorrectionLevel::Plus],
            Some(entries) => {
                if entries.is_empty() {
                    return Err(invalid("the `c` list must not be empty"));
                }
                entries
                    .iter()
                    .map(|entry| match entry {
                        RawCorrection::Named(name) => match name.as_str() {
                            "c_dg" => Ok(CorrectionLevel::Dg),
                            "c_plus" => Ok(CorrectionLevel::Plus),
                            other => Err(invalid(format!(
                                "unknown correction level `{other}`; expected \
                                 `c_dg`, `c_plus`, or a nonnegative number"
                            ))),
                        },
                        RawCorrection::Value(c) => {
                            if c.is_finite() && *c >= 0.0 {
                                Ok(CorrectionLevel::Fixed(*c))
                            } else {
                                Err(invalid(format!(
                                    "correction level c = {c} must be finite \
                                     and nonnegative"
                                )))
                            }
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        if c_levels.contains(&CorrectionLevel::Plus) {
            for &p in &p_values {
                CorrectionLevel::Plus.value(p)?;
            }
        }

        let lambdas = match (problem, raw.lambda) {
            (Problem::Euler, Some(list)) if !list.is_empty() => {
                return Err(invalid(
                    "the euler problem has no upwinding parameter; remove `lambda`",
                ));
            }
            (Problem::Euler, _) => Vec::new(),
            (Problem::Advection, None) => vec![0.0, 1.0],
            (Problem::Advection, Some(list)) => {
                if list.is_empty() {
                    return Err(invalid("the `lambda` list must not be empty"));
                }
                for &l in &list {
                    if !l.is_finite() || l < 0.0 {
                        return Err(invalid(format!(
                            "lambda = {l} must be finite and nonnegative"
                        )));
                    }
                }
                check_distinct(&list, "lambda")?;
                list
            }
        };

        let forms = match raw.forms {
            None => None,
            Some(names) => Some(resolve_form_pair(&names)?),
        };
        if let Some((strong, weak)) = forms {
            for form in [strong, weak] {
                if form.requires_uncorrected() {
                    if let Some(level) = c_levels.iter().find(|l| !l.is_uncorrected()) {
                        return Err(invalid(format!(
                            "form `{form}` requires c = 0 but the configuration \
                             requests c = {}",
                            level.label()
                        )));
                    }
                }
            }
        }

        let mesh = raw.mesh.unwrap_or(RawMesh {
            m: None,
            p_map: None,
            length: None,
        });
        let m = mesh.m.unwrap_or(match problem {
            Problem::Advection => 8,
            Problem::Euler => 16,
        });
        if m < 2 {
            return Err(invalid(format!(
                "mesh subdivision m = {m} is below the minimum of 2"
            )));
        }
        if let Some(p_map) = mesh.p_map {
            if !(1..=8).contains(&p_map) {
                return Err(invalid(format!(
                    "p_map = {p_map} outside the supported range 1..=8"
                )));
            }
            for &p in &p_values {
                if p_map > p {
                    return Err(invalid(format!(
                        "p_map = {p_map} exceeds solution degree p = {p}; the \
                         metric terms must lie in the discrete flux space"
                    )));
                }
            }
        }
        let length = mesh.length.unwrap_or(match problem {
            Problem::Advection => 1.0,
            Problem::Euler => 10.0,
        });
        if !length.is_finite() || length <= 0.0 {
            return Err(invalid(format!(
                "domain length = {length} must be finite and positive"
            )));
        }

        let time = raw.time.unwrap_or(RawTime {
            t_final: None,
            beta: None,
        });
        if let Some(t) = time.t_final {
            if !t.is_finite() || t <= 0.0 {
                return Err(invalid(format!(
                    "t_final = {t} must be finite and positive"
                )));
            }
        }
        let beta = time.beta.unwrap_or(2.5e-3);
        if !beta.is_finite() || beta <= 0.0 {
            return Err(invalid(format!("beta = {beta} must be finite and positive")));
        }

        let volume_rule_file = raw.volume_rule_file.map(|path| {
            if path.is_relative() {
                origin.parent().unwrap_or(Path::new(".")).join(path)
            } else {
                path
            }
        });

        Ok(RunConfig {
            problem,
            p_values,
            variants,
            c_levels,
            lambdas,
            forms,
            volume_rule_file,
            m,
            p_map: mesh.p_map,
            length,
            t_final_override: time.t_final,
            beta,
        })
    }
}

fn check_distinct<T: PartialEq + std::fmt::Debug>(
    values: &[T],
    field: &str,
) -> Result<(), ConfigError> {
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            return Err(invalid(format!("duplicate entry {v:?} in `{field}`")));
        }
    }
    Ok(())
}

fn resolve_form_pair(names: &[String]) -> Result<(ResidualForm, ResidualForm), ConfigError> {
    let forms = names
        .iter()
        .map(|name| {
            ResidualForm::parse(name).ok_or_else(|| {
                invalid(format!(
                    "unknown residual form `{name}`; expected one of strong_dg, \
                     weak_dg, strong_fr, weak_filtered, weak_zwanenburg"
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let is_strong = |f: ResidualForm| matches!(f, ResidualForm::StrongDg | ResidualForm::StrongFr);
    match forms.as_slice() {
        [a, b] => {
            let (strong, weak) = if is_strong(*a) && !is_strong(*b) {
                (*a, *b)
            } else if is_strong(*b) && !is_strong(*a) {
                (*b, *a)
            } else {
                return Err(invalid(format!(
                    "`forms` must pair one strong form with one weak form, got \
                     `{a}` and `{b}`"
                )));
            };
            Ok((strong, weak))
        }
        _ => Err(invalid(format!(
            "`forms` must list exactly two entries (one strong, one weak), got {}",
            forms.len()
        ))),
    }
}

/// Read and validate the configuration file at `path`.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_toml_str(&text, path)
}
