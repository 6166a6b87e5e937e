//! Scenario files.
//!
//! Scenarios are TOML documents. Top-level keys hold the scalar settings; the
//! signals, estimators and numerical settings live in named tables:
//!
//! ```toml
//! name = "scalar_fig1"
//! dimension = 1
//! horizon = 20.0
//! theta_hat0 = [0.0]
//! t0_offset = 0.0          # optional, advances every signal by this many seconds
//! escape_level = 1.0       # optional, level c used for escape bounds
//!
//! [regressor]              # type = "sum" | "piecewise" | "orthogonal"
//! type = "sum"
//! components = [[{ type = "cos", amplitude = 2.0, frequency = 2.0, phase = 0.0 }]]
//!
//! [parameter]              # either `constant = [...]` or a `signal` table plus optional `gamma`
//! constant = [5.0]
//!
//! [[estimators]]           # kind = "single" | "composite" | "tracker"
//! kind = "single"
//! p = 0.75
//!
//! [integrator]             # step, method ("rk4" | "euler"), conv_tol, conv_dwell, record_stride
//! step = 1e-4
//!
//! [pe]                     # window (T), sphere_resolution, window_step, horizon, subintervals
//! window = 1.5707963267948966
//!
//! [outputs]                # directory, plot_data
//! directory = "out/scalar_fig1"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, DEFAULT_DELTA};
use crate::integrator::{EstimationProblem, IntegratorConfig};
use crate::pe::{PeSettings, DEFAULT_SUBINTERVALS};
use crate::signals::{
    orthogonal_sequence, ParameterSignal, ScalarSignal, SignalTerm, VectorSignal,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TermDesc {
    Cos {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Const {
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DwellDesc {
    Uniform(f64),
    PerSegment(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SignalDesc {
    /// One list of terms per component.
    Sum { components: Vec<Vec<TermDesc>> },
    Piecewise {
        vectors: Vec<Vec<f64>>,
        dwell: DwellDesc,
        #[serde(default = "default_true")]
        cycle: bool,
    },
    /// Cycling sequence of `n` mutually orthogonal vectors.
    Orthogonal { vectors: Vec<Vec<f64>>, dwell: f64 },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterDesc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalDesc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorDesc {
    Single {
        p: f64,
    },
    Composite {
        exponents: Vec<f64>,
    },
    Tracker {
        #[serde(rename = "L")]
        gain: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeDesc {
    pub window: f64,
    #[serde(default = "default_resolution")]
    pub sphere_resolution: usize,
    /// Defaults to an eighth of the window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_step: Option<f64>,
    /// Defaults to twice the window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_subintervals")]
    pub subintervals: usize,
}

fn default_resolution() -> usize {
    32
}

fn default_subintervals() -> usize {
    DEFAULT_SUBINTERVALS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsDesc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "default_true")]
    pub plot_data: bool,
}

impl Default for OutputsDesc {
    fn default() -> Self {
        OutputsDesc {
            directory: None,
            plot_data: true,
        }
    }
}

/// The scenario file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub dimension: usize,
    pub horizon: f64,
    pub theta_hat0: Vec<f64>,
    #[serde(default)]
    pub t0_offset: f64,
    #[serde(default = "default_escape_level")]
    pub escape_level: f64,
    pub regressor: SignalDesc,
    pub parameter: ParameterDesc,
    pub estimators: Vec<EstimatorDesc>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub pe: PeDesc,
    #[serde(default)]
    pub outputs: OutputsDesc,
}

fn default_escape_level() -> f64 {
    1.0
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// A validated scenario with its runtime objects built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub problem: EstimationProblem,
    pub estimators: Vec<EstimatorSpec>,
    /// Integrator settings with the convergence dwell resolved.
    pub integrator: IntegratorConfig,
    pub pe: PeSettings,
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let n = config.dimension;
        if n == 0 {
            return Err(Error::config("dimension", "must be >= 1"));
        }
        if !(config.horizon.is_finite() && config.horizon > 0.0) {
            return Err(Error::config(
                "horizon",
                format!("must be > 0, got {}", config.horizon),
            ));
        }
        if !config.t0_offset.is_finite() {
            return Err(Error::config("t0_offset", "must be finite"));
        }
        if !(config.escape_level > 0.0) {
            return Err(Error::config("escape_level", "must be > 0"));
        }
        if config.theta_hat0.len() != n {
            return Err(Error::config(
                "theta_hat0",
                format!("expected {n} entries, found {}", config.theta_hat0.len()),
            ));
        }

        let regressor = build_signal(&config.regressor, "regressor")?;
        if regressor.dimension() != n {
            return Err(Error::config(
                "regressor",
                format!("dimension {} does not match {n}", regressor.dimension()),
            ));
        }
        let parameter = build_parameter(&config.parameter)?;
        if parameter.dimension() != n {
            return Err(Error::config(
                "parameter",
                format!("dimension {} does not match {n}", parameter.dimension()),
            ));
        }

        if config.estimators.is_empty() {
            return Err(Error::config(
                "estimators",
                "at least one estimator is required",
            ));
        }
        let estimators = config
            .estimators
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let field = format!("estimators[{i}]");
                let spec = match d {
                    EstimatorDesc::Single { p } => EstimatorSpec::single(*p),
                    EstimatorDesc::Composite { exponents } => {
                        EstimatorSpec::composite(exponents.clone())
                    }
                    EstimatorDesc::Tracker { gain, delta } => EstimatorSpec::tracker(*gain, *delta),
                }
                .map_err(|e| Error::config(field.clone(), e.to_string()))?;
                spec.check_dimension(n)
                    .map_err(|e| Error::config(field, e.to_string()))?;
                Ok(spec)
            })
            .collect::<Result<Vec<_>>>()?;

        let pe = PeSettings {
            window: config.pe.window,
            horizon: config.pe.horizon.unwrap_or(2.0 * config.pe.window),
            sphere_resolution: config.pe.sphere_resolution,
            window_step: config.pe.window_step.unwrap_or(config.pe.window / 8.0),
            subintervals: config.pe.subintervals,
        };
        if !(pe.window > 0.0) {
            return Err(Error::config(
                "pe.window",
                format!("must be > 0, got {}", pe.window),
            ));
        }
        if config.horizon < pe.window {
            return Err(Error::config(
                "horizon",
                format!("must be >= pe.window {}, got {}", pe.window, config.horizon),
            ));
        }

        let mut integrator = config.integrator.clone();
        integrator.conv_dwell.get_or_insert(pe.window);
        integrator.validate()?;

        let problem = EstimationProblem {
            regressor: regressor.shifted(config.t0_offset),
            parameter: parameter.shifted(config.t0_offset),
            theta_hat0: config.theta_hat0.clone(),
            horizon: config.horizon,
        };
        problem
            .validate()
            .map_err(|e| Error::config("theta_hat0", e.to_string()))?;

        Ok(Scenario {
            config,
            problem,
            estimators,
            integrator,
            pe,
        })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    Scenario::from_config(config)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn build_term(d: &TermDesc) -> SignalTerm {
    match *d {
        TermDesc::Cos {
            amplitude,
            frequency,
            phase,
        } => SignalTerm::Sinusoid {
            amplitude,
            frequency,
            phase,
        },
        TermDesc::Const { amplitude } => SignalTerm::Constant(amplitude),
    }
}

pub(crate) fn build_signal(d: &SignalDesc, field: &str) -> Result<VectorSignal> {
    let wrap = |e: Error| Error::config(field, e.to_string());
    match d {
        SignalDesc::Sum { components } => {
            let comps = components
                .iter()
                .enumerate()
                .map(|(i, terms)| {
                    ScalarSignal::new(terms.iter().map(build_term).collect()).map_err(|e| {
                        Error::config(format!("{field}.components[{i}]"), e.to_string())
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            VectorSignal::from_components(comps).map_err(wrap)
        }
        SignalDesc::Piecewise {
            vectors,
            dwell,
            cycle,
        } => {
            let dwells = match dwell {
                DwellDesc::Uniform(d) => vec![*d],
                DwellDesc::PerSegment(v) => v.clone(),
            };
            VectorSignal::piecewise(vectors.clone(), dwells, *cycle).map_err(wrap)
        }
        SignalDesc::Orthogonal { vectors, dwell } => {
            orthogonal_sequence(vectors.clone(), *dwell).map_err(wrap)
        }
    }
}

fn build_parameter(d: &ParameterDesc) -> Result<ParameterSignal> {
    let wrap = |e: Error| Error::config("parameter", e.to_string());
    match (&d.constant, &d.signal) {
        (Some(c), None) => {
            if d.gamma.is_some() {
                return Err(Error::config(
                    "parameter.gamma",
                    "only applies to a time-varying parameter",
                ));
            }
            ParameterSignal::constant(c.clone()).map_err(wrap)
        }
        (None, Some(s)) => {
            let signal = build_signal(s, "parameter.signal")?;
            ParameterSignal::varying(signal, d.gamma)
                .map_err(|e| Error::config("parameter.gamma", e.to_string()))
        }
        _ => Err(Error::config(
            "parameter",
            "give exactly one of `constant` or a `signal` table",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
name = "t"
dimension = 1
horizon = 5.0
theta_hat0 = [0.0]

[regressor]
type = "sum"
components = [[{ type = "cos", amplitude = 2.0, frequency = 2.0 }]]

[parameter]
constant = [5.0]

[[estimators]]
kind = "single"
p = 0.75

[[estimators]]
kind = "composite"
exponents = [0.75, 1.5]

[pe]
window = 1.5707963267948966
"#;

    #[test]
    fn parses_minimal_scenario() {
        let s = parse_scenario(SCALAR).unwrap();
        assert_eq!(s.estimators.len(), 2);
        assert_eq!(s.integrator.conv_dwell, Some(std::f64::consts::FRAC_PI_2));
        assert_eq!(s.problem.regressor.eval(0.0), vec![2.0]);
        assert_eq!(s.pe.horizon, std::f64::consts::PI);
    }

    #[test]
    fn negative_exponent_names_field() {
        let text = SCALAR.replace("p = 0.75", "p = -1.0");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("estimators[0]"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let text = SCALAR.replace("theta_hat0 = [0.0]", "theta_hat0 = [0.0, 1.0]");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().starts_with("theta_hat0"), "{err}");
        let text = SCALAR.replace("constant = [5.0]", "constant = [5.0, 1.0]");
        assert!(parse_scenario(&text)
            .unwrap_err()
            .to_string()
            .starts_with("parameter"));
    }

    #[test]
    fn vector_tracker_rejected() {
        let text = SCALAR
            .replace("dimension = 1", "dimension = 2")
            .replace("theta_hat0 = [0.0]", "theta_hat0 = [0.0, 0.0]")
            .replace("constant = [5.0]", "constant = [5.0, 1.0]")
            .replace(
                "components = [[{ type = \"cos\", amplitude = 2.0, frequency = 2.0 }]]",
                "components = [[{ type = \"cos\", amplitude = 2.0, frequency = 2.0 }], [{ type = \"const\", amplitude = 1.0 }]]",
            )
            .replace("kind = \"single\"\np = 0.75", "kind = \"tracker\"\nL = 3.3");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("estimators[0]"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_scenario("name = \n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn canonical_round_trip() {
        let s = parse_scenario(SCALAR).unwrap();
        let text = s.config.to_toml().unwrap();
        let again = parse_scenario(&text).unwrap();
        assert_eq!(again.config, s.config);
        assert_eq!(again, s);
    }

    #[test]
    fn offset_shifts_signals() {
        let text = SCALAR.replace("theta_hat0 = [0.0]", "theta_hat0 = [0.0]\nt0_offset = 0.25");
        let s = parse_scenario(&text).unwrap();
        let expect = 2.0 * (0.5f64).cos();
        assert!((s.problem.regressor.eval(0.0)[0] - expect).abs() < 1e-15);
    }
}
