//! Right-hand sides of the homogeneous gradient estimators and their error dynamics.
//!
//! For an output error `e = u^T theta_hat - y` the single estimator moves the
//! estimate along `-sp(e, p) u`, the composite one along `-(sum_i sp(e, p_i)) u`,
//! where `sp(w, p) = |w|^p sign(w)`. The tracker is the scalar discontinuous law
//! `-L sign(e) sign(u)`, realized with a boundary-layer sign of width `delta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{dot, norm};

/// Default boundary-layer width for the tracker's regularized sign.
pub const DEFAULT_DELTA: f64 = 1e-4;

/// `|w|^p sign(w)`, with `signed_power(0, p) = 0` for every `p >= 0` (including `p = 0`).
pub fn signed_power(w: f64, p: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else if p == 0.0 {
        w.signum()
    } else {
        w.abs().powf(p).copysign(w)
    }
}

/// Saturated sign `clamp(w / delta, -1, 1)`.
pub fn regularized_sign(w: f64, delta: f64) -> f64 {
    (w / delta).clamp(-1.0, 1.0)
}

/// Sorted, deduplicated set of non-negative exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ExponentSet(Vec<f64>);

impl ExponentSet {
    pub fn new(mut exponents: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::Precondition("exponent set must not be empty".into()));
        }
        if let Some(&bad) = exponents.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidExponent(bad));
        }
        exponents.sort_by(f64::total_cmp);
        exponents.dedup();
        Ok(ExponentSet(exponents))
    }

    pub fn exponents(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0[0]
    }

    pub fn max(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Exponents strictly below one.
    pub fn below_one(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied().filter(|&p| p < 1.0)
    }

    /// Exponents strictly above one.
    pub fn above_one(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied().filter(|&p| p > 1.0)
    }
}

impl TryFrom<Vec<f64>> for ExponentSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ExponentSet::new(v)
    }
}

impl From<ExponentSet> for Vec<f64> {
    fn from(s: ExponentSet) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorSpec {
    Single {
        p: f64,
    },
    Composite(ExponentSet),
    /// Discontinuous scalar tracker with gain `gain` (L) and boundary layer `delta`.
    Tracker {
        gain: f64,
        delta: f64,
    },
}

impl EstimatorSpec {
    pub fn single(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidExponent(p));
        }
        Ok(EstimatorSpec::Single { p })
    }

    pub fn composite(exponents: Vec<f64>) -> Result<Self> {
        Ok(EstimatorSpec::Composite(ExponentSet::new(exponents)?))
    }

    pub fn tracker(gain: f64, delta: f64) -> Result<Self> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::Precondition(format!(
                "tracker gain must be > 0, got {gain}"
            )));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Precondition(format!(
                "tracker delta must be > 0, got {delta}"
            )));
        }
        Ok(EstimatorSpec::Tracker { gain, delta })
    }

    /// Checks the spec against the problem dimension.
    pub fn check_dimension(&self, n: usize) -> Result<()> {
        match self {
            EstimatorSpec::Tracker { .. } if n != 1 => Err(Error::Precondition(format!(
                "the tracker only applies to scalar problems (n = {n})"
            ))),
            _ => Ok(()),
        }
    }

    /// `p = 0` only carries a convergence guarantee in the scalar case.
    pub fn scalar_only_guarantee(&self) -> bool {
        matches!(self, EstimatorSpec::Single { p } if *p == 0.0)
    }

    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Single { p } => format!("p={p}"),
            EstimatorSpec::Composite(set) => {
                let ps: Vec<String> = set.exponents().iter().map(|p| p.to_string()).collect();
                format!("composite{{{}}}", ps.join(","))
            }
            EstimatorSpec::Tracker { gain, delta } => format!("tracker L={gain} delta={delta}"),
        }
    }

    /// Scalar correction `c(e)` such that the smooth estimators read `-c(e) u`.
    fn correction(&self, e: f64) -> f64 {
        match self {
            EstimatorSpec::Single { p } => signed_power(e, *p),
            EstimatorSpec::Composite(set) => {
                set.exponents().iter().map(|&p| signed_power(e, p)).sum()
            }
            EstimatorSpec::Tracker { gain, delta } => gain * regularized_sign(e, *delta),
        }
    }

    /// Writes `d theta_hat / dt` into `out`. `u` must have the length of `theta_hat`.
    pub fn estimate_rate_into(&self, theta_hat: &[f64], u: &[f64], y: f64, out: &mut [f64]) {
        let e = dot(u, theta_hat) - y;
        self.field_into(e, u, out);
    }

    fn field_into(&self, e: f64, u: &[f64], out: &mut [f64]) {
        let c = self.correction(e);
        match self {
            EstimatorSpec::Tracker { delta, .. } => out[0] = -c * regularized_sign(u[0], *delta),
            _ => {
                for (o, ui) in out.iter_mut().zip(u) {
                    *o = -c * ui;
                }
            }
        }
    }

    fn check_args(&self, a: &[f64], u: &[f64]) -> Result<()> {
        if a.len() != u.len() {
            return Err(Error::Dimension {
                expected: a.len(),
                found: u.len(),
            });
        }
        self.check_dimension(u.len())
    }
}

/// `d theta_hat / dt` for the given estimator, regressor value `u_t` and measurement `y_t`.
pub fn rhs_estimate(
    spec: &EstimatorSpec,
    _t: f64,
    theta_hat: &[f64],
    u_t: &[f64],
    y_t: f64,
) -> Result<Vec<f64>> {
    spec.check_args(theta_hat, u_t)?;
    let mut out = vec![0.0; u_t.len()];
    spec.estimate_rate_into(theta_hat, u_t, y_t, &mut out);
    Ok(out)
}

/// `dx/dt` of the estimation error `x = theta_hat - theta`; pass `theta_dot_t = 0` for constant parameters.
pub fn rhs_error(
    spec: &EstimatorSpec,
    _t: f64,
    x: &[f64],
    u_t: &[f64],
    theta_dot_t: &[f64],
) -> Result<Vec<f64>> {
    spec.check_args(x, u_t)?;
    if theta_dot_t.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: theta_dot_t.len(),
        });
    }
    let mut out = vec![0.0; x.len()];
    spec.field_into(dot(u_t, x), u_t, &mut out);
    for (o, d) in out.iter_mut().zip(theta_dot_t) {
        *o -= d;
    }
    Ok(out)
}

/// Relative defect of `f(t, s x) = s^p f(t, x)` for the single estimator.
pub fn homogeneity_residual(
    spec: &EstimatorSpec,
    t: f64,
    x: &[f64],
    scale: f64,
    u_t: &[f64],
) -> Result<f64> {
    let p = match spec {
        EstimatorSpec::Single { p } => *p,
        _ => {
            return Err(Error::NotApplicable(
                "homogeneity holds for the single estimator only".into(),
            ))
        }
    };
    if !(scale > 0.0) {
        return Err(Error::Precondition(format!(
            "scale must be > 0, got {scale}"
        )));
    }
    let zero = vec![0.0; x.len()];
    let scaled_x: Vec<f64> = x.iter().map(|v| scale * v).collect();
    let lhs = rhs_error(spec, t, &scaled_x, u_t, &zero)?;
    let rhs: Vec<f64> = rhs_error(spec, t, x, u_t, &zero)?
        .into_iter()
        .map(|v| scale.powf(p) * v)
        .collect();
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(norm(&diff) / norm(&rhs).max(1e-300))
}

/// Instantaneous cost `|u^T theta_hat - y|^(p+1) / (p+1)` whose negative gradient is the single estimator.
pub fn instantaneous_cost(p: f64, theta_hat: &[f64], u_t: &[f64], y_t: f64) -> f64 {
    (dot(u_t, theta_hat) - y_t).abs().powf(p + 1.0) / (p + 1.0)
}
