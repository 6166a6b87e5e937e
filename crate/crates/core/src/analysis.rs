//! Convergence-time bounds, closed-form solutions and convergence classification.
//!
//! All bounds are integer multiples of the PE window `T`, evaluated with the
//! certificate's conservative level `epsilon`:
//!
//! * finite time (scalar, `0 <= p < 1`):
//!   `k = ceil(|x0|^(1-p) / ((1-p) T eps^(p+1)))`
//! * escape to `V <= c` (scalar, `p > 1`):
//!   `k = ceil(1 / (2^((p-1)/2) (p-1) T eps^(p+1) c^((p-1)/2)))`
//! * fixed time (scalar composite with exponents on both sides of one): the
//!   sum of the unit-level finite-time ceiling and the `c = 1` escape ceiling.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, ExponentSet};
use crate::pe::PeCertificate;
use crate::quadrature::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    FiniteTime,
    Escape,
    FixedTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Bound in seconds, `k * T`.
    pub bound: f64,
    /// Ceiling integers; one entry, or `[k1, k2]` for the fixed-time bound.
    pub k: Vec<u64>,
    pub window: f64,
    pub epsilon: f64,
    pub exponents: Vec<f64>,
    /// `|x0|` for the finite-time bound, `c` for the escape bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// Fixed-time bound only: a smaller bound reachable with other exponents of the set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smaller_alternative: Option<f64>,
}

/// Ceiling that treats values within a few ulps of an integer as that integer.
fn ceil_count(q: f64) -> u64 {
    let r = q.round();
    if r >= 1.0 && (q - r).abs() <= 4.0 * f64::EPSILON * r {
        r as u64
    } else {
        q.ceil() as u64
    }
}

fn require_pe(cert: &PeCertificate) -> Result<()> {
    if cert.epsilon > 0.0 && cert.window > 0.0 {
        Ok(())
    } else {
        Err(Error::NotPersistentlyExciting)
    }
}

fn finite_time_count(level: f64, p: f64, cert: &PeCertificate) -> u64 {
    ceil_count(level.powf(1.0 - p) / ((1.0 - p) * cert.window * cert.epsilon.powf(p + 1.0)))
}

fn escape_count(c: f64, p: f64, cert: &PeCertificate) -> u64 {
    let half = (p - 1.0) / 2.0;
    ceil_count(
        1.0 / (2f64.powf(half)
            * (p - 1.0)
            * cert.window
            * cert.epsilon.powf(p + 1.0)
            * c.powf(half)),
    )
}

/// Finite-time bound for the scalar single estimator with `0 <= p < 1`.
///
/// `x0_abs = 0` gives `k = 0`.
pub fn finite_time_bound(x0_abs: f64, p: f64, cert: &PeCertificate) -> Result<BoundReport> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Precondition(format!(
            "finite-time bound needs 0 <= p < 1, got {p}"
        )));
    }
    if !(x0_abs >= 0.0 && x0_abs.is_finite()) {
        return Err(Error::Precondition(format!(
            "|x0| must be finite and >= 0, got {x0_abs}"
        )));
    }
    require_pe(cert)?;
    let k = if x0_abs == 0.0 {
        0
    } else {
        finite_time_count(x0_abs, p, cert)
    };
    Ok(BoundReport {
        kind: BoundKind::FiniteTime,
        bound: k as f64 * cert.window,
        k: vec![k],
        window: cert.window,
        epsilon: cert.epsilon,
        exponents: vec![p],
        level: Some(x0_abs),
        smaller_alternative: None,
    })
}

/// Time to reach `V <= c` from arbitrarily large initial error, scalar single estimator with `p > 1`.
pub fn escape_bound(c: f64, p: f64, cert: &PeCertificate) -> Result<BoundReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Precondition(format!(
            "escape bound needs p > 1, got {p}"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::Precondition(format!("level c must be > 0, got {c}")));
    }
    require_pe(cert)?;
    let k = escape_count(c, p, cert).max(1);
    Ok(BoundReport {
        kind: BoundKind::Escape,
        bound: k as f64 * cert.window,
        k: vec![k],
        window: cert.window,
        epsilon: cert.epsilon,
        exponents: vec![p],
        level: Some(c),
        smaller_alternative: None,
    })
}

/// Picks the member maximizing `score`; ties go to the smaller exponent.
fn argmax(candidates: impl Iterator<Item = f64>, score: impl Fn(f64) -> f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in candidates {
        let s = score(p);
        match best {
            Some((_, bs)) if s <= bs => {}
            _ => best = Some((p, s)),
        }
    }
    best.map(|(p, _)| p)
}

/// Fixed-time bound for the scalar composite estimator.
///
/// Exponents equal to one belong to neither side and do not enter the bound.
pub fn fixed_time_bound(exponents: &ExponentSet, cert: &PeCertificate) -> Result<BoundReport> {
    if exponents.below_one().next().is_none() || exponents.above_one().next().is_none() {
        return Err(Error::NotFixedTime(format!(
            "need exponents both below and above one, got {:?}",
            exponents.exponents()
        )));
    }
    require_pe(cert)?;
    let eps = cert.epsilon;
    let low = argmax(exponents.below_one(), |p| (1.0 - p) * eps.powf(p + 1.0)).unwrap();
    let high = argmax(exponents.above_one(), |p| (p - 1.0) * eps.powf(p + 1.0)).unwrap();
    let k1 = finite_time_count(1.0, low, cert);
    let k2 = escape_count(1.0, high, cert);
    let bound = (k1 + k2) as f64 * cert.window;

    let best_k1 = exponents
        .below_one()
        .map(|p| finite_time_count(1.0, p, cert))
        .min()
        .unwrap();
    let best_k2 = exponents
        .above_one()
        .map(|p| escape_count(1.0, p, cert))
        .min()
        .unwrap();
    let best = (best_k1 + best_k2) as f64 * cert.window;

    Ok(BoundReport {
        kind: BoundKind::FixedTime,
        bound,
        k: vec![k1, k2],
        window: cert.window,
        epsilon: eps,
        exponents: vec![low, high],
        level: None,
        smaller_alternative: (best < bound).then_some(best),
    })
}

/// Closed-form `V(t)` of the scalar single estimator given `I = int_0^t |u|^(p+1)`.
pub fn scalar_v_closed_form(v0: f64, p: f64, power_integral: f64) -> Result<f64> {
    if !(p >= 0.0) || p == 1.0 {
        return Err(Error::Precondition(format!(
            "closed form needs p >= 0, p != 1, got {p}"
        )));
    }
    if !(v0 >= 0.0 && power_integral >= 0.0) {
        return Err(Error::Precondition(
            "V0 and the power integral must be >= 0".into(),
        ));
    }
    if v0 == 0.0 {
        return Ok(0.0);
    }
    let a = (1.0 - p) / 2.0;
    let gain = 2f64.powf((p - 1.0) / 2.0);
    if p < 1.0 {
        let base = v0.powf(a) - gain * (1.0 - p) * power_integral;
        Ok(if base > 0.0 { base.powf(1.0 / a) } else { 0.0 })
    } else {
        let base = v0.powf(a) + gain * (p - 1.0) * power_integral;
        Ok(base.powf(-2.0 / (p - 1.0)))
    }
}

/// `z = mu^T x` after `dt` seconds on a segment where the regressor is the constant `mu`.
pub fn piecewise_z(z1: f64, mu: &[f64], p: f64, dt: f64) -> Result<f64> {
    if !(p > 0.0) || p == 1.0 {
        return Err(Error::Precondition(format!(
            "segment solution needs p > 0, p != 1, got {p}"
        )));
    }
    let mu2 = dot(mu, mu);
    if mu2 == 0.0 {
        return Err(Error::Precondition(
            "segment regressor must be nonzero".into(),
        ));
    }
    if !(dt >= 0.0) {
        return Err(Error::Precondition(format!("dt must be >= 0, got {dt}")));
    }
    if z1 == 0.0 {
        return Ok(0.0);
    }
    let base = z1.abs().powf(1.0 - p) - (1.0 - p) * mu2 * dt;
    if base <= 0.0 {
        // only reachable for p < 1
        return Ok(0.0);
    }
    Ok(base.powf(1.0 / (1.0 - p)).copysign(z1))
}

/// Error after `dt` seconds on a constant-regressor segment, `0 < p < 1`.
///
/// Once the segment has driven `mu^T x` to zero the result is exactly the
/// projection of `x1` onto the orthogonal complement of `mu`.
pub fn piecewise_x(x1: &[f64], mu: &[f64], p: f64, dt: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Precondition(format!(
            "segment solution for x needs 0 < p < 1, got {p}"
        )));
    }
    if x1.len() != mu.len() {
        return Err(Error::Dimension {
            expected: x1.len(),
            found: mu.len(),
        });
    }
    let z1 = dot(mu, x1);
    let z = piecewise_z(z1, mu, p, dt)?;
    if z == 0.0 {
        return projection_step(x1, mu);
    }
    let mu2 = dot(mu, mu);
    Ok(x1
        .iter()
        .zip(mu)
        .map(|(x, m)| x - m * (z1 - z) / mu2)
        .collect())
}

/// `(I - mu mu^T / |mu|^2) x`.
pub fn projection_step(x: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mu.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: mu.len(),
        });
    }
    let mu2 = dot(mu, mu);
    if mu2 == 0.0 {
        return Err(Error::Precondition(
            "projection direction must be nonzero".into(),
        ));
    }
    let c = dot(mu, x) / mu2;
    Ok(x.iter().zip(mu).map(|(xi, m)| xi - c * m).collect())
}

/// Smallest dwell after which a constant segment `mu` drives `mu^T x` to zero.
pub fn orthogonality_dwell(x: &[f64], mu: &[f64], p: f64) -> f64 {
    dot(mu, x).abs().powf(1.0 - p) / ((1.0 - p) * dot(mu, mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceLabel {
    FixedTime,
    FiniteTime,
    Exponential,
    Asymptotic,
    NoGuarantee,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceClass {
    pub label: ConvergenceLabel,
    pub justification: &'static str,
}

fn class(label: ConvergenceLabel, justification: &'static str) -> ConvergenceClass {
    ConvergenceClass {
        label,
        justification,
    }
}

/// Strongest convergence guarantee available for `spec` on an `n`-dimensional PE problem.
pub fn classify(spec: &EstimatorSpec, n: usize, cert: &PeCertificate) -> ConvergenceClass {
    use ConvergenceLabel::*;
    if !cert.is_pe() {
        return class(NoGuarantee, "regressor not certified persistently exciting");
    }
    match (spec, n) {
        (EstimatorSpec::Single { p }, 1) if *p < 1.0 => class(
            FiniteTime,
            "scalar single estimator with 0 <= p < 1: uniform finite time",
        ),
        (EstimatorSpec::Single { p }, 1) if *p == 1.0 => class(
            Exponential,
            "scalar linear gradient estimator: uniform exponential",
        ),
        (EstimatorSpec::Single { .. }, 1) => class(
            Asymptotic,
            "scalar single estimator with p > 1: uniform asymptotic, escape from infinity",
        ),
        (EstimatorSpec::Composite(set), 1) => {
            if set.min() < 1.0 && set.max() > 1.0 {
                class(
                    FixedTime,
                    "scalar composite with exponents below and above one: uniform fixed time",
                )
            } else if set.min() < 1.0 {
                class(
                    FiniteTime,
                    "scalar composite dominated by a finite-time term",
                )
            } else if set.min() == 1.0 {
                class(Exponential, "scalar composite dominated by the linear term")
            } else {
                class(Asymptotic, "scalar composite with all exponents above one")
            }
        }
        (EstimatorSpec::Tracker { .. }, 1) => class(
            FiniteTime,
            "discontinuous tracker: finite-time tracking when L > gamma",
        ),
        (EstimatorSpec::Single { p }, _) if *p > 0.0 => class(
            Asymptotic,
            "vector single estimator with p > 0: global uniform asymptotic",
        ),
        (EstimatorSpec::Single { .. }, _) => class(
            NoGuarantee,
            "vector discontinuous estimator (p = 0) need not converge",
        ),
        (EstimatorSpec::Composite(set), _) if set.max() <= set.min() + 1.0 => class(
            Asymptotic,
            "vector composite with p_M <= p_m + 1: global uniform asymptotic",
        ),
        (EstimatorSpec::Composite(_), _) => class(
            NoGuarantee,
            "vector composite with p_M > p_m + 1: no guarantee",
        ),
        (EstimatorSpec::Tracker { .. }, _) => class(NoGuarantee, "tracker is scalar-only"),
    }
}

/// Tracker gain condition `L > gamma`.
pub fn tracker_gain_check(gain: f64, gamma: f64) -> bool {
    gain > gamma
}

/// First index at which `series[order[0]] <= series[order[1]] <= ...` fails by more than `slack`,
/// considering only indices where `active` holds.
pub fn ordering_violation(
    series: &[&[f64]],
    order: &[usize],
    slack: f64,
    active: impl Fn(usize) -> bool,
) -> Option<usize> {
    let len = series.iter().map(|s| s.len()).min().unwrap_or(0);
    (0..len).filter(|&k| active(k)).find(|&k| {
        order
            .windows(2)
            .any(|pair| series[pair[0]][k] > series[pair[1]][k] + slack)
    })
}

/// Norm of the error after applying `projection_step` for each vector in turn.
pub fn projected_norm(x: &[f64], vectors: &[Vec<f64>]) -> Result<f64> {
    let mut cur = x.to_vec();
    for v in vectors {
        cur = projection_step(&cur, v)?;
    }
    Ok(norm(&cur))
}
