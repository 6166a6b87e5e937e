//! Fixed-step integration of the estimator dynamics and trajectory bookkeeping.
//!
//! The estimate `theta_hat` is integrated against the measured output
//! `y(t) = u(t)^T theta(t)`; the error `x = theta_hat - theta(t)` is derived at
//! every recorded step. No clamping is applied near the origin, so for `p < 1`
//! the recorded error settles at a discretization floor of roughly
//! `(h |u|^(p+1))^(1/(1-p))` instead of exact zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::quadrature::{dot, norm};
use crate::signals::{ParameterSignal, VectorSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub step: f64,
    pub method: Method,
    pub conv_tol: f64,
    /// How long `|x| < conv_tol` must hold; defaults to the PE window of the scenario.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conv_dwell: Option<f64>,
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: 1e-4,
            method: Method::Rk4,
            conv_tol: 1e-9,
            conv_dwell: None,
            record_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::config(
                "integrator.step",
                format!("must be > 0, got {}", self.step),
            ));
        }
        if !(self.conv_tol.is_finite() && self.conv_tol > 0.0) {
            return Err(Error::config(
                "integrator.conv_tol",
                format!("must be > 0, got {}", self.conv_tol),
            ));
        }
        if let Some(d) = self.conv_dwell {
            if !(d >= self.step) {
                return Err(Error::config(
                    "integrator.conv_dwell",
                    format!("must be >= step {}, got {d}", self.step),
                ));
            }
        }
        if self.record_stride == 0 {
            return Err(Error::config("integrator.record_stride", "must be >= 1"));
        }
        Ok(())
    }

    fn dwell(&self) -> f64 {
        self.conv_dwell.unwrap_or(self.step)
    }
}

/// Signals, initial estimate and horizon of one estimation experiment. Time starts at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationProblem {
    pub regressor: VectorSignal,
    pub parameter: ParameterSignal,
    pub theta_hat0: Vec<f64>,
    pub horizon: f64,
}

impl EstimationProblem {
    pub fn dimension(&self) -> usize {
        self.regressor.dimension()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension();
        for found in [self.parameter.dimension(), self.theta_hat0.len()] {
            if found != n {
                return Err(Error::Dimension { expected: n, found });
            }
        }
        if self.theta_hat0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(
                "initial estimate must be finite".into(),
            ));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Precondition(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Initial estimation error `x(0) = theta_hat0 - theta(0)`.
    pub fn initial_error(&self) -> Vec<f64> {
        let theta = self.parameter.eval(0.0);
        self.theta_hat0
            .iter()
            .zip(&theta)
            .map(|(a, b)| a - b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub times: Vec<f64>,
    pub theta_hat: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    /// Output error `u^T theta_hat - y`.
    pub e: Vec<f64>,
    /// `V = x^T x / 2`.
    pub v: Vec<f64>,
    /// First recorded time after which `|x| < conv_tol` held for the dwell.
    pub converged_at: Option<f64>,
    /// Last recorded time with `|x| >= conv_tol` before `converged_at`; with it,
    /// brackets the hitting time.
    pub last_above_tol: Option<f64>,
    pub constant_parameter: bool,
    pub step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn error_norm(&self, k: usize) -> f64 {
        norm(&self.x[k])
    }

    pub fn final_error_norm(&self) -> f64 {
        self.x.last().map_or(0.0, |x| norm(x))
    }

    /// First recorded time with `V <= level`.
    pub fn first_time_v_at_most(&self, level: f64) -> Option<f64> {
        self.v
            .iter()
            .position(|&v| v <= level)
            .map(|k| self.times[k])
    }

    /// Index of the last recorded sample at or before `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let slack = 1e-9 * self.step;
        match self.times.partition_point(|&s| s <= t + slack) {
            0 => None,
            k => Some(k - 1),
        }
    }

    /// Hitting-time bracket `[last time |x| >= tol, converged_at]`.
    pub fn hit_interval(&self) -> Option<(f64, f64)> {
        self.converged_at
            .map(|c| (self.last_above_tol.unwrap_or(c), c))
    }

    fn push(&mut self, t: f64, theta_hat: &[f64], theta: &[f64], u: &[f64]) {
        let x: Vec<f64> = theta_hat.iter().zip(theta).map(|(a, b)| a - b).collect();
        self.e.push(dot(u, &x));
        self.v.push(0.5 * dot(&x, &x));
        self.times.push(t);
        self.theta_hat.push(theta_hat.to_vec());
        self.x.push(x);
    }

    /// Locates `converged_at` on the recorded grid.
    pub fn detect_convergence(&mut self, tol: f64, dwell: f64) {
        let slack = 1e-9 * self.step;
        let mut start: Option<usize> = None;
        let mut last_above = None;
        self.converged_at = None;
        self.last_above_tol = None;
        for k in 0..self.len() {
            if norm(&self.x[k]) < tol {
                let s = *start.get_or_insert(k);
                if self.times[k] - self.times[s] >= dwell - slack {
                    self.converged_at = Some(self.times[s]);
                    self.last_above_tol = last_above;
                    return;
                }
            } else {
                start = None;
                last_above = Some(self.times[k]);
            }
        }
    }

    /// CSV with header `t,x_1..x_n,e,V,theta_hat_1..theta_hat_n`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.dimension();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.push("e".into());
        header.push("V".into());
        header.extend((1..=n).map(|i| format!("theta_hat_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = Vec::with_capacity(2 * n + 3);
            row.push(self.times[k]);
            row.extend_from_slice(&self.x[k]);
            row.push(self.e[k]);
            row.push(self.v[k]);
            row.extend_from_slice(&self.theta_hat[k]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

struct Rhs<'a> {
    problem: &'a EstimationProblem,
    spec: &'a EstimatorSpec,
    u: Vec<f64>,
    theta: Vec<f64>,
}

impl Rhs<'_> {
    /// `left` selects the regressor's left limit, for stages on the end of a step.
    fn eval(&mut self, t: f64, theta_hat: &[f64], left: bool, out: &mut [f64]) {
        if left {
            self.problem.regressor.eval_left_into(t, &mut self.u);
        } else {
            self.problem.regressor.eval_into(t, &mut self.u);
        }
        self.problem.parameter.eval_into(t, &mut self.theta);
        let y = dot(&self.u, &self.theta);
        self.spec.estimate_rate_into(theta_hat, &self.u, y, out);
    }
}

/// Integrates `spec` on `problem` with a fixed step.
pub fn integrate(
    problem: &EstimationProblem,
    spec: &EstimatorSpec,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    problem.validate()?;
    config.validate()?;
    let n = problem.dimension();
    spec.check_dimension(n)?;

    let h = config.step;
    let full_steps = (problem.horizon / h + 1e-9).floor() as usize;
    let tail = problem.horizon - full_steps as f64 * h;
    let total_steps = if tail > 1e-9 * h {
        full_steps + 1
    } else {
        full_steps
    };

    let mut rhs = Rhs {
        problem,
        spec,
        u: vec![0.0; n],
        theta: vec![0.0; n],
    };
    let mut traj = Trajectory {
        label: spec.label(),
        times: Vec::new(),
        theta_hat: Vec::new(),
        x: Vec::new(),
        e: Vec::new(),
        v: Vec::new(),
        converged_at: None,
        last_above_tol: None,
        constant_parameter: problem.parameter.is_constant(),
        step: h,
    };
    let capacity = total_steps / config.record_stride + 2;
    traj.times.reserve(capacity);

    let mut state = problem.theta_hat0.clone();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut theta = vec![0.0; n];
    let mut u = vec![0.0; n];

    let mut record = |traj: &mut Trajectory, t: f64, state: &[f64]| {
        problem.regressor.eval_into(t, &mut u);
        problem.parameter.eval_into(t, &mut theta);
        traj.push(t, state, &theta, &u);
    };
    record(&mut traj, 0.0, &state);

    for step in 0..total_steps {
        let t = step as f64 * h;
        let t_next = if step + 1 == total_steps {
            problem.horizon
        } else {
            (step + 1) as f64 * h
        };
        let dt = t_next - t;
        match config.method {
            Method::Euler => {
                rhs.eval(t, &state, false, &mut k1);
                for (s, d) in state.iter_mut().zip(&k1) {
                    *s += dt * d;
                }
            }
            Method::Rk4 => {
                let half = t + 0.5 * dt;
                rhs.eval(t, &state, false, &mut k1);
                for i in 0..n {
                    tmp[i] = state[i] + 0.5 * dt * k1[i];
                }
                rhs.eval(half, &tmp, false, &mut k2);
                for i in 0..n {
                    tmp[i] = state[i] + 0.5 * dt * k2[i];
                }
                rhs.eval(half, &tmp, false, &mut k3);
                for i in 0..n {
                    tmp[i] = state[i] + dt * k3[i];
                }
                rhs.eval(t_next, &tmp, true, &mut k4);
                for i in 0..n {
                    state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: step + 1,
                time: t_next,
                norm: norm(&state),
            });
        }
        if (step + 1) % config.record_stride == 0 || step + 1 == total_steps {
            record(&mut traj, t_next, &state);
        }
    }

    traj.detect_convergence(config.conv_tol, config.dwell());
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub passed: bool,
    pub violations: usize,
    /// Largest `V[k+1] - V[k]` over the trajectory.
    pub worst_increase: f64,
    pub worst_index: usize,
}

/// Checks `V[k+1] <= V[k] + 1e-9 max(1, V[k])` on every recorded step.
pub fn lyapunov_rate_check(traj: &Trajectory) -> Result<RateReport> {
    if !traj.constant_parameter {
        return Err(Error::NotApplicable(
            "V is only non-increasing for constant parameters".into(),
        ));
    }
    let mut report = RateReport {
        passed: true,
        violations: 0,
        worst_increase: f64::NEG_INFINITY,
        worst_index: 0,
    };
    for (k, pair) in traj.v.windows(2).enumerate() {
        let increase = pair[1] - pair[0];
        if increase > 1e-9 * pair[0].max(1.0) {
            report.passed = false;
            report.violations += 1;
        }
        if increase > report.worst_increase {
            report.worst_increase = increase;
            report.worst_index = k;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::ScalarSignal;

    fn fig1_problem(theta_hat0: f64, horizon: f64) -> EstimationProblem {
        EstimationProblem {
            regressor: VectorSignal::scalar(ScalarSignal::cosine(2.0, 2.0, 0.0).unwrap()),
            parameter: ParameterSignal::constant(vec![5.0]).unwrap(),
            theta_hat0: vec![theta_hat0],
            horizon,
        }
    }

    #[test]
    fn linear_case_decays_exponentially() {
        let cfg = IntegratorConfig {
            record_stride: 100,
            ..Default::default()
        };
        let tr = integrate(
            &fig1_problem(0.0, 10.0),
            &EstimatorSpec::single(1.0).unwrap(),
            &cfg,
        )
        .unwrap();
        let k = tr.index_at(10.0).unwrap();
        assert!(tr.v[k] < tr.v[0] * 1e-3);
        // x(t) = -5 exp(-int 4 cos^2) = -5 exp(-2t - sin(4t)/2)
        let t: f64 = 10.0;
        let exact = -5.0 * (-2.0 * t - (4.0 * t).sin() / 2.0).exp();
        assert!((tr.x[k][0] - exact).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_stays_put() {
        let cfg = IntegratorConfig {
            conv_dwell: Some(1.0),
            record_stride: 10,
            ..Default::default()
        };
        let tr = integrate(
            &fig1_problem(5.0, 3.0),
            &EstimatorSpec::single(0.75).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!(tr.x.iter().all(|x| x[0] == 0.0));
        assert_eq!(tr.converged_at, Some(0.0));
        assert_eq!(tr.last_above_tol, None);
    }

    #[test]
    fn trajectory_invariants() {
        let cfg = IntegratorConfig {
            record_stride: 7,
            ..Default::default()
        };
        let tr = integrate(
            &fig1_problem(0.0, 1.234),
            &EstimatorSpec::single(1.5).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(tr.times.len(), tr.v.len());
        assert_eq!(tr.times.len(), tr.x.len());
        assert_eq!(tr.times.len(), tr.e.len());
        assert_eq!(*tr.times.last().unwrap(), 1.234);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        for (x, v) in tr.x.iter().zip(&tr.v) {
            assert_eq!(*v, 0.5 * dot(x, x));
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let cfg = IntegratorConfig::default();
        let spec = EstimatorSpec::composite(vec![0.75, 1.5]).unwrap();
        let a = integrate(&fig1_problem(0.0, 2.0), &spec, &cfg).unwrap();
        let b = integrate(&fig1_problem(0.0, 2.0), &spec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overflow_is_reported() {
        // Euler with a huge step on a p = 3 field diverges
        let cfg = IntegratorConfig {
            step: 0.5,
            method: Method::Euler,
            ..Default::default()
        };
        let err = integrate(
            &fig1_problem(1e3, 50.0),
            &EstimatorSpec::single(3.0).unwrap(),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
        assert!(err.is_numerical());
    }

    #[test]
    fn config_validation() {
        let bad = IntegratorConfig {
            step: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig {
            conv_dwell: Some(1e-6),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rate_check_passes_on_simulation() {
        let cfg = IntegratorConfig {
            record_stride: 10,
            ..Default::default()
        };
        for spec in [
            EstimatorSpec::single(0.75).unwrap(),
            EstimatorSpec::single(1.0).unwrap(),
            EstimatorSpec::composite(vec![0.75, 1.5]).unwrap(),
        ] {
            let tr = integrate(&fig1_problem(0.0, 5.0), &spec, &cfg).unwrap();
            assert!(lyapunov_rate_check(&tr).unwrap().passed);
        }
    }

    #[test]
    fn rate_check_negative_control() {
        let mut tr = integrate(
            &fig1_problem(0.0, 0.01),
            &EstimatorSpec::single(1.0).unwrap(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        tr.v = vec![1.0, 0.5, 0.75, 0.2];
        let r = lyapunov_rate_check(&tr).unwrap();
        assert!(!r.passed);
        assert_eq!(r.worst_index, 1);
        tr.constant_parameter = false;
        assert!(matches!(
            lyapunov_rate_check(&tr),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn convergence_needs_full_dwell() {
        let mut tr = integrate(
            &fig1_problem(0.0, 0.0005),
            &EstimatorSpec::single(1.0).unwrap(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        tr.times = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        tr.x = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0]
            .iter()
            .map(|v| vec![*v])
            .collect();
        tr.detect_convergence(0.5, 2.0);
        assert_eq!(tr.converged_at, Some(3.0));
        assert_eq!(tr.hit_interval(), Some((2.0, 3.0)));
        tr.detect_convergence(0.5, 2.5);
        assert_eq!(tr.converged_at, None);
    }

    #[test]
    fn csv_layout() {
        let tr = integrate(
            &fig1_problem(0.0, 0.0003),
            &EstimatorSpec::single(1.0).unwrap(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x_1,e,V,theta_hat_1");
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.0, -5.0, -10.0, 12.5, 0.0]);
        assert_eq!(text.lines().count(), 1 + tr.len());
    }
}
