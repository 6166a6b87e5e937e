//! Time-parametrized regressor and parameter signals.
//!
//! Two families are supported: sums of sinusoids and constants (one sum per
//! component), and piecewise-constant vector sequences with per-segment dwell
//! times. Piecewise-constant signals are right-continuous at their breakpoints;
//! [`VectorSignal::eval_left_into`] gives the left limit, which the integrator
//! uses for the stage that lands on the end of a step.

use crate::error::{Error, Result};
use crate::quadrature::{dot, norm};

/// Relative snapping tolerance when locating a time on the breakpoint grid.
const BREAKPOINT_SNAP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum SignalTerm {
    Constant(f64),
    /// `amplitude * cos(frequency * t + phase)`
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
}

impl SignalTerm {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            SignalTerm::Constant(c) => c,
            SignalTerm::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).cos(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            SignalTerm::Constant(_) => 0.0,
            SignalTerm::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => -amplitude * frequency * (frequency * t + phase).sin(),
        }
    }

    fn magnitude_bound(&self) -> f64 {
        match *self {
            SignalTerm::Constant(c) => c.abs(),
            SignalTerm::Sinusoid { amplitude, .. } => amplitude.abs(),
        }
    }

    fn rate_bound(&self) -> f64 {
        match *self {
            SignalTerm::Constant(_) => 0.0,
            SignalTerm::Sinusoid {
                amplitude,
                frequency,
                ..
            } => (amplitude * frequency).abs(),
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            SignalTerm::Constant(c) => c.is_finite(),
            SignalTerm::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude.is_finite() && frequency.is_finite() && phase.is_finite(),
        }
    }

    fn shifted(&self, offset: f64) -> SignalTerm {
        match *self {
            SignalTerm::Constant(c) => SignalTerm::Constant(c),
            SignalTerm::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => SignalTerm::Sinusoid {
                amplitude,
                frequency,
                phase: phase + frequency * offset,
            },
        }
    }
}

/// A sum of [`SignalTerm`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSignal {
    terms: Vec<SignalTerm>,
}

impl ScalarSignal {
    pub fn new(terms: Vec<SignalTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidSignal(
                "a scalar signal needs at least one term".into(),
            ));
        }
        if let Some(bad) = terms.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite term {bad:?}")));
        }
        Ok(ScalarSignal { terms })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![SignalTerm::Constant(c)])
    }

    pub fn cosine(amplitude: f64, frequency: f64, phase: f64) -> Result<Self> {
        Self::new(vec![SignalTerm::Sinusoid {
            amplitude,
            frequency,
            phase,
        }])
    }

    pub fn terms(&self) -> &[SignalTerm] {
        &self.terms
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.derivative(t)).sum()
    }

    /// Sum of the absolute amplitudes; bounds `|s(t)|` for every `t`.
    pub fn magnitude_bound(&self) -> f64 {
        self.terms.iter().map(SignalTerm::magnitude_bound).sum()
    }

    pub fn rate_bound(&self) -> f64 {
        self.terms.iter().map(SignalTerm::rate_bound).sum()
    }

    fn shifted(&self, offset: f64) -> ScalarSignal {
        ScalarSignal {
            terms: self.terms.iter().map(|t| t.shifted(offset)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Piecewise {
    values: Vec<Vec<f64>>,
    dwells: Vec<f64>,
    /// Start time of each segment within one pass of the sequence.
    starts: Vec<f64>,
    period: f64,
    cycle: bool,
    offset: f64,
}

impl Piecewise {
    fn locate(&self, t: f64, left: bool) -> usize {
        let local = t + self.offset;
        let snap = BREAKPOINT_SNAP * local.abs().max(1.0);
        let mut pos = if left { local - snap } else { local + snap };
        if self.cycle {
            pos = pos.rem_euclid(self.period);
        } else if pos < 0.0 {
            return 0;
        }
        // Last segment whose start is <= pos; past the end of a terminating
        // sequence the last value is held.
        match self.starts.partition_point(|&s| s <= pos) {
            0 => 0,
            k => k - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Components(Vec<ScalarSignal>),
    Piecewise(Piecewise),
}

/// A regressor `u(t)` in `R^n`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSignal {
    dimension: usize,
    kind: Kind,
}

impl VectorSignal {
    pub fn from_components(components: Vec<ScalarSignal>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidSignal(
                "a vector signal needs at least one component".into(),
            ));
        }
        Ok(VectorSignal {
            dimension: components.len(),
            kind: Kind::Components(components),
        })
    }

    pub fn scalar(component: ScalarSignal) -> Self {
        VectorSignal {
            dimension: 1,
            kind: Kind::Components(vec![component]),
        }
    }

    /// Piecewise-constant sequence. `dwells` is either one value shared by all
    /// segments or one per segment. A terminating sequence holds its last value.
    pub fn piecewise(values: Vec<Vec<f64>>, dwells: Vec<f64>, cycle: bool) -> Result<Self> {
        let dimension = match values.first() {
            Some(v) if !v.is_empty() => v.len(),
            _ => {
                return Err(Error::InvalidSignal(
                    "piecewise signal needs non-empty vectors".into(),
                ))
            }
        };
        if let Some(v) = values.iter().find(|v| v.len() != dimension) {
            return Err(Error::Dimension {
                expected: dimension,
                found: v.len(),
            });
        }
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSignal(
                "piecewise values must be finite".into(),
            ));
        }
        let dwells = match dwells.len() {
            1 => vec![dwells[0]; values.len()],
            k if k == values.len() => dwells,
            k => {
                return Err(Error::InvalidSignal(format!(
                    "{k} dwell times given for {} segments",
                    values.len()
                )))
            }
        };
        if let Some(d) = dwells.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::InvalidSignal(format!(
                "dwell times must be > 0, got {d}"
            )));
        }
        let mut starts = Vec::with_capacity(dwells.len());
        let mut acc = 0.0;
        for d in &dwells {
            starts.push(acc);
            acc += d;
        }
        Ok(VectorSignal {
            dimension,
            kind: Kind::Piecewise(Piecewise {
                values,
                dwells,
                starts,
                period: acc,
                cycle,
                offset: 0.0,
            }),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_piecewise(&self) -> bool {
        matches!(self.kind, Kind::Piecewise(_))
    }

    /// Segment values and dwell times of a piecewise-constant signal.
    pub fn segments(&self) -> Option<(&[Vec<f64>], &[f64])> {
        match &self.kind {
            Kind::Piecewise(pw) => Some((&pw.values, &pw.dwells)),
            Kind::Components(_) => None,
        }
    }

    pub fn components(&self) -> Option<&[ScalarSignal]> {
        match &self.kind {
            Kind::Components(c) => Some(c),
            Kind::Piecewise(_) => None,
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match &self.kind {
            Kind::Components(c) => {
                for (o, s) in out.iter_mut().zip(c) {
                    *o = s.eval(t);
                }
            }
            Kind::Piecewise(pw) => out.copy_from_slice(&pw.values[pw.locate(t, false)]),
        }
    }

    /// Left limit `u(t-)`; equal to [`eval_into`](Self::eval_into) away from breakpoints.
    pub fn eval_left_into(&self, t: f64, out: &mut [f64]) {
        match &self.kind {
            Kind::Components(_) => self.eval_into(t, out),
            Kind::Piecewise(pw) => out.copy_from_slice(&pw.values[pw.locate(t, true)]),
        }
    }

    /// Time derivative; zero almost everywhere for piecewise-constant signals.
    pub fn derivative_into(&self, t: f64, out: &mut [f64]) {
        match &self.kind {
            Kind::Components(c) => {
                for (o, s) in out.iter_mut().zip(c) {
                    *o = s.derivative(t);
                }
            }
            Kind::Piecewise(_) => out.fill(0.0),
        }
    }

    /// Upper bound on `|u(t)|` over `[0, horizon]`.
    ///
    /// For sinusoid sums this is the Euclidean norm of the per-component
    /// amplitude sums; for piecewise-constant signals it is the largest norm
    /// among the segments active on the horizon.
    pub fn sup_bound(&self, horizon: f64) -> f64 {
        match &self.kind {
            Kind::Components(c) => c
                .iter()
                .map(|s| s.magnitude_bound().powi(2))
                .sum::<f64>()
                .sqrt(),
            Kind::Piecewise(pw) => {
                let mut k = pw.locate(0.0, false);
                let local0 = pw.offset;
                let pass = if pw.cycle {
                    (local0 / pw.period).floor()
                } else {
                    0.0
                };
                // absolute (unshifted) end of the current segment
                let mut end = pass * pw.period + pw.starts[k] + pw.dwells[k] - pw.offset;
                let mut best = norm(&pw.values[k]);
                let mut visited = 1;
                while end < horizon && visited < pw.values.len() {
                    if k + 1 == pw.values.len() {
                        if !pw.cycle {
                            break;
                        }
                        k = 0;
                    } else {
                        k += 1;
                    }
                    best = best.max(norm(&pw.values[k]));
                    end += pw.dwells[k];
                    visited += 1;
                }
                best
            }
        }
    }

    /// Bound on `|du/dt|` componentwise summed as a Euclidean norm; zero for
    /// piecewise-constant signals.
    pub fn rate_bound(&self) -> f64 {
        match &self.kind {
            Kind::Components(c) => c.iter().map(|s| s.rate_bound().powi(2)).sum::<f64>().sqrt(),
            Kind::Piecewise(_) => 0.0,
        }
    }

    /// The same signal advanced by `offset` seconds: `shifted(o).eval(t) == eval(t + o)`.
    pub fn shifted(&self, offset: f64) -> VectorSignal {
        let kind = match &self.kind {
            Kind::Components(c) => Kind::Components(c.iter().map(|s| s.shifted(offset)).collect()),
            Kind::Piecewise(pw) => Kind::Piecewise(Piecewise {
                offset: pw.offset + offset,
                ..pw.clone()
            }),
        };
        VectorSignal {
            dimension: self.dimension,
            kind,
        }
    }
}

/// Cycling piecewise-constant regressor over `n` mutually orthogonal vectors in `R^n`.
pub fn orthogonal_sequence(vectors: Vec<Vec<f64>>, dwell: f64) -> Result<VectorSignal> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::InvalidSignal("empty vector list".into()));
    }
    for v in &vectors {
        if v.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: v.len(),
            });
        }
        if norm(v) == 0.0 {
            return Err(Error::InvalidSignal(
                "zero vector in orthogonal sequence".into(),
            ));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&vectors[i], &vectors[j]);
            if dot(a, b).abs() > 1e-12 * norm(a) * norm(b) {
                return Err(Error::InvalidSignal(format!(
                    "vectors {i} and {j} are not orthogonal (inner product {})",
                    dot(a, b)
                )));
            }
        }
    }
    VectorSignal::piecewise(vectors, vec![dwell], true)
}

/// The true parameter `theta(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterSignal {
    Constant(Vec<f64>),
    Varying {
        signal: VectorSignal,
        /// Bound on `|d theta/dt|` (gamma).
        rate_bound: f64,
    },
}

impl ParameterSignal {
    pub fn constant(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSignal(
                "constant parameter must be non-empty and finite".into(),
            ));
        }
        Ok(ParameterSignal::Constant(theta))
    }

    /// Time-varying parameter. Without an explicit `gamma` the rate bound of the signal is used.
    pub fn varying(signal: VectorSignal, gamma: Option<f64>) -> Result<Self> {
        let rate_bound = gamma.unwrap_or_else(|| signal.rate_bound());
        if !(rate_bound.is_finite() && rate_bound >= 0.0) {
            return Err(Error::InvalidSignal(format!(
                "gamma must be >= 0, got {rate_bound}"
            )));
        }
        Ok(ParameterSignal::Varying { signal, rate_bound })
    }

    pub fn dimension(&self) -> usize {
        match self {
            ParameterSignal::Constant(v) => v.len(),
            ParameterSignal::Varying { signal, .. } => signal.dimension(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ParameterSignal::Constant(_))
    }

    pub fn gamma(&self) -> f64 {
        match self {
            ParameterSignal::Constant(_) => 0.0,
            ParameterSignal::Varying { rate_bound, .. } => *rate_bound,
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            ParameterSignal::Constant(v) => out.copy_from_slice(v),
            ParameterSignal::Varying { signal, .. } => signal.eval_into(t, out),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn derivative_into(&self, t: f64, out: &mut [f64]) {
        match self {
            ParameterSignal::Constant(_) => out.fill(0.0),
            ParameterSignal::Varying { signal, .. } => signal.derivative_into(t, out),
        }
    }

    pub fn shifted(&self, offset: f64) -> ParameterSignal {
        match self {
            ParameterSignal::Constant(v) => ParameterSignal::Constant(v.clone()),
            ParameterSignal::Varying { signal, rate_bound } => ParameterSignal::Varying {
                signal: signal.shifted(offset),
                rate_bound: *rate_bound,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig4_regressor() -> VectorSignal {
        VectorSignal::from_components(vec![
            ScalarSignal::cosine(2.0, 2.0, 0.0).unwrap(),
            ScalarSignal::cosine(-1.0, 3.0, 0.0).unwrap(),
            ScalarSignal::cosine(5.0, 5.0, 0.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        let u = VectorSignal::scalar(ScalarSignal::cosine(2.0, 2.0, 0.0).unwrap());
        assert_eq!(u.eval(0.0), vec![2.0]);
        let zero = VectorSignal::scalar(ScalarSignal::constant(0.0).unwrap());
        assert_eq!(zero.eval(3.7), vec![0.0]);
        assert_eq!(fig4_regressor().eval(0.0), vec![2.0, -1.0, 5.0]);
    }

    #[test]
    fn sup_bound_examples() {
        let u = VectorSignal::scalar(ScalarSignal::cosine(2.0, 2.0, 0.0).unwrap());
        assert_eq!(u.sup_bound(10.0), 2.0);
        let pw =
            VectorSignal::piecewise(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0], true).unwrap();
        assert_eq!(pw.sup_bound(10.0), 1.0);
        assert_relative_eq!(
            fig4_regressor().sup_bound(10.0),
            30f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn sup_bound_dominates_dense_samples() {
        let u = fig4_regressor();
        let horizon = 20.0;
        let bound = u.sup_bound(horizon);
        for i in 0..10_000 {
            let t = horizon * i as f64 / 9_999.0;
            assert!(norm(&u.eval(t)) <= bound + 1e-12);
        }
    }

    #[test]
    fn piecewise_sup_bound_only_counts_visited_segments() {
        let pw = VectorSignal::piecewise(vec![vec![1.0], vec![3.0], vec![2.0]], vec![1.0], false)
            .unwrap();
        assert_eq!(pw.sup_bound(0.5), 1.0);
        assert_eq!(pw.sup_bound(1.5), 3.0);
        assert_eq!(pw.shifted(2.0).sup_bound(0.5), 2.0);
    }

    #[test]
    fn piecewise_is_right_continuous() {
        let pw =
            VectorSignal::piecewise(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0], true).unwrap();
        assert_eq!(pw.eval(0.0), vec![1.0, 0.0]);
        assert_eq!(pw.eval(0.999), vec![1.0, 0.0]);
        assert_eq!(pw.eval(1.0), vec![0.0, 1.0]);
        assert_eq!(pw.eval(2.0), vec![1.0, 0.0]);
        // breakpoints reached by accumulated rounding still snap
        assert_eq!(pw.eval(10_000.0 * 1e-4), vec![0.0, 1.0]);
        let mut left = [0.0; 2];
        pw.eval_left_into(1.0, &mut left);
        assert_eq!(left, [1.0, 0.0]);
        pw.eval_left_into(2.0, &mut left);
        assert_eq!(left, [0.0, 1.0]);
    }

    #[test]
    fn terminating_sequence_holds_last_value() {
        let pw =
            VectorSignal::piecewise(vec![vec![1.0], vec![2.0]], vec![0.5, 1.5], false).unwrap();
        assert_eq!(pw.eval(0.4), vec![1.0]);
        assert_eq!(pw.eval(0.5), vec![2.0]);
        assert_eq!(pw.eval(100.0), vec![2.0]);
    }

    #[test]
    fn construction_errors() {
        assert!(ScalarSignal::new(vec![]).is_err());
        assert!(ScalarSignal::cosine(f64::NAN, 1.0, 0.0).is_err());
        assert!(VectorSignal::piecewise(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0], true).is_err());
        assert!(VectorSignal::piecewise(vec![vec![1.0]], vec![0.0], true).is_err());
        assert!(
            VectorSignal::piecewise(vec![vec![1.0], vec![2.0]], vec![1.0, 2.0, 3.0], true).is_err()
        );
        assert!(ParameterSignal::varying(fig4_regressor(), Some(-1.0)).is_err());
    }

    #[test]
    fn orthogonal_sequence_examples() {
        let s = orthogonal_sequence(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        assert_eq!(s.dimension(), 2);
        let s = orthogonal_sequence(vec![vec![1.0, 1.0], vec![1.0, -1.0]], 2.0).unwrap();
        assert_eq!(s.eval(2.5), vec![1.0, -1.0]);
        assert_eq!(s.eval(4.0), vec![1.0, 1.0]);
        assert!(orthogonal_sequence(vec![vec![1.0, 0.0], vec![1.0, 1.0]], 1.0).is_err());
        assert!(orthogonal_sequence(vec![vec![0.0, 0.0], vec![0.0, 1.0]], 1.0).is_err());
    }

    #[test]
    fn consecutive_orthogonal_segments_are_orthogonal() {
        let s = orthogonal_sequence(
            vec![
                vec![1.0, 1.0, 0.0],
                vec![1.0, -1.0, 0.0],
                vec![0.0, 0.0, 2.0],
            ],
            0.3,
        )
        .unwrap();
        let mut prev = s.eval(0.0);
        for k in 1..20 {
            let cur = s.eval(0.3 * k as f64 + 0.1);
            if cur != prev {
                assert_eq!(dot(&cur, &prev), 0.0);
            }
            prev = cur;
        }
    }

    #[test]
    fn shift_advances_time() {
        let u = fig4_regressor();
        let s = u.shifted(1.3);
        for t in [0.0, 0.7, 5.1] {
            let (a, b) = (s.eval(t), u.eval(t + 1.3));
            for (x, y) in a.iter().zip(&b) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
        }
        let pw = VectorSignal::piecewise(vec![vec![1.0], vec![2.0]], vec![1.0], true).unwrap();
        assert_eq!(pw.shifted(1.3).eval(0.0), vec![2.0]);
        assert_eq!(pw.shifted(1.3).eval(0.7), vec![1.0]);
    }

    #[test]
    fn varying_parameter_rate_bound() {
        let theta = VectorSignal::scalar(
            ScalarSignal::new(vec![
                SignalTerm::Sinusoid {
                    amplitude: 1.0,
                    frequency: 3.0,
                    phase: 0.0,
                },
                SignalTerm::Constant(-4.0),
            ])
            .unwrap(),
        );
        let p = ParameterSignal::varying(theta, None).unwrap();
        assert_eq!(p.gamma(), 3.0);
        assert_eq!(p.eval(0.0), vec![-3.0]);
    }
}
