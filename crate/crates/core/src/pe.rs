//! Numerical certification of persistence of excitation.
//!
//! A regressor is persistently exciting on windows of length `T` with level
//! `epsilon` when `(1/T) * int_t^{t+T} |u(s)^T w| ds >= epsilon` for every
//! start time `t` and every unit vector `w`. [`certify`] estimates the largest
//! such `epsilon` by minimizing the windowed average over a grid of start
//! times and a deterministic grid of unit vectors, then scales it down by
//! [`CONSERVATISM`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{dot, even_panels, simpson, simpson_weights};
use crate::signals::VectorSignal;

/// Fixed downward adjustment applied to the raw grid minimum.
pub const CONSERVATISM: f64 = 0.99;

/// Raw levels below this are reported as "not PE".
pub const NOT_PE_THRESHOLD: f64 = 1e-9;

pub const DEFAULT_SUBINTERVALS: usize = 2000;

pub const MIN_SPHERE_RESOLUTION: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeSettings {
    /// Window length `T`.
    pub window: f64,
    /// Window start times range over `[0, horizon - window]`.
    pub horizon: f64,
    pub sphere_resolution: usize,
    pub window_step: f64,
    pub subintervals: usize,
}

impl PeSettings {
    pub fn new(window: f64, horizon: f64, sphere_resolution: usize, window_step: f64) -> Self {
        PeSettings {
            window,
            horizon,
            sphere_resolution,
            window_step,
            subintervals: DEFAULT_SUBINTERVALS,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::Precondition(format!(
                "PE window must be > 0, got {}",
                self.window
            )));
        }
        if !(self.window_step.is_finite() && self.window_step > 0.0) {
            return Err(Error::Precondition(format!(
                "window step must be > 0, got {}",
                self.window_step
            )));
        }
        if !(self.horizon >= self.window + self.window_step) {
            return Err(Error::Precondition(format!(
                "PE horizon {} must cover the window {} plus one step {}",
                self.horizon, self.window, self.window_step
            )));
        }
        if self.sphere_resolution < MIN_SPHERE_RESOLUTION {
            return Err(Error::Precondition(format!(
                "sphere resolution must be >= {MIN_SPHERE_RESOLUTION}, got {}",
                self.sphere_resolution
            )));
        }
        if self.subintervals < 2 {
            return Err(Error::Precondition(
                "need at least 2 quadrature subintervals".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeCertificate {
    /// Window length `T`.
    pub window: f64,
    /// Grid minimum of the windowed average.
    pub epsilon_raw: f64,
    /// Conservative level `CONSERVATISM * epsilon_raw`, or 0 when not PE.
    pub epsilon: f64,
    /// Upper bound on `|u(t)|` over the horizon.
    pub u_max: f64,
    pub horizon: f64,
    pub sphere_resolution: usize,
    pub window_step: f64,
    pub subintervals: usize,
    pub grid_size: usize,
    pub windows_checked: usize,
    /// Window start and direction attaining the minimum.
    pub witness_start: f64,
    pub witness_direction: Vec<f64>,
}

impl PeCertificate {
    pub fn is_pe(&self) -> bool {
        self.epsilon > 0.0
    }

    /// Builds a certificate by hand (tests, analytic signals).
    pub fn from_parts(window: f64, epsilon: f64, u_max: f64) -> Self {
        PeCertificate {
            window,
            epsilon_raw: epsilon,
            epsilon,
            u_max,
            horizon: window,
            sphere_resolution: 0,
            window_step: window,
            subintervals: DEFAULT_SUBINTERVALS,
            grid_size: 0,
            windows_checked: 0,
            witness_start: 0.0,
            witness_direction: Vec::new(),
        }
    }
}

/// Deterministic set of unit directions covering the sphere in `R^n` up to sign.
///
/// `n = 1`: `{-1, +1}`. `n = 2`: `resolution` equally spaced angles on a half
/// circle. `n = 3`: Fibonacci lattice of `resolution^2` points. Higher
/// dimensions use a product grid in hyperspherical angles.
pub fn sphere_grid(n: usize, resolution: usize) -> Vec<Vec<f64>> {
    match n {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..resolution)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / resolution as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let m = resolution * resolution;
            let golden = std::f64::consts::PI * (1.0 + 5f64.sqrt());
            (0..m)
                .map(|i| {
                    let s = i as f64 + 0.5;
                    let z = 1.0 - 2.0 * s / m as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * s;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            let polar = n - 2;
            let total = resolution.pow((polar + 1) as u32);
            (0..total)
                .map(|mut idx| {
                    let mut angles = Vec::with_capacity(n - 1);
                    for _ in 0..polar {
                        let k = idx % resolution;
                        idx /= resolution;
                        angles.push(std::f64::consts::PI * (k as f64 + 0.5) / resolution as f64);
                    }
                    angles.push(std::f64::consts::TAU * idx as f64 / resolution as f64);
                    let mut w = vec![0.0; n];
                    let mut sin_prod = 1.0;
                    for (i, a) in angles.iter().enumerate() {
                        w[i] = sin_prod * a.cos();
                        sin_prod *= a.sin();
                    }
                    w[n - 1] = sin_prod;
                    w
                })
                .collect()
        }
    }
}

/// Certifies persistence of excitation of `signal` on windows of length `settings.window`.
pub fn certify(signal: &VectorSignal, settings: &PeSettings) -> Result<PeCertificate> {
    settings.validate()?;
    let n = signal.dimension();
    let t_len = settings.window;
    let grid = sphere_grid(n, settings.sphere_resolution);
    let panels = even_panels(settings.subintervals);
    let h = t_len / panels as f64;
    let weights = simpson_weights(panels, h);
    let last = ((settings.horizon - t_len) / settings.window_step + 1e-9).floor() as usize;

    // (integral, window index, direction index); min is independent of evaluation order
    let best = (0..=last)
        .into_par_iter()
        .map(|k| {
            let start = k as f64 * settings.window_step;
            let mut samples = vec![0.0; (panels + 1) * n];
            for (i, chunk) in samples.chunks_mut(n).enumerate() {
                signal.eval_into(start + i as f64 * h, chunk);
            }
            let mut local = (f64::INFINITY, k, 0usize);
            for (j, w) in grid.iter().enumerate() {
                let integral: f64 = samples
                    .chunks(n)
                    .zip(&weights)
                    .map(|(u, wt)| wt * dot(u, w).abs())
                    .sum();
                if integral < local.0 {
                    local = (integral, k, j);
                }
            }
            local
        })
        .reduce(
            || (f64::INFINITY, usize::MAX, usize::MAX),
            |a, b| {
                if (b.0, b.1, b.2) < (a.0, a.1, a.2) {
                    b
                } else {
                    a
                }
            },
        );

    let epsilon_raw = best.0 / t_len;
    let epsilon = if epsilon_raw < NOT_PE_THRESHOLD {
        0.0
    } else {
        CONSERVATISM * epsilon_raw
    };
    Ok(PeCertificate {
        window: t_len,
        epsilon_raw,
        epsilon,
        u_max: signal.sup_bound(settings.horizon),
        horizon: settings.horizon,
        sphere_resolution: settings.sphere_resolution,
        window_step: settings.window_step,
        subintervals: panels,
        grid_size: grid.len(),
        windows_checked: last + 1,
        witness_start: best.1 as f64 * settings.window_step,
        witness_direction: grid[best.2].clone(),
    })
}

/// Lower bound `T * epsilon^(p+1)` on `int_t^{t+T} |u^T w|^(p+1) ds`.
pub fn power_bound(cert: &PeCertificate, p: f64) -> f64 {
    cert.window * cert.epsilon.powf(p + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerBoundReport {
    pub passed: bool,
    pub trials: usize,
    pub violations: usize,
    pub tolerance: f64,
    /// Smallest `integral - T epsilon^(p+1)` seen.
    pub worst_margin: f64,
    pub witness_start: f64,
    pub witness_direction: Vec<f64>,
}

/// Samples `trials` (window start, unit direction) pairs and checks the power-integral bound.
pub fn verify_power_bound(
    signal: &VectorSignal,
    cert: &PeCertificate,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<PowerBoundReport> {
    if !(p >= 0.0) {
        return Err(Error::InvalidExponent(p));
    }
    if cert.window <= 0.0 {
        return Err(Error::Precondition("certificate window must be > 0".into()));
    }
    let n = signal.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = power_bound(cert, p);
    let tolerance = 1e-6 * cert.window * (1.0 + cert.u_max.powf(p + 1.0));
    let span = (cert.horizon - cert.window).max(0.0);
    let mut report = PowerBoundReport {
        passed: true,
        trials,
        violations: 0,
        tolerance,
        worst_margin: f64::INFINITY,
        witness_start: 0.0,
        witness_direction: Vec::new(),
    };
    let mut u = vec![0.0; n];
    for _ in 0..trials {
        let start = if span > 0.0 {
            rng.gen_range(0.0..=span)
        } else {
            0.0
        };
        let w = random_unit(&mut rng, n);
        let integral = simpson(
            |s| {
                signal.eval_into(s, &mut u);
                dot(&u, &w).abs().powf(p + 1.0)
            },
            start,
            start + cert.window,
            cert.subintervals,
        );
        let margin = integral - bound;
        if margin < -tolerance {
            report.violations += 1;
            report.passed = false;
        }
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.witness_start = start;
            report.witness_direction = w;
        }
    }
    Ok(report)
}

fn random_unit(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r = dot(&v, &v).sqrt();
        if r > 1e-3 && r <= 1.0 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}
