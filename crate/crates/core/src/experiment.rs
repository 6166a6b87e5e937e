//! Scenario runs: simulation, bound checks, sweeps and plot data.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    classify, escape_bound, finite_time_bound, fixed_time_bound, tracker_gain_check, BoundKind,
    BoundReport, ConvergenceClass,
};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::integrator::{integrate, Trajectory};
use crate::pe::{certify, PeCertificate};
use crate::quadrature::norm;
use crate::scenario::{DwellDesc, EstimatorDesc, Scenario, SignalDesc};

/// Outcome of one estimator in a scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorOutcome {
    pub label: String,
    pub converged_at: Option<f64>,
    pub hit_interval: Option<(f64, f64)>,
    pub final_error_norm: f64,
    pub class: ConvergenceClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
    /// Time the bound refers to: `converged_at`, or the first time `V <= c` for escape bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_satisfied: Option<bool>,
    /// Tracker only: whether `L > gamma`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_condition: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub certificate: PeCertificate,
    pub outcomes: Vec<EstimatorOutcome>,
}

pub fn certify_scenario(scenario: &Scenario) -> Result<PeCertificate> {
    certify(&scenario.problem.regressor, &scenario.pe)
}

/// Integrates every estimator of the scenario, in parallel.
pub fn simulate(scenario: &Scenario) -> Result<Vec<Trajectory>> {
    scenario
        .estimators
        .par_iter()
        .map(|spec| integrate(&scenario.problem, spec, &scenario.integrator))
        .collect()
}

/// The convergence-time bound that applies to `spec`, if any.
///
/// Bounds need a scalar problem with a constant parameter and a PE certificate.
pub fn applicable_bound(
    scenario: &Scenario,
    spec: &EstimatorSpec,
    cert: &PeCertificate,
) -> Result<Option<BoundReport>> {
    if scenario.dimension() != 1 || !scenario.problem.parameter.is_constant() || !cert.is_pe() {
        return Ok(None);
    }
    let x0 = scenario.problem.initial_error()[0].abs();
    let report = match spec {
        EstimatorSpec::Single { p } if *p < 1.0 => Some(finite_time_bound(x0, *p, cert)?),
        EstimatorSpec::Single { p } if *p > 1.0 => {
            Some(escape_bound(scenario.config.escape_level, *p, cert)?)
        }
        EstimatorSpec::Composite(set) if set.min() < 1.0 && set.max() > 1.0 => {
            Some(fixed_time_bound(set, cert)?)
        }
        _ => None,
    };
    Ok(report)
}

fn event_time(traj: &Trajectory, bound: &BoundReport, escape_level: f64) -> Option<f64> {
    match bound.kind {
        BoundKind::Escape => traj.first_time_v_at_most(escape_level),
        BoundKind::FiniteTime | BoundKind::FixedTime => traj.converged_at,
    }
}

pub fn outcome(
    scenario: &Scenario,
    spec: &EstimatorSpec,
    traj: &Trajectory,
    cert: &PeCertificate,
) -> Result<EstimatorOutcome> {
    let bound = applicable_bound(scenario, spec, cert)?;
    let event = bound
        .as_ref()
        .and_then(|b| event_time(traj, b, scenario.config.escape_level));
    let bound_satisfied = bound.as_ref().map(|b| event.is_some_and(|t| t <= b.bound));
    let gain_condition = match spec {
        EstimatorSpec::Tracker { gain, .. } => Some(tracker_gain_check(
            *gain,
            scenario.problem.parameter.gamma(),
        )),
        _ => None,
    };
    Ok(EstimatorOutcome {
        label: traj.label.clone(),
        converged_at: traj.converged_at,
        hit_interval: traj.hit_interval(),
        final_error_norm: traj.final_error_norm(),
        class: classify(spec, scenario.dimension(), cert),
        bound,
        event_time: event,
        bound_satisfied,
        gain_condition,
        csv: None,
    })
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Certifies, simulates and evaluates every estimator.
///
/// With `out_dir`, writes one CSV per estimator (`<index>_<label>.csv`), the comparison
/// CSV and, if the scenario asks for it, plot data.
pub fn run(scenario: &Scenario, out_dir: Option<&Path>) -> Result<(RunSummary, Vec<Trajectory>)> {
    let cert = certify_scenario(scenario)?;
    let trajectories = simulate(scenario)?;
    let mut outcomes = scenario
        .estimators
        .iter()
        .zip(&trajectories)
        .map(|(spec, traj)| outcome(scenario, spec, traj, &cert))
        .collect::<Result<Vec<_>>>()?;

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        for (i, (traj, out)) in trajectories.iter().zip(&mut outcomes).enumerate() {
            let path = dir.join(format!("{i}_{}.csv", file_stem(&traj.label)));
            let mut w = BufWriter::new(File::create(&path)?);
            traj.write_csv(&mut w)?;
            w.flush()?;
            out.csv = Some(path);
        }
        let mut w = BufWriter::new(File::create(dir.join("compare.csv"))?);
        write_comparison(&trajectories, &mut w)?;
        w.flush()?;
        if scenario.config.outputs.plot_data {
            for mode in [PlotMode::VVsT, PlotMode::XVsT, PlotMode::ThetaVsT] {
                emit_plot_data(&trajectories, mode, dir, scenario.name())?;
            }
        }
    }

    let summary = RunSummary {
        scenario: scenario.name().to_string(),
        certificate: cert,
        outcomes,
    };
    Ok((summary, trajectories))
}

/// `V` of every trajectory on the shared time grid: header `t,V_<label>...`.
pub fn write_comparison<W: Write>(trajectories: &[Trajectory], mut w: W) -> Result<()> {
    let times = trajectories
        .first()
        .map(|t| t.times.as_slice())
        .unwrap_or(&[]);
    if trajectories.iter().any(|t| t.times != times) {
        return Err(Error::Precondition(
            "trajectories do not share a time grid".into(),
        ));
    }
    let mut header = vec!["t".to_string()];
    header.extend(trajectories.iter().map(|t| format!("V_{}", t.label)));
    writeln!(w, "{}", header.join(","))?;
    for (k, t) in times.iter().enumerate() {
        write!(w, "{t:.16e}")?;
        for traj in trajectories {
            write!(w, ",{:.16e}", traj.v[k])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMode {
    VVsT,
    XVsT,
    ThetaVsT,
}

impl PlotMode {
    pub fn name(self) -> &'static str {
        match self {
            PlotMode::VVsT => "V_vs_t",
            PlotMode::XVsT => "x_vs_t",
            PlotMode::ThetaVsT => "theta_vs_t",
        }
    }
}

impl std::str::FromStr for PlotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "V_vs_t" => Ok(PlotMode::VVsT),
            "x_vs_t" => Ok(PlotMode::XVsT),
            "theta_vs_t" => Ok(PlotMode::ThetaVsT),
            other => Err(Error::config(
                "mode",
                format!("unknown plot mode `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlotFiles {
    pub data: PathBuf,
    pub script: PathBuf,
}

/// Writes `<stem>_<mode>.dat` (whitespace separated, `#` header) and a gnuplot script
/// `<stem>_<mode>.gp` that plots it. An empty selection yields header-only files.
pub fn emit_plot_data(
    trajectories: &[Trajectory],
    mode: PlotMode,
    dir: &Path,
    stem: &str,
) -> Result<PlotFiles> {
    fs::create_dir_all(dir)?;
    let base = format!("{stem}_{}", mode.name());
    let data = dir.join(format!("{base}.dat"));
    let script = dir.join(format!("{base}.gp"));

    // Column names and per-trajectory extractors.
    let mut columns: Vec<String> = Vec::new();
    let n = trajectories.first().map_or(0, |t| t.dimension());
    for traj in trajectories {
        match mode {
            PlotMode::VVsT => columns.push(format!("V[{}]", traj.label)),
            PlotMode::XVsT => columns.extend((1..=n).map(|i| format!("x{i}[{}]", traj.label))),
            PlotMode::ThetaVsT => {
                columns.extend((1..=n).map(|i| format!("theta_hat{i}[{}]", traj.label)))
            }
        }
    }
    if mode == PlotMode::ThetaVsT && !trajectories.is_empty() {
        columns.extend((1..=n).map(|i| format!("theta{i}")));
    }

    let mut w = BufWriter::new(File::create(&data)?);
    writeln!(w, "# t {}", columns.join(" "))?;
    if let Some(first) = trajectories.first() {
        for k in 0..first.len() {
            write!(w, "{:.16e}", first.times[k])?;
            for traj in trajectories {
                match mode {
                    PlotMode::VVsT => write!(w, " {:.16e}", traj.v[k])?,
                    PlotMode::XVsT => {
                        for v in &traj.x[k] {
                            write!(w, " {v:.16e}")?;
                        }
                    }
                    PlotMode::ThetaVsT => {
                        for v in &traj.theta_hat[k] {
                            write!(w, " {v:.16e}")?;
                        }
                    }
                }
            }
            if mode == PlotMode::ThetaVsT {
                for (a, b) in first.theta_hat[k].iter().zip(&first.x[k]) {
                    write!(w, " {:.16e}", a - b)?;
                }
            }
            writeln!(w)?;
        }
    }
    w.flush()?;

    let mut g = BufWriter::new(File::create(&script)?);
    writeln!(g, "set xlabel 't'")?;
    match mode {
        PlotMode::VVsT => {
            writeln!(g, "set ylabel 'V'")?;
            writeln!(g, "set logscale y")?;
        }
        PlotMode::XVsT => writeln!(g, "set ylabel 'x'")?,
        PlotMode::ThetaVsT => writeln!(g, "set ylabel 'theta'")?,
    }
    if !columns.is_empty() {
        let file = data
            .file_name()
            .and_then(|f| f.to_str())
            .unwrap_or_default();
        let plots: Vec<String> = columns
            .iter()
            .enumerate()
            .map(|(i, c)| format!("'{file}' using 1:{} with lines title '{c}'", i + 2))
            .collect();
        writeln!(g, "plot {}", plots.join(", \\\n     "))?;
    }
    g.flush()?;
    Ok(PlotFiles { data, script })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepField {
    /// Exponent of single estimators.
    P,
    /// Tracker gain `L`.
    L,
    /// Initial error magnitude `|x0|`, keeping its direction.
    X0,
    /// Uniform dwell of a piecewise regressor.
    Dwell,
}

impl std::str::FromStr for SweepField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(SweepField::P),
            "L" => Ok(SweepField::L),
            "x0" => Ok(SweepField::X0),
            "dwell" => Ok(SweepField::Dwell),
            other => Err(Error::config(
                "vary",
                format!("unknown sweep field `{other}` (p, L, x0, dwell)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub label: String,
    pub converged_at: Option<f64>,
    pub bound: Option<f64>,
    /// `converged_at / bound`.
    pub ratio: Option<f64>,
    pub final_error_norm: f64,
    /// Piecewise regressors: `|x|` at the end of the first pass through the segments.
    pub norm_after_segments: Option<f64>,
}

fn varied_config(scenario: &Scenario, field: SweepField, value: f64) -> Result<Scenario> {
    let mut config = scenario.config.clone();
    match field {
        SweepField::P => {
            let mut hit = false;
            for e in &mut config.estimators {
                if let EstimatorDesc::Single { p } = e {
                    *p = value;
                    hit = true;
                }
            }
            if !hit {
                return Err(Error::config("vary", "p sweep needs a single estimator"));
            }
        }
        SweepField::L => {
            let mut hit = false;
            for e in &mut config.estimators {
                if let EstimatorDesc::Tracker { gain, .. } = e {
                    *gain = value;
                    hit = true;
                }
            }
            if !hit {
                return Err(Error::config("vary", "L sweep needs a tracker estimator"));
            }
        }
        SweepField::X0 => {
            let x0 = scenario.problem.initial_error();
            let theta0: Vec<f64> = scenario.problem.parameter.eval(0.0);
            let len = norm(&x0);
            let dir: Vec<f64> = if len > 0.0 {
                x0.iter().map(|v| v / len).collect()
            } else {
                let mut d = vec![0.0; x0.len()];
                d[0] = 1.0;
                d
            };
            config.theta_hat0 = theta0
                .iter()
                .zip(&dir)
                .map(|(t, d)| t + value * d)
                .collect();
            // The problem is rebuilt from the config, which applies the offset again.
            if config.t0_offset != 0.0 {
                return Err(Error::config("vary", "x0 sweep needs t0_offset = 0"));
            }
        }
        SweepField::Dwell => match &mut config.regressor {
            SignalDesc::Piecewise { dwell, .. } => *dwell = DwellDesc::Uniform(value),
            SignalDesc::Orthogonal { dwell, .. } => *dwell = value,
            SignalDesc::Sum { .. } => {
                return Err(Error::config(
                    "vary",
                    "dwell sweep needs a piecewise regressor",
                ));
            }
        },
    }
    Scenario::from_config(config)
}

fn first_pass_end(scenario: &Scenario) -> Option<f64> {
    let (values, dwells) = scenario.problem.regressor.segments()?;
    let total = if dwells.len() == 1 {
        dwells[0] * values.len() as f64
    } else {
        dwells.iter().sum()
    };
    Some(total)
}

/// Re-runs the scenario for each value of `field`. Estimators the field does not
/// touch are skipped for `p` and `L` sweeps.
pub fn sweep(scenario: &Scenario, field: SweepField, values: &[f64]) -> Result<Vec<SweepRow>> {
    let rows: Vec<Vec<SweepRow>> = values
        .par_iter()
        .map(|&value| {
            let s = varied_config(scenario, field, value)?;
            let cert = certify_scenario(&s)?;
            let pass_end = first_pass_end(&s);
            let mut rows = Vec::new();
            for spec in &s.estimators {
                let relevant = match field {
                    SweepField::P => matches!(spec, EstimatorSpec::Single { .. }),
                    SweepField::L => matches!(spec, EstimatorSpec::Tracker { .. }),
                    SweepField::X0 | SweepField::Dwell => true,
                };
                if !relevant {
                    continue;
                }
                let traj = integrate(&s.problem, spec, &s.integrator)?;
                let bound = applicable_bound(&s, spec, &cert)?;
                let event = bound
                    .as_ref()
                    .and_then(|b| event_time(&traj, b, s.config.escape_level));
                let bound_value = bound.as_ref().map(|b| b.bound);
                let ratio = match (event, bound_value) {
                    (Some(t), Some(b)) if b > 0.0 => Some(t / b),
                    _ => None,
                };
                let norm_after_segments = pass_end
                    .and_then(|t| traj.index_at(t))
                    .map(|k| traj.error_norm(k));
                rows.push(SweepRow {
                    value,
                    label: traj.label.clone(),
                    converged_at: traj.converged_at,
                    bound: bound_value,
                    ratio,
                    final_error_norm: traj.final_error_norm(),
                    norm_after_segments,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    fn opt(v: Option<f64>) -> String {
        v.map(|x| format!("{x:.16e}")).unwrap_or_default()
    }
    writeln!(
        w,
        "value,label,converged_at,bound,ratio,final_error_norm,norm_after_segments"
    )?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{},{},{},{},{:.16e},{}",
            r.value,
            r.label,
            opt(r.converged_at),
            opt(r.bound),
            opt(r.ratio),
            r.final_error_norm,
            opt(r.norm_after_segments)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn scenario(extra: &str) -> Scenario {
        let text = format!(
            r#"
name = "t"
dimension = 1
horizon = 6.0
theta_hat0 = [0.0]

[regressor]
type = "sum"
components = [[{{ type = "cos", amplitude = 2.0, frequency = 2.0 }}]]

[parameter]
constant = [5.0]

[[estimators]]
kind = "single"
p = 0.75

[[estimators]]
kind = "single"
p = 1.5

[[estimators]]
kind = "composite"
exponents = [0.75, 1.5]

[integrator]
step = 1e-3
conv_tol = 1e-6
{extra}

[pe]
window = 1.5707963267948966
"#
        );
        parse_scenario(&text).unwrap()
    }

    #[test]
    fn run_reports_bounds() {
        let s = scenario("");
        let (summary, trajs) = run(&s, None).unwrap();
        assert_eq!(trajs.len(), 3);
        let kinds: Vec<Option<BoundKind>> = summary
            .outcomes
            .iter()
            .map(|o| o.bound.as_ref().map(|b| b.kind))
            .collect();
        assert_eq!(
            kinds,
            vec![
                Some(BoundKind::FiniteTime),
                Some(BoundKind::Escape),
                Some(BoundKind::FixedTime)
            ]
        );
        for o in &summary.outcomes {
            assert_eq!(o.bound_satisfied, Some(true), "{}", o.label);
        }
    }

    #[test]
    fn run_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let s = scenario("");
        let (summary, _) = run(&s, Some(dir.path())).unwrap();
        for o in &summary.outcomes {
            let text = fs::read_to_string(o.csv.as_ref().unwrap()).unwrap();
            assert!(text.starts_with("t,x_1,e,V,theta_hat_1\n"));
        }
        let cmp = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
        assert!(
            cmp.starts_with("t,V_p=0.75,V_p=1.5,V_composite{0.75,1.5}\n"),
            "{}",
            &cmp[..80]
        );
        assert!(dir.path().join("t_V_vs_t.gp").exists());
        assert!(dir.path().join("t_theta_vs_t.dat").exists());
    }

    #[test]
    fn empty_selection_writes_headers() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&[], PlotMode::XVsT, dir.path(), "none").unwrap();
        assert_eq!(fs::read_to_string(files.data).unwrap(), "# t \n");
        let script = fs::read_to_string(files.script).unwrap();
        assert!(!script.contains("plot "));
    }

    #[test]
    fn sweep_over_p() {
        let s = scenario("");
        let rows = sweep(&s, SweepField::P, &[0.5, 0.75]).unwrap();
        // Two single estimators per value.
        assert_eq!(rows.len(), 4);
        assert!(rows
            .iter()
            .filter(|r| r.bound.is_some())
            .all(|r| r.ratio.is_some_and(|x| x <= 1.0)));
        assert!(matches!(
            sweep(&s, SweepField::L, &[1.0]),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            sweep(&s, SweepField::Dwell, &[1.0]),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn sweep_over_x0_scales_error() {
        let s = scenario("");
        let rows = sweep(&s, SweepField::X0, &[1.0]).unwrap();
        assert_eq!(rows.len(), 3);
        let mut csv = Vec::new();
        write_sweep_csv(&rows, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn plot_modes_parse() {
        for m in ["V_vs_t", "x_vs_t", "theta_vs_t"] {
            assert_eq!(m.parse::<PlotMode>().unwrap().name(), m);
        }
        assert!("v".parse::<PlotMode>().is_err());
    }
}
