//! Closed-loop execution of a plan: the control is read off the plan as
//! a function of the current phase and the phase equation is stepped
//! with RK4 until the spike.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounded::PiecewisePlan;
use crate::error::{Error, Result};
use crate::json::write_json;
use crate::models::ThetaReduction;
use crate::numerics::{integrate_until_spike_tol, SpikePath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Fixed RK4 step; `None` means T/10⁴ with T the plan's traversal time.
    pub step: Option<f64>,
    pub event_tol: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { step: None, event_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub theta: f64,
    pub lambda: f64,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub spike_time: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: &str = "t,theta,lambda,current";

/// Expected duration and RK4 step for a plan.
fn step_for(plan: &PiecewisePlan, config: &SimulationConfig) -> Result<(f64, f64)> {
    let expected = plan
        .spike_time()
        .ok()
        .filter(|t| t.is_finite() && *t > 0.0)
        .unwrap_or_else(|| plan.model.natural_period());
    let step = config.step.unwrap_or(expected / 1e4);
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    Ok((expected, step))
}

fn finish(path: SpikePath, sample: impl Fn(f64, f64) -> Sample) -> Trajectory {
    let samples: Vec<Sample> = path.samples.iter().map(|&(t, th)| sample(t, th)).collect();
    let energy = trajectory_energy(&samples);
    Trajectory { samples, spike_time: path.t_spike, energy }
}

/// Run θ' = f(θ) + Z(θ) I(θ) from θ = 0 with I taken from the plan.
pub fn simulate_plan(plan: &PiecewisePlan, config: &SimulationConfig) -> Result<Trajectory> {
    plan.model.require_design()?;
    let (expected, step) = step_for(plan, config)?;
    let model = plan.model;
    let path = integrate_until_spike_tol(
        |_, th| model.velocity(th, plan.control_at(th)),
        0.0,
        20.0 * expected,
        step,
        config.event_tol,
    )?;
    Ok(finish(path, |t, th| Sample {
        t,
        theta: th,
        lambda: plan.costate_at(th),
        current: plan.control_at(th),
    }))
}

/// Drive the original theta neuron with a plan designed on its SNIPER
/// reduction. The control is looked up at the mapped phase; phases and
/// costates in the result are in theta coordinates.
pub fn simulate_on_theta(
    plan: &PiecewisePlan,
    reduction: &ThetaReduction,
    config: &SimulationConfig,
) -> Result<Trajectory> {
    if plan.model != reduction.sniper {
        return Err(Error::InvalidModel("plan was not designed on this reduction".into()));
    }
    let (expected, step) = step_for(plan, config)?;
    let neuron = reduction.theta;
    let control = |th: f64| plan.control_at(reduction.to_sniper_phase(th));
    let path = integrate_until_spike_tol(
        |_, th| neuron.velocity(th, control(th)),
        0.0,
        20.0 * expected,
        step,
        config.event_tol,
    )?;
    Ok(finish(path, |t, th| Sample {
        t,
        theta: th,
        lambda: plan.costate_at(reduction.to_sniper_phase(th)) * reduction.sniper_phase_slope(th),
        current: control(th),
    }))
}

/// ∫ I² dt over the samples. Each interval integrates the cubic through
/// the four nearest samples with two-point Gauss–Legendre (exact for
/// cubics), so the error is fourth order in the step.
pub fn trajectory_energy(samples: &[Sample]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let g: Vec<f64> = samples.iter().map(|s| s.current * s.current).collect();
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    if n < 4 {
        return (1..n).map(|i| 0.5 * (g[i] + g[i - 1]) * (t[i] - t[i - 1])).sum();
    }
    let node = 0.5 / 3f64.sqrt();
    let mut total = 0.0;
    for i in 0..n - 1 {
        let h = t[i + 1] - t[i];
        if h <= 0.0 {
            continue;
        }
        let j = i.saturating_sub(1).min(n - 4);
        let stencil = j..j + 4;
        let lagrange = |x: f64| {
            stencil
                .clone()
                .map(|a| {
                    let w: f64 = stencil
                        .clone()
                        .filter(|&b| b != a)
                        .map(|b| (x - t[b]) / (t[a] - t[b]))
                        .product();
                    w * g[a]
                })
                .sum::<f64>()
        };
        let mid = t[i] + 0.5 * h;
        total += 0.5 * h * (lagrange(mid - node * h) + lagrange(mid + node * h));
    }
    total
}

pub fn export_trajectory<W: Write>(traj: &Trajectory, format: ExportFormat, mut out: W) -> Result<()> {
    match format {
        ExportFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for s in &traj.samples {
                writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", s.t, s.theta, s.lambda, s.current)?;
            }
        }
        ExportFormat::Json => {
            write_json(&mut out, traj)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read samples back from the CSV produced by [`export_trajectory`].
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<Sample>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Csv { line: 1, msg: format!("expected header `{CSV_HEADER}`") }),
    }
    let mut samples = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Csv { line: i + 1, msg: format!("expected 4 fields, got {}", fields.len()) });
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .trim()
                .parse()
                .map_err(|e| Error::Csv { line: i + 1, msg: format!("{f}: {e}") })?;
        }
        samples.push(Sample { t: v[0], theta: v[1], lambda: v[2], current: v[3] });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounded::{build_plan, ControlKind, Segment};
    use crate::models::{theta_to_sniper, PhaseModel};
    use crate::unbounded::design_energy;
    use std::f64::consts::{PI, TAU};

    fn sin1() -> PhaseModel {
        PhaseModel::sinusoidal(1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_plan_runs_natural_period() {
        let plan = PiecewisePlan::analytic(sin1(), None, 0.0);
        let tr = simulate_plan(&plan, &SimulationConfig::default()).unwrap();
        assert!((tr.spike_time - TAU).abs() < 1e-10);
        assert_eq!(tr.energy, 0.0);
        let first = tr.samples[0];
        assert_eq!((first.t, first.theta, first.lambda, first.current), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn unbounded_plan_hits_target() {
        let plan = build_plan(&sin1(), None, 5.0).unwrap();
        let tr = simulate_plan(&plan, &SimulationConfig::default()).unwrap();
        assert!((tr.spike_time - 5.0).abs() < 1e-6, "{}", tr.spike_time);
        let e = design_energy(&sin1(), plan.lambda0).unwrap();
        assert!((tr.energy - e).abs() < 1e-4 * e, "{} vs {e}", tr.energy);
    }

    #[test]
    fn bounded_plan_hits_target() {
        for &(t, m) in &[(2.8, 2.5), (10.0, 0.55)] {
            let plan = build_plan(&sin1(), Some(m), t).unwrap();
            let tr = simulate_plan(&plan, &SimulationConfig::default()).unwrap();
            assert!((tr.spike_time - t).abs() < 1e-5 * t, "{t}: {}", tr.spike_time);
            let e = plan.energy().unwrap();
            assert!((tr.energy - e).abs() < 1e-4 * e, "{t}: {} vs {e}", tr.energy);
            assert!(tr.samples.iter().all(|s| s.current.abs() <= m * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn samples_are_ordered() {
        let plan = build_plan(&PhaseModel::sniper(1.0, 1.0).unwrap(), Some(0.3), 9.8).unwrap();
        let tr = simulate_plan(&plan, &SimulationConfig::default()).unwrap();
        for w in tr.samples.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].theta >= w[0].theta);
        }
        assert_eq!(tr.samples.last().unwrap().theta, TAU);
    }

    #[test]
    fn stationarity_on_analytic_samples() {
        let plan = build_plan(&sin1(), None, 3.0).unwrap();
        let tr = simulate_plan(&plan, &SimulationConfig::default()).unwrap();
        for s in &tr.samples {
            let r = 2.0 * s.current + s.lambda * sin1().eval_z(s.theta);
            assert!(r.abs() < 1e-8, "{r}");
        }
    }

    #[test]
    fn stalled_plan_times_out() {
        // θ' = 1 − 2 sin θ has a fixed point at π/6
        let plan = PiecewisePlan {
            model: sin1(),
            bound: Some(2.0),
            lambda0: 0.0,
            segments: vec![Segment { from: 0.0, to: TAU, kind: ControlKind::SatMinus }],
        };
        let cfg = SimulationConfig { step: Some(1e-2), ..Default::default() };
        match simulate_plan(&plan, &cfg) {
            Err(Error::Timeout { theta, .. }) => assert!((theta - PI / 6.0).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn energy_of_constant_current() {
        let tau = 3.7;
        let samples: Vec<Sample> = (0..=37)
            .map(|k| Sample { t: k as f64 * 0.1, theta: 0.0, lambda: 0.0, current: 1.5 })
            .collect();
        assert!((trajectory_energy(&samples) - 2.25 * tau).abs() < 1e-12);
        let zero: Vec<Sample> = samples.iter().map(|s| Sample { current: 0.0, ..*s }).collect();
        assert_eq!(trajectory_energy(&zero), 0.0);
    }

    #[test]
    fn energy_quadrature_is_fourth_order() {
        // I(t) = sin t on [0, 2]: ∫ sin² = 1 − sin 4 / 4
        let exact = 1.0 - (4.0f64).sin() / 4.0;
        let err = |n: usize| {
            let s: Vec<Sample> = (0..=n)
                .map(|k| {
                    let t = 2.0 * k as f64 / n as f64;
                    Sample { t, theta: 0.0, lambda: 0.0, current: t.sin() }
                })
                .collect();
            (trajectory_energy(&s) - exact).abs()
        };
        assert!(err(20) / err(40) > 12.0, "{} {}", err(20), err(40));
    }

    #[test]
    fn theta_neuron_follows_reduced_plan() {
        let neuron = PhaseModel::theta(0.25, 1.0).unwrap();
        let red = theta_to_sniper(&neuron).unwrap();
        let plan = build_plan(&red.sniper, None, 4.5).unwrap();
        let direct = simulate_on_theta(&plan, &red, &SimulationConfig::default()).unwrap();
        let reduced = simulate_plan(&plan, &SimulationConfig::default()).unwrap();
        assert!((direct.spike_time - 4.5).abs() < 1e-6, "{}", direct.spike_time);
        assert!((direct.energy - reduced.energy).abs() < 1e-6 * reduced.energy);
        for s in &direct.samples {
            let r = 2.0 * s.current + s.lambda * neuron.eval_z(s.theta);
            assert!(r.abs() < 1e-8, "{r} at {}", s.theta);
        }
    }

    #[test]
    fn csv_export_shape() {
        let tr = Trajectory {
            samples: vec![Sample { t: 0.0, theta: 0.0, lambda: 0.5, current: -0.25 }],
            spike_time: 0.0,
            energy: 0.0,
        };
        let mut buf = Vec::new();
        export_trajectory(&tr, ExportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "t,theta,lambda,current");
        assert_eq!(parse_trajectory_csv(&text).unwrap(), tr.samples);
    }

    #[test]
    fn natural_period_export_ends_at_spike() {
        let plan = PiecewisePlan::analytic(sin1(), None, 0.0);
        let tr = simulate_plan(&plan, &SimulationConfig::default()).unwrap();
        let mut buf = Vec::new();
        export_trajectory(&tr, ExportFormat::Csv, &mut buf).unwrap();
        let back = parse_trajectory_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, tr.samples);
        let last = back.last().unwrap();
        assert!((last.t - TAU).abs() < 1e-10);
        assert_eq!(last.theta, TAU);
    }

    #[test]
    fn json_export_mirrors_fields() {
        let plan = build_plan(&sin1(), None, 5.0).unwrap();
        let tr = simulate_plan(&plan, &SimulationConfig { step: Some(0.05), ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        export_trajectory(&tr, ExportFormat::Json, &mut buf).unwrap();
        let back: Trajectory = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn bad_csv_is_reported_with_line() {
        let text = "t,theta,lambda,current\n1,2,3\n";
        assert!(matches!(parse_trajectory_csv(text), Err(Error::Csv { line: 2, .. })));
        assert!(matches!(parse_trajectory_csv("x\n"), Err(Error::Csv { line: 1, .. })));
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip_is_exact(rows in proptest::collection::vec(proptest::array::uniform4(-1e6f64..1e6), 1..40)) {
            let samples: Vec<Sample> = rows
                .iter()
                .map(|r| Sample { t: r[0], theta: r[1], lambda: r[2], current: r[3] })
                .collect();
            let traj = Trajectory { samples: samples.clone(), spike_time: 0.0, energy: 0.0 };
            let mut buf = Vec::new();
            export_trajectory(&traj, ExportFormat::Csv, &mut buf).unwrap();
            let back = parse_trajectory_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
            proptest::prop_assert_eq!(back.len(), samples.len());
            for (a, b) in back.iter().zip(&samples) {
                proptest::prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
                proptest::prop_assert_eq!(a.theta.to_bits(), b.theta.to_bits());
                proptest::prop_assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
                proptest::prop_assert_eq!(a.current.to_bits(), b.current.to_bits());
            }
        }
    }
}
