//! Minimum-power design under an amplitude bound |I| ≤ M.
//!
//! The feasible spike times form a window [T^M_min, T^M_max] set by the
//! bang-bang extremes. Inside it, [T^{I*}_min, T^{I*}_max] is reached
//! by the unconstrained law I*; shorter (longer) targets saturate I* at
//! ±M on arcs centred on the PRC peaks.

mod plan;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use plan::{ControlKind, PiecewisePlan, Segment};

use crate::error::{Error, Result};
use crate::models::{ModelKind, PhaseModel};
use crate::numerics::{adaptive_integral, solve_monotone, RootSpec};
use crate::unbounded::{lambda0_for_spike_time, local_control, period_quadrature, spike_time_of};

/// Saturated arcs speed the neuron up (Fast) or slow it down (Slow).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Fast,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Infeasible,
    FastSwitched,
    AnalyticOnly,
    SlowSwitched,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// T^M_min < T^{I*}_min ≤ 2π/ω ≤ T^{I*}_max ≤ T^M_max. The upper two
/// are infinite (null in JSON) when the bound can stall the phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeTimeBounds {
    pub t_bang_min: f64,
    pub t_analytic_min: f64,
    #[serde(with = "inf_as_null")]
    pub t_analytic_max: f64,
    #[serde(with = "inf_as_null")]
    pub t_bang_max: f64,
}

impl SpikeTimeBounds {
    /// Case II: the bound is too weak to stall the phase.
    pub fn has_finite_max(&self) -> bool {
        self.t_bang_max.is_finite()
    }

    pub fn classify(&self, target: f64) -> Regime {
        if !(target >= self.t_bang_min) || target > self.t_bang_max {
            Regime::Infeasible
        } else if target < self.t_analytic_min {
            Regime::FastSwitched
        } else if target <= self.t_analytic_max {
            Regime::AnalyticOnly
        } else {
            Regime::SlowSwitched
        }
    }
}

fn check_bound(model: &PhaseModel, bound: f64) -> Result<()> {
    model.require_design()?;
    if bound.is_finite() && bound > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("amplitude bound must be positive, got {bound}")))
    }
}

/// M below which T^M_max is finite: ω / (z_d max S).
pub fn stall_threshold(model: &PhaseModel) -> f64 {
    model.omega() / (model.zd() * model.shape_max())
}

/// Spike times of the constant-sign bang-bang controls u = ±M sign(Z).
pub fn bang_bang_extremes(model: &PhaseModel, bound: f64) -> Result<(f64, f64)> {
    check_bound(model, bound)?;
    let (upper, copies) = model.fundamental_domain();
    let w = model.omega();
    let zm = model.zd() * bound;
    let spec = period_quadrature();
    // S ≥ 0 on the fundamental domain of both design models
    let t_min = copies * adaptive_integral(|th| 1.0 / (w + zm * model.shape(th)), 0.0, upper, &spec)?;
    let t_max = if bound < stall_threshold(model) {
        copies * adaptive_integral(|th| 1.0 / (w - zm * model.shape(th)), 0.0, upper, &spec)?
    } else {
        f64::INFINITY
    };
    Ok((t_min, t_max))
}

fn lambda0_for_switch(model: &PhaseModel, bound: f64, shape: f64, dir: Direction) -> f64 {
    let w = model.omega();
    let reach = 2.0 * w * bound / (model.zd() * shape);
    match dir {
        Direction::Fast => -(bound * bound + reach) / w,
        Direction::Slow => (reach - bound * bound) / w,
    }
}

/// λ₀ at which |I*| first touches M at the PRC peak: (fast, slow).
/// The slow limit exists only below the stall threshold.
pub fn lambda0_saturation_limits(model: &PhaseModel, bound: f64) -> Result<(f64, Option<f64>)> {
    check_bound(model, bound)?;
    let s = model.shape_max();
    let fast = lambda0_for_switch(model, bound, s, Direction::Fast);
    let slow = (bound < stall_threshold(model)).then(|| lambda0_for_switch(model, bound, s, Direction::Slow));
    Ok((fast, slow))
}

/// Shortest and longest spike times reachable by I* within the bound.
pub fn analytic_time_window(model: &PhaseModel, bound: f64) -> Result<(f64, f64)> {
    let (fast, slow) = lambda0_saturation_limits(model, bound)?;
    let t_min = spike_time_of(model, fast)?;
    let t_max = match slow {
        Some(l) => spike_time_of(model, l)?,
        None => f64::INFINITY,
    };
    Ok((t_min, t_max))
}

pub fn spike_time_bounds(model: &PhaseModel, bound: f64) -> Result<SpikeTimeBounds> {
    let (t_bang_min, t_bang_max) = bang_bang_extremes(model, bound)?;
    let (t_analytic_min, t_analytic_max) = analytic_time_window(model, bound)?;
    Ok(SpikeTimeBounds { t_bang_min, t_analytic_min, t_analytic_max, t_bang_max })
}

pub fn classify_target(model: &PhaseModel, bound: f64, target: f64) -> Result<Regime> {
    Ok(spike_time_bounds(model, bound)?.classify(target))
}

fn phase_for_shape(model: &PhaseModel, shape: f64) -> f64 {
    match model.kind() {
        ModelKind::Sinusoidal => shape.clamp(0.0, 1.0).asin(),
        _ => (1.0 - shape).clamp(-1.0, 1.0).acos(),
    }
}

/// First switching angle θ_s ∈ (0, θ_peak] for a costate beyond the
/// saturation limit.
fn first_switch(model: &PhaseModel, bound: f64, lambda0: f64, dir: Direction) -> Result<f64> {
    let (fast, slow) = lambda0_saturation_limits(model, bound)?;
    let w = model.omega();
    let denom = bound * bound + w * lambda0;
    let s_max = model.shape_max();
    let (limit, shape) = match dir {
        Direction::Fast => (fast, -2.0 * w * bound / (model.zd() * denom)),
        Direction::Slow => {
            let limit = slow.ok_or(Error::NoSaturation { lambda0, limit: f64::INFINITY })?;
            (limit, 2.0 * w * bound / (model.zd() * denom))
        }
    };
    if !lambda0.is_finite() || !(shape > 0.0) || shape > s_max * (1.0 + 1e-12) {
        return Err(Error::NoSaturation { lambda0, limit });
    }
    Ok(phase_for_shape(model, shape.min(s_max)))
}

fn all_switches(model: &PhaseModel, theta_s: f64) -> Vec<f64> {
    match model.kind() {
        ModelKind::Sinusoidal => vec![theta_s, PI - theta_s, PI + theta_s, 2.0 * PI - theta_s],
        _ => vec![theta_s, 2.0 * PI - theta_s],
    }
}

/// Phases where I* meets ±M. Sinusoidal: θ₁, π−θ₁, π+θ₁, 2π−θ₁ (fast)
/// or the same pattern from θ₅ (slow); SNIPER: θ_s, 2π−θ_s.
pub fn switching_angles(model: &PhaseModel, bound: f64, lambda0: f64, dir: Direction) -> Result<Vec<f64>> {
    let theta_s = first_switch(model, bound, lambda0, dir)?;
    let angles = all_switches(model, theta_s);
    for &th in &angles {
        let i = local_control(model, lambda0, th);
        if (i.abs() - bound).abs() > 1e-8 * bound.max(1.0) {
            return Err(Error::Domain(format!(
                "switching angle {th} gives |I*| = {} instead of {bound}",
                i.abs()
            )));
        }
    }
    Ok(angles)
}

fn plan_from_costate(model: &PhaseModel, bound: f64, lambda0: f64, dir: Direction) -> Result<PiecewisePlan> {
    let theta_s = first_switch(model, bound, lambda0, dir)?;
    Ok(PiecewisePlan::switched(*model, bound, lambda0, theta_s, dir))
}

/// Traversal time of the switched plan seeded by λ₀.
pub fn bounded_spike_time_of(model: &PhaseModel, bound: f64, lambda0: f64, dir: Direction) -> Result<f64> {
    plan_from_costate(model, bound, lambda0, dir)?.spike_time()
}

const MIN_SWITCH: f64 = 1e-9;

fn expected_regime(dir: Direction) -> Regime {
    match dir {
        Direction::Fast => Regime::FastSwitched,
        Direction::Slow => Regime::SlowSwitched,
    }
}

/// Solve for the switched plan reaching 2π at `target`.
///
/// The unknown is the first switching angle θ_s ∈ [0, θ_peak]: θ_s =
/// θ_peak is the tangency with the analytic window edge, θ_s → 0 the
/// pure bang-bang control, so the bracket is finite on both ends.
pub fn bounded_plan_for_spike_time(
    model: &PhaseModel,
    bound: f64,
    target: f64,
    dir: Direction,
) -> Result<PiecewisePlan> {
    let bounds = spike_time_bounds(model, bound)?;
    let (edge, extreme) = match dir {
        Direction::Fast => (bounds.t_analytic_min, bounds.t_bang_min),
        Direction::Slow => (bounds.t_analytic_max, bounds.t_bang_max),
    };
    let inside = match dir {
        Direction::Fast => target >= extreme && target <= edge,
        Direction::Slow => target >= edge && target <= extreme,
    };
    if !inside || !edge.is_finite() {
        return Err(Error::RegimeMismatch {
            target,
            expected: expected_regime(dir),
            actual: bounds.classify(target),
        });
    }
    let peak = model.peak_phase();
    let time_at = |theta_s: f64| -> Result<f64> {
        if theta_s <= 0.0 {
            return Ok(extreme);
        }
        let l0 = lambda0_for_switch(model, bound, model.shape(theta_s), dir);
        PiecewisePlan::switched(*model, bound, l0, theta_s, dir).spike_time()
    };
    let spec = RootSpec::new(0.0, peak).x_tol(1e-15).f_tol(1e-11 * target.max(1.0));
    let theta_s = if target == edge {
        peak
    } else {
        solve_monotone(|th| time_at(th).map(|t| t - target), &spec)?.max(MIN_SWITCH)
    };
    let lambda0 = lambda0_for_switch(model, bound, model.shape(theta_s), dir);
    Ok(PiecewisePlan::switched(*model, bound, lambda0, theta_s, dir))
}

pub fn bounded_lambda0_for_spike_time(model: &PhaseModel, bound: f64, target: f64, dir: Direction) -> Result<f64> {
    Ok(bounded_plan_for_spike_time(model, bound, target, dir)?.lambda0)
}

/// Optimal plan for `target`, with or without an amplitude bound.
pub fn build_plan(model: &PhaseModel, bound: Option<f64>, target: f64) -> Result<PiecewisePlan> {
    model.require_design()?;
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::Domain(format!("spike time must be positive, got {target}")));
    }
    let Some(bound) = bound else {
        let lambda0 = lambda0_for_spike_time(model, target)?;
        return Ok(PiecewisePlan::analytic(*model, None, lambda0));
    };
    check_bound(model, bound)?;
    let bounds = spike_time_bounds(model, bound)?;
    match bounds.classify(target) {
        Regime::Infeasible => Err(Error::OutsideWindow { target, bounds }),
        Regime::AnalyticOnly => {
            let lambda0 = lambda0_for_spike_time(model, target)?;
            Ok(PiecewisePlan::analytic(*model, Some(bound), lambda0))
        }
        Regime::FastSwitched => bounded_plan_for_spike_time(model, bound, target, Direction::Fast),
        Regime::SlowSwitched => bounded_plan_for_spike_time(model, bound, target, Direction::Slow),
    }
}

/// Optimal plan selected by λ₀ alone (used by λ₀ sweeps).
pub fn plan_for_lambda0(model: &PhaseModel, bound: Option<f64>, lambda0: f64) -> Result<PiecewisePlan> {
    model.require_design()?;
    let limit = crate::unbounded::feasibility_limit(model);
    if let Some(m) = bound {
        let (fast, slow) = lambda0_saturation_limits(model, m)?;
        if lambda0 < fast {
            return plan_from_costate(model, m, lambda0, Direction::Fast);
        }
        if let Some(slow) = slow {
            if lambda0 > slow {
                return plan_from_costate(model, m, lambda0, Direction::Slow);
            }
        }
    }
    if lambda0.is_finite() && lambda0 < limit {
        Ok(PiecewisePlan::analytic(*model, bound, lambda0))
    } else {
        Err(Error::InfeasibleCostate { lambda0, limit })
    }
}
