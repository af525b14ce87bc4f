//! Minimum-power design without an amplitude bound.
//!
//! Along an extremal the Hamiltonian H = I² + λ(ω + Z I) stays equal to
//! ωλ₀, which fixes the phase speed as a function of phase:
//! θ' = √(ω² − ωλ₀ z_d² S(θ)²). Every quantity below is a closed form
//! or a quadrature over that speed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PhaseModel;
use crate::numerics::{adaptive_integral, solve_monotone, QuadratureSpec, RootSpec};

/// Quadrature settings for period and energy maps.
pub(crate) fn period_quadrature() -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        max_subdivisions: 5000,
    }
}

/// Largest admissible λ₀ (exclusive): ω / (z_d² max S²).
pub fn feasibility_limit(model: &PhaseModel) -> f64 {
    let s = model.shape_max();
    model.omega() / (model.zd() * model.zd() * s * s)
}

fn check_costate(model: &PhaseModel, lambda0: f64) -> Result<()> {
    model.require_design()?;
    let limit = feasibility_limit(model);
    if lambda0.is_finite() && lambda0 < limit {
        Ok(())
    } else {
        Err(Error::InfeasibleCostate { lambda0, limit })
    }
}

/// Radicand ω² − ωλ₀ z_d² S(θ)², arranged as
/// ω²[(1 − r²) + (1 − λ₀/L) r²] with r = S/max S and L the feasibility
/// limit so that it stays accurate as λ₀ → L near the PRC peak.
pub(crate) fn radicand(model: &PhaseModel, lambda0: f64, theta: f64) -> f64 {
    let w = model.omega();
    let limit = feasibility_limit(model);
    let r = model.shape(theta) / model.shape_max();
    w * w * (model.shape_deficit(theta) + (limit - lambda0) / limit * r * r)
}

/// Speed of the analytic extremal at θ; no global feasibility check.
pub(crate) fn local_speed(model: &PhaseModel, lambda0: f64, theta: f64) -> f64 {
    radicand(model, lambda0, theta).max(0.0).sqrt()
}

/// I*(θ) written as −ωλ₀ z_d S / (ω + θ'), free of the 0/0 at S = 0.
pub(crate) fn local_control(model: &PhaseModel, lambda0: f64, theta: f64) -> f64 {
    let w = model.omega();
    let v = local_speed(model, lambda0, theta);
    -w * lambda0 * model.zd() * model.shape(theta) / (w + v)
}

/// λ(θ) = 2ωλ₀ / (ω + θ').
pub(crate) fn local_costate(model: &PhaseModel, lambda0: f64, theta: f64) -> f64 {
    let w = model.omega();
    2.0 * w * lambda0 / (w + local_speed(model, lambda0, theta))
}

pub fn optimal_phase_speed(model: &PhaseModel, lambda0: f64, theta: f64) -> Result<f64> {
    check_costate(model, lambda0)?;
    Ok(local_speed(model, lambda0, theta))
}

pub fn feedback_control(model: &PhaseModel, lambda0: f64, theta: f64) -> Result<f64> {
    check_costate(model, lambda0)?;
    Ok(local_control(model, lambda0, theta))
}

pub fn costate_of(model: &PhaseModel, lambda0: f64, theta: f64) -> Result<f64> {
    check_costate(model, lambda0)?;
    Ok(local_costate(model, lambda0, theta))
}

/// Spike time T(λ₀) = ∫₀^{2π} dθ / θ'.
pub fn spike_time_of(model: &PhaseModel, lambda0: f64) -> Result<f64> {
    check_costate(model, lambda0)?;
    let (upper, copies) = model.fundamental_domain();
    let quarter = adaptive_integral(
        |th| 1.0 / local_speed(model, lambda0, th),
        0.0,
        upper,
        &period_quadrature(),
    )?;
    Ok(copies * quarter)
}

/// Minimum energy ∫ I*² dt = ∫ I*(θ)² / θ' dθ.
pub fn design_energy(model: &PhaseModel, lambda0: f64) -> Result<f64> {
    check_costate(model, lambda0)?;
    if lambda0 == 0.0 {
        return Ok(0.0);
    }
    let (upper, copies) = model.fundamental_domain();
    let part = adaptive_integral(
        |th| {
            let i = local_control(model, lambda0, th);
            i * i / local_speed(model, lambda0, th)
        },
        0.0,
        upper,
        &period_quadrature(),
    )?;
    Ok(copies * part)
}

/// dE/dT = H = ωλ₀.
pub fn energy_sensitivity(model: &PhaseModel, lambda0: f64) -> f64 {
    model.omega() * lambda0
}

/// Upper end of the λ₀ bracket used when inverting T(λ₀).
pub fn lambda0_upper_bracket(model: &PhaseModel) -> f64 {
    let zd = model.zd();
    feasibility_limit(model) - 1e-12 * model.omega() / (zd * zd)
}

/// Invert the monotone period map.
pub fn lambda0_for_spike_time(model: &PhaseModel, target: f64) -> Result<f64> {
    model.require_design()?;
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::Domain(format!("spike time must be positive, got {target}")));
    }
    let natural = model.natural_period();
    if (target - natural).abs() <= 1e-15 * natural {
        return Ok(0.0);
    }
    let limit = feasibility_limit(model);
    let residual = |l: f64| spike_time_of(model, l).map(|t| t - target);
    let (lo, hi) = if target < natural {
        let mut lo = -limit;
        let mut tries = 0;
        while spike_time_of(model, lo)? > target {
            lo *= 4.0;
            tries += 1;
            if tries > 60 {
                return Err(Error::InfeasibleTime {
                    target,
                    lo: spike_time_of(model, lo)?,
                    hi: f64::INFINITY,
                });
            }
        }
        (lo, 0.0)
    } else {
        // approach the limit geometrically; T(λ₀) diverges only logarithmically
        let mut hi = 0.0;
        let mut t_hi = natural;
        for k in 1..=12 {
            hi = limit * (1.0 - 10f64.powi(-k));
            t_hi = spike_time_of(model, hi)?;
            if t_hi >= target {
                break;
            }
        }
        if t_hi < target {
            hi = lambda0_upper_bracket(model);
            t_hi = spike_time_of(model, hi)?;
        }
        if t_hi < target {
            return Err(Error::InfeasibleTime { target, lo: 0.0, hi: t_hi });
        }
        (0.0, hi)
    };
    let spec = RootSpec::new(lo, hi)
        .x_tol(1e-15 * lo.abs().max(hi.abs()))
        .f_tol(1e-10 * target.max(1.0));
    solve_monotone(residual, &spec)
}

/// Analytic design for a target spike time: (λ₀, T, E).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnboundedDesign {
    pub model: PhaseModel,
    pub lambda0: f64,
    #[serde(rename = "T")]
    pub spike_time: f64,
    pub energy: f64,
}

impl UnboundedDesign {
    pub fn for_spike_time(model: &PhaseModel, target: f64) -> Result<Self> {
        let lambda0 = lambda0_for_spike_time(model, target)?;
        Self::from_lambda0(model, lambda0)
    }

    pub fn from_lambda0(model: &PhaseModel, lambda0: f64) -> Result<Self> {
        Ok(Self {
            model: *model,
            lambda0,
            spike_time: spike_time_of(model, lambda0)?,
            energy: design_energy(model, lambda0)?,
        })
    }

    pub fn energy_sensitivity(&self) -> f64 {
        energy_sensitivity(&self.model, self.lambda0)
    }
}
