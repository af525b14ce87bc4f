use std::f64::consts::TAU;

use super::roots::{solve_monotone, RootSpec};
use crate::error::{Error, Result};

pub const DEFAULT_EVENT_TOL: f64 = 1e-12;

/// Phase path up to the first crossing of 2π.
#[derive(Debug, Clone)]
pub struct SpikePath {
    pub t_spike: f64,
    /// (t, θ) at every step, ending with the refined event (t_spike, 2π).
    pub samples: Vec<(f64, f64)>,
}

fn hermite(s: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

pub fn integrate_until_spike<F>(velocity: F, theta0: f64, t_max: f64, step: f64) -> Result<SpikePath>
where
    F: Fn(f64, f64) -> f64,
{
    integrate_until_spike_tol(velocity, theta0, t_max, step, DEFAULT_EVENT_TOL)
}

/// Fixed-step classical RK4 on θ' = velocity(t, θ) from θ(0) = `theta0`
/// until θ first reaches 2π. The crossing is located on the cubic
/// Hermite interpolant of the last step, so the event time carries the
/// same fourth-order accuracy as the steps themselves.
pub fn integrate_until_spike_tol<F>(
    velocity: F,
    theta0: f64,
    t_max: f64,
    step: f64,
    event_tol: f64,
) -> Result<SpikePath>
where
    F: Fn(f64, f64) -> f64,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    let mut samples = Vec::with_capacity((t_max / step).min(1e7) as usize + 2);
    let (mut t, mut theta) = (0.0, theta0);
    samples.push((t, theta));
    if theta >= TAU {
        return Ok(SpikePath { t_spike: 0.0, samples });
    }
    let mut k1 = velocity(t, theta);
    loop {
        if t >= t_max {
            return Err(Error::Timeout { t, theta });
        }
        let h = step;
        let k2 = velocity(t + 0.5 * h, theta + 0.5 * h * k1);
        let k3 = velocity(t + 0.5 * h, theta + 0.5 * h * k2);
        let k4 = velocity(t + h, theta + h * k3);
        let next = theta + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let t_next = t + h;
        let k_next = velocity(t_next, next);
        if !next.is_finite() {
            return Err(Error::Timeout { t, theta });
        }
        if next >= TAU {
            let s = solve_monotone(
                |s| Ok(hermite(s, h, theta, k1, next, k_next) - TAU),
                &RootSpec::new(0.0, 1.0).x_tol(1e-15).f_tol(event_tol),
            )?;
            let t_spike = t + s * h;
            samples.push((t_spike, TAU));
            return Ok(SpikePath { t_spike, samples });
        }
        t = t_next;
        theta = next;
        k1 = k_next;
        samples.push((t, theta));
    }
}
