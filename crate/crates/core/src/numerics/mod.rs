//! Quadrature, bracketed root finding and an event-detecting RK4
//! stepper shared by the design modules.

mod ode;
mod quadrature;
mod roots;

pub use ode::{integrate_until_spike, integrate_until_spike_tol, SpikePath, DEFAULT_EVENT_TOL};
pub use quadrature::{adaptive_integral, QuadratureSpec};
pub use roots::{solve_monotone, RootSpec};
