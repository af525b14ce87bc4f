use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelKind, PhaseModel};
use crate::numerics::adaptive_integral;
use crate::unbounded::{local_control, local_costate, local_speed, period_quadrature};

use super::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlKind {
    #[serde(rename = "analytic")]
    Analytic,
    #[serde(rename = "sat+")]
    SatPlus,
    #[serde(rename = "sat-")]
    SatMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: f64,
    pub to: f64,
    pub kind: ControlKind,
}

/// Feedback control over one cycle, as phase intervals carrying either
/// the analytic law I*(θ; λ₀) or a saturated value ±M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePlan {
    pub model: PhaseModel,
    pub bound: Option<f64>,
    pub lambda0: f64,
    pub segments: Vec<Segment>,
}

impl PiecewisePlan {
    /// Single analytic segment over [0, 2π].
    pub fn analytic(model: PhaseModel, bound: Option<f64>, lambda0: f64) -> Self {
        Self {
            model,
            bound,
            lambda0,
            segments: vec![Segment { from: 0.0, to: TAU, kind: ControlKind::Analytic }],
        }
    }

    /// Plan with saturated arcs opening at switching angle `theta_s`.
    pub(crate) fn switched(model: PhaseModel, bound: f64, lambda0: f64, theta_s: f64, dir: Direction) -> Self {
        use ControlKind::*;
        let (first, second) = match dir {
            Direction::Fast => (SatPlus, SatMinus),
            Direction::Slow => (SatMinus, SatPlus),
        };
        let seg = |from, to, kind| Segment { from, to, kind };
        let segments = match model.kind() {
            ModelKind::Sinusoidal => vec![
                seg(0.0, theta_s, Analytic),
                seg(theta_s, PI - theta_s, first),
                seg(PI - theta_s, PI + theta_s, Analytic),
                seg(PI + theta_s, TAU - theta_s, second),
                seg(TAU - theta_s, TAU, Analytic),
            ],
            _ => vec![
                seg(0.0, theta_s, Analytic),
                seg(theta_s, TAU - theta_s, first),
                seg(TAU - theta_s, TAU, Analytic),
            ],
        };
        Self { model, bound: Some(bound), lambda0, segments }
    }

    fn bound_value(&self) -> f64 {
        self.bound.unwrap_or(0.0)
    }

    fn saturated_value(&self, kind: ControlKind) -> Option<f64> {
        match kind {
            ControlKind::Analytic => None,
            ControlKind::SatPlus => Some(self.bound_value()),
            ControlKind::SatMinus => Some(-self.bound_value()),
        }
    }

    pub fn segment_at(&self, theta: f64) -> &Segment {
        self.segments
            .iter()
            .find(|s| theta < s.to)
            .unwrap_or_else(|| self.segments.last().expect("plan has segments"))
    }

    pub fn control_at(&self, theta: f64) -> f64 {
        match self.saturated_value(self.segment_at(theta).kind) {
            Some(u) => u,
            None => local_control(&self.model, self.lambda0, theta),
        }
    }

    /// Multiplier λ(θ); on saturated arcs λ = (H − M²)/(ω + Z(θ)u).
    pub fn costate_at(&self, theta: f64) -> f64 {
        match self.saturated_value(self.segment_at(theta).kind) {
            Some(u) => (self.hamiltonian() - u * u) / self.model.velocity(theta, u),
            None => local_costate(&self.model, self.lambda0, theta),
        }
    }

    /// The constant value H = ωλ₀ of the Hamiltonian along the plan.
    pub fn hamiltonian(&self) -> f64 {
        self.model.omega() * self.lambda0
    }

    /// I² + λ(f + Z I) evaluated pointwise.
    pub fn hamiltonian_at(&self, theta: f64) -> f64 {
        let i = self.control_at(theta);
        i * i + self.costate_at(theta) * self.model.velocity(theta, i)
    }

    pub fn speed_at(&self, theta: f64) -> f64 {
        match self.saturated_value(self.segment_at(theta).kind) {
            Some(u) => self.model.velocity(theta, u),
            None => local_speed(&self.model, self.lambda0, theta),
        }
    }

    fn integrate<F: Fn(f64, Option<f64>) -> f64>(&self, g: F) -> Result<f64> {
        let spec = period_quadrature();
        let mut total = 0.0;
        for seg in &self.segments {
            if seg.to <= seg.from {
                continue;
            }
            let sat = self.saturated_value(seg.kind);
            total += adaptive_integral(|th| g(th, sat), seg.from, seg.to, &spec)?;
        }
        Ok(total)
    }

    /// Traversal time Σ ∫ dθ/θ' over the segments.
    pub fn spike_time(&self) -> Result<f64> {
        let model = self.model;
        let lambda0 = self.lambda0;
        self.integrate(|th, sat| match sat {
            Some(u) => 1.0 / model.velocity(th, u),
            None => 1.0 / local_speed(&model, lambda0, th),
        })
    }

    /// Energy Σ ∫ I²/θ' dθ.
    pub fn energy(&self) -> Result<f64> {
        if self.lambda0 == 0.0 && self.segments.iter().all(|s| s.kind == ControlKind::Analytic) {
            return Ok(0.0);
        }
        let model = self.model;
        let lambda0 = self.lambda0;
        self.integrate(|th, sat| match sat {
            Some(u) => u * u / model.velocity(th, u),
            None => {
                let i = local_control(&model, lambda0, th);
                i * i / local_speed(&model, lambda0, th)
            }
        })
    }

    /// Interior segment boundaries.
    pub fn switching_angles(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.from).collect()
    }

    /// Segments re-expressed under a monotone phase map.
    pub fn map_phases<F: Fn(f64) -> f64>(&self, map: F) -> Vec<Segment> {
        self.segments
            .iter()
            .map(|s| Segment { from: map(s.from), to: map(s.to), kind: s.kind })
            .collect()
    }

    /// Partition of [0, 2π], positive speed, and continuity at junctions.
    pub fn validate(&self) -> Result<()> {
        self.model.require_design()?;
        let bad = |msg: String| Err(Error::Domain(format!("invalid plan: {msg}")));
        let (Some(first), Some(last)) = (self.segments.first(), self.segments.last()) else {
            return bad("no segments".into());
        };
        if first.from != 0.0 || last.to != TAU {
            return bad("segments do not cover [0, 2π]".into());
        }
        for pair in self.segments.windows(2) {
            if pair[0].to != pair[1].from || pair[0].from > pair[0].to {
                return bad(format!("gap or overlap at {}", pair[0].to));
            }
        }
        let has_sat = self.segments.iter().any(|s| s.kind != ControlKind::Analytic);
        if has_sat && !matches!(self.bound, Some(m) if m > 0.0) {
            return bad("saturated segment without a positive bound".into());
        }
        for pair in self.segments.windows(2) {
            if pair[0].kind == pair[1].kind {
                continue;
            }
            let th = pair[1].from;
            let analytic = local_control(&self.model, self.lambda0, th);
            let sat = self
                .saturated_value(pair[0].kind)
                .or(self.saturated_value(pair[1].kind))
                .unwrap_or(analytic);
            if (analytic - sat).abs() > 1e-8 * sat.abs().max(1.0) {
                return bad(format!("control jumps from {analytic} to {sat} at θ = {th}"));
            }
        }
        for seg in &self.segments {
            for k in 0..=8 {
                let th = seg.from + (seg.to - seg.from) * k as f64 / 8.0;
                let sat = self.saturated_value(seg.kind);
                let speed = match sat {
                    Some(u) => self.model.velocity(th, u),
                    None if crate::unbounded::radicand(&self.model, self.lambda0, th) > 0.0 => 1.0,
                    None => 0.0,
                };
                if !(speed > 0.0) {
                    return bad(format!("phase speed vanishes at θ = {th}"));
                }
            }
        }
        Ok(())
    }
}
