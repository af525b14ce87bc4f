//! Phase models of a spiking neuron: θ' = f(θ) + Z(θ) I(t).
//!
//! Two models carry the optimal-control derivation directly, the
//! sinusoidal PRC and the SNIPER PRC, both with constant baseline
//! f = ω. The theta neuron is reduced to an equivalent SNIPER model
//! through a monotone change of phase.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sinusoidal,
    Sniper,
    #[serde(rename = "theta")]
    ThetaNeuron,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sinusoidal" => Ok(Self::Sinusoidal),
            "sniper" => Ok(Self::Sniper),
            "theta" => Ok(Self::ThetaNeuron),
            _ => Err(Error::InvalidModel(format!("unknown model `{s}` (sinusoidal, sniper, theta)"))),
        }
    }
}

/// Wire form of a model, `{"kind", "omega", "zd", "ib"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ib: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct PhaseModel {
    kind: ModelKind,
    omega: f64,
    zd: f64,
    ib: Option<f64>,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be positive and finite, got {v}")))
    }
}

impl PhaseModel {
    pub fn sinusoidal(omega: f64, zd: f64) -> Result<Self> {
        check_positive("omega", omega)?;
        check_positive("zd", zd)?;
        Ok(Self { kind: ModelKind::Sinusoidal, omega, zd, ib: None })
    }

    pub fn sniper(omega: f64, zd: f64) -> Result<Self> {
        check_positive("omega", omega)?;
        check_positive("zd", zd)?;
        Ok(Self { kind: ModelKind::Sniper, omega, zd, ib: None })
    }

    /// Theta neuron θ' = 1 + cosθ + z_d(1 − cosθ)(I + I_b). Its natural
    /// frequency is 2√(z_d I_b), i.e. 2√I_b for the normalized z_d = 1.
    pub fn theta(ib: f64, zd: f64) -> Result<Self> {
        check_positive("ib", ib)?;
        check_positive("zd", zd)?;
        Ok(Self {
            kind: ModelKind::ThetaNeuron,
            omega: 2.0 * (zd * ib).sqrt(),
            zd,
            ib: Some(ib),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn zd(&self) -> f64 {
        self.zd
    }

    pub fn ib(&self) -> Option<f64> {
        self.ib
    }

    pub fn natural_period(&self) -> f64 {
        TAU / self.omega
    }

    /// True for the models the optimal-control formulas apply to directly.
    pub fn is_design_model(&self) -> bool {
        matches!(self.kind, ModelKind::Sinusoidal | ModelKind::Sniper)
    }

    pub(crate) fn require_design(&self) -> Result<()> {
        if self.is_design_model() {
            Ok(())
        } else {
            Err(Error::NeedsReduction)
        }
    }

    /// Baseline dynamics f(θ).
    pub fn eval_f(&self, theta: f64) -> f64 {
        match self.kind {
            ModelKind::Sinusoidal | ModelKind::Sniper => self.omega,
            ModelKind::ThetaNeuron => {
                let c = theta.cos();
                1.0 + c + self.zd * (1.0 - c) * self.ib.unwrap_or(0.0)
            }
        }
    }

    /// Phase response curve Z(θ).
    pub fn eval_z(&self, theta: f64) -> f64 {
        self.zd * self.shape(theta)
    }

    /// PRC shape S(θ) with Z = z_d S.
    pub fn shape(&self, theta: f64) -> f64 {
        match self.kind {
            ModelKind::Sinusoidal => theta.sin(),
            ModelKind::Sniper | ModelKind::ThetaNeuron => 1.0 - theta.cos(),
        }
    }

    /// max |S(θ)| over a cycle.
    pub fn shape_max(&self) -> f64 {
        match self.kind {
            ModelKind::Sinusoidal => 1.0,
            ModelKind::Sniper | ModelKind::ThetaNeuron => 2.0,
        }
    }

    /// 1 − (S/max S)², evaluated without cancellation near the peak.
    pub fn shape_deficit(&self, theta: f64) -> f64 {
        match self.kind {
            ModelKind::Sinusoidal => theta.cos().powi(2),
            ModelKind::Sniper | ModelKind::ThetaNeuron => {
                let c = theta.cos();
                (0.5 * theta).cos().powi(2) * 0.5 * (3.0 - c)
            }
        }
    }

    /// First phase where |S| is maximal.
    pub fn peak_phase(&self) -> f64 {
        match self.kind {
            ModelKind::Sinusoidal => PI / 2.0,
            ModelKind::Sniper | ModelKind::ThetaNeuron => PI,
        }
    }

    /// Integrands that depend on θ only through S(θ)² repeat on
    /// [0, upper]; returns (upper, copies) with upper·copies = 2π.
    pub(crate) fn fundamental_domain(&self) -> (f64, f64) {
        match self.kind {
            ModelKind::Sinusoidal => (PI / 2.0, 4.0),
            ModelKind::Sniper | ModelKind::ThetaNeuron => (PI, 2.0),
        }
    }

    pub fn df_dtheta(&self, theta: f64) -> f64 {
        match self.kind {
            ModelKind::Sinusoidal | ModelKind::Sniper => 0.0,
            ModelKind::ThetaNeuron => {
                let s = theta.sin();
                -s + self.zd * s * self.ib.unwrap_or(0.0)
            }
        }
    }

    pub fn dz_dtheta(&self, theta: f64) -> f64 {
        match self.kind {
            ModelKind::Sinusoidal => self.zd * theta.cos(),
            ModelKind::Sniper | ModelKind::ThetaNeuron => self.zd * theta.sin(),
        }
    }

    /// Phase velocity under current `current`.
    pub fn velocity(&self, theta: f64, current: f64) -> f64 {
        self.eval_f(theta) + self.eval_z(theta) * current
    }

    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            omega: Some(self.omega),
            zd: Some(self.zd),
            ib: self.ib,
        }
    }
}

impl TryFrom<ModelSpec> for PhaseModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::InvalidModel(format!("{name} is required for {:?}", spec.kind)))
        };
        match spec.kind {
            ModelKind::Sinusoidal => PhaseModel::sinusoidal(need("omega", spec.omega)?, need("zd", spec.zd)?),
            ModelKind::Sniper => PhaseModel::sniper(need("omega", spec.omega)?, need("zd", spec.zd)?),
            ModelKind::ThetaNeuron => {
                let model = PhaseModel::theta(need("ib", spec.ib)?, spec.zd.unwrap_or(1.0))?;
                if let Some(omega) = spec.omega {
                    if (omega - model.omega).abs() > 1e-9 * model.omega {
                        return Err(Error::InvalidModel(format!(
                            "theta neuron omega must equal 2*sqrt(zd*ib) = {}, got {omega}",
                            model.omega
                        )));
                    }
                }
                Ok(model)
            }
        }
    }
}

impl From<PhaseModel> for ModelSpec {
    fn from(m: PhaseModel) -> Self {
        m.to_spec()
    }
}

/// Theta neuron together with its equivalent SNIPER model and the
/// phase map between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaReduction {
    pub theta: PhaseModel,
    pub sniper: PhaseModel,
    /// √(z_d I_b), the slope of the half-angle map.
    scale: f64,
}

/// Reduce a theta neuron to SNIPER form.
///
/// With u = (φ − π)/2 and tan((θ − π)/2) = √(z_d I_b) tan u the theta
/// dynamics become φ' = ω + (2 z_d/ω)(1 − cos φ) I, ω = 2√(z_d I_b).
pub fn theta_to_sniper(model: &PhaseModel) -> Result<ThetaReduction> {
    if model.kind != ModelKind::ThetaNeuron {
        return Err(Error::InvalidModel(format!(
            "phase reduction applies to theta neurons only, got {:?}",
            model.kind
        )));
    }
    let ib = model.ib.unwrap_or(0.0);
    let scale = (model.zd * ib).sqrt();
    let omega = 2.0 * scale;
    let sniper = PhaseModel::sniper(omega, 2.0 * model.zd / omega)?;
    Ok(ThetaReduction { theta: *model, sniper, scale })
}

impl ThetaReduction {
    /// φ (SNIPER phase) ↦ θ (theta-neuron phase).
    pub fn to_theta_phase(&self, phi: f64) -> f64 {
        if phi <= 0.0 {
            return 0.0;
        }
        if phi >= TAU {
            return TAU;
        }
        let u = 0.5 * (phi - PI);
        // cos u ≥ 0 on the cycle, so atan2 gives the principal branch
        2.0 * (self.scale * u.sin()).atan2(u.cos()) + PI
    }

    /// θ (theta-neuron phase) ↦ φ (SNIPER phase).
    pub fn to_sniper_phase(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        if theta >= TAU {
            return TAU;
        }
        let v = 0.5 * (theta - PI);
        2.0 * v.sin().atan2(self.scale * v.cos()) + PI
    }

    /// dφ/dθ of the map above; converts SNIPER costates to theta phase.
    pub fn sniper_phase_slope(&self, theta: f64) -> f64 {
        let v = 0.5 * (theta - PI);
        let (s, c) = v.sin_cos();
        self.scale / (self.scale * self.scale * c * c + s * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_rates() {
        let s = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
        assert_eq!(s.eval_f(1.3), 1.0);
        let n = PhaseModel::sniper(2.0, 1.0).unwrap();
        assert_eq!(n.eval_f(PI), 2.0);
        let t = PhaseModel::theta(0.25, 1.0).unwrap();
        assert_eq!(t.eval_f(0.0), 2.0);
    }

    #[test]
    fn prc_values() {
        let s = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
        assert!((s.eval_z(PI / 2.0) - 1.0).abs() < 1e-15);
        let n = PhaseModel::sniper(1.0, 1.0).unwrap();
        assert_eq!(n.eval_z(PI), 2.0);
        assert_eq!(n.eval_z(0.0), 0.0);
    }

    #[test]
    fn shape_deficit_identity() {
        for m in [PhaseModel::sinusoidal(1.0, 1.0).unwrap(), PhaseModel::sniper(1.0, 1.0).unwrap()] {
            for k in 0..100 {
                let th = TAU * k as f64 / 100.0;
                let r = m.shape(th) / m.shape_max();
                assert!((m.shape_deficit(th) - (1.0 - r * r)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PhaseModel::sinusoidal(0.0, 1.0).is_err());
        assert!(PhaseModel::sinusoidal(1.0, -1.0).is_err());
        assert!(PhaseModel::sniper(f64::NAN, 1.0).is_err());
        assert!(PhaseModel::theta(0.0, 1.0).is_err());
    }

    #[test]
    fn theta_reduction_parameters() {
        let t = PhaseModel::theta(0.25, 1.0).unwrap();
        assert_eq!(t.omega(), 1.0);
        let r = theta_to_sniper(&t).unwrap();
        assert_eq!(r.sniper.omega(), 1.0);
        assert_eq!(r.sniper.zd(), 2.0);
        assert!(theta_to_sniper(&PhaseModel::sniper(1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn phase_map_endpoints_and_midpoint() {
        let r = theta_to_sniper(&PhaseModel::theta(0.25, 1.0).unwrap()).unwrap();
        assert_eq!(r.to_theta_phase(0.0), 0.0);
        assert_eq!(r.to_theta_phase(TAU), TAU);
        assert!((r.to_theta_phase(PI) - PI).abs() < 1e-15);
        assert!(r.to_theta_phase(1e-12) < 1e-9);
    }

    #[test]
    fn phase_map_round_trip() {
        for &ib in &[0.05, 0.25, 1.0, 3.0] {
            let r = theta_to_sniper(&PhaseModel::theta(ib, 1.0).unwrap()).unwrap();
            let mut last = -1.0;
            for k in 0..=1000 {
                let phi = TAU * k as f64 / 1000.0;
                let th = r.to_theta_phase(phi);
                assert!(th >= last);
                last = th;
                assert!((r.to_sniper_phase(th) - phi).abs() < 1e-12, "ib={ib} phi={phi}");
            }
        }
    }

    #[test]
    fn phase_slope_matches_difference_quotient() {
        let r = theta_to_sniper(&PhaseModel::theta(0.3, 1.5).unwrap()).unwrap();
        for k in 1..40 {
            let th = TAU * k as f64 / 40.0;
            let h = 1e-6;
            let fd = (r.to_sniper_phase(th + h) - r.to_sniper_phase(th - h)) / (2.0 * h);
            assert!((r.sniper_phase_slope(th) - fd).abs() < 1e-7, "{th}");
        }
    }

    #[test]
    fn json_model_spec() {
        let m: PhaseModel = serde_json::from_str(r#"{"kind":"sinusoidal","omega":1.0,"zd":1.0}"#).unwrap();
        assert_eq!(m, PhaseModel::sinusoidal(1.0, 1.0).unwrap());
        let t: PhaseModel = serde_json::from_str(r#"{"kind":"theta","ib":0.25}"#).unwrap();
        assert_eq!(t.omega(), 1.0);
        assert!(serde_json::from_str::<PhaseModel>(r#"{"kind":"theta","ib":0.25,"omega":3.0}"#).is_err());
        assert!(serde_json::from_str::<PhaseModel>(r#"{"kind":"sniper","omega":1.0,"zd":0.0}"#).is_err());
        let back: PhaseModel = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
