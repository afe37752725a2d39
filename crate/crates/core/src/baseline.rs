//! Nonlinear second-order actuator model used as a comparison baseline:
//!
//! ```text
//! M θ'' + C θ' + K θ^(n+Δn) = F,   θ(0) = θ'(0) = 0
//! ```
//!
//! with the large-deflection beam stiffness
//! `K = ((n+1)/n)^n · E · I_n / L0^(n+1)` and
//! `I_n = (1/2)^n · b · h^(2+n) / (2+n)`.

use serde::{Deserialize, Serialize};

use crate::dataset::StepTrace;
use crate::error::ModelError;
use crate::model::SimGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    pub young_modulus: f64,
    pub width: f64,
    pub thickness: f64,
    pub length0: f64,
}

impl BeamGeometry {
    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [self.young_modulus, self.width, self.thickness, self.length0];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(ModelError::InvalidParameters(format!(
                "beam geometry must be strictly positive: {self:?}"
            )))
        }
    }
}

fn check_exponent(n_p: f64) -> Result<(), ModelError> {
    if n_p >= 1.0 && n_p.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameters(format!(
            "n_p must be >= 1, got {n_p}"
        )))
    }
}

/// Modified second moment of area for large deflection.
pub fn moment_inertia(geom: &BeamGeometry, n_p: f64) -> Result<f64, ModelError> {
    check_exponent(n_p)?;
    Ok(0.5f64.powf(n_p) / (2.0 + n_p) * geom.width * geom.thickness.powf(2.0 + n_p))
}

/// Spring constant `K_n` of the bending beam.
pub fn stiffness(geom: &BeamGeometry, n_p: f64) -> Result<f64, ModelError> {
    geom.validate()?;
    let i = moment_inertia(geom, n_p)?;
    Ok(((n_p + 1.0) / n_p).powf(n_p) * geom.young_modulus * i / geom.length0.powf(n_p + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearParams {
    pub m_eq: f64,
    pub c_np: f64,
    pub k_np: f64,
    pub n_p: f64,
    #[serde(default)]
    pub delta_np: f64,
    pub force: f64,
}

impl Default for NonlinearParams {
    fn default() -> Self {
        Self::with_default_damping(1.0, 1.0)
    }
}

impl NonlinearParams {
    /// Stiffness and force as given; `m_eq = 1`, `c = 0.8·√(k·m_eq)`,
    /// `n_p = 1.5`, `Δn_p = 0`.
    pub fn with_default_damping(k_np: f64, force: f64) -> Self {
        let m_eq = 1.0;
        Self {
            m_eq,
            c_np: 0.8 * (k_np * m_eq).sqrt(),
            k_np,
            n_p: 1.5,
            delta_np: 0.0,
            force,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = [
            self.m_eq,
            self.c_np,
            self.k_np,
            self.n_p,
            self.delta_np,
            self.force,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::InvalidParameters(format!(
                "non-finite baseline parameter: {self:?}"
            )));
        }
        if !(self.m_eq > 0.0) {
            return Err(ModelError::InvalidParameters(format!(
                "m_eq must be > 0, got {}",
                self.m_eq
            )));
        }
        if !(self.k_np > 0.0) {
            return Err(ModelError::InvalidParameters(format!(
                "k_np must be > 0, got {}",
                self.k_np
            )));
        }
        check_exponent(self.n_p)?;
        if !(self.exponent() > 0.0) {
            return Err(ModelError::InvalidParameters(format!(
                "n_p + delta_np must be > 0, got {}",
                self.exponent()
            )));
        }
        Ok(())
    }

    pub fn exponent(&self) -> f64 {
        self.n_p + self.delta_np
    }

    /// Equilibrium angle solving `K θ^(n+Δn) = F` (zero for `F ≤ 0`).
    pub fn steady_state(&self) -> f64 {
        if self.force <= 0.0 {
            0.0
        } else {
            (self.force / self.k_np).powf(1.0 / self.exponent())
        }
    }

    fn accel(&self, theta: f64, omega: f64) -> f64 {
        let spring = if theta > 0.0 {
            self.k_np * theta.powf(self.exponent())
        } else {
            0.0
        };
        (self.force - self.c_np * omega - spring) / self.m_eq
    }
}

/// Classical RK4 integration of the baseline on `grid`. Values are angles in
/// the units implied by `force / k_np`; the returned trace is raw with the
/// steady-state angle as its setpoint (1 when that is zero).
pub fn simulate_nonlinear(
    params: &NonlinearParams,
    grid: &SimGrid,
) -> Result<StepTrace, ModelError> {
    params.validate()?;
    grid.validate()?;
    let n = grid.n_points();
    let h = grid.step;
    let theta_ss = params.steady_state();
    let guard = 10.0 * theta_ss;
    let mut values = Vec::with_capacity(n);
    let (mut th, mut om) = (0.0f64, 0.0f64);
    values.push(th);
    for i in 1..n {
        let k1 = (om, params.accel(th, om));
        let k2 = (
            om + 0.5 * h * k1.1,
            params.accel(th + 0.5 * h * k1.0, om + 0.5 * h * k1.1),
        );
        let k3 = (
            om + 0.5 * h * k2.1,
            params.accel(th + 0.5 * h * k2.0, om + 0.5 * h * k2.1),
        );
        let k4 = (om + h * k3.1, params.accel(th + h * k3.0, om + h * k3.1));
        th += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        om += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if !th.is_finite() || th.abs() > guard {
            return Err(ModelError::Instability {
                t: grid.time(i),
                theta: th,
            });
        }
        values.push(th);
    }
    let setpoint = if theta_ss > 0.0 { theta_ss } else { 1.0 };
    StepTrace::new("baseline", grid.times(), values, setpoint)
        .map_err(|e| ModelError::InvalidParameters(e.to_string()))
}
