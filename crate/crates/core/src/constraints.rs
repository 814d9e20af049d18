//! Port-1 input laws that hold `x₁` constant ("adiabatic") or `e₁`
//! constant ("isothermal"), and the cyclic-motion audit for constant `y₁`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{PhsError, Result};
use crate::integrator::{EnergyLedger, InputLaw, Trajectory};
use crate::system::Vector;
use crate::two_port::TwoPortPhs;

/// `u₁ = G₁⁻¹(R₁e₁ − J₁e₁)`, which makes `ẋ₁ = 0`.
pub fn adiabatic_input(sys: &TwoPortPhs, x: &Vector) -> Result<Vector> {
    let (e1, _) = sys.efforts(x)?;
    let drift = (sys.r1(x) - sys.j1(x)) * e1;
    Ok(sys.g1_inverse() * drift)
}

/// Rate `ẋ₁ = −(∂²H/∂x₁²)⁻¹ (∂²H/∂x₁∂x₂) ẋ₂` that keeps `e₁` stationary.
pub fn isothermal_x1_rate(sys: &TwoPortPhs, x: &Vector, x2_dot: &Vector) -> Result<Vector> {
    if x2_dot.len() != sys.n2() {
        return Err(PhsError::DimensionMismatch {
            context: "x2 rate",
            expected: sys.n2(),
            actual: x2_dot.len(),
        });
    }
    let (_, inv, _) = sys.hessian11_checked(x)?;
    let h12 = sys.hessian12(x)?;
    Ok(-(inv * (h12 * x2_dot)))
}

/// `u₁ = G₁⁻¹(ẋ₁ + R₁e₁ − J₁e₁)` with the `e₁`-preserving `ẋ₁` for the
/// given `ẋ₂`.
pub fn isothermal_input(sys: &TwoPortPhs, x: &Vector, x2_dot: &Vector) -> Result<Vector> {
    let x1_dot = isothermal_x1_rate(sys, x, x2_dot)?;
    let (e1, _) = sys.efforts(x)?;
    let drift = (sys.r1(x) - sys.j1(x)) * e1;
    Ok(sys.g1_inverse() * (x1_dot + drift))
}

/// What port 1 does while port 2 is driven.
#[derive(Debug, Clone, PartialEq)]
pub enum PortOneMode {
    /// Hold `x₁` constant.
    Adiabatic,
    /// Hold `e₁` constant.
    Isothermal,
    /// Apply a fixed `u₁`.
    Fixed(Vector),
}

pub type PortTwoLaw = Arc<dyn Fn(f64, &Vector) -> Result<Vector> + Send + Sync>;

/// Full input law `u = (u₁, u₂)`. `u₂` is evaluated first; the isothermal
/// `u₁` then uses `ẋ₂ = J₂e₂ − R₂e₂ + G₂u₂` with that `u₂`, which is well
/// defined because the `x₂` equation does not involve `u₁`.
pub fn constrained_law(sys: &TwoPortPhs, mode: PortOneMode, port2: PortTwoLaw) -> InputLaw {
    let sys = sys.clone();
    InputLaw::feedback(move |t, x| {
        let u2 = port2(t, x)?;
        let u1 = match &mode {
            PortOneMode::Adiabatic => adiabatic_input(&sys, x)?,
            PortOneMode::Isothermal => {
                let x2_dot = sys.x2_rate(x, &u2)?;
                isothermal_input(&sys, x, &x2_dot)?
            }
            PortOneMode::Fixed(u1) => u1.clone(),
        };
        Ok(DVector::from_iterator(
            u1.len() + u2.len(),
            u1.iter().chain(u2.iter()).copied(),
        ))
    })
}

/// Result of checking both port integrals on a constant-`y₁` cyclic run.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Audit {
    /// Preconditions held (closed motion, `y₁` constant within tolerance).
    pub applicable: bool,
    pub reason: Option<String>,
    /// ∫ ȳ₁ᵀu₁ dt
    pub port1_integral: f64,
    /// ∫ y₂ᵀu₂ dt
    pub port2_integral: f64,
    /// ∫ |y₁ᵀu₁| dt + ∫ |y₂ᵀu₂| dt, the scale for tolerances.
    pub energy_scale: f64,
    /// Absolute tolerance used for the flags: `relative_tolerance · energy_scale`.
    pub tolerance: f64,
    pub closure_error: f64,
    pub y1_variation: f64,
    pub port1_nonnegative: bool,
    pub port2_nonnegative: bool,
    /// |∫ ȳ₁ᵀu₁| within tolerance, the expected equality when `R₁ ≡ 0`.
    pub port1_vanishes: bool,
}

impl Theorem2Audit {
    pub fn passes(&self) -> bool {
        self.applicable && self.port1_nonnegative && self.port2_nonnegative
    }
}

/// Port integrals of a cyclic run along which `y₁` stays constant.
///
/// The integrals are read from the ledger; `energy_scale` is a trapezoid
/// integral of the absolute port powers on the trajectory grid. A run that
/// is not closed within `closure_eps`, or whose `y₁` varies by more than
/// `y1_tolerance`, is reported as not applicable rather than failing.
pub fn theorem2_audit(
    traj: &Trajectory,
    ledger: &EnergyLedger,
    y1_tolerance: f64,
    closure_eps: f64,
    relative_tolerance: f64,
) -> Theorem2Audit {
    let split = traj.port_split;
    let y1_0 = traj.outputs[0].rows(0, split).into_owned();
    let y1_variation = traj
        .outputs
        .iter()
        .map(|y| (y.rows(0, split) - &y1_0).amax())
        .fold(0.0, f64::max);
    let closure_error = traj.closure_error();

    let abs_power = |i: usize| -> f64 {
        let y = &traj.outputs[i];
        let u = &traj.inputs[i];
        let p1: f64 = (0..split).map(|j| y[j] * u[j]).sum();
        let p2: f64 = (split..y.len()).map(|j| y[j] * u[j]).sum();
        p1.abs() + p2.abs()
    };
    let energy_scale: f64 = (1..traj.len())
        .map(|i| 0.5 * (traj.times[i] - traj.times[i - 1]) * (abs_power(i - 1) + abs_power(i)))
        .sum();

    let mut reasons = Vec::new();
    if split == 0 || split == traj.outputs[0].len() {
        reasons.push("trajectory does not have two ports".to_string());
    }
    if closure_error > closure_eps {
        reasons.push(format!(
            "motion is not cyclic: closure error {closure_error:.3e} > {closure_eps:.3e}"
        ));
    }
    if y1_variation > y1_tolerance {
        reasons.push(format!(
            "port-1 output varies by {y1_variation:.3e} > {y1_tolerance:.3e}"
        ));
    }
    let tolerance = relative_tolerance * energy_scale;
    let port1 = ledger.port1_total();
    let port2 = ledger.port2_total();
    Theorem2Audit {
        applicable: reasons.is_empty(),
        reason: if reasons.is_empty() {
            None
        } else {
            Some(reasons.join("; "))
        },
        port1_integral: port1,
        port2_integral: port2,
        energy_scale,
        tolerance,
        closure_error,
        y1_variation,
        port1_nonnegative: port1 >= -tolerance,
        port2_nonnegative: port2 >= -tolerance,
        port1_vanishes: port1.abs() <= tolerance,
    }
}
