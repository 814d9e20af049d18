//! Parameterized constructors for the built-in systems.
//!
//! All models ship closed-form gradients (and, for the two-port models,
//! closed-form partial Hessians) so that constrained inputs are exact.

mod actuator;
mod gas_piston;
mod heat_exchanger;
mod msd;
mod scalar;

pub use actuator::{make_actuator, make_actuator_with, ActuatorParams, Inductance};
pub use gas_piston::{make_gas_piston, GasPistonParams, R_GAS};
pub use heat_exchanger::{make_heat_exchanger, HeatExchangerParams};
pub use msd::{make_msd, MsdParams};
pub use scalar::make_scalar_exp;

use crate::error::{PhsError, Result};

pub(crate) fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PhsError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}
