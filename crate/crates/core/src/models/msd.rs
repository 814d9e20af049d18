use nalgebra::{DMatrix, DVector};

use super::require_positive;
use crate::error::{PhsError, Result};
use crate::system::{Label, Labels, PhsSystem};

/// Mass-spring-damper: state `(q, p)`, force input, velocity output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsdParams {
    /// kg
    pub m: f64,
    /// N/m
    pub k: f64,
    /// N·s/m
    pub d: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            k: 1.0,
            d: 0.5,
        }
    }
}

impl MsdParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("m", self.m)?;
        require_positive("k", self.k)?;
        if !(self.d >= 0.0) || !self.d.is_finite() {
            return Err(PhsError::InvalidParameter(format!(
                "d must be non-negative, got {}",
                self.d
            )));
        }
        Ok(())
    }

    pub fn energy(&self, q: f64, p: f64) -> f64 {
        0.5 * self.k * q * q + p * p / (2.0 * self.m)
    }
}

pub fn make_msd(params: MsdParams) -> Result<PhsSystem> {
    params.validate()?;
    let MsdParams { m, k, d } = params;
    let mut builder = PhsSystem::builder(2, 1, move |x: &[f64]| params.energy(x[0], x[1]))
        .gradient(move |x: &[f64]| DVector::from_vec(vec![k * x[0], x[1] / m]))
        .constant_structure(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
        .constant_input_map(DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))
        .labels(Labels {
            states: vec![Label::new("q", "m"), Label::new("p", "kg*m/s")],
            ports: vec![Label::new("force", "N")],
        });
    if d > 0.0 {
        builder = builder.dissipation(move |_, e: &[f64]| DVector::from_vec(vec![0.0, d * e[1]]));
    }
    builder.build()
}
