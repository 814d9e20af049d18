use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::system::{Label, Labels, PhsSystem};

/// `ẋ = u`, `y = eˣ`: lossless with storage `eˣ` but no finite ground
/// state of zero available storage.
pub fn make_scalar_exp() -> Result<PhsSystem> {
    PhsSystem::builder(1, 1, |x: &[f64]| x[0].exp())
        .gradient(|x: &[f64]| DVector::from_element(1, x[0].exp()))
        .constant_input_map(DMatrix::identity(1, 1))
        .labels(Labels {
            states: vec![Label::new("x", "")],
            ports: vec![Label::new("u", "")],
        })
        .build()
}
