use nalgebra::{DMatrix, DVector};

use crate::error::{PhsError, Result};
use crate::models::{make_actuator_with, Inductance};
use crate::system::{Label, Labels, Matrix, PhsSystem, Vector};

/// Energy-shaping redesign of the electro-mechanical actuator in the state
/// `(φ, q, p)`.
///
/// The voltage feedback `u₁ = β + v₁` with `β = α p/m` and
/// `α(φ, q) = φ L′(q) / (4 L(q))` turns the plant into
/// `ẋ = J_d ∂H_d/∂x + G v`, where `H_d = H + H_a`, `H_a = φ²/(2L)` (the
/// magnetic energy is doubled) and
///
/// ```text
///       ⎡ 0   0   α ⎤
/// J_d = ⎢ 0   0   1 ⎥
///       ⎣ −α  −1  0 ⎦
/// ```
#[derive(Debug, Clone)]
pub struct IdaPbcDesign {
    inductance: Inductance,
    mass: f64,
    alpha_scale: f64,
}

pub fn ida_pbc_actuator(inductance: Inductance, mass: f64) -> Result<IdaPbcDesign> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(PhsError::InvalidParameter(format!(
            "mass must be positive and finite, got {mass}"
        )));
    }
    Ok(IdaPbcDesign {
        inductance,
        mass,
        alpha_scale: 1.0,
    })
}

/// Comparison of the closed loops obtained by direct output feedback and by
/// energy shaping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackEquivalence {
    pub samples: usize,
    /// max |plant with `u = [[0, α], [−α, 0]] y` − `J_d ∂H/∂x`|.
    pub direct_vs_jd: f64,
    /// max |plant with `u = [[0, α], [−α, 0]] y` − shaped closed loop|.
    pub direct_vs_shaped: f64,
    /// Samples on which the two constructions agree (to `tol`).
    pub agreeing: usize,
}

impl IdaPbcDesign {
    /// Same design with `α` multiplied by `factor` (`β` follows), used to
    /// exercise the matching check.
    pub fn with_alpha_scale(mut self, factor: f64) -> Self {
        self.alpha_scale = factor;
        self
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inductance(&self) -> &Inductance {
        &self.inductance
    }

    pub fn alpha(&self, phi: f64, q: f64) -> Result<f64> {
        let l = self.inductance.positive(q)?;
        Ok(self.alpha_scale * 0.25 * self.inductance.derivative(q) / l * phi)
    }

    pub fn beta(&self, phi: f64, q: f64, p: f64) -> Result<f64> {
        Ok(self.alpha(phi, q)? * p / self.mass)
    }

    /// Plant energy `φ²/(2L) + p²/(2m)`.
    pub fn plant_energy(&self, phi: f64, q: f64, p: f64) -> Result<f64> {
        let l = self.inductance.positive(q)?;
        Ok(phi * phi / (2.0 * l) + p * p / (2.0 * self.mass))
    }

    pub fn h_a(&self, phi: f64, q: f64) -> Result<f64> {
        let l = self.inductance.positive(q)?;
        Ok(phi * phi / (2.0 * l))
    }

    pub fn h_d(&self, phi: f64, q: f64, p: f64) -> Result<f64> {
        let l = self.inductance.positive(q)?;
        Ok(phi * phi / l + p * p / (2.0 * self.mass))
    }

    pub fn j_d(&self, phi: f64, q: f64) -> Result<Matrix> {
        Ok(j_matrix(self.alpha(phi, q)?))
    }

    /// `(∂H/∂x, ∂H_a/∂x)` in closed form.
    fn gradients(&self, phi: f64, q: f64, p: f64) -> Result<(Vector, Vector)> {
        let l = self.inductance.positive(q)?;
        let dl = self.inductance.derivative(q);
        let current = phi / l;
        let dq = -0.5 * current * current * dl;
        Ok((
            DVector::from_vec(vec![current, dq, p / self.mass]),
            DVector::from_vec(vec![current, dq, 0.0]),
        ))
    }

    fn plant(&self) -> Result<PhsSystem> {
        Ok(make_actuator_with(self.inductance.clone(), self.mass)?.embed())
    }

    /// Largest absolute residual over `samples` of the three matching
    /// equations
    ///
    /// * `α ∂H_a/∂p = −α ∂H/∂p + β`
    /// * `∂H_a/∂p = 0`
    /// * `−α ∂H_a/∂φ − ∂H_a/∂q = α ∂H/∂φ`
    ///
    /// and of `J_d ∂H_d/∂x` against the plant vector field with `u₁ = β`.
    pub fn matching_residual(&self, samples: &[Vector]) -> Result<f64> {
        let plant = self.plant()?;
        let mut worst = 0.0f64;
        for x in samples {
            let (phi, q, p) = unpack(x)?;
            let alpha = self.alpha(phi, q)?;
            let beta = self.beta(phi, q, p)?;
            let (dh, dha) = self.gradients(phi, q, p)?;
            let r1 = alpha * dha[2] - (-alpha * dh[2] + beta);
            let r2 = dha[2];
            let r3 = -alpha * dha[0] - dha[1] - alpha * dh[0];
            let shaped = self.j_d(phi, q)? * (&dh + &dha);
            let actual = plant.eval_dynamics(x, &DVector::from_vec(vec![beta, 0.0]))?;
            let r4 = (shaped - actual).amax();
            worst = worst.max(r1.abs()).max(r2.abs()).max(r3.abs()).max(r4);
        }
        Ok(worst)
    }

    /// Largest `|H_d − H − φ²/(2L)|` over `samples`: the shaped energy is
    /// the plant energy with the magnetic part doubled.
    pub fn magnetic_doubling_residual(&self, samples: &[Vector]) -> Result<f64> {
        let mut worst = 0.0f64;
        for x in samples {
            let (phi, q, p) = unpack(x)?;
            let l = self.inductance.positive(q)?;
            let r = self.h_d(phi, q, p)? - self.plant_energy(phi, q, p)? - phi * phi / (2.0 * l);
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }

    /// Closed loop `ẋ = J_d(x) ∂H_d/∂x + G v` with `y_d = Gᵀ ∂H_d/∂x`.
    pub fn closed_loop(&self) -> Result<PhsSystem> {
        let (hd, grad, jd, dom) = (self.clone(), self.clone(), self.clone(), self.clone());
        let nan3 = || DVector::from_element(3, f64::NAN);
        PhsSystem::builder(3, 2, move |x: &[f64]| {
            hd.h_d(x[0], x[1], x[2]).unwrap_or(f64::NAN)
        })
        .gradient(move |x: &[f64]| match grad.gradients(x[0], x[1], x[2]) {
            Ok((dh, dha)) => dh + dha,
            Err(_) => nan3(),
        })
        .structure(move |x: &[f64]| {
            jd.j_d(x[0], x[1])
                .unwrap_or_else(|_| DMatrix::from_element(3, 3, f64::NAN))
        })
        .constant_input_map(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]))
        .domain(move |x: &[f64]| {
            if x[1] < 0.0 {
                return Err(format!("armature displacement must be >= 0, got q = {}", x[1]));
            }
            dom.inductance.positive(x[1]).map(|_| ()).map_err(|e| e.to_string())
        })
        .labels(Labels {
            states: vec![
                Label::new("phi", "Wb"),
                Label::new("q", "m"),
                Label::new("p", "kg*m/s"),
            ],
            ports: vec![Label::new("electrical", "V"), Label::new("mechanical", "N")],
        })
        .port_split(1)
        .build()
    }

    /// Compares, for the modulation `alpha`, the plant under the direct
    /// output feedback `u = [[0, α], [−α, 0]] y` with `J_d(α) ∂H/∂x` (same
    /// energy, new interconnection) and with the shaped closed loop of this
    /// design.
    pub fn feedback_equivalence(
        &self,
        alpha: impl Fn(f64, f64) -> f64,
        samples: &[Vector],
        tol: f64,
    ) -> Result<FeedbackEquivalence> {
        let plant = self.plant()?;
        let shaped = self.closed_loop()?;
        let zero = DVector::zeros(2);
        let mut report = FeedbackEquivalence {
            samples: 0,
            direct_vs_jd: 0.0,
            direct_vs_shaped: 0.0,
            agreeing: 0,
        };
        for x in samples {
            let (phi, q, p) = unpack(x)?;
            let a = alpha(phi, q);
            let y = plant.outputs(x)?;
            let u = DVector::from_vec(vec![a * y[1], -a * y[0]]);
            let direct = plant.eval_dynamics(x, &u)?;
            let (dh, _) = self.gradients(phi, q, p)?;
            let reassigned = j_matrix(a) * dh;
            let shaped_rate = shaped.eval_dynamics(x, &zero)?;
            let d_shaped = (&direct - shaped_rate).amax();
            report.direct_vs_jd = report.direct_vs_jd.max((&direct - reassigned).amax());
            report.direct_vs_shaped = report.direct_vs_shaped.max(d_shaped);
            if d_shaped <= tol {
                report.agreeing += 1;
            }
            report.samples += 1;
        }
        Ok(report)
    }
}

fn j_matrix(alpha: f64) -> Matrix {
    DMatrix::from_row_slice(3, 3, &[0.0, 0.0, alpha, 0.0, 0.0, 1.0, -alpha, -1.0, 0.0])
}

fn unpack(x: &Vector) -> Result<(f64, f64, f64)> {
    if x.len() != 3 {
        return Err(PhsError::DimensionMismatch {
            context: "actuator state",
            expected: 3,
            actual: x.len(),
        });
    }
    Ok((x[0], x[1], x[2]))
}
