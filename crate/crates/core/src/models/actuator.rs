use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::require_positive;
use crate::error::{PhsError, Result};
use crate::system::{Label, Labels};
use crate::two_port::TwoPortPhs;

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Displacement-dependent coil inductance `L(q)` with its derivative.
#[derive(Clone)]
pub struct Inductance {
    value: Curve,
    derivative: Curve,
}

impl fmt::Debug for Inductance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Inductance")
    }
}

impl Inductance {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }

    /// `L(q) = L₀ a / (a + q)`.
    pub fn reciprocal(l0: f64, a: f64) -> Self {
        Self::new(
            move |q| l0 * a / (a + q),
            move |q| -l0 * a / ((a + q) * (a + q)),
        )
    }

    pub fn value(&self, q: f64) -> f64 {
        (self.value)(q)
    }

    pub fn derivative(&self, q: f64) -> f64 {
        (self.derivative)(q)
    }

    /// Checked value: errors unless `L(q) > 0`.
    pub fn positive(&self, q: f64) -> Result<f64> {
        let l = self.value(q);
        if l > 0.0 && l.is_finite() {
            Ok(l)
        } else {
            Err(PhsError::OutOfDomain(format!(
                "inductance must be positive, L({q}) = {l}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorParams {
    /// Inductance scale, H.
    pub l0: f64,
    /// Displacement scale, m.
    pub a: f64,
    /// Armature mass, kg.
    pub mass: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            l0: 1.0,
            a: 0.05,
            mass: 0.1,
        }
    }
}

impl ActuatorParams {
    pub fn inductance(&self) -> Inductance {
        Inductance::reciprocal(self.l0, self.a)
    }
}

/// Electromagnetic actuator on `q ≥ 0` with `L(q) = L₀ a/(a + q)`.
///
/// The electrical port is driven directly by `u₁`; sources, switches and the
/// freewheeling diode of a physical drive are not modeled, so connecting a
/// current source is expressed as the constant-current `u₁` law of the cycle.
pub fn make_actuator(params: ActuatorParams) -> Result<TwoPortPhs> {
    require_positive("l0", params.l0)?;
    require_positive("a", params.a)?;
    make_actuator_with(params.inductance(), params.mass)
}

/// State `(φ, q, p)`; port 1 is voltage / current, port 2 is force /
/// armature velocity. `H = φ²/(2L(q)) + p²/(2m)`.
pub fn make_actuator_with(inductance: Inductance, mass: f64) -> Result<TwoPortPhs> {
    require_positive("mass", mass)?;
    let l = inductance.clone();
    let grad_l = inductance.clone();
    let h11_l = inductance.clone();
    let h12_l = inductance.clone();
    let domain_l = inductance;
    TwoPortPhs::builder(
        1,
        2,
        1,
        move |x1, x2| {
            let phi = x1[0];
            phi * phi / (2.0 * l.value(x2[0])) + x2[1] * x2[1] / (2.0 * mass)
        },
        DMatrix::from_element(1, 1, 1.0),
    )
    .gradient(move |x1, x2| {
        let (phi, q) = (x1[0], x2[0]);
        let lq = grad_l.value(q);
        let current = phi / lq;
        DVector::from_vec(vec![
            current,
            -0.5 * current * current * grad_l.derivative(q),
            x2[1] / mass,
        ])
    })
    .hessian11(move |_, x2| DMatrix::from_element(1, 1, 1.0 / h11_l.value(x2[0])))
    .hessian12(move |x1, x2| {
        let lq = h12_l.value(x2[0]);
        DMatrix::from_row_slice(1, 2, &[-x1[0] * h12_l.derivative(x2[0]) / (lq * lq), 0.0])
    })
    .j2(|_, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
    .g2(|_, _| DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))
    .domain(move |x| {
        if x[1] < 0.0 {
            return Err(format!("armature displacement must be >= 0, got q = {}", x[1]));
        }
        domain_l.positive(x[1]).map(|_| ()).map_err(|e| e.to_string())
    })
    .labels(Labels {
        states: vec![
            Label::new("phi", "Wb"),
            Label::new("q", "m"),
            Label::new("p", "kg*m/s"),
        ],
        ports: vec![Label::new("electrical", "V"), Label::new("mechanical", "N")],
    })
    .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> TwoPortPhs {
        make_actuator(ActuatorParams {
            l0: 1.0,
            a: 1.0,
            mass: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn energy_and_current() {
        let sys = unit();
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(sys.hamiltonian(&x), 0.5);
        let (y1, _) = sys.outputs(&x).unwrap();
        assert_eq!(y1[0], 1.0);
        assert_eq!(sys.hamiltonian(&DVector::zeros(3)), 0.0);
    }

    #[test]
    fn outputs_are_current_and_velocity() {
        let sys = unit();
        let (y1, y2) = sys.outputs(&DVector::from_vec(vec![2.0, 0.0, 3.0])).unwrap();
        assert_eq!((y1[0], y2[0]), (2.0, 3.0));
    }

    #[test]
    fn current_rises_as_armature_moves_out_at_constant_flux() {
        let sys = unit();
        let mut prev = 0.0;
        for q in [0.0, 0.5, 1.0, 2.0] {
            let (y1, _) = sys.outputs(&DVector::from_vec(vec![1.0, q, 0.0])).unwrap();
            assert!(y1[0] > prev);
            prev = y1[0];
        }
    }

    #[test]
    fn negative_displacement_rejected() {
        let sys = unit();
        assert!(sys.gradient(&DVector::from_vec(vec![1.0, -0.1, 0.0])).is_err());
    }

    #[test]
    fn analytic_gradient_matches_fd() {
        let sys = make_actuator(ActuatorParams::default()).unwrap().embed();
        let x = DVector::from_vec(vec![0.7, 0.13, -0.4]);
        let a = sys.gradient(&x).unwrap();
        let b = sys.gradient_fd(&x);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() <= 1e-6 * (1.0 + a[i].abs()));
        }
    }
}
