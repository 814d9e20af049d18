use nalgebra::{DMatrix, DVector};

use super::require_positive;
use crate::error::Result;
use crate::system::{Label, Labels};
use crate::two_port::TwoPortPhs;

/// Universal gas constant, J/(mol·K).
pub const R_GAS: f64 = 8.314;

/// Ideal gas enclosed by a piston, with an entropy-flow (thermal) port and
/// a force (mechanical) port.
///
/// Internal energy
///
/// ```text
/// U(S, V) = n c_v T₀ exp((S − S₀)/(n c_v)) (V/V₀)^(−R/c_v)
/// ```
///
/// gives `T = ∂U/∂S`, `P = −∂U/∂V = nRT/V` and adiabats `T V^(R/c_v) = const`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasPistonParams {
    /// mol
    pub n_mol: f64,
    /// Molar heat capacity at constant volume, J/(mol·K).
    pub c_v: f64,
    pub r_gas: f64,
    /// Piston area, m².
    pub area: f64,
    /// Piston mass, kg.
    pub mass: f64,
    /// Reference entropy (J/K), volume (m³) and temperature (K).
    pub s_ref: f64,
    pub v_ref: f64,
    pub t_ref: f64,
}

impl Default for GasPistonParams {
    fn default() -> Self {
        Self {
            n_mol: 1.0,
            c_v: 1.5 * R_GAS,
            r_gas: R_GAS,
            area: 0.01,
            mass: 1.0,
            s_ref: 0.0,
            v_ref: 1e-3,
            t_ref: 300.0,
        }
    }
}

impl GasPistonParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("n_mol", self.n_mol)?;
        require_positive("c_v", self.c_v)?;
        require_positive("r_gas", self.r_gas)?;
        require_positive("area", self.area)?;
        require_positive("mass", self.mass)?;
        require_positive("v_ref", self.v_ref)?;
        require_positive("t_ref", self.t_ref)?;
        Ok(())
    }

    fn heat_capacity(&self) -> f64 {
        self.n_mol * self.c_v
    }

    pub fn temperature(&self, s: f64, v: f64) -> f64 {
        self.t_ref
            * ((s - self.s_ref) / self.heat_capacity()).exp()
            * (v / self.v_ref).powf(-self.r_gas / self.c_v)
    }

    pub fn internal_energy(&self, s: f64, v: f64) -> f64 {
        self.heat_capacity() * self.temperature(s, v)
    }

    /// `P = −∂U/∂V`.
    pub fn pressure(&self, s: f64, v: f64) -> f64 {
        self.n_mol * self.r_gas * self.temperature(s, v) / v
    }

    /// Entropy at which the gas at volume `v` has temperature `t`.
    pub fn entropy_at(&self, t: f64, v: f64) -> f64 {
        self.s_ref
            + self.heat_capacity()
                * ((t / self.t_ref).ln() + self.r_gas / self.c_v * (v / self.v_ref).ln())
    }

    /// Volume reached along an adiabat from `(v, t_from)` when the
    /// temperature becomes `t_to`.
    pub fn adiabat_volume(&self, v: f64, t_from: f64, t_to: f64) -> f64 {
        v * (t_from / t_to).powf(self.c_v / self.r_gas)
    }
}

/// State `(S, V, π)`; port 1 is entropy flow / temperature, port 2 is
/// force / piston velocity.
pub fn make_gas_piston(params: GasPistonParams) -> Result<TwoPortPhs> {
    params.validate()?;
    let p = params;
    let (a, m, ncv, r, cv) = (p.area, p.mass, p.heat_capacity(), p.r_gas, p.c_v);

    TwoPortPhs::builder(
        1,
        2,
        1,
        move |x1, x2| p.internal_energy(x1[0], x2[0]) + x2[1] * x2[1] / (2.0 * m),
        DMatrix::from_element(1, 1, 1.0),
    )
    .gradient(move |x1, x2| {
        let t = p.temperature(x1[0], x2[0]);
        DVector::from_vec(vec![t, -p.n_mol * r * t / x2[0], x2[1] / m])
    })
    .hessian11(move |x1, x2| DMatrix::from_element(1, 1, p.temperature(x1[0], x2[0]) / ncv))
    .hessian12(move |x1, x2| {
        let t = p.temperature(x1[0], x2[0]);
        DMatrix::from_row_slice(1, 2, &[-r * t / (cv * x2[0]), 0.0])
    })
    .j2(move |_, _| DMatrix::from_row_slice(2, 2, &[0.0, a, -a, 0.0]))
    .g2(|_, _| DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))
    .domain(|x| {
        if x[1] > 0.0 {
            Ok(())
        } else {
            Err(format!("gas volume must be positive, got V = {}", x[1]))
        }
    })
    .labels(Labels {
        states: vec![
            Label::new("S", "J/K"),
            Label::new("V", "m^3"),
            Label::new("pi", "kg*m/s"),
        ],
        ports: vec![Label::new("thermal", "W/K"), Label::new("mechanical", "N")],
    })
    .build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::PhsError;

    #[test]
    fn reference_state_temperature_and_pressure() {
        let p = GasPistonParams::default();
        let sys = make_gas_piston(p).unwrap();
        let x = DVector::from_vec(vec![p.s_ref, p.v_ref, 0.0]);
        let (y1, y2) = sys.outputs(&x).unwrap();
        assert!((y1[0] - 300.0).abs() < 1e-12);
        assert_eq!(y2[0], 0.0);
        let e = sys.gradient(&x).unwrap();
        let oracle = p.n_mol * R_GAS * 300.0 / p.v_ref;
        assert!((-e[1] - oracle).abs() < 1e-9 * oracle);
    }

    #[test]
    fn piston_at_rest_accelerates_with_pressure() {
        let p = GasPistonParams::default();
        let sys = make_gas_piston(p).unwrap().embed();
        let x = DVector::from_vec(vec![0.3, 1.5e-3, 0.0]);
        let xdot = sys.eval_dynamics(&x, &DVector::zeros(2)).unwrap();
        assert_eq!(xdot[0], 0.0);
        assert_eq!(xdot[1], 0.0);
        let expected = p.area * p.pressure(0.3, 1.5e-3);
        assert!((xdot[2] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn entropy_inverse_is_consistent() {
        let p = GasPistonParams::default();
        let s = p.entropy_at(412.0, 2.2e-3);
        assert!((p.temperature(s, 2.2e-3) - 412.0).abs() < 1e-10);
        let v = p.adiabat_volume(2e-3, 400.0, 300.0);
        let s = p.entropy_at(400.0, 2e-3);
        assert!((p.temperature(s, v) - 300.0).abs() < 1e-9);
    }

    #[test]
    fn non_positive_volume_is_out_of_domain() {
        let sys = make_gas_piston(GasPistonParams::default()).unwrap();
        let err = sys.gradient(&DVector::from_vec(vec![0.0, -1e-3, 0.0])).unwrap_err();
        assert!(matches!(err, PhsError::OutOfDomain(_)));
    }

    #[test]
    fn invalid_params() {
        let p = GasPistonParams {
            area: 0.0,
            ..GasPistonParams::default()
        };
        assert!(make_gas_piston(p).is_err());
    }
}
