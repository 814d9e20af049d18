use nalgebra::{DMatrix, DVector};

use super::require_positive;
use crate::error::Result;
use crate::system::{Label, Labels, PhsSystem};

/// Two heat reservoirs coupled by a conducting wall.
///
/// Reservoir energies `Eᵢ(Sᵢ) = Cᵢ T_ref exp(Sᵢ/Cᵢ)`, so temperatures
/// `Tᵢ = T_ref exp(Sᵢ/Cᵢ)` stay positive for every entropy.
///
/// The interconnection depends on the state only through the temperatures
/// (the system is "quasi" port-Hamiltonian); it is represented here as an
/// ordinary state-dependent `J(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatExchangerParams {
    /// Conduction coefficient λ, W/K.
    pub lambda: f64,
    /// Heat capacities, J/K.
    pub c1: f64,
    pub c2: f64,
    /// K
    pub t_ref: f64,
}

impl Default for HeatExchangerParams {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            c1: 1000.0,
            c2: 1000.0,
            t_ref: 300.0,
        }
    }
}

impl HeatExchangerParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("lambda", self.lambda)?;
        require_positive("c1", self.c1)?;
        require_positive("c2", self.c2)?;
        require_positive("t_ref", self.t_ref)
    }

    pub fn temperatures(&self, s1: f64, s2: f64) -> (f64, f64) {
        (
            self.t_ref * (s1 / self.c1).exp(),
            self.t_ref * (s2 / self.c2).exp(),
        )
    }

    /// Entropies giving temperatures `(t1, t2)`.
    pub fn entropies(&self, t1: f64, t2: f64) -> (f64, f64) {
        (
            self.c1 * (t1 / self.t_ref).ln(),
            self.c2 * (t2 / self.t_ref).ln(),
        )
    }

    pub fn total_energy(&self, s1: f64, s2: f64) -> f64 {
        let (t1, t2) = self.temperatures(s1, s2);
        self.c1 * t1 + self.c2 * t2
    }
}

/// State `(S₁, S₂)`, inputs are external entropy flows, outputs the
/// temperatures.
pub fn make_heat_exchanger(params: HeatExchangerParams) -> Result<PhsSystem> {
    params.validate()?;
    let p = params;
    PhsSystem::builder(2, 2, move |x: &[f64]| p.total_energy(x[0], x[1]))
        .gradient(move |x: &[f64]| {
            let (t1, t2) = p.temperatures(x[0], x[1]);
            DVector::from_vec(vec![t1, t2])
        })
        .structure(move |x: &[f64]| {
            let (t1, t2) = p.temperatures(x[0], x[1]);
            let c = p.lambda * (t2 - t1) / (t1 * t2);
            DMatrix::from_row_slice(2, 2, &[0.0, c, -c, 0.0])
        })
        .constant_input_map(DMatrix::identity(2, 2))
        .port_split(1)
        .labels(Labels {
            states: vec![Label::new("S1", "J/K"), Label::new("S2", "J/K")],
            ports: vec![Label::new("reservoir1", "W/K"), Label::new("reservoir2", "W/K")],
        })
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conduction_rates() {
        let p = HeatExchangerParams::default();
        let sys = make_heat_exchanger(p).unwrap();
        let (s1, s2) = p.entropies(300.0, 400.0);
        let x = DVector::from_vec(vec![s1, s2]);
        let xdot = sys.eval_dynamics(&x, &DVector::zeros(2)).unwrap();
        assert!((xdot[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((xdot[1] + 0.5).abs() < 1e-12);
        let (t1, _) = p.temperatures(s1, s2);
        assert!((t1 * xdot[0] - 200.0).abs() < 1e-9);
        assert!((xdot[0] + xdot[1] - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn equal_temperatures_are_at_rest() {
        let p = HeatExchangerParams::default();
        let sys = make_heat_exchanger(p).unwrap();
        let (s1, s2) = p.entropies(350.0, 350.0);
        let xdot = sys
            .eval_dynamics(&DVector::from_vec(vec![s1, s2]), &DVector::zeros(2))
            .unwrap();
        assert!(xdot.amax() < 1e-15);
    }
}
