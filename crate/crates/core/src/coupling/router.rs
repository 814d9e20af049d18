use nalgebra::{DMatrix, DVector};

use crate::error::{PhsError, Result};
use crate::integrator::{simulate, InputLaw, Trajectory};
use crate::models::{make_msd, MsdParams};
use crate::system::{Label, Labels, Matrix, PhsSystem, Vector};

/// Energy-router output feedback
/// `u₁ = −y₁‖y₂‖² + v₁`, `u₂ = y₂‖y₁‖² + v₂`.
///
/// Power flows out of the first system and into the second at the rate
/// `‖y₁‖²‖y₂‖²`; nothing moves while either output is zero.
pub fn router_feedback(y1: &Vector, y2: &Vector, v1: &Vector, v2: &Vector) -> Result<(Vector, Vector)> {
    if v1.len() != y1.len() {
        return Err(PhsError::DimensionMismatch {
            context: "router v1",
            expected: y1.len(),
            actual: v1.len(),
        });
    }
    if v2.len() != y2.len() {
        return Err(PhsError::DimensionMismatch {
            context: "router v2",
            expected: y2.len(),
            actual: v2.len(),
        });
    }
    let (n1, n2) = (y1.norm_squared(), y2.norm_squared());
    Ok((-y1 * n2 + v1, y2 * n1 + v2))
}

/// Two lossless systems joined by the energy router.
#[derive(Debug, Clone)]
pub struct RouterCoupling {
    pub sys_a: PhsSystem,
    pub sys_b: PhsSystem,
}

/// Instantaneous power bookkeeping of the router closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    /// ‖y₁‖²‖y₂‖², routed from the first system into the second.
    pub transfer: f64,
    /// y₁ᵀv₁
    pub external_a: f64,
    /// y₂ᵀv₂
    pub external_b: f64,
    /// dH₁/dt from the closed-loop vector field.
    pub rate_a: f64,
    /// dH₂/dt from the closed-loop vector field.
    pub rate_b: f64,
}

impl PowerSplit {
    /// Largest mismatch between the field-derived rates and
    /// `−transfer + y₁ᵀv₁`, `transfer + y₂ᵀv₂`.
    pub fn residual(&self) -> f64 {
        (self.rate_a + self.transfer - self.external_a)
            .abs()
            .max((self.rate_b - self.transfer - self.external_b).abs())
    }
}

impl RouterCoupling {
    /// Both components must be declared lossless (no dissipation term).
    pub fn new(sys_a: PhsSystem, sys_b: PhsSystem) -> Result<Self> {
        for (name, sys) in [("first", &sys_a), ("second", &sys_b)] {
            if !sys.is_declared_lossless() {
                return Err(PhsError::NotLossless(format!(
                    "{name} router component has a dissipation term"
                )));
            }
        }
        Ok(Self { sys_a, sys_b })
    }

    pub fn split(&self, x: &Vector) -> Result<(Vector, Vector)> {
        let (na, nb) = (self.sys_a.n(), self.sys_b.n());
        if x.len() != na + nb {
            return Err(PhsError::DimensionMismatch {
                context: "router state",
                expected: na + nb,
                actual: x.len(),
            });
        }
        Ok((x.rows(0, na).into_owned(), x.rows(na, nb).into_owned()))
    }

    /// `(H₁, H₂)` at a composite state.
    pub fn energies(&self, x: &Vector) -> Result<(f64, f64)> {
        let (xa, xb) = self.split(x)?;
        Ok((self.sys_a.hamiltonian(&xa), self.sys_b.hamiltonian(&xb)))
    }

    /// Closed-loop component rates `(ẋ₁, ẋ₂)` under the router with new
    /// inputs `v`.
    pub fn rates(&self, x: &Vector, v: &Vector) -> Result<(Vector, Vector)> {
        let (xa, xb) = self.split(x)?;
        let ma = self.sys_a.m();
        let (v1, v2) = split_input(v, ma, self.sys_b.m())?;
        let (y1, y2) = (self.sys_a.outputs(&xa)?, self.sys_b.outputs(&xb)?);
        let (u1, u2) = router_feedback(&y1, &y2, &v1, &v2)?;
        Ok((self.sys_a.eval_dynamics(&xa, &u1)?, self.sys_b.eval_dynamics(&xb, &u2)?))
    }

    pub fn power_split(&self, x: &Vector, v: &Vector) -> Result<PowerSplit> {
        let (xa, xb) = self.split(x)?;
        let (v1, v2) = split_input(v, self.sys_a.m(), self.sys_b.m())?;
        let (ea, eb) = (self.sys_a.gradient(&xa)?, self.sys_b.gradient(&xb)?);
        let (y1, y2) = (self.sys_a.outputs(&xa)?, self.sys_b.outputs(&xb)?);
        let (rate_a, rate_b) = self.rates(x, v)?;
        Ok(PowerSplit {
            transfer: y1.norm_squared() * y2.norm_squared(),
            external_a: y1.dot(&v1),
            external_b: y2.dot(&v2),
            rate_a: ea.dot(&rate_a),
            rate_b: eb.dot(&rate_b),
        })
    }
}

fn split_input(v: &Vector, ma: usize, mb: usize) -> Result<(Vector, Vector)> {
    if v.len() != ma + mb {
        return Err(PhsError::DimensionMismatch {
            context: "router input",
            expected: ma + mb,
            actual: v.len(),
        });
    }
    Ok((v.rows(0, ma).into_owned(), v.rows(ma, mb).into_owned()))
}

fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    m
}

/// Closed loop as one port-Hamiltonian system in `x = (x₁, x₂)` with
/// `H = H₁ + H₂`, ports `(v₁, v₂)` and the state-dependent skew coupling
/// `J₁₂ = −G₁y₁y₂ᵀG₂ᵀ`, `J₂₁ = −J₁₂ᵀ`.
pub fn compose_router(c: &RouterCoupling) -> Result<PhsSystem> {
    let c = RouterCoupling::new(c.sys_a.clone(), c.sys_b.clone())?;
    let (na, nb) = (c.sys_a.n(), c.sys_b.n());
    let (ma, mb) = (c.sys_a.m(), c.sys_b.m());
    let n = na + nb;
    let nan = move || DVector::from_element(n, f64::NAN);

    let split = {
        let c = c.clone();
        move |x: &[f64]| c.split(&DVector::from_column_slice(x))
    };
    let ham = {
        let (c, split) = (c.clone(), split.clone());
        move |x: &[f64]| match split(x) {
            Ok((xa, xb)) => c.sys_a.hamiltonian(&xa) + c.sys_b.hamiltonian(&xb),
            Err(_) => f64::NAN,
        }
    };
    let grad = {
        let (c, split) = (c.clone(), split.clone());
        move |x: &[f64]| {
            let Ok((xa, xb)) = split(x) else { return nan() };
            match (c.sys_a.gradient(&xa), c.sys_b.gradient(&xb)) {
                (Ok(ea), Ok(eb)) => DVector::from_iterator(n, ea.iter().chain(eb.iter()).copied()),
                _ => nan(),
            }
        }
    };
    let structure = {
        let (c, split) = (c.clone(), split.clone());
        move |x: &[f64]| {
            let Ok((xa, xb)) = split(x) else {
                return DMatrix::from_element(n, n, f64::NAN);
            };
            let mut j = block_diag(&c.sys_a.structure(&xa), &c.sys_b.structure(&xb));
            let (ga, gb) = (c.sys_a.input_map(&xa), c.sys_b.input_map(&xb));
            match (c.sys_a.outputs(&xa), c.sys_b.outputs(&xb)) {
                (Ok(y1), Ok(y2)) => {
                    let j12 = -(&ga * y1 * y2.transpose() * gb.transpose());
                    j.view_mut((na, 0), (nb, na)).copy_from(&(-j12.transpose()));
                    j.view_mut((0, na), (na, nb)).copy_from(&j12);
                    j
                }
                _ => DMatrix::from_element(n, n, f64::NAN),
            }
        }
    };
    let input_map = {
        let (c, split) = (c.clone(), split.clone());
        move |x: &[f64]| match split(x) {
            Ok((xa, xb)) => block_diag(&c.sys_a.input_map(&xa), &c.sys_b.input_map(&xb)),
            Err(_) => DMatrix::from_element(n, ma + mb, f64::NAN),
        }
    };
    let domain = {
        let c = c.clone();
        move |x: &[f64]| {
            let (xa, xb) = split(x).map_err(|e| e.to_string())?;
            c.sys_a.check_domain(&xa).map_err(|e| e.to_string())?;
            c.sys_b.check_domain(&xb).map_err(|e| e.to_string())
        }
    };
    let prefixed = |labels: &[Label], prefix: &str| -> Vec<Label> {
        labels
            .iter()
            .map(|l| Label::new(format!("{prefix}{}", l.name), l.unit.clone()))
            .collect()
    };
    let (la, lb) = (c.sys_a.labels(), c.sys_b.labels());
    let labels = Labels {
        states: [prefixed(&la.states, "a_"), prefixed(&lb.states, "b_")].concat(),
        ports: [prefixed(&la.ports, "a_"), prefixed(&lb.ports, "b_")].concat(),
    };
    PhsSystem::builder(n, ma + mb, ham)
        .gradient(grad)
        .structure(structure)
        .input_map(input_map)
        .domain(domain)
        .labels(labels)
        .port_split(ma)
        .build()
}

/// Two frictionless mass-spring oscillators exchanging energy through the
/// router, optionally kick-started by a short force pulse on `v₂`.
///
/// With the defaults (all energy in the first oscillator, second at rest,
/// pulse 0.2 N for 0.05 s, 10⁵ steps of 1 ms) the second oscillator holds
/// half of the initial energy of the first after about 17.7 s and
/// practically all of it by the end of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterScenario {
    pub a: MsdParams,
    pub b: MsdParams,
    pub xa0: [f64; 2],
    pub xb0: [f64; 2],
    /// `(force, duration)` of a pulse on `v₂` starting at `t = 0`.
    pub kick: Option<(f64, f64)>,
    pub horizon: f64,
    pub step: f64,
}

impl Default for RouterScenario {
    fn default() -> Self {
        Self {
            a: MsdParams { m: 1.0, k: 1.0, d: 0.0 },
            b: MsdParams { m: 1.0, k: 4.0, d: 0.0 },
            xa0: [1.0, 0.0],
            xb0: [0.0, 0.0],
            kick: Some((0.2, 0.05)),
            horizon: 100.0,
            step: 1e-3,
        }
    }
}

/// Outcome of [`router_scenario`].
#[derive(Debug, Clone)]
pub struct RouterRun {
    pub trajectory: Trajectory,
    pub h_a: Vec<f64>,
    pub h_b: Vec<f64>,
    /// ‖y₁‖²‖y₂‖² on the grid.
    pub transfer: Vec<f64>,
    /// First grid index after the kick (0 without kick).
    pub free_start: usize,
}

impl RouterRun {
    /// Largest `|H(t) − H(t_free)| / H(t_free)` after the kick.
    pub fn total_energy_drift(&self) -> f64 {
        let e = &self.trajectory.energies[self.free_start..];
        let e0 = e[0];
        let scale = if e0.abs() > 0.0 { e0.abs() } else { 1.0 };
        e.iter().map(|v| (v - e0).abs()).fold(0.0, f64::max) / scale
    }

    /// Largest decrease of `H₂` between consecutive grid points after the
    /// kick (zero when `H₂` never decreases).
    pub fn h_b_max_decrease(&self) -> f64 {
        self.h_b[self.free_start..]
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }

    pub fn energy_moved(&self) -> f64 {
        self.h_b.last().copied().unwrap_or(0.0) - self.h_b[self.free_start]
    }
}

pub fn router_scenario(s: &RouterScenario) -> Result<RouterRun> {
    let coupling = RouterCoupling::new(make_msd(s.a)?, make_msd(s.b)?)?;
    let sys = compose_router(&coupling)?;
    let x0 = DVector::from_vec(vec![s.xa0[0], s.xa0[1], s.xb0[0], s.xb0[1]]);
    let law = match s.kick {
        Some((force, duration)) => InputLaw::open_loop(move |t| {
            let f = if t < duration { force } else { 0.0 };
            DVector::from_vec(vec![0.0, f])
        }),
        None => InputLaw::zero(2),
    };
    let trajectory = simulate(&sys, &x0, &law, s.horizon, s.step)?;
    let mut h_a = Vec::with_capacity(trajectory.len());
    let mut h_b = Vec::with_capacity(trajectory.len());
    let mut transfer = Vec::with_capacity(trajectory.len());
    for (x, y) in trajectory.states.iter().zip(&trajectory.outputs) {
        let (a, b) = coupling.energies(x)?;
        h_a.push(a);
        h_b.push(b);
        transfer.push(y[0] * y[0] * y[1] * y[1]);
    }
    let free_start = match s.kick {
        Some((_, duration)) => trajectory
            .times
            .iter()
            .position(|&t| t >= duration)
            .unwrap_or(trajectory.len() - 1),
        None => 0,
    };
    Ok(RouterRun {
        trajectory,
        h_a,
        h_b,
        transfer,
        free_start,
    })
}
