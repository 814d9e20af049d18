//! Partial Legendre transform of the Hamiltonian with respect to `x₁`:
//!
//! ```text
//! H*₁(e₁, x₂) = H(x₁, x₂) − e₁ᵀx₁,   with x₁ solving e₁ = ∂H/∂x₁(x₁, x₂)
//! ```
//!
//! The inversion `e₁ ↦ x₁` is only locally unique; the solver returns the
//! branch reached by damped Newton from the supplied guess.

use nalgebra::DVector;

use crate::error::{PhsError, Result};
use crate::numeric::fd_step;
use crate::system::Vector;
use crate::two_port::TwoPortPhs;

const MAX_ITERATIONS: usize = 50;
const MAX_HALVINGS: usize = 30;

/// Value of `H*₁` at `(e1, x2)` together with the solved `x₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendrePoint {
    pub e1: Vector,
    pub x2: Vector,
    pub x1_solved: Vector,
    pub h_star: f64,
}

impl LegendrePoint {
    /// Full state `(x₁, x₂)` at which the transform was evaluated.
    pub fn state(&self, sys: &TwoPortPhs) -> Vector {
        sys.join(self.x1_solved.as_slice(), self.x2.as_slice())
    }
}

/// Residual tolerance `1e-10 (1 + ‖e₁‖∞)` of the inversion.
pub fn solver_tolerance(e1: &Vector) -> f64 {
    1e-10 * (1.0 + e1.amax())
}

fn e1_residual(sys: &TwoPortPhs, x1: &[f64], x2: &[f64], target: &Vector) -> Result<Vector> {
    let (e1, _) = sys.efforts(&sys.join(x1, x2))?;
    Ok(e1 - target)
}

/// Solves `∂H/∂x₁(x₁, x₂) = e1` for `x₁` by damped Newton and returns
/// `H*₁(e1, x2) = H − e1ᵀx₁`.
///
/// A trial step that increases the residual (or leaves the model domain)
/// is halved, up to 30 times. Fails with [`PhsError::NoConvergence`] after
/// 50 iterations, carrying the best iterate.
pub fn partial_legendre(
    sys: &TwoPortPhs,
    e1: &Vector,
    x2: &Vector,
    x1_guess: &Vector,
) -> Result<LegendrePoint> {
    check_len("co-state e1", sys.n1(), e1.len())?;
    check_len("x2", sys.n2(), x2.len())?;
    check_len("x1 guess", sys.n1(), x1_guess.len())?;
    let tol = solver_tolerance(e1);
    let x2s = x2.as_slice();

    let mut x1 = x1_guess.clone();
    let mut r = e1_residual(sys, x1.as_slice(), x2s, e1)?;
    let mut norm = r.amax();
    let mut iterations = 0;

    while norm >= tol {
        if iterations == MAX_ITERATIONS {
            return Err(PhsError::NoConvergence {
                iterations,
                residual: norm,
                best: x1.iter().copied().collect(),
            });
        }
        iterations += 1;
        let (_, inv, _) = sys.hessian11_checked(&sys.join(x1.as_slice(), x2s))?;
        let delta = inv * &r;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x1 - &delta * scale;
            if let Ok(rt) = e1_residual(sys, trial.as_slice(), x2s, e1) {
                let nt = rt.amax();
                if nt.is_finite() && nt < norm {
                    accepted = Some((trial, rt, nt));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((trial, rt, nt)) => {
                x1 = trial;
                r = rt;
                norm = nt;
            }
            None => {
                return Err(PhsError::NoConvergence {
                    iterations,
                    residual: norm,
                    best: x1.iter().copied().collect(),
                })
            }
        }
    }

    let h = sys.hamiltonian(&sys.join(x1.as_slice(), x2s));
    Ok(LegendrePoint {
        h_star: h - e1.dot(&x1),
        e1: e1.clone(),
        x2: x2.clone(),
        x1_solved: x1,
    })
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(PhsError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

/// `H(x) − e1ᵀx₁` at an arbitrary state. Along a motion with `∂H/∂x₁ = e1`
/// this equals `H*₁(e1, x₂)`.
pub fn conjugate_energy(sys: &TwoPortPhs, e1: &Vector, x: &Vector) -> f64 {
    let (x1, _) = sys.split(x);
    sys.hamiltonian(x) - e1.iter().zip(x1).map(|(a, b)| a * b).sum::<f64>()
}

/// Max-norm residuals of the two transform identities at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreResiduals {
    /// ‖∂H*₁/∂e₁ + x₁‖∞
    pub costate: f64,
    /// ‖∂H*₁/∂x₂ − ∂H/∂x₂‖∞
    pub passive: f64,
    /// ‖x₁‖∞ and ‖∂H/∂x₂‖∞, for relative comparisons.
    pub costate_scale: f64,
    pub passive_scale: f64,
}

impl LegendreResiduals {
    /// Both residuals relative to `1 + scale`.
    pub fn relative(&self) -> (f64, f64) {
        (
            self.costate / (1.0 + self.costate_scale),
            self.passive / (1.0 + self.passive_scale),
        )
    }
}

/// Checks `∂H*₁/∂e₁ = −x₁` and `∂H*₁/∂x₂ = ∂H/∂x₂` by central differences
/// of `H*₁`, re-solving the inversion at every probe.
pub fn verify_legendre_identities(sys: &TwoPortPhs, pt: &LegendrePoint) -> Result<LegendreResiduals> {
    let guess = &pt.x1_solved;
    let h_star = |e1: &Vector, x2: &Vector| -> Result<f64> {
        Ok(partial_legendre(sys, e1, x2, guess)?.h_star)
    };

    let mut d_e1 = DVector::zeros(sys.n1());
    for i in 0..sys.n1() {
        let h = fd_step(pt.e1[i]);
        let mut up = pt.e1.clone();
        up[i] += h;
        let mut down = pt.e1.clone();
        down[i] -= h;
        d_e1[i] = (h_star(&up, &pt.x2)? - h_star(&down, &pt.x2)?) / (2.0 * h);
    }

    let mut d_x2 = DVector::zeros(sys.n2());
    for j in 0..sys.n2() {
        let h = fd_step(pt.x2[j]);
        let mut up = pt.x2.clone();
        up[j] += h;
        let mut down = pt.x2.clone();
        down[j] -= h;
        d_x2[j] = (h_star(&pt.e1, &up)? - h_star(&pt.e1, &down)?) / (2.0 * h);
    }

    let (_, e2) = sys.efforts(&pt.state(sys))?;
    Ok(LegendreResiduals {
        costate: (&d_e1 + &pt.x1_solved).amax(),
        passive: (&d_x2 - &e2).amax(),
        costate_scale: pt.x1_solved.amax(),
        passive_scale: e2.amax(),
    })
}

/// Outcome of transforming twice in the first partition.
#[derive(Debug, Clone, PartialEq)]
pub struct InvolutionReport {
    /// ‖x₁(recovered) − x₁‖∞ after the forward inversion.
    pub x1_error: f64,
    /// ‖e₁(recovered) − e₁‖∞ after transforming `H*₁` back.
    pub e1_error: f64,
    /// |H**(x₁, x₂) − H(x₁, x₂)|.
    pub energy_error: f64,
}

impl InvolutionReport {
    pub fn max_error(&self) -> f64 {
        self.x1_error.max(self.e1_error).max(self.energy_error)
    }
}

/// Transforms `H` at state `x` into `H*₁`, then transforms `H*₁` back with
/// respect to `e₁` (conjugate variable `−x₁`), and compares with the start.
///
/// The backward inversion solves `−∂H*₁/∂e₁(ê₁) = x₁` by Newton with the
/// Jacobian `(∂²H/∂x₁²)⁻¹`, using central differences of `H*₁` for the
/// residual so the round trip does not lean on the identity it checks.
pub fn involution_check(sys: &TwoPortPhs, x: &Vector) -> Result<InvolutionReport> {
    let (x1s, x2s) = sys.split(x);
    let x1 = DVector::from_column_slice(x1s);
    let x2 = DVector::from_column_slice(x2s);
    let (e1, _) = sys.efforts(x)?;

    let start = x1.map(|v| v + 0.1 * v.abs().max(1e-3));
    let forward = partial_legendre(sys, &e1, &x2, &start)?;
    let x1_error = (&forward.x1_solved - &x1).amax();

    let minus_dh_star = |e: &Vector, guess: &Vector| -> Result<(Vector, Vector)> {
        let centre = partial_legendre(sys, e, &x2, guess)?;
        let mut g = DVector::zeros(sys.n1());
        for i in 0..sys.n1() {
            let h = fd_step(e[i]);
            let mut up = e.clone();
            up[i] += h;
            let mut down = e.clone();
            down[i] -= h;
            let hu = partial_legendre(sys, &up, &x2, &centre.x1_solved)?.h_star;
            let hd = partial_legendre(sys, &down, &x2, &centre.x1_solved)?.h_star;
            g[i] = -(hu - hd) / (2.0 * h);
        }
        Ok((g, centre.x1_solved))
    };

    // Start the backward solve away from the answer.
    let mut e_hat = e1.map(|v| v * 1.05 + 1e-3);
    let mut guess = forward.x1_solved.clone();
    let tol = 1e-12 * (1.0 + x1.amax());
    for _ in 0..MAX_ITERATIONS {
        let (x1_of_e, solved) = minus_dh_star(&e_hat, &guess)?;
        let r = &x1_of_e - &x1;
        if r.amax() < tol {
            break;
        }
        let (h11, _, _) = sys.hessian11_checked(&sys.join(solved.as_slice(), x2s))?;
        e_hat -= h11 * r;
        guess = solved;
    }

    let back = partial_legendre(sys, &e_hat, &x2, &guess)?;
    let h_double = back.h_star + e_hat.dot(&x1);
    Ok(InvolutionReport {
        x1_error,
        e1_error: (&e_hat - &e1).amax(),
        energy_error: (h_double - sys.hamiltonian(x)).abs(),
    })
}
