//! Two-port subclass with block-diagonal interconnection:
//!
//! ```text
//! ẋ₁ = J₁ e₁ − R₁ e₁ + G₁ u₁          y₁ = G₁ᵀ e₁
//! ẋ₂ = J₂ e₂ − R₂ e₂ + G₂(x) u₂       y₂ = G₂ᵀ e₂
//! ```
//!
//! `G₁` is constant and invertible, and `∂²H/∂x₁²` must be nonsingular
//! wherever it is evaluated.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{PhsError, Result};
use crate::numeric::{fd_step, gradient_fd, inverse_with_condition, jacobian_fd, nested_fd_step};
use crate::system::{BlockInfo, Label, Labels, Matrix, PhsSystem, Vector};

pub type BlockScalarFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type BlockVectorFn = Arc<dyn Fn(&[f64], &[f64]) -> Vector + Send + Sync>;
pub type BlockMatrixFn = Arc<dyn Fn(&[f64], &[f64]) -> Matrix + Send + Sync>;
type DomainFn = Arc<dyn Fn(&[f64]) -> std::result::Result<(), String> + Send + Sync>;

#[derive(Clone)]
pub struct TwoPortPhs {
    n1: usize,
    n2: usize,
    m2: usize,
    hamiltonian: BlockScalarFn,
    gradient: Option<BlockVectorFn>,
    j1: Option<BlockMatrixFn>,
    j2: Option<BlockMatrixFn>,
    r1: Option<BlockMatrixFn>,
    r2: Option<BlockMatrixFn>,
    g1: Matrix,
    g1_inv: Matrix,
    g1_det: f64,
    g2: BlockMatrixFn,
    hessian11: Option<BlockMatrixFn>,
    hessian12: Option<BlockMatrixFn>,
    domain: Option<DomainFn>,
    labels: Labels,
}

impl fmt::Debug for TwoPortPhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoPortPhs")
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("m2", &self.m2)
            .field("g1", &self.g1)
            .field("lossless", &self.is_lossless())
            .finish()
    }
}

pub struct TwoPortBuilder {
    n1: usize,
    n2: usize,
    m2: usize,
    hamiltonian: BlockScalarFn,
    gradient: Option<BlockVectorFn>,
    j1: Option<BlockMatrixFn>,
    j2: Option<BlockMatrixFn>,
    r1: Option<BlockMatrixFn>,
    r2: Option<BlockMatrixFn>,
    g1: Matrix,
    g2: Option<BlockMatrixFn>,
    hessian11: Option<BlockMatrixFn>,
    hessian12: Option<BlockMatrixFn>,
    domain: Option<DomainFn>,
    labels: Option<Labels>,
}

macro_rules! block_setter {
    ($name:ident) => {
        pub fn $name(
            mut self,
            f: impl Fn(&[f64], &[f64]) -> Matrix + Send + Sync + 'static,
        ) -> Self {
            self.$name = Some(Arc::new(f));
            self
        }
    };
}

impl TwoPortBuilder {
    /// Full effort vector `(e₁, e₂)` of length `n₁ + n₂`.
    pub fn gradient(
        mut self,
        f: impl Fn(&[f64], &[f64]) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(f));
        self
    }

    block_setter!(j1);
    block_setter!(j2);
    block_setter!(r1);
    block_setter!(r2);
    block_setter!(g2);
    block_setter!(hessian11);
    block_setter!(hessian12);

    pub fn domain(
        mut self,
        f: impl Fn(&[f64]) -> std::result::Result<(), String> + Send + Sync + 'static,
    ) -> Self {
        self.domain = Some(Arc::new(f));
        self
    }

    pub fn labels(mut self, labels: Labels) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn build(self) -> Result<TwoPortPhs> {
        let n1 = self.n1;
        if n1 == 0 || self.n2 == 0 {
            return Err(PhsError::InvalidParameter(
                "both partitions need at least one state".into(),
            ));
        }
        if self.g1.nrows() != n1 || self.g1.ncols() != n1 {
            return Err(PhsError::DimensionMismatch {
                context: "G1 (must be square n1 x n1)",
                expected: n1,
                actual: if self.g1.nrows() != n1 {
                    self.g1.nrows()
                } else {
                    self.g1.ncols()
                },
            });
        }
        let g1_det = self.g1.determinant();
        if g1_det == 0.0 || !g1_det.is_finite() {
            return Err(PhsError::Singular {
                what: "G1",
                condition: f64::INFINITY,
            });
        }
        let (g1_inv, _) = inverse_with_condition(&self.g1, "G1")?;
        let n = n1 + self.n2;
        let m = n1 + self.m2;
        let labels = self.labels.unwrap_or_else(|| Labels::generic(n, m));
        if labels.states.len() != n || labels.ports.len() != m {
            return Err(PhsError::DimensionMismatch {
                context: "two-port labels",
                expected: n + m,
                actual: labels.states.len() + labels.ports.len(),
            });
        }
        let (n2, m2) = (self.n2, self.m2);
        Ok(TwoPortPhs {
            n1,
            n2,
            m2,
            hamiltonian: self.hamiltonian,
            gradient: self.gradient,
            j1: self.j1,
            j2: self.j2,
            r1: self.r1,
            r2: self.r2,
            g1: self.g1,
            g1_inv,
            g1_det,
            g2: self
                .g2
                .unwrap_or_else(|| Arc::new(move |_, _| DMatrix::zeros(n2, m2))),
            hessian11: self.hessian11,
            hessian12: self.hessian12,
            domain: self.domain,
            labels,
        })
    }
}

fn block_or_zero(f: &Option<BlockMatrixFn>, x1: &[f64], x2: &[f64], n: usize) -> Matrix {
    match f {
        Some(f) => f(x1, x2),
        None => DMatrix::zeros(n, n),
    }
}

impl TwoPortPhs {
    /// `g1` is the constant `n₁ × n₁` input matrix of port 1; port 2 has
    /// `m2` coordinates.
    pub fn builder(
        n1: usize,
        n2: usize,
        m2: usize,
        hamiltonian: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        g1: Matrix,
    ) -> TwoPortBuilder {
        TwoPortBuilder {
            n1,
            n2,
            m2,
            hamiltonian: Arc::new(hamiltonian),
            gradient: None,
            j1: None,
            j2: None,
            r1: None,
            r2: None,
            g1,
            g2: None,
            hessian11: None,
            hessian12: None,
            domain: None,
            labels: None,
        }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn m1(&self) -> usize {
        self.n1
    }
    pub fn m2(&self) -> usize {
        self.m2
    }
    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }
    pub fn m(&self) -> usize {
        self.n1 + self.m2
    }
    pub fn labels(&self) -> &Labels {
        &self.labels
    }
    pub fn g1(&self) -> &Matrix {
        &self.g1
    }
    pub fn g1_inverse(&self) -> &Matrix {
        &self.g1_inv
    }
    pub fn g1_determinant(&self) -> f64 {
        self.g1_det
    }

    /// `R₁ ≡ 0` and `R₂ ≡ 0`.
    pub fn is_lossless(&self) -> bool {
        self.r1.is_none() && self.r2.is_none()
    }

    pub fn label(&self, i: usize) -> &Label {
        &self.labels.states[i]
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(PhsError::DimensionMismatch {
                context: "two-port state",
                expected: self.n(),
                actual: x.len(),
            });
        }
        if let Some(d) = &self.domain {
            d(x).map_err(PhsError::OutOfDomain)?;
        }
        Ok(())
    }

    pub fn split<'a>(&self, x: &'a Vector) -> (&'a [f64], &'a [f64]) {
        x.as_slice().split_at(self.n1)
    }

    pub fn join(&self, x1: &[f64], x2: &[f64]) -> Vector {
        DVector::from_iterator(self.n(), x1.iter().chain(x2).copied())
    }

    pub fn hamiltonian(&self, x: &Vector) -> f64 {
        let (x1, x2) = self.split(x);
        (self.hamiltonian)(x1, x2)
    }

    fn raw_gradient(&self, x: &[f64]) -> Vector {
        let (x1, x2) = x.split_at(self.n1);
        match &self.gradient {
            Some(g) => g(x1, x2),
            None => {
                let h = &self.hamiltonian;
                let n1 = self.n1;
                gradient_fd(&|z: &[f64]| h(&z[..n1], &z[n1..]), x)
            }
        }
    }

    /// Full effort vector `e = (e₁, e₂)`.
    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        self.check(x.as_slice())?;
        let e = self.raw_gradient(x.as_slice());
        if e.len() != self.n() {
            return Err(PhsError::DimensionMismatch {
                context: "two-port gradient",
                expected: self.n(),
                actual: e.len(),
            });
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(PhsError::NonFinite {
                quantity: "Hamiltonian gradient",
                time: None,
            });
        }
        Ok(e)
    }

    pub fn efforts(&self, x: &Vector) -> Result<(Vector, Vector)> {
        let e = self.gradient(x)?;
        Ok((
            e.rows(0, self.n1).into_owned(),
            e.rows(self.n1, self.n2).into_owned(),
        ))
    }

    fn fd_step_rule(&self) -> fn(f64) -> f64 {
        if self.gradient.is_some() {
            fd_step
        } else {
            nested_fd_step
        }
    }

    /// ∂²H/∂x₁² (analytic if provided).
    pub fn hessian11(&self, x: &Vector) -> Result<Matrix> {
        self.check(x.as_slice())?;
        let (x1, x2) = self.split(x);
        let h = match &self.hessian11 {
            Some(h) => h(x1, x2),
            None => {
                let n1 = self.n1;
                let x2v = x2.to_vec();
                let e1 = |z1: &[f64]| {
                    let full: Vec<f64> = z1.iter().chain(&x2v).copied().collect();
                    self.raw_gradient(&full).rows(0, n1).into_owned()
                };
                jacobian_fd(&e1, x1, n1, self.fd_step_rule())
            }
        };
        if h.iter().any(|v| !v.is_finite()) {
            return Err(PhsError::NonFinite {
                quantity: "partial Hessian d2H/dx1^2",
                time: None,
            });
        }
        Ok(h)
    }

    /// Partial Hessian with its inverse and condition estimate; singular
    /// beyond a condition number of 1e12.
    pub fn hessian11_checked(&self, x: &Vector) -> Result<(Matrix, Matrix, f64)> {
        let h = self.hessian11(x)?;
        let (inv, cond) = inverse_with_condition(&h, "partial Hessian d2H/dx1^2")?;
        Ok((h, inv, cond))
    }

    /// Cross Hessian ∂²H/∂x₁∂x₂ (`n₁ × n₂`): entry `(i, j)` is ∂e₁ᵢ/∂x₂ⱼ.
    pub fn hessian12(&self, x: &Vector) -> Result<Matrix> {
        self.check(x.as_slice())?;
        let (x1, x2) = self.split(x);
        let h = match &self.hessian12 {
            Some(h) => h(x1, x2),
            None => {
                let n1 = self.n1;
                let x1v = x1.to_vec();
                let e1 = |z2: &[f64]| {
                    let full: Vec<f64> = x1v.iter().chain(z2).copied().collect();
                    self.raw_gradient(&full).rows(0, n1).into_owned()
                };
                jacobian_fd(&e1, x2, n1, self.fd_step_rule())
            }
        };
        if h.iter().any(|v| !v.is_finite()) {
            return Err(PhsError::NonFinite {
                quantity: "cross Hessian d2H/dx1dx2",
                time: None,
            });
        }
        Ok(h)
    }

    pub fn j1(&self, x: &Vector) -> Matrix {
        let (x1, x2) = self.split(x);
        block_or_zero(&self.j1, x1, x2, self.n1)
    }
    pub fn j2(&self, x: &Vector) -> Matrix {
        let (x1, x2) = self.split(x);
        block_or_zero(&self.j2, x1, x2, self.n2)
    }
    pub fn r1(&self, x: &Vector) -> Matrix {
        let (x1, x2) = self.split(x);
        block_or_zero(&self.r1, x1, x2, self.n1)
    }
    pub fn r2(&self, x: &Vector) -> Matrix {
        let (x1, x2) = self.split(x);
        block_or_zero(&self.r2, x1, x2, self.n2)
    }
    pub fn g2(&self, x: &Vector) -> Matrix {
        let (x1, x2) = self.split(x);
        (self.g2)(x1, x2)
    }

    /// ẋ₁ = J₁e₁ − R₁e₁ + G₁u₁.
    pub fn x1_rate(&self, x: &Vector, u1: &Vector) -> Result<Vector> {
        let (e1, _) = self.efforts(x)?;
        let a = self.j1(x) - self.r1(x);
        Ok(a * e1 + &self.g1 * u1)
    }

    /// ẋ₂ = J₂e₂ − R₂e₂ + G₂u₂. Independent of u₁.
    pub fn x2_rate(&self, x: &Vector, u2: &Vector) -> Result<Vector> {
        if u2.len() != self.m2 {
            return Err(PhsError::DimensionMismatch {
                context: "port-2 input",
                expected: self.m2,
                actual: u2.len(),
            });
        }
        let (_, e2) = self.efforts(x)?;
        let a = self.j2(x) - self.r2(x);
        Ok(a * e2 + self.g2(x) * u2)
    }

    /// `(y₁, y₂)`.
    pub fn outputs(&self, x: &Vector) -> Result<(Vector, Vector)> {
        let (e1, e2) = self.efforts(x)?;
        Ok((self.g1.transpose() * e1, self.g2(x).transpose() * e2))
    }

    /// Evaluates the block equations directly (no embedding).
    pub fn eval_blockwise(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        if u.len() != self.m() {
            return Err(PhsError::DimensionMismatch {
                context: "input",
                expected: self.m(),
                actual: u.len(),
            });
        }
        let u1 = u.rows(0, self.n1).into_owned();
        let u2 = u.rows(self.n1, self.m2).into_owned();
        let d1 = self.x1_rate(x, &u1)?;
        let d2 = self.x2_rate(x, &u2)?;
        Ok(DVector::from_iterator(self.n(), d1.iter().chain(d2.iter()).copied()))
    }

    /// Assembles the general system with `J = diag(J₁, J₂)`,
    /// `R = diag(R₁, R₂)` and `G = diag(G₁, G₂)`.
    pub fn embed(&self) -> PhsSystem {
        let (n1, n2, m2) = (self.n1, self.n2, self.m2);
        let n = n1 + n2;
        let m = n1 + m2;

        let h = self.clone();
        let mut builder = PhsSystem::builder(n, m, move |x: &[f64]| {
            (h.hamiltonian)(&x[..n1], &x[n1..])
        });
        if let Some(grad) = self.gradient.clone() {
            builder = builder.gradient(move |x: &[f64]| grad(&x[..n1], &x[n1..]));
        }

        let s = self.clone();
        builder = builder.structure(move |x: &[f64]| {
            let (x1, x2) = x.split_at(n1);
            let mut j = DMatrix::zeros(n, n);
            j.view_mut((0, 0), (n1, n1))
                .copy_from(&block_or_zero(&s.j1, x1, x2, n1));
            j.view_mut((n1, n1), (n2, n2))
                .copy_from(&block_or_zero(&s.j2, x1, x2, n2));
            j
        });

        if !self.is_lossless() {
            let s = self.clone();
            builder = builder.dissipation(move |x: &[f64], e: &[f64]| {
                let (x1, x2) = x.split_at(n1);
                let r1 = block_or_zero(&s.r1, x1, x2, n1);
                let r2 = block_or_zero(&s.r2, x1, x2, n2);
                let e1 = DVector::from_column_slice(&e[..n1]);
                let e2 = DVector::from_column_slice(&e[n1..]);
                let a = r1 * e1;
                let b = r2 * e2;
                DVector::from_iterator(n, a.iter().chain(b.iter()).copied())
            });
        }

        let s = self.clone();
        builder = builder.input_map(move |x: &[f64]| {
            let (x1, x2) = x.split_at(n1);
            let mut g = DMatrix::zeros(n, m);
            g.view_mut((0, 0), (n1, n1)).copy_from(&s.g1);
            g.view_mut((n1, n1), (n2, m2)).copy_from(&(s.g2)(x1, x2));
            g
        });

        if let Some(d) = self.domain.clone() {
            builder = builder.domain(move |x: &[f64]| d(x));
        }

        builder
            .labels(self.labels.clone())
            .port_split(n1)
            .blocks(BlockInfo {
                n1,
                m1: n1,
                g1_determinant: self.g1_det,
            })
            .build()
            .expect("two-port dimensions were validated at construction")
    }
}

/// Free-function form of [`TwoPortPhs::embed`].
pub fn embed_two_port(sys2p: &TwoPortPhs) -> PhsSystem {
    sys2p.embed()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(r: f64) -> TwoPortPhs {
        let mut b = TwoPortPhs::builder(
            1,
            1,
            1,
            |x1, x2| 0.5 * x1[0] * x1[0] + 0.5 * x2[0] * x2[0],
            DMatrix::from_element(1, 1, 1.0),
        )
        .g2(|_, _| DMatrix::from_element(1, 1, 1.0));
        if r > 0.0 {
            b = b.r1(move |_, _| DMatrix::from_element(1, 1, r));
        }
        b.build().unwrap()
    }

    #[test]
    fn singular_g1_rejected() {
        let res = TwoPortPhs::builder(1, 1, 1, |_, _| 0.0, DMatrix::zeros(1, 1)).build();
        assert!(matches!(res, Err(PhsError::Singular { what: "G1", .. })));
    }

    #[test]
    fn zero_blocks_zero_dynamics() {
        let sys = TwoPortPhs::builder(1, 1, 1, |_, _| 0.0, DMatrix::identity(1, 1))
            .build()
            .unwrap();
        let full = sys.embed();
        let x = DVector::from_vec(vec![0.7, -0.4]);
        let xdot = full.eval_dynamics(&x, &DVector::zeros(2)).unwrap();
        assert!(xdot.amax() == 0.0);
    }

    #[test]
    fn embedding_matches_blocks() {
        let sys = quadratic(0.5);
        let full = sys.embed();
        assert_eq!(full.port_split(), 1);
        assert!(!full.is_declared_lossless());
        let x = DVector::from_vec(vec![1.5, -2.0]);
        let u = DVector::from_vec(vec![0.25, 3.0]);
        let a = full.eval_dynamics(&x, &u).unwrap();
        let b = sys.eval_blockwise(&x, &u).unwrap();
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn fd_hessians() {
        let sys = TwoPortPhs::builder(
            1,
            1,
            1,
            |x1, x2| x1[0].powi(2) * x2[0] + x1[0].powi(4),
            DMatrix::identity(1, 1),
        )
        .build()
        .unwrap();
        let x = DVector::from_vec(vec![0.5, 2.0]);
        let h11 = sys.hessian11(&x).unwrap();
        let h12 = sys.hessian12(&x).unwrap();
        // d2/dx1^2 = 2 x2 + 12 x1^2 ; d2/dx1dx2 = 2 x1
        assert!((h11[(0, 0)] - 7.0).abs() < 1e-5, "{h11}");
        assert!((h12[(0, 0)] - 1.0).abs() < 1e-5, "{h12}");
    }

    #[test]
    fn flat_partial_hessian_is_singular() {
        let sys = TwoPortPhs::builder(1, 1, 1, |x1, x2| x1[0] * x2[0], DMatrix::identity(1, 1))
            .gradient(|x1, x2| DVector::from_vec(vec![x2[0], x1[0]]))
            .hessian11(|_, _| DMatrix::zeros(1, 1))
            .build()
            .unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            sys.hessian11_checked(&x),
            Err(PhsError::Singular { .. })
        ));
    }
}
