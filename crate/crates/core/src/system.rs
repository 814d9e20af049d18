//! General input-state-output port-Hamiltonian systems
//!
//! ```text
//! ẋ = J(x) e − R(x, e) + G(x) u,   e = ∂H/∂x (x),   y = Gᵀ(x) e
//! ```
//!
//! with `J = −Jᵀ` and `eᵀ R(x, e) ≥ 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{PhsError, Result};
use crate::numeric::{gradient_fd, max_abs};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vector + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;
pub type DissipationFn = Arc<dyn Fn(&[f64], &[f64]) -> Vector + Send + Sync>;
pub type DomainFn = Arc<dyn Fn(&[f64]) -> std::result::Result<(), String> + Send + Sync>;

/// Name and unit of a state coordinate or port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Label {
    pub name: String,
    pub unit: String,
}

impl Label {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels {
    pub states: Vec<Label>,
    pub ports: Vec<Label>,
}

impl Labels {
    /// Generic `x0..`, `p0..` labels without units.
    pub fn generic(n: usize, m: usize) -> Self {
        Self {
            states: (0..n).map(|i| Label::new(format!("x{i}"), "")).collect(),
            ports: (0..m).map(|i| Label::new(format!("p{i}"), "")).collect(),
        }
    }
}

/// Block metadata kept when a system was assembled from a two-port model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockInfo {
    pub n1: usize,
    pub m1: usize,
    pub g1_determinant: f64,
}

/// Pointwise evaluation of the right-hand side and port variables.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub effort: Vector,
    pub rate: Vector,
    pub output: Vector,
    /// eᵀR(x, e)
    pub dissipation_power: f64,
}

/// A port-Hamiltonian system with `n` states and `m` port variables.
///
/// The first `port_split` port coordinates form port 1, the remaining ones
/// port 2. One-port systems use `port_split == m`.
#[derive(Clone)]
pub struct PhsSystem {
    n: usize,
    m: usize,
    hamiltonian: ScalarFn,
    gradient: Option<VectorFn>,
    structure: MatrixFn,
    dissipation: Option<DissipationFn>,
    input_map: MatrixFn,
    domain: Option<DomainFn>,
    labels: Labels,
    port_split: usize,
    blocks: Option<BlockInfo>,
}

impl fmt::Debug for PhsSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhsSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("port_split", &self.port_split)
            .field("lossless", &self.dissipation.is_none())
            .field("analytic_gradient", &self.gradient.is_some())
            .field("blocks", &self.blocks)
            .finish()
    }
}

pub struct PhsBuilder {
    n: usize,
    m: usize,
    hamiltonian: ScalarFn,
    gradient: Option<VectorFn>,
    structure: Option<MatrixFn>,
    dissipation: Option<DissipationFn>,
    input_map: Option<MatrixFn>,
    domain: Option<DomainFn>,
    labels: Option<Labels>,
    port_split: Option<usize>,
    blocks: Option<BlockInfo>,
}

impl PhsBuilder {
    pub fn gradient(mut self, f: impl Fn(&[f64]) -> Vector + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(f));
        self
    }

    pub fn structure(mut self, f: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.structure = Some(Arc::new(f));
        self
    }

    /// Constant interconnection matrix.
    pub fn constant_structure(self, j: Matrix) -> Self {
        self.structure(move |_| j.clone())
    }

    pub fn dissipation(
        mut self,
        f: impl Fn(&[f64], &[f64]) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.dissipation = Some(Arc::new(f));
        self
    }

    pub fn input_map(mut self, f: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.input_map = Some(Arc::new(f));
        self
    }

    pub fn constant_input_map(self, g: Matrix) -> Self {
        self.input_map(move |_| g.clone())
    }

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

    pub fn port_split(mut self, m1: usize) -> Self {
        self.port_split = Some(m1);
        self
    }

    pub(crate) fn blocks(mut self, info: BlockInfo) -> Self {
        self.blocks = Some(info);
        self
    }

    pub fn build(self) -> Result<PhsSystem> {
        let (n, m) = (self.n, self.m);
        if n == 0 {
            return Err(PhsError::InvalidParameter("state dimension must be positive".into()));
        }
        let labels = self.labels.unwrap_or_else(|| Labels::generic(n, m));
        if labels.states.len() != n {
            return Err(PhsError::DimensionMismatch {
                context: "state labels",
                expected: n,
                actual: labels.states.len(),
            });
        }
        if labels.ports.len() != m {
            return Err(PhsError::DimensionMismatch {
                context: "port labels",
                expected: m,
                actual: labels.ports.len(),
            });
        }
        let port_split = self.port_split.unwrap_or(m);
        if port_split > m {
            return Err(PhsError::InvalidPort(format!(
                "port split {port_split} exceeds port dimension {m}"
            )));
        }
        Ok(PhsSystem {
            n,
            m,
            hamiltonian: self.hamiltonian,
            gradient: self.gradient,
            structure: self
                .structure
                .unwrap_or_else(|| Arc::new(move |_| DMatrix::zeros(n, n))),
            dissipation: self.dissipation,
            input_map: self
                .input_map
                .unwrap_or_else(|| Arc::new(move |_| DMatrix::zeros(n, m))),
            domain: self.domain,
            labels,
            port_split,
            blocks: self.blocks,
        })
    }
}

impl PhsSystem {
    /// Starts a builder. Unset pieces default to `J = 0`, `R = 0`, `G = 0`
    /// and a finite-difference gradient.
    pub fn builder(
        n: usize,
        m: usize,
        hamiltonian: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> PhsBuilder {
        PhsBuilder {
            n,
            m,
            hamiltonian: Arc::new(hamiltonian),
            gradient: None,
            structure: None,
            dissipation: None,
            input_map: None,
            domain: None,
            labels: None,
            port_split: None,
            blocks: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn port_split(&self) -> usize {
        self.port_split
    }

    pub fn blocks(&self) -> Option<BlockInfo> {
        self.blocks
    }

    /// No dissipation map was supplied, so `R ≡ 0`.
    pub fn is_declared_lossless(&self) -> bool {
        self.dissipation.is_none()
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(PhsError::DimensionMismatch {
                context: "state",
                expected: self.n,
                actual: x.len(),
            });
        }
        if let Some(domain) = &self.domain {
            domain(x).map_err(PhsError::OutOfDomain)?;
        }
        Ok(())
    }

    pub fn check_domain(&self, x: &Vector) -> Result<()> {
        self.check_state(x.as_slice())
    }

    pub fn hamiltonian(&self, x: &Vector) -> f64 {
        (self.hamiltonian)(x.as_slice())
    }

    /// e = ∂H/∂x, analytic when provided, central differences otherwise.
    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        self.check_state(x.as_slice())?;
        let e = match &self.gradient {
            Some(g) => g(x.as_slice()),
            None => self.gradient_fd(x),
        };
        if e.len() != self.n {
            return Err(PhsError::DimensionMismatch {
                context: "gradient",
                expected: self.n,
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

    /// Central-difference gradient of H regardless of any analytic gradient.
    pub fn gradient_fd(&self, x: &Vector) -> Vector {
        let h = &self.hamiltonian;
        gradient_fd(&|z: &[f64]| h(z), x.as_slice())
    }

    pub fn structure(&self, x: &Vector) -> Matrix {
        (self.structure)(x.as_slice())
    }

    pub fn dissipation(&self, x: &Vector, e: &Vector) -> Vector {
        match &self.dissipation {
            Some(r) => r(x.as_slice(), e.as_slice()),
            None => DVector::zeros(self.n),
        }
    }

    pub fn input_map(&self, x: &Vector) -> Matrix {
        (self.input_map)(x.as_slice())
    }

    pub(crate) fn evaluate(&self, x: &Vector, u: &Vector) -> Result<Evaluation> {
        if u.len() != self.m {
            return Err(PhsError::DimensionMismatch {
                context: "input",
                expected: self.m,
                actual: u.len(),
            });
        }
        let e = self.gradient(x)?;
        let j = self.structure(x);
        let g = self.input_map(x);
        let r = self.dissipation(x, &e);
        let rate = &j * &e - &r + &g * u;
        let output = g.transpose() * &e;
        Ok(Evaluation {
            dissipation_power: e.dot(&r),
            effort: e,
            rate,
            output,
        })
    }

    /// ẋ = J(x)e − R(x,e) + G(x)u.
    pub fn eval_dynamics(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        Ok(self.evaluate(x, u)?.rate)
    }

    /// y = Gᵀ(x) ∂H/∂x.
    pub fn outputs(&self, x: &Vector) -> Result<Vector> {
        let e = self.gradient(x)?;
        Ok(self.input_map(x).transpose() * e)
    }

    /// Audits skew-symmetry of J and sign of eᵀR over `samples`.
    pub fn check_structure(&self, samples: &[Vector]) -> StructureReport {
        let mut report = StructureReport {
            samples: 0,
            max_skew_defect: 0.0,
            min_dissipation: f64::INFINITY,
            g1_determinant: self.blocks.map(|b| b.g1_determinant),
            skipped: 0,
        };
        for x in samples {
            let Ok(e) = self.gradient(x) else {
                report.skipped += 1;
                continue;
            };
            let j = self.structure(x);
            let defect = max_abs((&j + j.transpose()).iter().copied());
            let scale = max_abs(j.iter().copied());
            let relative = if scale > 0.0 { defect / scale } else { defect };
            report.max_skew_defect = report.max_skew_defect.max(relative);
            let power = e.dot(&self.dissipation(x, &e));
            report.min_dissipation = report.min_dissipation.min(power);
            report.samples += 1;
        }
        report
    }
}

/// Outcome of [`PhsSystem::check_structure`].
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub samples: usize,
    /// max ‖J + Jᵀ‖ / ‖J‖ (element-wise max norms); absolute when J = 0.
    pub max_skew_defect: f64,
    /// min eᵀR(x, e); +∞ when no sample could be evaluated.
    pub min_dissipation: f64,
    pub g1_determinant: Option<f64>,
    /// Samples outside the model domain.
    pub skipped: usize,
}

impl StructureReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.samples > 0 && self.max_skew_defect <= tol && self.min_dissipation >= -tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msd(m: f64, k: f64, d: f64) -> PhsSystem {
        PhsSystem::builder(2, 1, move |x| 0.5 * k * x[0] * x[0] + x[1] * x[1] / (2.0 * m))
            .constant_structure(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
            .dissipation(move |_, e| DVector::from_vec(vec![0.0, d * e[1]]))
            .constant_input_map(DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))
            .build()
            .unwrap()
    }

    #[test]
    fn msd_dynamics_with_fd_gradient() {
        let sys = msd(1.0, 2.0, 1.0);
        let xdot = sys
            .eval_dynamics(&DVector::from_vec(vec![1.0, 0.0]), &DVector::zeros(1))
            .unwrap();
        assert!(xdot[0].abs() < 1e-9);
        assert!((xdot[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn zero_structure_gives_zero_rate() {
        let sys = PhsSystem::builder(3, 3, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>())
            .constant_input_map(DMatrix::identity(3, 3))
            .build()
            .unwrap();
        let x = DVector::from_vec(vec![0.3, -1.2, 4.0]);
        let xdot = sys.eval_dynamics(&x, &DVector::zeros(3)).unwrap();
        assert_eq!(xdot, DVector::zeros(3));
        let y = sys.outputs(&x).unwrap();
        assert!((y - &x).amax() < 1e-8);
    }

    #[test]
    fn dimension_errors() {
        let sys = msd(1.0, 1.0, 0.0);
        assert!(matches!(
            sys.eval_dynamics(&DVector::zeros(3), &DVector::zeros(1)),
            Err(PhsError::DimensionMismatch { context: "state", .. })
        ));
        assert!(matches!(
            sys.eval_dynamics(&DVector::zeros(2), &DVector::zeros(2)),
            Err(PhsError::DimensionMismatch { context: "input", .. })
        ));
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let sys = PhsSystem::builder(1, 1, |x| x[0].ln())
            .gradient(|x| DVector::from_element(1, 1.0 / x[0]))
            .build()
            .unwrap();
        let err = sys
            .eval_dynamics(&DVector::from_element(1, 0.0), &DVector::zeros(1))
            .unwrap_err();
        assert!(matches!(err, PhsError::NonFinite { .. }));
    }

    #[test]
    fn corrupted_structure_is_reported() {
        let sys = PhsSystem::builder(2, 1, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]))
            .constant_structure(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]))
            .build()
            .unwrap();
        let report = sys.check_structure(&[DVector::from_vec(vec![1.0, 2.0])]);
        assert!(report.max_skew_defect > 1.0);
        assert!(!report.passes(1e-12));
    }

    #[test]
    fn label_count_is_checked() {
        let res = PhsSystem::builder(2, 1, |_| 0.0)
            .labels(Labels::generic(3, 1))
            .build();
        assert!(res.is_err());
    }
}
