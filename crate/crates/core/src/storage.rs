//! Storage functions and dissipation-inequality audits.
//!
//! * [`dissipation_audit`] checks `S(x(t₂)) − S(x(t₁)) ≤ ∫ yᵀu dt` over all
//!   grid pairs of a trajectory in one pass.
//! * [`msd_lmi_storage`] solves the 2×2 LMI for a quadratic storage of the
//!   mass-spring-damper in closed form.
//! * [`scalar_available_storage`] and friends give the closed-form storage
//!   quantities of `ẋ = u, y = eˣ`.
//! * [`sampled_storage_bounds`] brackets the energy extractable from / needed
//!   to reach a state using parametric families of steering inputs.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::carnot::ReferencePath;
use crate::error::{PhsError, Result};
use crate::integrator::{simulate, InputLaw, Trajectory};
use crate::models::MsdParams;
use crate::system::{Matrix, PhsSystem, Vector};

/// Worst violation of `S(x(t₂)) − S(x(t₁)) ≤ ∫_{t₁}^{t₂} yᵀu dt` over all
/// grid pairs `t₁ ≤ t₂` (so never negative).
///
/// With `D(t) = S(x(t)) − W(t)` and `W` the cumulative supply of the run,
/// the worst violation is the largest rise of `D` above its running
/// minimum, which is found in a single pass.
pub fn dissipation_audit(traj: &Trajectory, storage: &dyn Fn(&Vector) -> f64) -> f64 {
    let mut running_min = f64::INFINITY;
    let mut worst = 0.0f64;
    for (x, w) in traj.states.iter().zip(&traj.supplied) {
        let d = storage(x) - w.sum();
        running_min = running_min.min(d);
        worst = worst.max(d - running_min);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    Quadratic,
    ClosedForm,
    Sampled,
}

impl CertificateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertificateKind::Quadratic => "quadratic",
            CertificateKind::ClosedForm => "closed_form",
            CertificateKind::Sampled => "sampled",
        }
    }
}

type StorageFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;

/// A candidate storage function with its audit record.
#[derive(Clone)]
pub struct StorageCertificate {
    pub kind: CertificateKind,
    /// `S(x) = ½ xᵀQx` for quadratic certificates.
    pub q: Option<Matrix>,
    /// `AᵀQ + QA` for quadratic certificates of linear systems.
    pub lmi_matrix: Option<Matrix>,
    /// The LMI had exactly one solution.
    pub unique: bool,
    /// `AᵀQ + QA ⪯ 0` holds.
    pub negative_semidefinite: bool,
    pub ground_state: Vector,
    /// Worst dissipation-inequality violation over the audited trajectories.
    pub audit: Option<f64>,
    value: StorageFn,
}

impl fmt::Debug for StorageCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StorageCertificate")
            .field("kind", &self.kind)
            .field("q", &self.q)
            .field("unique", &self.unique)
            .field("negative_semidefinite", &self.negative_semidefinite)
            .field("audit", &self.audit)
            .finish()
    }
}

impl StorageCertificate {
    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    /// Records the worst violation over `trajectories`.
    pub fn audited(mut self, trajectories: &[Trajectory]) -> Self {
        let f = self.value.clone();
        let worst = trajectories
            .iter()
            .map(|t| dissipation_audit(t, &|x: &Vector| f(x)))
            .fold(0.0, f64::max);
        self.audit = Some(worst);
        self
    }

    /// Passing when audited and the worst violation is within `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.audit.is_some_and(|a| a <= tol)
    }

    /// Flat JSON object (keys sorted); matrices as nested row arrays.
    pub fn to_json(&self) -> Value {
        let rows = |m: &Matrix| -> Value {
            Value::Array(
                m.row_iter()
                    .map(|r| Value::Array(r.iter().map(|v| json!(v)).collect()))
                    .collect(),
            )
        };
        json!({
            "Q": self.q.as_ref().map(rows),
            "audit": self.audit,
            "ground_state": self.ground_state.iter().copied().collect::<Vec<f64>>(),
            "kind": self.kind.as_str(),
            "lmi_matrix": self.lmi_matrix.as_ref().map(rows),
            "negative_semidefinite": self.negative_semidefinite,
            "unique": self.unique,
        })
    }
}

/// Negative semidefiniteness of a symmetric 2×2 matrix from trace and
/// determinant, with absolute slack `tol`.
pub fn is_negative_semidefinite_2x2(m: &Matrix, tol: f64) -> bool {
    let trace = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    m[(0, 0)] <= tol && m[(1, 1)] <= tol && trace <= tol && det >= -tol * tol.max(trace.abs())
}

/// Quadratic storage `½ xᵀQx` for the mass-spring-damper in `(q, p)`
/// coordinates.
///
/// With `A = [[0, 1/m], [−k, −d/m]]`, `B = [0, 1]ᵀ`, `C = [0, 1/m]`, the
/// dissipation inequality for all inputs requires `QB = Cᵀ` (so `q₁₂ = 0`,
/// `q₂₂ = 1/m`) and `AᵀQ + QA ⪯ 0`. The `(1,1)` entry of `AᵀQ + QA` is
/// identically zero, so its off-diagonal entry, affine in `q₁₁`, must
/// vanish; its root is the unique `q₁₁ = k`. `d = 0` is accepted as the
/// lossless boundary case.
pub fn msd_lmi_storage(m: f64, k: f64, d: f64) -> Result<StorageCertificate> {
    MsdParams { m, k, d }.validate()?;
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / m, -k, -d / m]);
    let (q12, q22) = (0.0, 1.0 / m);
    let lmi = |q11: f64| -> Matrix {
        let q = DMatrix::from_row_slice(2, 2, &[q11, q12, q12, q22]);
        a.transpose() * &q + &q * &a
    };
    let m0 = lmi(0.0);
    let m1 = lmi(1.0);
    let offdiag_slope = m1[(0, 1)] - m0[(0, 1)];
    let corner_free = m0[(0, 0)] == 0.0 && m1[(0, 0)] == 0.0;
    if !corner_free || offdiag_slope == 0.0 {
        return Err(PhsError::InvalidParameter(
            "LMI is not of the expected mass-spring-damper form".into(),
        ));
    }
    let q11 = -m0[(0, 1)] / offdiag_slope;
    let q = DMatrix::from_row_slice(2, 2, &[q11, q12, q12, q22]);
    let lmi_matrix = lmi(q11);
    let scale = lmi_matrix.amax().max(1.0);
    let nsd = is_negative_semidefinite_2x2(&lmi_matrix, 1e-12 * scale);
    let qv = q.clone();
    Ok(StorageCertificate {
        kind: CertificateKind::Quadratic,
        q: Some(q),
        lmi_matrix: Some(lmi_matrix),
        unique: corner_free,
        negative_semidefinite: nsd,
        ground_state: DVector::zeros(2),
        audit: None,
        value: Arc::new(move |x: &Vector| 0.5 * x.dot(&(&qv * x))),
    })
}

/// Available storage `S_a(x) = eˣ` of `ẋ = u, y = eˣ`. It has no finite
/// minimizer: `S_a → 0` only as `x → −∞`.
pub fn scalar_available_storage(x: f64) -> f64 {
    x.exp()
}

/// `(S_ac(x), S_rc(x))` of `ẋ = u, y = eˣ` relative to the ground state
/// `x* = 0`; both equal `eˣ − 1`.
pub fn scalar_cyclic_storages(x: f64) -> (f64, f64) {
    (x.exp_m1(), x.exp_m1())
}

/// Closed-form storage certificate `S(x) = eˣ` for the scalar system.
pub fn scalar_storage_certificate() -> StorageCertificate {
    StorageCertificate {
        kind: CertificateKind::ClosedForm,
        q: None,
        lmi_matrix: None,
        unique: true,
        negative_semidefinite: true,
        ground_state: DVector::zeros(1),
        audit: None,
        value: Arc::new(|x: &Vector| x[0].exp()),
    }
}

/// A parametric family of inputs steering a system between two states.
pub trait TrialFamily {
    /// Trial parameters, evaluated in this order.
    fn trials(&self) -> Vec<f64>;
    /// Simulates the trial steering `from → to`.
    fn steer(&self, sys: &PhsSystem, from: &Vector, to: &Vector, trial: f64) -> Result<Trajectory>;
}

/// Linear paths of the scalar system: `u = (to − from)/T` for
/// `T = base_duration · slowness`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRampFamily {
    pub base_duration: f64,
    pub step: f64,
    pub slowness: Vec<f64>,
}

impl Default for ScalarRampFamily {
    fn default() -> Self {
        Self {
            base_duration: 1.0,
            step: 1e-3,
            slowness: vec![1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }
}

impl TrialFamily for ScalarRampFamily {
    fn trials(&self) -> Vec<f64> {
        self.slowness.clone()
    }

    fn steer(&self, sys: &PhsSystem, from: &Vector, to: &Vector, trial: f64) -> Result<Trajectory> {
        let duration = self.base_duration * trial;
        let rate = (to - from) / duration;
        simulate(sys, from, &InputLaw::constant(rate), duration, self.step)
    }
}

/// Smooth rest-to-rest displacement paths of the mass-spring-damper with
/// the force from inverse dynamics, `u = m q̈ + k q + d q̇`. Both end states
/// must be at rest.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdRampFamily {
    pub params: MsdParams,
    pub base_duration: f64,
    pub step: f64,
    pub slowness: Vec<f64>,
}

impl MsdRampFamily {
    pub fn new(params: MsdParams) -> Self {
        Self {
            params,
            base_duration: 2.0,
            step: 1e-3,
            slowness: vec![1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }
}

impl TrialFamily for MsdRampFamily {
    fn trials(&self) -> Vec<f64> {
        self.slowness.clone()
    }

    fn steer(&self, sys: &PhsSystem, from: &Vector, to: &Vector, trial: f64) -> Result<Trajectory> {
        if from[1] != 0.0 || to[1] != 0.0 {
            return Err(PhsError::InvalidParameter(
                "displacement trials start and end at rest".into(),
            ));
        }
        let duration = self.base_duration * trial;
        let path = ReferencePath::smooth_ramp(from[0], to[0], duration);
        let MsdParams { m, k, d } = self.params;
        let law = InputLaw::open_loop(move |t| {
            let [q, v, a] = path.at(t);
            DVector::from_element(1, m * a + k * q + d * v)
        });
        simulate(sys, from, &law, duration, self.step)
    }
}

/// Sampled bracket on the storage quantities at `x` relative to `x*`.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageEstimate {
    /// max over trials of `−∫ yᵀu` on `x → x*`.
    pub s_ac_lower: f64,
    /// min over trials of `∫ yᵀu` on `x* → x`.
    pub s_rc_upper: f64,
    /// Closed-form available storage, where known.
    pub s_a_closed: Option<f64>,
    pub ac_trial: Option<f64>,
    pub rc_trial: Option<f64>,
    /// Both directions had at least one trial landing within `closure_eps`.
    pub valid: bool,
}

impl StorageEstimate {
    /// `s_ac_lower ≤ s_rc_upper + tol`.
    pub fn is_ordered(&self, tol: f64) -> bool {
        self.s_ac_lower <= self.s_rc_upper + tol
    }

    pub fn to_json(&self) -> Value {
        json!({
            "ac_trial": self.ac_trial,
            "rc_trial": self.rc_trial,
            "s_a_closed": self.s_a_closed,
            "s_ac_lower": self.s_ac_lower,
            "s_rc_upper": self.s_rc_upper,
            "valid": self.valid,
        })
    }
}

/// Runs every trial of `family` in both directions and keeps the best
/// bound of each. Trials whose end state misses the target by more than
/// `closure_eps` (∞-norm) are discarded; `x = x*` gives zero bounds.
pub fn sampled_storage_bounds(
    sys: &PhsSystem,
    x: &Vector,
    x_star: &Vector,
    family: &dyn TrialFamily,
    closure_eps: f64,
    s_a_closed: Option<f64>,
) -> Result<StorageEstimate> {
    if x.len() != sys.n() || x_star.len() != sys.n() {
        return Err(PhsError::DimensionMismatch {
            context: "storage bound states",
            expected: sys.n(),
            actual: if x.len() != sys.n() { x.len() } else { x_star.len() },
        });
    }
    if (x - x_star).amax() == 0.0 {
        return Ok(StorageEstimate {
            s_ac_lower: 0.0,
            s_rc_upper: 0.0,
            s_a_closed,
            ac_trial: None,
            rc_trial: None,
            valid: true,
        });
    }
    let mut ac: Option<(f64, f64)> = None;
    let mut rc: Option<(f64, f64)> = None;
    for trial in family.trials() {
        let out = family.steer(sys, x, x_star, trial)?;
        if (out.last_state() - x_star).amax() <= closure_eps {
            let extracted = -out.supplied.last().expect("non-empty").sum();
            if ac.is_none_or(|(best, _)| extracted > best) {
                ac = Some((extracted, trial));
            }
        }
        let back = family.steer(sys, x_star, x, trial)?;
        if (back.last_state() - x).amax() <= closure_eps {
            let required = back.supplied.last().expect("non-empty").sum();
            if rc.is_none_or(|(best, _)| required < best) {
                rc = Some((required, trial));
            }
        }
    }
    Ok(StorageEstimate {
        s_ac_lower: ac.map_or(f64::NAN, |a| a.0),
        s_rc_upper: rc.map_or(f64::NAN, |r| r.0),
        s_a_closed,
        ac_trial: ac.map(|a| a.1),
        rc_trial: rc.map(|r| r.1),
        valid: ac.is_some() && rc.is_some(),
    })
}
