//! Generalized Carnot cycle: isothermal at `e₁ʰ`, adiabatic, isothermal at
//! `e₁ᶜ`, adiabatic back to the start.
//!
//! Port 1 follows the constraint laws of [`crate::constraints`]; port 2 is
//! a computed-force tracking controller that steers one "shape" coordinate
//! of `x₂` (gas volume, armature displacement) along a smooth reference
//! that starts and ends at rest. Adiabatic end points are found by solving
//! `∂H/∂x₁(x₁, s) = e₁ᶜ` (or `e₁ʰ`) for the shape coordinate `s`.

use std::sync::Arc;

use nalgebra::DVector;
use serde_json::{json, Value};

use crate::constraints::{constrained_law, PortOneMode};
use crate::error::{PhsError, Result};
use crate::integrator::{energy_balance, simulate_from, EnergyLedger, Trajectory};
use crate::legendre::partial_legendre;
use crate::models::GasPistonParams;
use crate::system::Vector;
use crate::two_port::TwoPortPhs;

pub const PHASE_ISO_HOT: &str = "iso_hot";
pub const PHASE_ADIABATIC_1: &str = "adiabatic_1";
pub const PHASE_ISO_COLD: &str = "iso_cold";
pub const PHASE_ADIABATIC_2: &str = "adiabatic_2";
pub const PHASES: [&str; 4] = [PHASE_ISO_HOT, PHASE_ADIABATIC_1, PHASE_ISO_COLD, PHASE_ADIABATIC_2];

/// Allowed tracking error as a fraction of the phase stroke.
const TRACKING_LIMIT: f64 = 0.05;
/// Relative miss of the co-state target tolerated at an adiabatic end.
const ENDPOINT_TOLERANCE: f64 = 1e-6;

/// The `x₂` coordinate steered along the reference, and the momentum that
/// drives it: `ṡ = velocity_gain · x₂[momentum]`, with port 2 acting on the
/// momentum equation only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeCoordinate {
    pub position: usize,
    pub momentum: usize,
    /// ∂ṡ/∂(momentum), e.g. `A/m` for the piston volume.
    pub velocity_gain: f64,
}

impl ShapeCoordinate {
    /// Volume driven by piston momentum, `V̇ = A π / m`.
    pub fn gas_piston(p: &GasPistonParams) -> Self {
        Self {
            position: 0,
            momentum: 1,
            velocity_gain: p.area / p.mass,
        }
    }

    /// Armature displacement driven by its momentum, `q̇ = p / m`.
    pub fn actuator(mass: f64) -> Self {
        Self {
            position: 0,
            momentum: 1,
            velocity_gain: 1.0 / mass,
        }
    }
}

type PathFn = Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>;

/// Reference `(s, ṡ, s̈)` as a function of time since the phase start.
#[derive(Clone)]
pub struct ReferencePath {
    eval: PathFn,
    start: f64,
    end: f64,
}

impl std::fmt::Debug for ReferencePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferencePath")
            .field("start", &self.start)
            .field("end", &self.end)
            .finish()
    }
}

impl ReferencePath {
    pub fn custom(start: f64, end: f64, f: impl Fn(f64) -> [f64; 3] + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            start,
            end,
        }
    }

    /// `s = a + (b − a) σ(t/D)` with `σ(τ) = τ − sin(2πτ)/(2π)`: velocity and
    /// acceleration vanish at both ends.
    pub fn smooth_ramp(from: f64, to: f64, duration: f64) -> Self {
        let d = to - from;
        let w = 2.0 * std::f64::consts::PI / duration;
        Self::custom(from, to, move |t| {
            let tau = (t / duration).clamp(0.0, 1.0);
            let phase = 2.0 * std::f64::consts::PI * tau;
            [
                from + d * (tau - phase.sin() / (2.0 * std::f64::consts::PI)),
                d / duration * (1.0 - phase.cos()),
                d / duration * w * phase.sin(),
            ]
        })
    }

    /// `s = a + (b − a)(1 − cos(2πt/D))/2`: out to `b` and back to `a`,
    /// at rest at both ends.
    pub fn out_and_back(from: f64, to: f64, duration: f64) -> Self {
        let half = 0.5 * (to - from);
        let w = 2.0 * std::f64::consts::PI / duration;
        Self::custom(from, from, move |t| {
            let phase = w * t.clamp(0.0, duration);
            [
                from + half * (1.0 - phase.cos()),
                half * w * phase.sin(),
                half * w * w * phase.cos(),
            ]
        })
    }

    pub fn at(&self, t: f64) -> [f64; 3] {
        (self.eval)(t)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }
}

/// Settings of one constrained phase.
#[derive(Debug, Clone)]
pub struct PhaseSpec {
    pub label: String,
    pub mode: PortOneMode,
    pub path: ReferencePath,
    pub duration: f64,
}

/// Port-2 tracking law: critically damped error dynamics
/// `ë + 2ω ė + ω² e = 0` on the shape coordinate, realized by cancelling the
/// internal force on the momentum coordinate.
pub fn tracking_input(
    sys: &TwoPortPhs,
    shape: &ShapeCoordinate,
    bandwidth: f64,
    path: &ReferencePath,
    t_local: f64,
    x: &Vector,
) -> Result<Vector> {
    let free = sys.x2_rate(x, &DVector::zeros(sys.m2()))?;
    let g2 = sys.g2(x);
    let gain = g2[(shape.momentum, 0)];
    if gain == 0.0 || g2[(shape.position, 0)] != 0.0 {
        return Err(PhsError::InvalidParameter(
            "port 2 must act on the momentum coordinate only".into(),
        ));
    }
    let [s_ref, v_ref, a_ref] = path.at(t_local);
    let (_, x2) = sys.split(x);
    let s = x2[shape.position];
    let v = free[shape.position];
    let accel = a_ref - 2.0 * bandwidth * (v - v_ref) - bandwidth * bandwidth * (s - s_ref);
    let momentum_rate = accel / shape.velocity_gain;
    let mut u2 = DVector::zeros(sys.m2());
    u2[0] = (momentum_rate - free[shape.momentum]) / gain;
    Ok(u2)
}

/// Simulates one phase from `(t0, x0)` with port 1 in `spec.mode` and port
/// 2 tracking `spec.path`. The returned trajectory carries `spec.label` as
/// its only phase mark.
pub fn run_phase(
    sys: &TwoPortPhs,
    shape: &ShapeCoordinate,
    bandwidth: f64,
    t0: f64,
    x0: &Vector,
    spec: &PhaseSpec,
    step: f64,
) -> Result<Trajectory> {
    if sys.m2() != 1 {
        return Err(PhsError::InvalidParameter(format!(
            "tracking needs a scalar port 2, got {} coordinates",
            sys.m2()
        )));
    }
    let embedded = sys.embed();
    let (sys_c, shape_c, path) = (sys.clone(), *shape, spec.path.clone());
    let port2 = Arc::new(move |t: f64, x: &Vector| {
        tracking_input(&sys_c, &shape_c, bandwidth, &path, t - t0, x)
    });
    let law = constrained_law(sys, spec.mode.clone(), port2);
    let mut traj = simulate_from(&embedded, t0, x0, &law, spec.duration, step)?;

    let stroke = (spec.path.end() - spec.path.start())
        .abs()
        .max((0..=16).map(|k| {
            let t = spec.duration * k as f64 / 16.0;
            (spec.path.at(t)[0] - spec.path.start()).abs()
        }).fold(0.0, f64::max));
    let limit = TRACKING_LIMIT * stroke.max(1e-9 * (1.0 + spec.path.start().abs()));
    let mut worst = 0.0f64;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let s = x[sys.n1() + shape.position];
        worst = worst.max((s - spec.path.at(t - t0)[0]).abs());
    }
    if worst > limit {
        return Err(PhsError::TrackingDivergence {
            phase: phase_name(&spec.label),
            error: worst,
            limit,
        });
    }
    traj.mark_phase(spec.label.clone());
    Ok(traj)
}

fn phase_name(label: &str) -> &'static str {
    PHASES
        .iter()
        .find(|p| **p == label)
        .copied()
        .unwrap_or("custom")
}

/// Plan of a four-phase cycle.
#[derive(Debug, Clone)]
pub struct CarnotSchedule {
    pub e1_hot: f64,
    pub e1_cold: f64,
    /// Durations of the four phases `(τ₁, τ₂ − τ₁, τ₃ − τ₂, τ_c − τ₃)`.
    pub durations: [f64; 4],
    /// `x₂` at the start of the hot isothermal.
    pub x2_start: Vector,
    /// Shape coordinate at the end of the hot isothermal.
    pub hot_end_position: f64,
    pub shape: ShapeCoordinate,
    /// Tracking bandwidth ω (rad/s).
    pub bandwidth: f64,
    pub step: f64,
    /// Starting guess for `x₁` when solving `∂H/∂x₁ = e₁ʰ` at the start.
    pub x1_guess: Vector,
}

impl CarnotSchedule {
    pub fn validate(&self, sys: &TwoPortPhs) -> Result<()> {
        if sys.n1() != 1 {
            return Err(PhsError::InvalidParameter(format!(
                "cycle schedules need a scalar port 1, got n1 = {}",
                sys.n1()
            )));
        }
        if self.x2_start.len() != sys.n2() {
            return Err(PhsError::DimensionMismatch {
                context: "x2_start",
                expected: sys.n2(),
                actual: self.x2_start.len(),
            });
        }
        if self.x1_guess.len() != sys.n1() {
            return Err(PhsError::DimensionMismatch {
                context: "x1_guess",
                expected: sys.n1(),
                actual: self.x1_guess.len(),
            });
        }
        if self.shape.position >= sys.n2() || self.shape.momentum >= sys.n2() {
            return Err(PhsError::InvalidParameter(
                "shape coordinate index outside x2".into(),
            ));
        }
        if self.durations.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(PhsError::InvalidParameter(format!(
                "phase durations must be positive, got {:?}",
                self.durations
            )));
        }
        for (name, v) in [
            ("e1_hot", self.e1_hot),
            ("e1_cold", self.e1_cold),
            ("bandwidth", self.bandwidth),
            ("step", self.step),
        ] {
            if !v.is_finite() {
                return Err(PhsError::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if !(self.bandwidth > 0.0) || !(self.step > 0.0) {
            return Err(PhsError::InvalidParameter(
                "bandwidth and step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Audited outcome of a cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub e1_hot: f64,
    pub e1_cold: f64,
    /// −∫ y₂ᵀu₂ dt over the cycle.
    pub work_out: f64,
    /// Port-1 supply during the hot isothermal.
    pub heat_hot: f64,
    /// Port-1 supply during the cold isothermal.
    pub heat_cold: f64,
    /// Port-1 supply over the whole cycle.
    pub port1_total: f64,
    pub delta_x1_hot: f64,
    pub delta_x1_cold: f64,
    pub efficiency_measured: f64,
    pub efficiency_ideal: f64,
    pub closure_error: f64,
    /// e₁ʰΔʰx₁ + e₁ᶜΔᶜx₁ − work_out.
    pub inequality_slack: f64,
    pub dissipated: f64,
    /// Energy-ledger residual over the whole cycle.
    pub balance_residual: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub tau_c: f64,
    /// Shape coordinate at the four phase boundaries `(s₀, s₁, s₂, s₃)`.
    pub positions: [f64; 4],
}

impl CycleReport {
    /// The inequality `work_out ≤ e₁ʰΔʰx₁ + e₁ᶜΔᶜx₁` up to
    /// `1e-6 · |heat_hot|`.
    pub fn satisfies_work_bound(&self) -> bool {
        self.inequality_slack >= -1e-6 * self.heat_hot.abs()
    }

    /// Flat JSON object (keys sorted).
    pub fn to_json(&self) -> Value {
        json!({
            "balance_residual": self.balance_residual,
            "closure_error": self.closure_error,
            "delta_x1_cold": self.delta_x1_cold,
            "delta_x1_hot": self.delta_x1_hot,
            "dissipated": self.dissipated,
            "e1_cold": self.e1_cold,
            "e1_hot": self.e1_hot,
            "efficiency_ideal": self.efficiency_ideal,
            "efficiency_measured": self.efficiency_measured,
            "heat_cold": self.heat_cold,
            "heat_hot": self.heat_hot,
            "inequality_slack": self.inequality_slack,
            "port1_total": self.port1_total,
            "positions": self.positions.to_vec(),
            "tau1": self.tau1,
            "tau2": self.tau2,
            "tau3": self.tau3,
            "tau_c": self.tau_c,
            "work_out": self.work_out,
        })
    }
}

/// `1 − e₁ᶜ / e₁ʰ`.
pub fn efficiency_ideal(e1_hot: f64, e1_cold: f64) -> Result<f64> {
    if e1_hot == 0.0 || !e1_hot.is_finite() || !e1_cold.is_finite() {
        return Err(PhsError::InvalidParameter(format!(
            "ideal efficiency needs a finite nonzero hot level, got {e1_hot}"
        )));
    }
    Ok(1.0 - e1_cold / e1_hot)
}

fn e1_at(sys: &TwoPortPhs, x1: &[f64], x2: &Vector, shape: &ShapeCoordinate, s: f64) -> Result<(f64, f64)> {
    let mut z2 = x2.clone();
    z2[shape.position] = s;
    let x = sys.join(x1, z2.as_slice());
    let (e1, _) = sys.efforts(&x)?;
    let slope = sys.hessian12(&x)?[(0, shape.position)];
    Ok((e1[0], slope))
}

/// Shape coordinate `s` at which `∂H/∂x₁(x₁, x₂ with s) = target`, by damped
/// Newton started from `s_guess`.
pub fn solve_shape_for_costate(
    sys: &TwoPortPhs,
    x1: &[f64],
    x2: &Vector,
    shape: &ShapeCoordinate,
    target: f64,
    s_guess: f64,
) -> Result<f64> {
    let tol = 1e-12 * (1.0 + target.abs());
    let mut s = s_guess;
    let (mut e, mut slope) = e1_at(sys, x1, x2, shape, s)?;
    for _ in 0..50 {
        let r = e - target;
        if r.abs() < tol {
            return Ok(s);
        }
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let delta = r / slope;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial = s - scale * delta;
            if let Ok((et, st)) = e1_at(sys, x1, x2, shape, trial) {
                if (et - target).abs() < r.abs() {
                    s = trial;
                    e = et;
                    slope = st;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if (e - target).abs() < 1e-9 * (1.0 + target.abs()) {
        return Ok(s);
    }
    Err(PhsError::ScheduleInfeasible(format!(
        "no shape position reaches co-state {target} along the adiabat (closest {e} at s = {s})"
    )))
}

fn check_endpoint(sys: &TwoPortPhs, x: &Vector, target: f64, phase: &str) -> Result<()> {
    let (e1, _) = sys.efforts(x)?;
    let miss = (e1[0] - target).abs();
    if miss > ENDPOINT_TOLERANCE * target.abs().max(f64::MIN_POSITIVE) {
        return Err(PhsError::ScheduleInfeasible(format!(
            "{phase} ends at co-state {} instead of {target}",
            e1[0]
        )));
    }
    Ok(())
}

/// Runs the four phases and audits the result.
pub fn run_cycle(sys: &TwoPortPhs, schedule: &CarnotSchedule) -> Result<(Trajectory, CycleReport)> {
    schedule.validate(sys)?;
    let shape = schedule.shape;
    let step = schedule.step;
    let [d1, d2, d3, d4] = schedule.durations;

    let mut x2_0 = schedule.x2_start.clone();
    x2_0[shape.momentum] = 0.0;
    let s0 = x2_0[shape.position];
    let start = partial_legendre(sys, &DVector::from_element(1, schedule.e1_hot), &x2_0, &schedule.x1_guess)?;
    let x0 = start.state(sys);
    let x1_0 = start.x1_solved.clone();

    let phase = |label: &str, mode: PortOneMode, path: ReferencePath, duration: f64| PhaseSpec {
        label: label.to_string(),
        mode,
        path,
        duration,
    };
    let run = |t0: f64, x: &Vector, spec: &PhaseSpec| -> Result<(Trajectory, EnergyLedger)> {
        let traj = run_phase(sys, &shape, schedule.bandwidth, t0, x, spec, step)?;
        let ledger = energy_balance(&traj, &sys.embed());
        Ok((traj, ledger))
    };

    // 1: hot isothermal along the prescribed stroke.
    let s1 = schedule.hot_end_position;
    let spec1 = phase(PHASE_ISO_HOT, PortOneMode::Isothermal, ReferencePath::smooth_ramp(s0, s1, d1), d1);
    let (t1, l1) = run(0.0, &x0, &spec1)?;
    let xa = t1.last_state().clone();

    // 2: adiabatic until e₁ reaches the cold level.
    let (xa1, xa2) = sys.split(&xa);
    let s2 = solve_shape_for_costate(sys, xa1, &DVector::from_column_slice(xa2), &shape, schedule.e1_cold, s1)?;
    let spec2 = phase(PHASE_ADIABATIC_1, PortOneMode::Adiabatic, ReferencePath::smooth_ramp(s1, s2, d2), d2);
    let (t2, l2) = run(t1.end_time(), &xa, &spec2)?;
    let xb = t2.last_state().clone();
    check_endpoint(sys, &xb, schedule.e1_cold, PHASE_ADIABATIC_1)?;

    // 3: cold isothermal to the point on the starting adiabat.
    let s3 = solve_shape_for_costate(sys, x1_0.as_slice(), &x2_0, &shape, schedule.e1_cold, s0)?;
    let spec3 = phase(PHASE_ISO_COLD, PortOneMode::Isothermal, ReferencePath::smooth_ramp(s2, s3, d3), d3);
    let (t3, l3) = run(t2.end_time(), &xb, &spec3)?;
    let xc = t3.last_state().clone();

    // 4: adiabatic back to the starting shape.
    let spec4 = phase(PHASE_ADIABATIC_2, PortOneMode::Adiabatic, ReferencePath::smooth_ramp(s3, s0, d4), d4);
    let (t4, l4) = run(t3.end_time(), &xc, &spec4)?;
    check_endpoint(sys, t4.last_state(), schedule.e1_hot, PHASE_ADIABATIC_2)?;

    let (tau1, tau2, tau3, tau_c) = (t1.end_time(), t2.end_time(), t3.end_time(), t4.end_time());
    let delta_x1_hot = xa[0] - x0[0];
    let delta_x1_cold = xc[0] - xb[0];

    let mut traj = t1;
    traj.append(t2)?;
    traj.append(t3)?;
    traj.append(t4)?;
    let total = energy_balance(&traj, &sys.embed());

    let work_out = -(l1.port2_total() + l2.port2_total() + l3.port2_total() + l4.port2_total());
    let heat_hot = l1.port1_total();
    let heat_cold = l3.port1_total();
    let report = CycleReport {
        e1_hot: schedule.e1_hot,
        e1_cold: schedule.e1_cold,
        work_out,
        heat_hot,
        heat_cold,
        port1_total: total.port1_total(),
        delta_x1_hot,
        delta_x1_cold,
        efficiency_measured: if heat_hot != 0.0 { work_out / heat_hot } else { 0.0 },
        efficiency_ideal: efficiency_ideal(schedule.e1_hot, schedule.e1_cold)?,
        closure_error: traj.closure_error(),
        inequality_slack: schedule.e1_hot * delta_x1_hot + schedule.e1_cold * delta_x1_cold
            - work_out,
        dissipated: total.dissipated_total(),
        balance_residual: total.balance_residual,
        tau1,
        tau2,
        tau3,
        tau_c,
        positions: [s0, s1, s2, s3],
    };
    Ok((traj, report))
}

/// Out-and-back excursion of the shape coordinate from `x2_start` (at
/// rest) to `turn` and back, with port 1 held at the co-state `e1`
/// throughout. The start state solves `∂H/∂x₁ = e1` from `x1_guess`.
#[allow(clippy::too_many_arguments)]
pub fn isothermal_loop(
    sys: &TwoPortPhs,
    shape: &ShapeCoordinate,
    e1: f64,
    x2_start: &Vector,
    turn: f64,
    duration: f64,
    step: f64,
    x1_guess: &Vector,
) -> Result<Trajectory> {
    let mut x2 = x2_start.clone();
    x2[shape.momentum] = 0.0;
    let start = partial_legendre(sys, &DVector::from_element(1, e1), &x2, x1_guess)?;
    let s0 = x2[shape.position];
    let spec = PhaseSpec {
        label: "loop".to_string(),
        mode: PortOneMode::Isothermal,
        path: ReferencePath::out_and_back(s0, turn, duration),
        duration,
    };
    run_phase(sys, shape, 20.0 / duration, 0.0, &start.state(sys), &spec, step)
}

/// Gas-piston cycle between reservoir temperatures `t_hot` and `t_cold`,
/// with the hot isothermal expanding the gas from `v_start` to `v_hot_end`.
/// Every phase lasts `phase_duration`; the tracking bandwidth is
/// `20 / phase_duration`.
pub fn gas_piston_schedule(
    p: &GasPistonParams,
    t_hot: f64,
    t_cold: f64,
    v_start: f64,
    v_hot_end: f64,
    phase_duration: f64,
    step: f64,
) -> CarnotSchedule {
    CarnotSchedule {
        e1_hot: t_hot,
        e1_cold: t_cold,
        durations: [phase_duration; 4],
        x2_start: DVector::from_vec(vec![v_start, 0.0]),
        hot_end_position: v_hot_end,
        shape: ShapeCoordinate::gas_piston(p),
        bandwidth: 20.0 / phase_duration,
        step,
        x1_guess: DVector::from_element(1, p.s_ref),
    }
}

/// Actuator cycle between currents `i_hot` (source `a`) and `i_cold`
/// (source `b`); the first isothermal moves the armature from `q_start` to
/// `q_hot_end`.
pub fn actuator_schedule(
    mass: f64,
    i_hot: f64,
    i_cold: f64,
    q_start: f64,
    q_hot_end: f64,
    phase_duration: f64,
    step: f64,
) -> CarnotSchedule {
    CarnotSchedule {
        e1_hot: i_hot,
        e1_cold: i_cold,
        durations: [phase_duration; 4],
        x2_start: DVector::from_vec(vec![q_start, 0.0]),
        hot_end_position: q_hot_end,
        shape: ShapeCoordinate::actuator(mass),
        bandwidth: 20.0 / phase_duration,
        step,
        x1_guess: DVector::zeros(1),
    }
}

/// Residuals of the closed-cycle energy identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StirlingCheck {
    /// |work_out − (heat_hot + heat_cold)|
    pub residual: f64,
    /// |heat_hot + heat_cold − port-1 supply over the whole cycle|; zero
    /// when no port-1 energy flows during the adiabatics.
    pub port1_residual: f64,
}

/// Checks `−∮ y₂u₂ = ∮ y₁u₁ = Q_h + Q_c` on a closed lossless cycle.
pub fn stirling_identity_check(report: &CycleReport, ledger: &EnergyLedger) -> StirlingCheck {
    let heat = report.heat_hot + report.heat_cold;
    StirlingCheck {
        residual: (report.work_out - heat).abs(),
        port1_residual: (heat - ledger.port1_total()).abs(),
    }
}
