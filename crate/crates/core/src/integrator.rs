//! Fixed-step RK4 simulation with a per-port energy ledger.
//!
//! Besides the grid values, every run accumulates `∫ yⱼuⱼ dt` per input
//! coordinate and `∫ eᵀR dt` with the same RK4 stage weights as the state,
//! so `H(end) − H(start) − supplied + dissipated` converges at fourth
//! order. [`supplied_energy`] is the independent trapezoid audit on the
//! output grid.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{PhsError, Result};
use crate::system::{PhsSystem, Vector};

/// Abort threshold on ‖x‖∞.
pub const BLOW_UP_NORM: f64 = 1e12;

pub type OpenLoopFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;
pub type FeedbackFn = Arc<dyn Fn(f64, &Vector) -> Result<Vector> + Send + Sync>;

/// Port input as a function of time, or of time and state.
#[derive(Clone)]
pub enum InputLaw {
    OpenLoop(OpenLoopFn),
    Feedback(FeedbackFn),
}

impl std::fmt::Debug for InputLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputLaw::OpenLoop(_) => f.write_str("InputLaw::OpenLoop"),
            InputLaw::Feedback(_) => f.write_str("InputLaw::Feedback"),
        }
    }
}

impl InputLaw {
    pub fn zero(m: usize) -> Self {
        Self::constant(DVector::zeros(m))
    }

    pub fn constant(u: Vector) -> Self {
        InputLaw::OpenLoop(Arc::new(move |_| u.clone()))
    }

    pub fn open_loop(f: impl Fn(f64) -> Vector + Send + Sync + 'static) -> Self {
        InputLaw::OpenLoop(Arc::new(f))
    }

    pub fn feedback(f: impl Fn(f64, &Vector) -> Result<Vector> + Send + Sync + 'static) -> Self {
        InputLaw::Feedback(Arc::new(f))
    }

    pub fn evaluate(&self, t: f64, x: &Vector) -> Result<Vector> {
        let u = match self {
            InputLaw::OpenLoop(f) => f(t),
            InputLaw::Feedback(f) => f(t, x)?,
        };
        if u.iter().any(|v| !v.is_finite()) {
            return Err(PhsError::NonFinite {
                quantity: "input",
                time: Some(t),
            });
        }
        Ok(u)
    }
}

/// Start of a labelled segment of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseMark {
    pub start: usize,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub outputs: Vec<Vector>,
    /// H(x(t)) on the grid.
    pub energies: Vec<f64>,
    pub step: f64,
    /// Number of port coordinates belonging to port 1.
    pub port_split: usize,
    /// Cumulative `∫ yⱼuⱼ dt` per port coordinate (RK4 stage quadrature).
    pub supplied: Vec<Vector>,
    /// Cumulative `∫ eᵀR dt` (RK4 stage quadrature).
    pub dissipated: Vec<f64>,
    pub phases: Vec<PhaseMark>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first_state(&self) -> &Vector {
        &self.states[0]
    }

    pub fn last_state(&self) -> &Vector {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    /// ‖x(end) − x(start)‖∞.
    pub fn closure_error(&self) -> f64 {
        (self.last_state() - self.first_state()).amax()
    }

    pub fn is_cyclic(&self, eps: f64) -> bool {
        self.closure_error() <= eps
    }

    /// Label of the phase that contains sample `i`.
    pub fn phase_at(&self, i: usize) -> Option<&str> {
        self.phases
            .iter()
            .rev()
            .find(|p| p.start <= i)
            .map(|p| p.label.as_str())
    }

    /// Sample range of the phase labelled `label`, including the boundary
    /// sample it starts from.
    pub fn phase_range(&self, label: &str) -> Option<Range<usize>> {
        let k = self.phases.iter().position(|p| p.label == label)?;
        let start = self.phases[k].start.saturating_sub(1);
        let end = self
            .phases
            .get(k + 1)
            .map(|p| p.start)
            .unwrap_or(self.len());
        Some(start..end)
    }

    pub fn mark_phase(&mut self, label: impl Into<String>) {
        self.phases = vec![PhaseMark {
            start: 0,
            label: label.into(),
        }];
    }

    /// Appends `next`, which must start where `self` ends. The shared
    /// boundary sample is kept from `self`.
    pub fn append(&mut self, next: Trajectory) -> Result<()> {
        let t_end = self.end_time();
        if (next.times[0] - t_end).abs() > 1e-9 * (1.0 + t_end.abs())
            || (next.states[0].clone() - self.last_state()).amax()
                > 1e-12 * (1.0 + self.last_state().amax())
        {
            return Err(PhsError::InvalidParameter(
                "appended trajectory does not start at the end of the current one".into(),
            ));
        }
        if next.port_split != self.port_split || next.states[0].len() != self.states[0].len() {
            return Err(PhsError::DimensionMismatch {
                context: "appended trajectory",
                expected: self.port_split,
                actual: next.port_split,
            });
        }
        let offset_supply = self.supplied.last().cloned().expect("non-empty");
        let offset_diss = *self.dissipated.last().expect("non-empty");
        let base = self.len();
        for mark in next.phases {
            self.phases.push(PhaseMark {
                start: base + mark.start.max(1) - 1,
                label: mark.label,
            });
        }
        for i in 1..next.times.len() {
            self.times.push(next.times[i]);
            self.states.push(next.states[i].clone());
            self.inputs.push(next.inputs[i].clone());
            self.outputs.push(next.outputs[i].clone());
            self.energies.push(next.energies[i]);
            self.supplied.push(&next.supplied[i] + &offset_supply);
            self.dissipated.push(next.dissipated[i] + offset_diss);
        }
        Ok(())
    }
}

/// Default closure tolerance `1e-6 (1 + ‖x(0)‖∞)` for cycle detection.
pub fn default_closure_eps(x0: &Vector) -> f64 {
    1e-6 * (1.0 + x0.amax())
}

struct Stage {
    rate: Vector,
    power: Vector,
    dissipation: f64,
    input: Vector,
    output: Vector,
}

fn stage(sys: &PhsSystem, law: &InputLaw, t: f64, x: &Vector) -> Result<Stage> {
    let u = law.evaluate(t, x)?;
    let ev = sys.evaluate(x, &u).map_err(|e| match e {
        PhsError::NonFinite { quantity, .. } => PhsError::NonFinite {
            quantity,
            time: Some(t),
        },
        other => other,
    })?;
    Ok(Stage {
        power: ev.output.component_mul(&u),
        rate: ev.rate,
        dissipation: ev.dissipation_power,
        input: u,
        output: ev.output,
    })
}

/// Classical RK4 from `t = 0` to `t_end` with uniform `step`.
pub fn simulate(
    sys: &PhsSystem,
    x0: &Vector,
    law: &InputLaw,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    simulate_from(sys, 0.0, x0, law, t_end, step)
}

/// Number of uniform steps covering `duration`; the duration must be an
/// integer multiple of `step` up to rounding.
pub fn step_count(duration: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(PhsError::InvalidParameter(format!(
            "step must be positive, got {step}"
        )));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(PhsError::InvalidParameter(format!(
            "duration must be non-negative, got {duration}"
        )));
    }
    let n = (duration / step).round();
    if (n * step - duration).abs() > 1e-6 * step {
        return Err(PhsError::InvalidParameter(format!(
            "duration {duration} is not a multiple of step {step}"
        )));
    }
    Ok(n as usize)
}

/// RK4 over `[t0, t0 + duration]`. A zero duration yields a single-sample
/// trajectory.
pub fn simulate_from(
    sys: &PhsSystem,
    t0: f64,
    x0: &Vector,
    law: &InputLaw,
    duration: f64,
    step: f64,
) -> Result<Trajectory> {
    let steps = step_count(duration, step)?;
    if x0.len() != sys.n() {
        return Err(PhsError::DimensionMismatch {
            context: "initial state",
            expected: sys.n(),
            actual: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(PhsError::NonFinite {
            quantity: "initial state",
            time: Some(t0),
        });
    }
    sys.check_domain(x0)?;

    let m = sys.m();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        energies: Vec::with_capacity(steps + 1),
        step,
        port_split: sys.port_split(),
        supplied: Vec::with_capacity(steps + 1),
        dissipated: Vec::with_capacity(steps + 1),
        phases: Vec::new(),
    };

    let mut x = x0.clone();
    let mut supplied = DVector::zeros(m);
    let mut dissipated = 0.0;
    let h = step;

    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let s1 = stage(sys, law, t, &x)?;
        let x2 = &x + &s1.rate * (0.5 * h);
        let s2 = stage(sys, law, t + 0.5 * h, &x2)?;
        let x3 = &x + &s2.rate * (0.5 * h);
        let s3 = stage(sys, law, t + 0.5 * h, &x3)?;
        let x4 = &x + &s3.rate * h;
        let s4 = stage(sys, law, t + h, &x4)?;

        traj.times.push(t);
        traj.states.push(x.clone());
        traj.energies.push(sys.hamiltonian(&x));
        traj.supplied.push(supplied.clone());
        traj.dissipated.push(dissipated);

        let w = h / 6.0;
        x += (&s1.rate + (&s2.rate + &s3.rate) * 2.0 + &s4.rate) * w;
        supplied += (&s1.power + (&s2.power + &s3.power) * 2.0 + &s4.power) * w;
        dissipated += w * (s1.dissipation + 2.0 * (s2.dissipation + s3.dissipation) + s4.dissipation);

        traj.inputs.push(s1.input);
        traj.outputs.push(s1.output);

        let norm = x.amax();
        if !norm.is_finite() || x.iter().any(|v| !v.is_finite()) || norm > BLOW_UP_NORM {
            return Err(PhsError::BlowUp {
                time: t + h,
                norm,
            });
        }
    }

    let t = t0 + steps as f64 * h;
    let last = stage(sys, law, t, &x)?;
    traj.times.push(t);
    traj.energies.push(sys.hamiltonian(&x));
    traj.states.push(x);
    traj.inputs.push(last.input);
    traj.outputs.push(last.output);
    traj.supplied.push(supplied);
    traj.dissipated.push(dissipated);
    Ok(traj)
}

/// Which port coordinates to integrate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortSelector {
    Port1,
    Port2,
    All,
    Coordinates(Vec<usize>),
}

impl PortSelector {
    pub fn indices(&self, m: usize, split: usize) -> Result<Vec<usize>> {
        match self {
            PortSelector::Port1 => Ok((0..split).collect()),
            PortSelector::Port2 if split < m => Ok((split..m).collect()),
            PortSelector::Port2 => Err(PhsError::InvalidPort(
                "system has no second port".into(),
            )),
            PortSelector::All => Ok((0..m).collect()),
            PortSelector::Coordinates(c) => {
                if let Some(bad) = c.iter().find(|&&j| j >= m) {
                    Err(PhsError::InvalidPort(format!(
                        "coordinate {bad} out of range for {m} ports"
                    )))
                } else {
                    Ok(c.clone())
                }
            }
        }
    }
}

/// Trapezoid quadrature of `yᵀu` over the selected coordinates, on the
/// output grid.
pub fn supplied_energy(traj: &Trajectory, selector: &PortSelector) -> Result<f64> {
    supplied_energy_between(traj, selector, 0..traj.len())
}

/// Same as [`supplied_energy`], restricted to the samples in `range`.
pub fn supplied_energy_between(
    traj: &Trajectory,
    selector: &PortSelector,
    range: Range<usize>,
) -> Result<f64> {
    let m = traj.inputs.first().map(|u| u.len()).unwrap_or(0);
    let idx = selector.indices(m, traj.port_split)?;
    let power = |i: usize| -> f64 {
        idx.iter()
            .map(|&j| traj.outputs[i][j] * traj.inputs[i][j])
            .sum()
    };
    let mut total = 0.0;
    let mut prev = power(range.start);
    for i in range.start + 1..range.end {
        let cur = power(i);
        total += 0.5 * (traj.times[i] - traj.times[i - 1]) * (prev + cur);
        prev = cur;
    }
    Ok(total)
}

/// Cumulative supplied and dissipated energy along a trajectory.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub port1: Vec<f64>,
    pub port2: Vec<f64>,
    pub dissipated: Vec<f64>,
    pub energy_start: f64,
    pub energy_end: f64,
    /// `H(end) − H(start) − Σ supplied + dissipated`.
    pub balance_residual: f64,
}

impl EnergyLedger {
    pub fn port1_total(&self) -> f64 {
        *self.port1.last().unwrap_or(&0.0)
    }

    pub fn port2_total(&self) -> f64 {
        *self.port2.last().unwrap_or(&0.0)
    }

    pub fn total_supplied(&self) -> f64 {
        self.port1_total() + self.port2_total()
    }

    pub fn dissipated_total(&self) -> f64 {
        *self.dissipated.last().unwrap_or(&0.0)
    }

    /// Dissipated energy never decreases along the grid.
    pub fn dissipation_monotone(&self) -> bool {
        self.dissipated.windows(2).all(|w| w[1] >= w[0])
    }
}

pub fn energy_balance(traj: &Trajectory, sys: &PhsSystem) -> EnergyLedger {
    let split = traj.port_split;
    let port1: Vec<f64> = traj.supplied.iter().map(|s| s.rows(0, split).sum()).collect();
    let port2: Vec<f64> = traj
        .supplied
        .iter()
        .map(|s| s.rows(split, s.len() - split).sum())
        .collect();
    let energy_start = sys.hamiltonian(traj.first_state());
    let energy_end = sys.hamiltonian(traj.last_state());
    let supplied = port1.last().unwrap_or(&0.0) + port2.last().unwrap_or(&0.0);
    let dissipated_total = *traj.dissipated.last().unwrap_or(&0.0);
    EnergyLedger {
        times: traj.times.clone(),
        balance_residual: energy_end - energy_start - supplied + dissipated_total,
        port1,
        port2,
        dissipated: traj.dissipated.clone(),
        energy_start,
        energy_end,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn oscillator() -> PhsSystem {
        PhsSystem::builder(2, 1, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]))
            .gradient(|x| DVector::from_column_slice(x))
            .constant_structure(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]))
            .constant_input_map(DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))
            .build()
            .unwrap()
    }

    #[test]
    fn step_count_rules() {
        assert_eq!(step_count(1.0, 1e-3).unwrap(), 1000);
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
        assert!(step_count(1.0, 0.3).is_err());
        assert!(step_count(1.0, 0.0).is_err());
        assert!(step_count(1.0, -0.1).is_err());
    }

    #[test]
    fn grid_and_lengths() {
        let sys = oscillator();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let traj = simulate(&sys, &x0, &InputLaw::zero(1), 1.0, 0.01).unwrap();
        assert_eq!(traj.len(), 101);
        assert_eq!(traj.inputs.len(), 101);
        assert_eq!(traj.supplied.len(), 101);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!((traj.end_time() - 1.0).abs() < 1e-12);
        for (x, y) in traj.states.iter().zip(&traj.outputs) {
            assert_eq!(sys.outputs(x).unwrap(), *y);
        }
    }

    #[test]
    fn zero_input_supplies_nothing() {
        let sys = oscillator();
        let x0 = DVector::from_vec(vec![0.3, -0.7]);
        let traj = simulate(&sys, &x0, &InputLaw::zero(1), 2.0, 0.01).unwrap();
        assert_eq!(supplied_energy(&traj, &PortSelector::All).unwrap(), 0.0);
        assert!(supplied_energy(&traj, &PortSelector::Port2).is_err());
        assert!(supplied_energy(&traj, &PortSelector::Coordinates(vec![3])).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let sys = PhsSystem::builder(1, 1, |x| 0.5 * x[0] * x[0])
            .gradient(|x| DVector::from_column_slice(x))
            .constant_input_map(DMatrix::identity(1, 1))
            .build()
            .unwrap();
        // u = x^3 escapes in finite time from x0 = 1 (t* = 0.5)
        let law = InputLaw::feedback(|_, x| Ok(DVector::from_element(1, x[0].powi(3))));
        let err = simulate(&sys, &DVector::from_element(1, 1.0), &law, 2.0, 1e-3).unwrap_err();
        match err {
            PhsError::BlowUp { time, .. } => assert!(time > 0.4 && time < 0.6, "{time}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_input_is_reported() {
        let sys = oscillator();
        let law = InputLaw::open_loop(|t| DVector::from_element(1, if t > 0.5 { f64::NAN } else { 0.0 }));
        let err = simulate(&sys, &DVector::from_vec(vec![1.0, 0.0]), &law, 1.0, 0.01).unwrap_err();
        assert!(matches!(err, PhsError::NonFinite { quantity: "input", .. }));
    }

    #[test]
    fn append_keeps_ledger_continuous() {
        let sys = oscillator();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let law = InputLaw::constant(DVector::from_element(1, 0.5));
        let whole = simulate(&sys, &x0, &law, 2.0, 0.01).unwrap();
        let mut first = simulate(&sys, &x0, &law, 1.0, 0.01).unwrap();
        first.mark_phase("a");
        let mut second =
            simulate_from(&sys, 1.0, first.last_state(), &law, 1.0, 0.01).unwrap();
        second.mark_phase("b");
        first.append(second).unwrap();
        assert_eq!(first.len(), whole.len());
        assert!((first.last_state() - whole.last_state()).amax() < 1e-12);
        let a = energy_balance(&first, &sys);
        let b = energy_balance(&whole, &sys);
        assert!((a.total_supplied() - b.total_supplied()).abs() < 1e-12);
        assert_eq!(first.phase_at(0), Some("a"));
        assert_eq!(first.phase_at(100), Some("a"));
        assert_eq!(first.phase_at(101), Some("b"));
        assert_eq!(first.phase_range("b"), Some(100..201));
    }
}
