use std::f64::consts::{E, PI};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use phs_lab::carnot::{
    actuator_schedule, gas_piston_schedule, isothermal_loop, run_cycle, stirling_identity_check,
    ShapeCoordinate,
};
use phs_lab::constraints::theorem2_audit;
use phs_lab::coupling::{ida_pbc_actuator, router_scenario, RouterCoupling, RouterScenario};
use phs_lab::export::{csv_string, trajectory_summary};
use phs_lab::integrator::default_closure_eps;
use phs_lab::legendre::{involution_check, partial_legendre, verify_legendre_identities};
use phs_lab::models::*;
use phs_lab::storage::{
    msd_lmi_storage, sampled_storage_bounds, scalar_available_storage, MsdRampFamily,
    ScalarRampFamily,
};
use phs_lab::{energy_balance, simulate, InputLaw, TwoPortPhs, Vector};

use crate::config::Config;
use crate::error::CliError;
use crate::models::{self, Model};

pub const DEFAULT_SEED: u64 = 20_240_611;

/// What a command produced: a JSON report, optionally a trajectory CSV,
/// and the reason the run's own audit failed, if it did.
pub struct Outcome {
    pub report: Value,
    pub csv: Option<String>,
    pub audit_failure: Option<String>,
}

impl Outcome {
    fn new(report: Value) -> Self {
        Self {
            report,
            csv: None,
            audit_failure: None,
        }
    }

    fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }

    fn require(mut self, ok: bool, reason: impl FnOnce() -> String) -> Self {
        if !ok && self.audit_failure.is_none() {
            self.audit_failure = Some(reason());
        }
        self
    }
}

/// `PHS_LAB_SEED` as a decimal integer, or the built-in default.
pub fn seed() -> Result<u64, CliError> {
    match std::env::var("PHS_LAB_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("PHS_LAB_SEED must be a decimal integer, got `{s}`"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn vector(xs: &[f64]) -> Vector {
    DVector::from_column_slice(xs)
}

fn input_law(cfg: &Config, m: usize) -> Result<InputLaw, CliError> {
    let kind = cfg.get_str("input", "kind").unwrap_or("zero");
    let check = |v: Vec<f64>, key: &str| -> Result<Vector, CliError> {
        if v.len() != m {
            return Err(CliError::Config(format!(
                "[input] {key} needs {m} values, got {}",
                v.len()
            )));
        }
        Ok(DVector::from_vec(v))
    };
    match kind {
        "zero" => Ok(InputLaw::zero(m)),
        "constant" => Ok(InputLaw::constant(check(cfg.require_list("input", "value")?, "value")?)),
        "sine" => {
            let amplitude = check(cfg.require_list("input", "amplitude")?, "amplitude")?;
            let offset = match cfg.get_str("input", "offset") {
                Some(_) => check(cfg.require_list("input", "offset")?, "offset")?,
                None => DVector::zeros(m),
            };
            let frequency: f64 = cfg.require("input", "frequency")?;
            let w = 2.0 * PI * frequency;
            Ok(InputLaw::open_loop(move |t| &offset + &amplitude * (w * t).sin()))
        }
        other => Err(CliError::Config(format!(
            "unknown input kind `{other}` (expected zero, constant or sine)"
        ))),
    }
}

fn initial_state(cfg: &Config, model: &Model) -> Result<Vector, CliError> {
    if model.kind == "heat_exchanger" && cfg.get_str("initial", "temperatures").is_some() {
        let t = cfg.require_list("initial", "temperatures")?;
        if t.len() != 2 {
            return Err(CliError::Config("[initial] temperatures needs 2 values".into()));
        }
        let (s1, s2) = models::heat_exchanger_params(cfg)?.entropies(t[0], t[1]);
        return Ok(vector(&[s1, s2]));
    }
    let x = cfg.require_list("initial", "state")?;
    if x.len() != model.system.n() {
        return Err(CliError::Config(format!(
            "[initial] state needs {} values for model `{}`, got {}",
            model.system.n(),
            model.kind,
            x.len()
        )));
    }
    Ok(DVector::from_vec(x))
}

pub fn simulate_cmd(cfg: &Config) -> Result<Outcome, CliError> {
    let model = models::build(cfg)?;
    let x0 = initial_state(cfg, &model)?;
    let law = input_law(cfg, model.system.m())?;
    let duration: f64 = cfg.require("run", "duration")?;
    let step: f64 = cfg.require("run", "step")?;
    let mut traj = simulate(&model.system, &x0, &law, duration, step)?;
    traj.mark_phase("run");
    let ledger = energy_balance(&traj, &model.system);
    let mut report = trajectory_summary(&traj);
    report["balance_residual"] = json!(ledger.balance_residual);
    report["model"] = json!(model.kind);
    let csv = csv_string(&traj, model.system.labels());
    let limit: Option<f64> = cfg.get("audit", "max_balance_residual")?;
    let residual = ledger.balance_residual;
    Ok(Outcome::new(report).with_csv(csv).require(
        limit.is_none_or(|l| residual.abs() <= l),
        || format!("balance residual {residual:e} exceeds {}", limit.unwrap_or_default()),
    ))
}

fn two_port(model: &Model) -> Result<&TwoPortPhs, CliError> {
    model.two_port.as_ref().ok_or_else(|| {
        CliError::Config(format!(
            "model `{}` has no two-port form (use gas_piston or actuator)",
            model.kind
        ))
    })
}

pub fn carnot_cmd(cfg: &Config) -> Result<Outcome, CliError> {
    let model = models::build(cfg)?;
    let sys = two_port(&model)?;
    let e1_hot: f64 = cfg.require("cycle", "e1_hot")?;
    let e1_cold: f64 = cfg.require("cycle", "e1_cold")?;
    let start: f64 = cfg.require("cycle", "start")?;
    let hot_end: f64 = cfg.require("cycle", "hot_end")?;
    let duration: f64 = cfg.get_or("cycle", "phase_duration", 1.0)?;
    let step: f64 = cfg.get_or("cycle", "step", 1e-3)?;
    let schedule = match model.kind.as_str() {
        "gas_piston" => gas_piston_schedule(&models::gas_params(cfg)?, e1_hot, e1_cold, start, hot_end, duration, step),
        _ => actuator_schedule(models::actuator_params(cfg)?.mass, e1_hot, e1_cold, start, hot_end, duration, step),
    };
    let (traj, report) = run_cycle(sys, &schedule)?;
    let ledger = energy_balance(&traj, &model.system);
    let stirling = stirling_identity_check(&report, &ledger);
    let mut json = report.to_json();
    json["model"] = json!(model.kind);
    json["stirling_residual"] = json!(stirling.residual);
    let csv = csv_string(&traj, sys.labels());
    let slack = report.inequality_slack;
    Ok(Outcome::new(json)
        .with_csv(csv)
        .require(report.satisfies_work_bound(), || {
            format!("work exceeds the heat bound (slack {slack:e} J)")
        }))
}

pub fn storage_lmi_cmd(m: f64, k: f64, d: f64, audit_runs: usize) -> Result<Outcome, CliError> {
    let cert = msd_lmi_storage(m, k, d)?;
    let params = MsdParams { m, k, d };
    let sys = make_msd(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed()?);
    let mut runs = Vec::with_capacity(audit_runs);
    for _ in 0..audit_runs {
        let x0 = vector(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let modes: Vec<(f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(0.2..5.0)))
            .collect();
        let law = InputLaw::open_loop(move |t| {
            DVector::from_element(1, modes.iter().map(|(a, w)| a * (w * t).sin()).sum())
        });
        runs.push(simulate(&sys, &x0, &law, 5.0, 1e-2)?);
    }
    let peak = runs
        .iter()
        .flat_map(|t| t.energies.iter().copied())
        .fold(0.0, f64::max);
    let tol = 1e-7 * peak.max(f64::MIN_POSITIVE);
    let cert = if audit_runs > 0 { cert.audited(&runs) } else { cert };
    let nsd = cert.negative_semidefinite;
    let passes = audit_runs == 0 || cert.passes(tol);
    let mut report = cert.to_json();
    report["audit_runs"] = json!(audit_runs);
    Ok(Outcome::new(report)
        .require(nsd, || "A^T Q + Q A is not negative semidefinite".into())
        .require(passes, || format!("dissipation inequality violated beyond {tol:e} J")))
}

pub fn storage_bounds_cmd(cfg: &Config) -> Result<Outcome, CliError> {
    let model = models::build(cfg)?;
    let x = DVector::from_vec(cfg.require_list("bounds", "x")?);
    let x_star = DVector::from_vec(cfg.require_list("bounds", "x_star")?);
    let closure_eps: f64 = cfg.get_or("bounds", "closure_eps", 1e-6)?;
    let estimate = match model.kind.as_str() {
        "scalar" => {
            let closed = (x.len() == 1).then(|| scalar_available_storage(x[0]));
            sampled_storage_bounds(&model.system, &x, &x_star, &ScalarRampFamily::default(), closure_eps, closed)?
        }
        "msd" => {
            let family = MsdRampFamily::new(models::msd_params(cfg)?);
            sampled_storage_bounds(&model.system, &x, &x_star, &family, closure_eps, None)?
        }
        other => {
            return Err(CliError::Config(format!(
                "storage bounds need model kind scalar or msd, got `{other}`"
            )))
        }
    };
    let mut report = estimate.to_json();
    report["energy_difference"] = json!(model.system.hamiltonian(&x) - model.system.hamiltonian(&x_star));
    report["model"] = json!(model.kind);
    let valid = estimate.valid;
    let ordered = estimate.is_ordered(1e-9);
    Ok(Outcome::new(report)
        .require(valid, || "no trial reached the target state".into())
        .require(ordered, || "lower bound exceeds upper bound".into()))
}

pub fn router_cmd(cfg: Option<&Config>, no_kick: bool) -> Result<Outcome, CliError> {
    let mut s = RouterScenario::default();
    if let Some(cfg) = cfg {
        let list2 = |key: &str, default: [f64; 2]| -> Result<[f64; 2], CliError> {
            match cfg.get_str("router", key) {
                None => Ok(default),
                Some(_) => {
                    let v = cfg.require_list("router", key)?;
                    <[f64; 2]>::try_from(v)
                        .map_err(|_| CliError::Config(format!("[router] {key} needs 2 values")))
                }
            }
        };
        s.a.m = cfg.get_or("router", "mass_a", s.a.m)?;
        s.a.k = cfg.get_or("router", "stiffness_a", s.a.k)?;
        s.b.m = cfg.get_or("router", "mass_b", s.b.m)?;
        s.b.k = cfg.get_or("router", "stiffness_b", s.b.k)?;
        s.xa0 = list2("state_a", s.xa0)?;
        s.xb0 = list2("state_b", s.xb0)?;
        s.horizon = cfg.get_or("router", "horizon", s.horizon)?;
        s.step = cfg.get_or("router", "step", s.step)?;
        let (force, duration) = s.kick.unwrap_or((0.0, 0.0));
        let force = cfg.get_or("router", "kick_force", force)?;
        let duration = cfg.get_or("router", "kick_duration", duration)?;
        s.kick = (force != 0.0 && duration > 0.0).then_some((force, duration));
    }
    if no_kick {
        s.kick = None;
    }
    let run = router_scenario(&s)?;
    let coupling = RouterCoupling::new(make_msd(s.a)?, make_msd(s.b)?)?;
    let composite = phs_lab::coupling::compose_router(&coupling)?;
    let target = 0.5 * run.h_a[0];
    let half_time = run
        .h_b
        .iter()
        .position(|&h| h >= target)
        .map(|i| run.trajectory.times[i]);
    let drift = run.total_energy_drift();
    let decrease = run.h_b_max_decrease();
    let report = json!({
        "energy_drift": drift,
        "energy_moved": run.energy_moved(),
        "h_a_end": run.h_a.last(),
        "h_a_start": run.h_a[0],
        "h_b_end": run.h_b.last(),
        "h_b_max_decrease": decrease,
        "h_b_start": run.h_b[0],
        "half_transfer_time": half_time,
        "horizon": s.horizon,
        "kick": s.kick.map(|(f, d)| vec![f, d]),
        "steps": run.trajectory.len() - 1,
    });
    let csv = csv_string(&run.trajectory, composite.labels());
    Ok(Outcome::new(report)
        .with_csv(csv)
        .require(drift < 1e-8, || format!("total energy drift {drift:e}"))
        .require(decrease <= 1e-12, || format!("H2 decreased by {decrease:e}")))
}

pub fn ida_pbc_cmd(cfg: Option<&Config>) -> Result<Outcome, CliError> {
    let (params, samples) = match cfg {
        Some(c) => (models::actuator_params(c)?, c.get_or("check", "samples", 1000usize)?),
        None => (ActuatorParams::default(), 1000),
    };
    if !(params.l0 > 0.0 && params.a > 0.0) {
        return Err(CliError::Config(format!(
            "l0 and a must be positive, got {} and {}",
            params.l0, params.a
        )));
    }
    let design = ida_pbc_actuator(params.inductance(), params.mass)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed()?);
    let states: Vec<Vector> = (0..samples)
        .map(|_| {
            vector(&[
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.0..5.0),
                rng.gen_range(-3.0..3.0),
            ])
        })
        .collect();
    let residual = design.matching_residual(&states)?;
    let doubling = design.magnetic_doubling_residual(&states)?;
    let equivalence = design.feedback_equivalence(
        |phi, q| design.alpha(phi, q).unwrap_or(f64::NAN),
        &states,
        1e-12,
    )?;
    let report = json!({
        "direct_vs_jd": equivalence.direct_vs_jd,
        "direct_vs_shaped": equivalence.direct_vs_shaped,
        "magnetic_doubling_residual": doubling,
        "matching_residual": residual,
        "samples": samples,
        "shaped_agreeing_samples": equivalence.agreeing,
    });
    Ok(Outcome::new(report)
        .require(residual < 1e-9, || format!("matching residual {residual:e}"))
        .require(equivalence.direct_vs_jd < 1e-9, || {
            "direct feedback does not reproduce J_d".into()
        }))
}

pub fn audit_cmd(cfg: &Config) -> Result<Outcome, CliError> {
    let kind = cfg.require_str("audit", "kind")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed()?);
    match kind {
        "theorem2" => theorem2(cfg, &mut rng),
        "legendre" => legendre(cfg, &mut rng),
        "integrator_order" => integrator_order(),
        "heat_exchanger" => heat_exchanger(cfg),
        "path_independence" => path_independence(cfg, &mut rng),
        other => Err(CliError::Config(format!(
            "unknown audit kind `{other}` (expected theorem2, legendre, integrator_order, heat_exchanger or path_independence)"
        ))),
    }
}

fn theorem2(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let model = models::build(cfg)?;
    let sys = two_port(&model)?;
    let cycles: usize = cfg.get_or("audit", "cycles", 10)?;
    let step: f64 = cfg.get_or("audit", "step", 1e-3)?;
    let mut failures = Vec::new();
    let mut worst_port1 = 0.0f64;
    let mut min_port2 = f64::INFINITY;
    for i in 0..cycles {
        let duration = rng.gen_range(1000..3000) as f64 * step;
        let (shape, e1, start, turn, guess) = if model.kind == "gas_piston" {
            let p = models::gas_params(cfg)?;
            let v0 = rng.gen_range(0.8e-3..1.5e-3);
            (ShapeCoordinate::gas_piston(&p), rng.gen_range(280.0..450.0), v0, v0 * rng.gen_range(0.5..2.0), p.s_ref)
        } else {
            let p = models::actuator_params(cfg)?;
            let q0 = rng.gen_range(0.05..0.3);
            (ShapeCoordinate::actuator(p.mass), rng.gen_range(0.5..2.5), q0, q0 * rng.gen_range(0.3..1.5), 0.0)
        };
        let traj = isothermal_loop(sys, &shape, e1, &vector(&[start, 0.0]), turn, duration, step, &vector(&[guess]))?;
        let ledger = energy_balance(&traj, &model.system);
        let audit = theorem2_audit(&traj, &ledger, 1e-6 * e1.abs(), default_closure_eps(&traj.states[0]), 1e-6);
        worst_port1 = worst_port1.max(audit.port1_integral.abs() / audit.energy_scale);
        min_port2 = min_port2.min(audit.port2_integral / audit.energy_scale);
        if !(audit.applicable && audit.passes() && audit.port1_vanishes) {
            failures.push(i);
        }
    }
    let report = json!({
        "cycles": cycles,
        "failing_cycles": failures,
        "kind": "theorem2",
        "max_relative_port1": worst_port1,
        "min_relative_port2": min_port2,
        "model": model.kind,
    });
    let n = failures.len();
    Ok(Outcome::new(report).require(n == 0, || format!("{n} of {cycles} cycles failed")))
}

fn legendre(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let model = models::build(cfg)?;
    let sys = two_port(&model)?;
    let samples: usize = cfg.get_or("audit", "samples", 100)?;
    let mut identity = 0.0f64;
    let mut involution = 0.0f64;
    for _ in 0..samples {
        let (e1, x2, guess) = if model.kind == "gas_piston" {
            let p = models::gas_params(cfg)?;
            (rng.gen_range(250.0..500.0), vector(&[rng.gen_range(5e-4..3e-3), rng.gen_range(-1.0..1.0)]), p.s_ref)
        } else {
            (rng.gen_range(-3.0..3.0), vector(&[rng.gen_range(0.0..0.5), rng.gen_range(-1.0..1.0)]), 0.0)
        };
        let pt = partial_legendre(sys, &vector(&[e1]), &x2, &vector(&[guess]))?;
        let (a, b) = verify_legendre_identities(sys, &pt)?.relative();
        identity = identity.max(a).max(b);
        if model.kind == "actuator" {
            involution = involution.max(involution_check(sys, &pt.state(sys))?.max_error());
        }
    }
    let report = json!({
        "kind": "legendre",
        "max_identity_residual": identity,
        "max_involution_error": (model.kind == "actuator").then_some(involution),
        "model": model.kind,
        "samples": samples,
    });
    Ok(Outcome::new(report)
        .require(identity < 1e-5, || format!("identity residual {identity:e}"))
        .require(involution < 1e-8, || format!("involution error {involution:e}")))
}

fn integrator_order() -> Result<Outcome, CliError> {
    let sys = make_msd(MsdParams { m: 1.0, k: 1.0, d: 1.0 })?;
    let law = InputLaw::open_loop(|t| vector(&[(3.0 * t).sin()]));
    let residual = |h: f64| -> Result<f64, CliError> {
        let traj = simulate(&sys, &vector(&[1.0, 0.0]), &law, 5.0, h)?;
        Ok(energy_balance(&traj, &sys).balance_residual.abs())
    };
    let (coarse, fine) = (residual(0.1)?, residual(0.05)?);
    let ratio = coarse / fine;
    let report = json!({
        "kind": "integrator_order",
        "ratio": ratio,
        "residual_coarse": coarse,
        "residual_fine": fine,
    });
    Ok(Outcome::new(report).require((ratio - 16.0).abs() <= 3.2, || format!("step-halving ratio {ratio}")))
}

fn heat_exchanger(cfg: &Config) -> Result<Outcome, CliError> {
    let p = models::heat_exchanger_params(cfg)?;
    let sys = make_heat_exchanger(p)?;
    let t = cfg.require_list("initial", "temperatures")?;
    if t.len() != 2 {
        return Err(CliError::Config("[initial] temperatures needs 2 values".into()));
    }
    let (s1, s2) = p.entropies(t[0], t[1]);
    let x0 = vector(&[s1, s2]);
    let rate = sys.eval_dynamics(&x0, &DVector::zeros(2))?;
    let rate_error = (rate[0] - p.lambda * (t[1] - t[0]) / t[0])
        .abs()
        .max((rate[1] - p.lambda * (t[0] - t[1]) / t[1]).abs());
    let duration: f64 = cfg.get_or("run", "duration", 200.0)?;
    let step: f64 = cfg.get_or("run", "step", 0.01)?;
    let traj = simulate(&sys, &x0, &InputLaw::zero(2), duration, step)?;
    let e0 = traj.energies[0];
    let drift = traj.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0;
    let min_production = traj
        .states
        .windows(2)
        .map(|w| (w[1][0] + w[1][1]) - (w[0][0] + w[0][1]))
        .fold(f64::INFINITY, f64::min);
    let report = json!({
        "energy_drift": drift,
        "kind": "heat_exchanger",
        "min_entropy_production": min_production,
        "rate_error": rate_error,
    });
    Ok(Outcome::new(report)
        .require(rate_error < 1e-10, || format!("rate error {rate_error:e}"))
        .require(drift < 1e-9, || format!("energy drift {drift:e}"))
        .require(min_production >= 0.0, || "entropy decreased".into()))
}

fn path_independence(cfg: &Config, rng: &mut ChaCha8Rng) -> Result<Outcome, CliError> {
    let sys = make_scalar_exp()?;
    let runs: usize = cfg.get_or("audit", "runs", 100)?;
    let mut worst = 0.0f64;
    for _ in 0..runs {
        let duration = rng.gen_range(500..3000) as f64 * 1e-3;
        let modes: Vec<(f64, f64)> = (1..=3)
            .map(|k| (rng.gen_range(-2.0..2.0), 2.0 * PI * k as f64 / duration))
            .collect();
        let law = InputLaw::open_loop(move |t| {
            DVector::from_element(1, modes.iter().map(|(a, w)| a * (w * t).sin()).sum())
        });
        let traj = simulate(&sys, &vector(&[rng.gen_range(-1.0..1.0)]), &law, duration, 1e-3)?;
        let cyclic = traj.supplied.last().expect("non-empty")[0];
        let peak_y = traj.outputs.iter().map(|y| y[0].abs()).fold(0.0, f64::max);
        let abs_u: f64 = traj
            .inputs
            .windows(2)
            .map(|w| 0.5 * traj.step * (w[0][0].abs() + w[1][0].abs()))
            .sum();
        worst = worst.max(cyclic.abs() / (peak_y * abs_u));
    }
    let est = sampled_storage_bounds(
        &sys,
        &vector(&[1.0]),
        &vector(&[0.0]),
        &ScalarRampFamily::default(),
        1e-9,
        Some(scalar_available_storage(1.0)),
    )?;
    let bound_error = (est.s_ac_lower - (E - 1.0)).abs().max((est.s_rc_upper - (E - 1.0)).abs());
    let report = json!({
        "bound_error": bound_error,
        "kind": "path_independence",
        "max_relative_cyclic_supply": worst,
        "runs": runs,
    });
    Ok(Outcome::new(report)
        .require(worst < 1e-8, || format!("cyclic supply {worst:e}"))
        .require(bound_error < 1e-6, || format!("bound error {bound_error:e}")))
}
