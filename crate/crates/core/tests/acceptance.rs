//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Randomized criteria draw from `PHS_LAB_SEED` (decimal)
//! when set.

use std::f64::consts::{E, PI};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use phs_lab::carnot::*;
use phs_lab::constraints::theorem2_audit;
use phs_lab::coupling::*;
use phs_lab::integrator::default_closure_eps;
use phs_lab::legendre::*;
use phs_lab::models::*;
use phs_lab::storage::*;
use phs_lab::{energy_balance, simulate, InputLaw, Result, TwoPortPhs, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn seed() -> u64 {
    std::env::var("PHS_LAB_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(20_240_611)
}

fn rng(offset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed().wrapping_add(offset))
}

fn v(xs: &[f64]) -> Vector {
    DVector::from_column_slice(xs)
}

fn ac1() -> Result<Outcome> {
    let started = Instant::now();
    let p = GasPistonParams::default();
    let sys = make_gas_piston(p)?;
    let (_, r) = run_cycle(&sys, &gas_piston_schedule(&p, 400.0, 300.0, 1e-3, 2e-3, 1.0, 1e-3))?;
    let elapsed = started.elapsed().as_secs_f64();
    let q_hot = p.n_mol * p.r_gas * 400.0 * 2f64.ln();
    let w = q_hot * (1.0 - 300.0 / 400.0);
    let pass = (r.heat_hot - 2305.15).abs() <= 0.005 * 2305.15
        && (r.heat_hot - q_hot).abs() <= 0.005 * q_hot
        && (r.work_out - 576.29).abs() <= 0.01 * 576.29
        && (r.work_out - w).abs() <= 0.01 * w
        && (r.efficiency_measured - 0.25).abs() <= 0.01
        && elapsed < 10.0;
    outcome(
        pass,
        format!(
            "heat_hot={:.4} J work_out={:.4} J efficiency={:.6} runtime={elapsed:.2}s",
            r.heat_hot, r.work_out, r.efficiency_measured
        ),
    )
}

fn ac2() -> Result<Outcome> {
    let p = GasPistonParams::default();
    let sys = make_gas_piston(p)?;
    let (traj, r) = run_cycle(&sys, &gas_piston_schedule(&p, 400.0, 300.0, 1e-3, 2e-3, 1.0, 1e-3))?;
    let check = stirling_identity_check(&r, &energy_balance(&traj, &sys.embed()));
    outcome(
        check.residual < 1e-3 * r.heat_hot,
        format!("|W - (Qh + Qc)| = {:.3e} J (limit {:.3e})", check.residual, 1e-3 * r.heat_hot),
    )
}

fn ac3() -> Result<Outcome> {
    let p = ActuatorParams::default();
    let sys = make_actuator(p)?;
    let (i_a, i_b) = (2.0, 1.0);
    let (q0, q1) = (0.2, 0.1);
    let (traj, r) = run_cycle(&sys, &actuator_schedule(p.mass, i_a, i_b, q0, q1, 1.0, 1e-3))?;
    let hot = traj.phase_range(PHASE_ISO_HOT).expect("hot phase");
    let phi_a = traj.states[hot.start][0];
    let phi_b = traj.states[hot.end - 1][0];
    let e_a = i_a * (phi_b - phi_a);
    let rel = (r.heat_hot - e_a).abs() / e_a.abs();
    let pass = (r.efficiency_measured - (1.0 - i_b / i_a)).abs() <= 0.02 && rel < 1e-6;
    outcome(
        pass,
        format!(
            "efficiency={:.6} E_a={:.6} J I_a(phi_b-phi_a)={e_a:.6} J rel.err={rel:.2e}",
            r.efficiency_measured, r.heat_hot
        ),
    )
}

fn ac4() -> Result<Outcome> {
    let (m, k, d) = (2.0, 3.0, 1.0);
    let cert = msd_lmi_storage(m, k, d)?;
    let q = cert.q.clone().expect("quadratic certificate");
    let q_err = (&q - DMatrix::from_row_slice(2, 2, &[k, 0.0, 0.0, 1.0 / m])).amax();
    let params = MsdParams { m, k, d };
    let sys = make_msd(params)?;
    let mut rng = rng(4);
    let mut runs = Vec::new();
    for _ in 0..100 {
        let x0 = v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let modes: Vec<(f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(0.2..5.0)))
            .collect();
        let law = InputLaw::open_loop(move |t| {
            DVector::from_element(1, modes.iter().map(|(a, w)| a * (w * t).sin()).sum())
        });
        runs.push(simulate(&sys, &x0, &law, 5.0, 1e-2)?);
    }
    let peak = runs.iter().flat_map(|t| t.energies.iter().copied()).fold(0.0, f64::max);
    let cert = cert.audited(&runs);
    let tol = 1e-7 * peak;
    let pass = q_err <= 1e-12 && cert.unique && cert.negative_semidefinite && cert.passes(tol);
    outcome(
        pass,
        format!(
            "Q error={q_err:.1e} unique={} worst violation={:.2e} J (limit {tol:.2e})",
            cert.unique,
            cert.audit.unwrap_or(f64::NAN)
        ),
    )
}

fn isothermal_audit(
    sys: &TwoPortPhs,
    shape: &ShapeCoordinate,
    e1: f64,
    start: f64,
    turn: f64,
    duration: f64,
    x1_guess: f64,
) -> Result<phs_lab::constraints::Theorem2Audit> {
    let traj = isothermal_loop(sys, shape, e1, &v(&[start, 0.0]), turn, duration, 1e-3, &v(&[x1_guess]))?;
    let ledger = energy_balance(&traj, &sys.embed());
    Ok(theorem2_audit(&traj, &ledger, 1e-6 * e1.abs(), default_closure_eps(&traj.states[0]), 1e-6))
}

fn ac5() -> Result<Outcome> {
    let mut rng = rng(5);
    let gp = GasPistonParams::default();
    let gas = make_gas_piston(gp)?;
    let ap = ActuatorParams::default();
    let act = make_actuator(ap)?;
    let mut failures = 0;
    let mut worst_port1 = 0.0f64;
    let mut min_port2 = f64::INFINITY;
    for i in 0..20 {
        let duration = rng.gen_range(1000..3000) as f64 * 1e-3;
        let audit = if i % 2 == 0 {
            let t = rng.gen_range(280.0..450.0);
            let v0 = rng.gen_range(0.8e-3..1.5e-3);
            let turn = v0 * rng.gen_range(0.5..2.0);
            isothermal_audit(&gas, &ShapeCoordinate::gas_piston(&gp), t, v0, turn, duration, gp.s_ref)?
        } else {
            let i_level = rng.gen_range(0.5..2.5);
            let q0 = rng.gen_range(0.05..0.3);
            let turn = q0 * rng.gen_range(0.3..1.5);
            isothermal_audit(&act, &ShapeCoordinate::actuator(ap.mass), i_level, q0, turn, duration, 0.0)?
        };
        worst_port1 = worst_port1.max(audit.port1_integral.abs() / audit.energy_scale);
        min_port2 = min_port2.min(audit.port2_integral / audit.energy_scale);
        if !(audit.applicable && audit.passes() && audit.port1_vanishes) {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!(
            "20 cycles, {failures} failing; max |port-1|/scale={worst_port1:.2e}, min port-2/scale={min_port2:.2e}"
        ),
    )
}

fn ac6() -> Result<Outcome> {
    let sys = make_scalar_exp()?;
    let mut rng = rng(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let duration = rng.gen_range(500..3000) as f64 * 1e-3;
        let modes: Vec<(f64, f64)> = (1..=3)
            .map(|k| (rng.gen_range(-2.0..2.0), 2.0 * PI * k as f64 / duration))
            .collect();
        // Whole periods only, so ∫u dt = 0 and the motion is closed.
        let law = InputLaw::open_loop(move |t| {
            DVector::from_element(1, modes.iter().map(|(a, w)| a * (w * t).sin()).sum())
        });
        let x0 = rng.gen_range(-1.0..1.0);
        let traj = simulate(&sys, &v(&[x0]), &law, duration, 1e-3)?;
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
        &v(&[1.0]),
        &v(&[0.0]),
        &ScalarRampFamily::default(),
        1e-9,
        Some(scalar_available_storage(1.0)),
    )?;
    let bound_err = (est.s_ac_lower - (E - 1.0)).abs().max((est.s_rc_upper - (E - 1.0)).abs());
    outcome(
        worst < 1e-8 && est.valid && bound_err < 1e-6,
        format!("max relative cyclic supply={worst:.2e}, bound error={bound_err:.2e}"),
    )
}

fn ac7() -> Result<Outcome> {
    let mut rng = rng(7);
    let gp = GasPistonParams::default();
    let gas = make_gas_piston(gp)?;
    let act = make_actuator(ActuatorParams::default())?;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let e1 = v(&[rng.gen_range(250.0..500.0)]);
        let x2 = v(&[rng.gen_range(5e-4..3e-3), rng.gen_range(-1.0..1.0)]);
        let pt = partial_legendre(&gas, &e1, &x2, &v(&[gp.s_ref]))?;
        let (a, b) = verify_legendre_identities(&gas, &pt)?.relative();
        worst = worst.max(a).max(b);

        let e1 = v(&[rng.gen_range(-3.0..3.0)]);
        let x2 = v(&[rng.gen_range(0.0..0.5), rng.gen_range(-1.0..1.0)]);
        let pt = partial_legendre(&act, &e1, &x2, &v(&[0.0]))?;
        let (a, b) = verify_legendre_identities(&act, &pt)?.relative();
        worst = worst.max(a).max(b);
    }
    let quad = TwoPortPhs::builder(
        1,
        1,
        1,
        |x1, x2| x1[0] * x1[0] + 0.5 * x1[0] * x2[0] + 0.75 * x2[0] * x2[0],
        DMatrix::identity(1, 1),
    )
    .gradient(|x1, x2| v(&[2.0 * x1[0] + 0.5 * x2[0], 0.5 * x1[0] + 1.5 * x2[0]]))
    .build()?;
    let mut involution = 0.0f64;
    for _ in 0..20 {
        let x = v(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
        involution = involution.max(involution_check(&quad, &x)?.max_error());
        let x = v(&[rng.gen_range(-2.0..2.0), rng.gen_range(0.0..0.5), rng.gen_range(-1.0..1.0)]);
        involution = involution.max(involution_check(&act, &x)?.max_error());
    }
    outcome(
        worst < 1e-5 && involution < 1e-8,
        format!("max identity residual={worst:.2e} (relative), max involution error={involution:.2e}"),
    )
}

fn ac8() -> Result<Outcome> {
    let scenario = RouterScenario::default();
    let run = router_scenario(&scenario)?;
    let steps = run.trajectory.len() - 1;
    let drift = run.total_energy_drift();
    // dH₂/dt = ‖y₁‖²‖y₂‖² + y₂ᵀv₂ at every grid point.
    let min_rate = run
        .trajectory
        .outputs
        .iter()
        .zip(&run.trajectory.inputs)
        .map(|(y, u)| y[0] * y[0] * y[1] * y[1] + y[1] * u[1])
        .fold(f64::INFINITY, f64::min);
    let target = 0.5 * run.h_a[0];
    let reached = run.h_b.iter().position(|&h| h >= target).map(|i| run.trajectory.times[i]);
    let pass = steps >= 100_000 && drift < 1e-8 && min_rate >= -1e-12 && reached.is_some();
    outcome(
        pass,
        format!(
            "{steps} steps, drift={drift:.2e}, min dH2/dt={min_rate:.2e}, H2 >= H1(0)/2 at t={} s (horizon {} s)",
            reached.map_or("never".to_string(), |t| format!("{t:.3}")),
            scenario.horizon
        ),
    )
}

fn ac9() -> Result<Outcome> {
    let design = ida_pbc_actuator(Inductance::reciprocal(1.0, 0.05), 0.1)?;
    let mut rng = rng(9);
    let samples: Vec<Vector> = (0..1000)
        .map(|_| v(&[rng.gen_range(-2.0..2.0), rng.gen_range(0.0..5.0), rng.gen_range(-3.0..3.0)]))
        .collect();
    let residual = design.matching_residual(&samples)?;
    let mut doubling = 0.0f64;
    for x in &samples {
        let kinetic = x[2] * x[2] / (2.0 * design.mass());
        let open = design.plant_energy(x[0], x[1], x[2])? - kinetic;
        let shaped = design.h_d(x[0], x[1], x[2])? - kinetic;
        doubling = doubling.max((shaped - 2.0 * open).abs() / (1.0 + open.abs()));
    }
    outcome(
        residual < 1e-9 && doubling < 1e-14,
        format!("max matching residual={residual:.2e}, magnetic doubling error={doubling:.2e}"),
    )
}

fn ac10() -> Result<Outcome> {
    let p = HeatExchangerParams::default();
    let sys = make_heat_exchanger(p)?;
    let (t1, t2) = (300.0, 400.0);
    let (s1, s2) = p.entropies(t1, t2);
    let x0 = v(&[s1, s2]);
    let rate = sys.eval_dynamics(&x0, &DVector::zeros(2))?;
    let rate_err = (rate[0] - p.lambda * (t2 - t1) / t1)
        .abs()
        .max((rate[1] - p.lambda * (t1 - t2) / t2).abs());
    let traj = simulate(&sys, &x0, &InputLaw::zero(2), 200.0, 0.01)?;
    let e0 = traj.energies[0];
    let drift = traj.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0;
    let production_ok = traj
        .states
        .windows(2)
        .all(|w| w[1][0] + w[1][1] >= w[0][0] + w[0][1]);
    outcome(
        rate_err < 1e-10 && drift < 1e-9 && production_ok,
        format!("rate error={rate_err:.1e}, energy drift={drift:.1e}, entropy non-decreasing={production_ok}"),
    )
}

fn ac11() -> Result<Outcome> {
    let sys = make_msd(MsdParams { m: 1.0, k: 1.0, d: 1.0 })?;
    let law = InputLaw::open_loop(|t| v(&[(3.0 * t).sin()]));
    let residual = |h: f64| -> Result<f64> {
        let traj = simulate(&sys, &v(&[1.0, 0.0]), &law, 5.0, h)?;
        Ok(energy_balance(&traj, &sys).balance_residual.abs())
    };
    let (coarse, fine) = (residual(0.1)?, residual(0.05)?);
    let ratio = coarse / fine;
    outcome(
        (ratio - 16.0).abs() <= 0.2 * 16.0,
        format!("residual h=0.1: {coarse:.3e}, h=0.05: {fine:.3e}, ratio={ratio:.2}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 11] = [
        ("AC-1 Carnot efficiency (gas piston)", ac1),
        ("AC-2 Stirling identity", ac2),
        ("AC-3 Actuator efficiency", ac3),
        ("AC-4 LMI storage certificate", ac4),
        ("AC-5 Constant-output cycle audit", ac5),
        ("AC-6 Scalar path independence", ac6),
        ("AC-7 Legendre identities", ac7),
        ("AC-8 Router power identities", ac8),
        ("AC-9 IDA-PBC matching", ac9),
        ("AC-10 Heat exchanger", ac10),
        ("AC-11 Integrator order", ac11),
    ];
    println!("seed {}", seed());
    let mut failed = 0;
    for (name, check) in criteria {
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
