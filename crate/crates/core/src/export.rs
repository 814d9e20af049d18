//! Plain-text serialization of trajectories.
//!
//! CSV columns: `t`, one column per state label, `u_<port>` and
//! `y_<port>` per port coordinate, `H`, the cumulative supplied energy of
//! each port (`E_port1`, `E_port2`) and the phase label. Numbers are
//! written with 17 significant digits so they round-trip exactly.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde_json::{json, Value};

use crate::integrator::Trajectory;
use crate::system::Labels;

fn number(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_header(labels: &Labels) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend(labels.states.iter().map(|l| l.name.clone()));
    cols.extend(labels.ports.iter().map(|l| format!("u_{}", l.name)));
    cols.extend(labels.ports.iter().map(|l| format!("y_{}", l.name)));
    cols.extend(["H", "E_port1", "E_port2", "phase"].map(String::from));
    cols.join(",")
}

/// Writes the trajectory as CSV, one row per grid point.
pub fn write_csv(out: &mut dyn Write, traj: &Trajectory, labels: &Labels) -> io::Result<()> {
    writeln!(out, "{}", csv_header(labels))?;
    let split = traj.port_split;
    let mut row = String::new();
    for i in 0..traj.len() {
        row.clear();
        row.push_str(&number(traj.times[i]));
        let values = traj.states[i]
            .iter()
            .chain(traj.inputs[i].iter())
            .chain(traj.outputs[i].iter());
        for v in values {
            write!(row, ",{}", number(*v)).expect("writing to a String");
        }
        let s = &traj.supplied[i];
        let e1 = s.rows(0, split).sum();
        let e2 = s.rows(split, s.len() - split).sum();
        for v in [traj.energies[i], e1, e2] {
            write!(row, ",{}", number(v)).expect("writing to a String");
        }
        write!(row, ",{}", traj.phase_at(i).unwrap_or("")).expect("writing to a String");
        writeln!(out, "{row}")?;
    }
    Ok(())
}

pub fn csv_string(traj: &Trajectory, labels: &Labels) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, traj, labels).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// Summary of a trajectory for JSON reports (keys come out sorted).
pub fn trajectory_summary(traj: &Trajectory) -> Value {
    let last = traj.supplied.last().expect("trajectory is never empty");
    let split = traj.port_split;
    json!({
        "closure_error": traj.closure_error(),
        "dissipated": traj.dissipated.last(),
        "energy_end": traj.energies.last(),
        "energy_start": traj.energies[0],
        "port1_supplied": last.rows(0, split).sum(),
        "port2_supplied": last.rows(split, last.len() - split).sum(),
        "samples": traj.len(),
        "step": traj.step,
        "t_end": traj.end_time(),
        "x_end": traj.last_state().iter().copied().collect::<Vec<f64>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{simulate, InputLaw};
    use crate::models::{make_msd, MsdParams};
    use nalgebra::DVector;

    #[test]
    fn csv_layout() {
        let sys = make_msd(MsdParams::default()).unwrap();
        let mut traj = simulate(
            &sys,
            &DVector::from_vec(vec![1.0, 0.0]),
            &InputLaw::constant(DVector::from_element(1, 0.5)),
            0.01,
            0.005,
        )
        .unwrap();
        traj.mark_phase("run");
        let csv = csv_string(&traj, sys.labels());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,q,p,u_force,y_force,H,E_port1,E_port2,phase");
        assert_eq!(lines.len(), 4);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first.len(), 9);
        assert_eq!(first[1].parse::<f64>().unwrap(), 1.0);
        assert_eq!(first[8], "run");
        let t: f64 = lines[3].split(',').next().unwrap().parse().unwrap();
        assert_eq!(t, traj.times[2]);
    }
}
