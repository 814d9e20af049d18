//! Model construction from the `[model]` section of a scenario file.

use phs_lab::models::*;
use phs_lab::{PhsSystem, TwoPortPhs};

use crate::config::Config;
use crate::error::CliError;

const SECTION: &str = "model";

pub fn msd_params(cfg: &Config) -> Result<MsdParams, CliError> {
    let d = MsdParams::default();
    Ok(MsdParams {
        m: cfg.get_or(SECTION, "m", d.m)?,
        k: cfg.get_or(SECTION, "k", d.k)?,
        d: cfg.get_or(SECTION, "d", d.d)?,
    })
}

pub fn gas_params(cfg: &Config) -> Result<GasPistonParams, CliError> {
    let d = GasPistonParams::default();
    Ok(GasPistonParams {
        n_mol: cfg.get_or(SECTION, "n_mol", d.n_mol)?,
        c_v: cfg.get_or(SECTION, "c_v", d.c_v)?,
        r_gas: cfg.get_or(SECTION, "r_gas", d.r_gas)?,
        area: cfg.get_or(SECTION, "area", d.area)?,
        mass: cfg.get_or(SECTION, "mass", d.mass)?,
        s_ref: cfg.get_or(SECTION, "s_ref", d.s_ref)?,
        v_ref: cfg.get_or(SECTION, "v_ref", d.v_ref)?,
        t_ref: cfg.get_or(SECTION, "t_ref", d.t_ref)?,
    })
}

pub fn actuator_params(cfg: &Config) -> Result<ActuatorParams, CliError> {
    let d = ActuatorParams::default();
    Ok(ActuatorParams {
        l0: cfg.get_or(SECTION, "l0", d.l0)?,
        a: cfg.get_or(SECTION, "a", d.a)?,
        mass: cfg.get_or(SECTION, "mass", d.mass)?,
    })
}

pub fn heat_exchanger_params(cfg: &Config) -> Result<HeatExchangerParams, CliError> {
    let d = HeatExchangerParams::default();
    Ok(HeatExchangerParams {
        lambda: cfg.get_or(SECTION, "lambda", d.lambda)?,
        c1: cfg.get_or(SECTION, "c1", d.c1)?,
        c2: cfg.get_or(SECTION, "c2", d.c2)?,
        t_ref: cfg.get_or(SECTION, "t_ref", d.t_ref)?,
    })
}

/// A model from the scenario file, with its two-port form when it has one.
pub struct Model {
    pub kind: String,
    pub system: PhsSystem,
    pub two_port: Option<TwoPortPhs>,
}

pub fn build(cfg: &Config) -> Result<Model, CliError> {
    let kind = cfg.require_str(SECTION, "kind")?.to_string();
    let (system, two_port) = match kind.as_str() {
        "msd" => (make_msd(msd_params(cfg)?)?, None),
        "scalar" => (make_scalar_exp()?, None),
        "heat_exchanger" => (make_heat_exchanger(heat_exchanger_params(cfg)?)?, None),
        "gas_piston" => {
            let sys = make_gas_piston(gas_params(cfg)?)?;
            (sys.embed(), Some(sys))
        }
        "actuator" => {
            let sys = make_actuator(actuator_params(cfg)?)?;
            (sys.embed(), Some(sys))
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown model kind `{other}` (expected msd, scalar, heat_exchanger, gas_piston or actuator)"
            )))
        }
    };
    Ok(Model {
        kind,
        system,
        two_port,
    })
}
