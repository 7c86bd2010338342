//! Scenario configuration files.
//!
//! ```toml
//! s = 0.5
//! duration = 20.0
//! dt = 0.01
//! substep = 0.001
//! x0 = [0.5, -0.5, 0.0]
//! allocator = "ebrca"      # or "rpi"
//! warm_start = true
//!
//! [team]
//! m0 = 0.3
//! j0 = [[5e-3, 0.0, 0.0], [0.0, 5e-3, 0.0], [0.0, 0.0, 9e-3]]
//!
//! [team.limits]
//! sigma_x = 0.5235987755982988
//! sigma_y = 0.7853981633974483
//! sigma_tf = 9.81          # or sigma_omega, rotor speed in rad/s
//!
//! [team.coeffs]
//! rho = 1.225
//! d = 0.1524
//! c_l = 0.1
//!
//! [[team.agents]]
//! position = [0.25, 0.25, 0.0]
//! psi = 1.5707963267948966
//! mass = 0.5
//! # ... one table per agent
//!
//! [gains]
//! k_x = [0.4, 0.4, 1.0]
//! k_r = [12.0, 12.0, 1.0]
//! k_xi = [8.0, 8.0, 1.5, 0.8, 0.8, 2.0]
//!
//! [output]
//! trace = "trace.csv"
//! summary = "summary.json"
//! ```
//!
//! Exactly one of `sigma_tf` and `sigma_omega` is given; the other follows
//! from the thrust law. Units are SI, angles in radians.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actuation::{ActuationLimits, Agent, TeamConfig, ThrustCoefficients};
use crate::controller::Gains;
use crate::dynamics::{AllocatorKind, ScenarioParams};
use crate::frames::{Mat3, Vec3, Vec6};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsFile {
    pub sigma_x: f64,
    pub sigma_y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_tf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub position: [f64; 3],
    pub psi: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamFile {
    pub m0: f64,
    /// Row-major.
    pub j0: [[f64; 3]; 3],
    pub limits: LimitsFile,
    #[serde(default = "default_coeffs")]
    pub coeffs: ThrustCoefficients,
    pub agents: Vec<AgentFile>,
}

fn default_coeffs() -> ThrustCoefficients {
    ThrustCoefficients::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    pub k_x: [f64; 3],
    pub k_r: [f64; 3],
    pub k_xi: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub s: f64,
    pub duration: f64,
    pub dt: f64,
    pub substep: f64,
    pub x0: [f64; 3],
    #[serde(default)]
    pub allocator: AllocatorKind,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default, skip_serializing_if = "is_default_output")]
    pub output: OutputFile,
    pub team: TeamFile,
    pub gains: GainsFile,
}

fn yes() -> bool {
    true
}

fn is_default_output(o: &OutputFile) -> bool {
    *o == OutputFile::default()
}

impl Default for ScenarioConfig {
    /// The default scenario: four-agent inconsistent team, default gains.
    fn default() -> Self {
        Self::from_params(&ScenarioParams::default())
    }
}

impl ScenarioConfig {
    pub fn from_params(p: &ScenarioParams) -> Self {
        let t = &p.team;
        let j0 = [0, 1, 2].map(|r| [0, 1, 2].map(|c| t.j0[(r, c)]));
        Self {
            s: p.s,
            duration: p.duration,
            dt: p.dt,
            substep: p.substep,
            x0: p.x0.into(),
            allocator: p.allocator,
            warm_start: p.warm_start,
            output: OutputFile::default(),
            team: TeamFile {
                m0: t.m0,
                j0,
                limits: LimitsFile {
                    sigma_x: t.limits.sigma_x,
                    sigma_y: t.limits.sigma_y,
                    sigma_tf: Some(t.limits.sigma_tf),
                    sigma_omega: None,
                },
                coeffs: t.coeffs,
                agents: t
                    .agents
                    .iter()
                    .map(|a| AgentFile { position: a.position.into(), psi: a.psi, mass: a.mass })
                    .collect(),
            },
            gains: GainsFile { k_x: p.gains.k_x.into(), k_r: p.gains.k_r.into(), k_xi: p.gains.k_xi.into() },
        }
    }

    /// Parses and validates. Messages carry the offending line when it can be
    /// located.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string().trim_end().to_owned()))?;
        cfg.to_params().map_err(|e| anchor(text, e))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn team(&self) -> Result<TeamConfig> {
        let t = &self.team;
        let l = &t.limits;
        let limits = match (l.sigma_tf, l.sigma_omega) {
            (Some(tf), None) => ActuationLimits::from_max_thrust(l.sigma_x, l.sigma_y, tf, &t.coeffs),
            (None, Some(w)) => ActuationLimits::from_max_speed(l.sigma_x, l.sigma_y, w, &t.coeffs),
            _ => return Err(Error::InvalidConfig("give exactly one of sigma_tf and sigma_omega".into())),
        };
        let team = TeamConfig {
            agents: t
                .agents
                .iter()
                .map(|a| Agent { position: Vec3::from(a.position), psi: a.psi, mass: a.mass })
                .collect(),
            m0: t.m0,
            j0: Mat3::from_fn(|r, c| t.j0[r][c]),
            limits,
            coeffs: t.coeffs,
        };
        team.validate()?;
        Ok(team)
    }

    pub fn gains(&self) -> Result<Gains> {
        let g = Gains { k_x: self.gains.k_x.into(), k_r: self.gains.k_r.into(), k_xi: Vec6::from(self.gains.k_xi) };
        g.validate()?;
        Ok(g)
    }

    pub fn to_params(&self) -> Result<ScenarioParams> {
        let p = ScenarioParams {
            team: self.team()?,
            gains: self.gains()?,
            s: self.s,
            duration: self.duration,
            dt: self.dt,
            substep: self.substep,
            x0: self.x0.into(),
            allocator: self.allocator,
            warm_start: self.warm_start,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Prefixes a validation message with the line of the first key it names.
fn anchor(text: &str, err: Error) -> Error {
    let Error::InvalidConfig(msg) = err else { return err };
    let keys = [
        "sigma_tf", "sigma_omega", "sigma_x", "sigma_y", "substep", "duration", "dt", "x0", "m0", "j0", "psi", "mass",
        "position", "k_x", "k_r", "k_xi", "rho", "c_l", "s", "d",
    ];
    let line = keys.iter().filter(|k| mentions(&msg, k)).find_map(|k| {
        text.lines().position(|l| l.trim_start().strip_prefix(k).is_some_and(|rest| rest.trim_start().starts_with('=')))
    });
    match line {
        Some(i) => Error::InvalidConfig(format!("line {}: {msg}", i + 1)),
        None => Error::InvalidConfig(msg),
    }
}

fn mentions(msg: &str, key: &str) -> bool {
    msg.split(|c: char| !(c.is_alphanumeric() || c == '_')).any(|w| w == key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_exactly() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml();
        let back = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_params().unwrap(), ScenarioParams::default());
    }

    #[test]
    fn awkward_floats_round_trip() {
        let mut cfg = ScenarioConfig { s: 0.1 + 0.2, ..Default::default() };
        cfg.team.m0 = 1.0 / 3.0;
        cfg.team.agents[2].position[0] = -std::f64::consts::E * 1e-7;
        cfg.output.trace = Some("out/trace.csv".into());
        let back = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sigma_omega_derives_thrust() {
        let mut cfg = ScenarioConfig::default();
        let coeffs = cfg.team.coeffs;
        cfg.team.limits.sigma_omega = Some((9.81 / coeffs.gain()).sqrt());
        cfg.team.limits.sigma_tf = None;
        let team = ScenarioConfig::parse(&cfg.to_toml()).unwrap().team().unwrap();
        assert!((team.limits.sigma_tf - 9.81).abs() < 1e-12);
    }

    #[test]
    fn validation_errors_name_the_line() {
        let text = ScenarioConfig::default().to_toml().replace("s = 0.5", "s = 1.5");
        let Err(Error::InvalidConfig(msg)) = ScenarioConfig::parse(&text) else { panic!("accepted s = 1.5") };
        let line = text.lines().position(|l| l.starts_with("s = ")).unwrap() + 1;
        assert!(msg.starts_with(&format!("line {line}:")), "{msg}");

        let text = ScenarioConfig::default().to_toml().replacen("mass = 0.5", "mass = -0.5", 1);
        let Err(Error::InvalidConfig(msg)) = ScenarioConfig::parse(&text) else { panic!("accepted negative mass") };
        assert!(msg.starts_with("line "), "{msg}");
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let Err(Error::InvalidConfig(msg)) = ScenarioConfig::parse("s = 0.5\nduration = [\n") else { panic!() };
        assert!(msg.contains("line"), "{msg}");
        assert!(ScenarioConfig::parse("s = 0.5\nbogus = 1\n").is_err());
    }

    #[test]
    fn both_thrust_limits_is_an_error() {
        let mut cfg = ScenarioConfig::default();
        cfg.team.limits.sigma_omega = Some(100.0);
        assert!(ScenarioConfig::parse(&cfg.to_toml()).is_err());
    }
}
