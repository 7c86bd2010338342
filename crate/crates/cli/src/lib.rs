//! Command implementations behind the `tvmd` binary.
//!
//! Each command returns a [`CliError`] that knows its process exit code:
//! 1 for configuration or input validation, 2 for runtime and allocation
//! failures.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use tvmd_core::actuation::{effectiveness_matrix, hover_stack, inverse_map, wrench_of, ForceStack, TeamConfig};
use tvmd_core::afs::{AfsCone, AgentAfs};
use tvmd_core::allocation::{ebrca, SaturationFlags};
use tvmd_core::config::ScenarioConfig;
use tvmd_core::dynamics::{run_scenario, ScenarioParams, Trace, TraceRecord};
use tvmd_core::frames::{Vec3, Wrench};
use tvmd_core::{Error, GRAVITY};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidInput(_) => Self::Validation(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Loads the scenario file, or the built-in default scenario when no path is
/// given.
pub fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    match path {
        Some(p) => Ok(ScenarioConfig::load(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

/// One CSV row per trace record.
#[derive(Debug, Serialize)]
struct TraceRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    roll: f64,
    pitch: f64,
    yaw: f64,
    omega_x: f64,
    omega_y: f64,
    omega_z: f64,
    vel_x: f64,
    vel_y: f64,
    vel_z: f64,
    x_r: f64,
    y_r: f64,
    z_r: f64,
    phi_r: f64,
    phi_d: f64,
    tau_x: f64,
    tau_y: f64,
    tau_z: f64,
    f_x: f64,
    f_y: f64,
    f_z: f64,
    e_f: f64,
    c_u: f64,
    v_r: f64,
    v_x: f64,
    ortho_err: f64,
    feasible: bool,
}

impl From<&TraceRecord> for TraceRow {
    fn from(r: &TraceRecord) -> Self {
        Self {
            t: r.t,
            x: r.x.x,
            y: r.x.y,
            z: r.x.z,
            roll: r.euler.x,
            pitch: r.euler.y,
            yaw: r.euler.z,
            omega_x: r.omega.x,
            omega_y: r.omega.y,
            omega_z: r.omega.z,
            vel_x: r.v.x,
            vel_y: r.v.y,
            vel_z: r.v.z,
            x_r: r.x_r.x,
            y_r: r.x_r.y,
            z_r: r.x_r.z,
            phi_r: r.phi_r,
            phi_d: r.phi_d,
            tau_x: r.u_d.tau.x,
            tau_y: r.u_d.tau.y,
            tau_z: r.u_d.tau.z,
            f_x: r.u_d.f.x,
            f_y: r.u_d.f.y,
            f_z: r.u_d.f.z,
            e_f: r.e_f,
            c_u: r.c_u,
            v_r: r.v_r,
            v_x: r.v_x,
            ortho_err: r.ortho_err,
            feasible: r.feasible,
        }
    }
}

pub const TRACE_HEADER: &[&str] = &[
    "t", "x", "y", "z", "roll", "pitch", "yaw", "omega_x", "omega_y", "omega_z", "vel_x", "vel_y", "vel_z", "x_r",
    "y_r", "z_r", "phi_r", "phi_d", "tau_x", "tau_y", "tau_z", "f_x", "f_y", "f_z", "e_f", "c_u", "v_r", "v_x",
    "ortho_err", "feasible",
];

pub fn write_trace<W: Write>(trace: &Trace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    // serde only emits the header with the first record
    if trace.is_empty() {
        w.write_record(TRACE_HEADER)?;
    }
    for r in trace {
        w.serialize(TraceRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub s: f64,
    pub ticks: usize,
    pub max_e_f: f64,
    pub max_phi_d: f64,
    pub final_e_x: f64,
    /// `[t, V_x]` at 1 Hz.
    #[serde(rename = "V_x_samples")]
    pub v_x_samples: Vec<[f64; 2]>,
    /// `[t, V_R]` at 1 Hz.
    #[serde(rename = "V_R_samples")]
    pub v_r_samples: Vec<[f64; 2]>,
    /// Wall-clock seconds.
    pub runtime: f64,
}

pub fn summarize(trace: &Trace, s: f64, dt: f64, runtime: f64) -> Summary {
    let every = ((1.0 / dt).round() as usize).max(1);
    let max = |f: fn(&TraceRecord) -> f64| trace.iter().map(f).fold(0.0, f64::max);
    Summary {
        s,
        ticks: trace.len(),
        max_e_f: max(|r| r.e_f),
        max_phi_d: max(|r| r.phi_d),
        final_e_x: trace.last().map_or(0.0, |r| (r.x - r.x_r).norm()),
        v_x_samples: trace.iter().step_by(every).map(|r| [r.t, r.v_x]).collect(),
        v_r_samples: trace.iter().step_by(every).map(|r| [r.t, r.v_r]).collect(),
        runtime,
    }
}

/// Output file names for one run, `trace.csv`/`summary.json` by default or
/// the names given in the config, suffixed with the relaxation in sweeps.
pub fn output_paths(cfg: &ScenarioConfig, out_dir: &Path, sweep_tag: Option<f64>) -> (PathBuf, PathBuf) {
    let name = |given: &Option<String>, default: &str| -> PathBuf {
        let base = PathBuf::from(given.as_deref().unwrap_or(default));
        match sweep_tag {
            None => base,
            Some(s) => {
                let stem = base.file_stem().and_then(|x| x.to_str()).unwrap_or("out").to_owned();
                let ext = base.extension().and_then(|x| x.to_str()).unwrap_or("");
                base.with_file_name(format!("{stem}_s{s}.{ext}"))
            }
        }
    };
    (out_dir.join(name(&cfg.output.trace, "trace.csv")), out_dir.join(name(&cfg.output.summary, "summary.json")))
}

/// Runs one scenario and writes its trace and summary.
pub fn simulate_one(params: &ScenarioParams, trace_path: &Path, summary_path: &Path) -> Result<Summary, CliError> {
    let start = Instant::now();
    let trace = run_scenario(params)?;
    let summary = summarize(&trace, params.s, params.dt, start.elapsed().as_secs_f64());
    for p in [trace_path, summary_path] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    let file = File::create(trace_path).map_err(io_err(trace_path))?;
    write_trace(&trace, io::BufWriter::new(file))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", trace_path.display())))?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(summary_path, json + "\n").map_err(io_err(summary_path))?;
    Ok(summary)
}

/// Runs the scenario once per relaxation on worker threads. Results keep the
/// order of `values`.
pub fn simulate_sweep(
    cfg: &ScenarioConfig,
    base: &ScenarioParams,
    values: &[f64],
    out_dir: &Path,
) -> Result<Vec<Summary>, CliError> {
    let mut runs = Vec::with_capacity(values.len());
    for &s in values {
        let params = ScenarioParams { s, ..base.clone() };
        params.validate()?;
        runs.push((params, output_paths(cfg, out_dir, Some(s))));
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|(p, (trace, summary))| scope.spawn(move || simulate_one(p, trace, summary)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentReport {
    pub force: [f64; 3],
    pub eta_x: f64,
    pub eta_y: f64,
    pub omega: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationReport {
    pub agents: Vec<AgentReport>,
    pub c_u: f64,
    pub iterations: usize,
    /// Wrench actually produced, torque first.
    pub achieved: [f64; 6],
}

/// Starting stack for a single-shot allocation.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialStack {
    Hover,
    Zero,
    Given(Vec<f64>),
}

impl std::str::FromStr for InitialStack {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hover" => Ok(Self::Hover),
            "zero" => Ok(Self::Zero),
            list => list
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad stack entry {v:?}: {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map(Self::Given),
        }
    }
}

pub fn allocate(team: &TeamConfig, wrench: [f64; 6], initial: &InitialStack) -> Result<AllocationReport, CliError> {
    if wrench.iter().any(|w| !w.is_finite()) {
        return Err(CliError::Validation("wrench entries must be finite".into()));
    }
    let n = team.n();
    let f0 = match initial {
        InitialStack::Hover => hover_stack(team, GRAVITY),
        InitialStack::Zero => ForceStack::zeros(n),
        InitialStack::Given(v) if v.len() == 3 * n => ForceStack(DVector::from_column_slice(v)),
        InitialStack::Given(v) => {
            return Err(CliError::Validation(format!("initial stack needs {} entries, got {}", 3 * n, v.len())))
        }
    };
    let m = effectiveness_matrix(team);
    let afs = AgentAfs::new(team.limits);
    let u_d = Wrench::new(Vec3::new(wrench[0], wrench[1], wrench[2]), Vec3::new(wrench[3], wrench[4], wrench[5]));
    let r = ebrca(&u_d, &m, &f0, SaturationFlags::all_free(n), &afs)?;
    let agents = r
        .f
        .agents()
        .zip(&r.flags.0)
        .map(|(f, &free)| {
            let cmd = inverse_map(&f, &team.coeffs)?;
            Ok(AgentReport { force: f.into(), eta_x: cmd.eta_x, eta_y: cmd.eta_y, omega: cmd.omega, saturated: !free })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let achieved = wrench_of(&m, &r.f).to_vector();
    Ok(AllocationReport { agents, c_u: r.c_u, iterations: r.iterations, achieved: achieved.into() })
}

/// Human-readable allocation report, angles in degrees.
pub fn format_allocation(report: &AllocationReport) -> String {
    let mut s = String::new();
    for (i, a) in report.agents.iter().enumerate() {
        s += &format!(
            "agent {i}: f = ({:+.4}, {:+.4}, {:+.4}) N  eta_x = {:+.2} deg  eta_y = {:+.2} deg  omega = {:.1} rad/s{}\n",
            a.force[0],
            a.force[1],
            a.force[2],
            a.eta_x.to_degrees(),
            a.eta_y.to_degrees(),
            a.omega,
            if a.saturated { "  [saturated]" } else { "" }
        );
    }
    s += &format!("c_u = {}\niterations = {}\n", report.c_u, report.iterations);
    s
}

#[derive(Debug, Serialize)]
struct SampleRow {
    fx: f64,
    fy: f64,
    fz: f64,
    in_cone: bool,
    ebrca_reachable: bool,
}

/// Samples team forces at each height and reports cone membership and
/// whether the allocator reaches the force exactly (zero torque, from hover).
/// Each level gets the on-axis point followed by `count` random points in a
/// box a quarter wider than the unrelaxed cross-section.
pub fn afs_sample<W: Write>(
    team: &TeamConfig,
    s: f64,
    z_levels: &[f64],
    count: usize,
    seed: u64,
    out: W,
) -> Result<(), CliError> {
    let cone = AfsCone::new(team, s)?;
    let full = cone.with_relaxation(1.0)?;
    let m = effectiveness_matrix(team);
    let afs = AgentAfs::new(team.limits);
    let hover = hover_stack(team, GRAVITY);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = csv::Writer::from_writer(out);

    for &z in z_levels {
        if !z.is_finite() {
            return Err(CliError::Validation(format!("z level must be finite, got {z}")));
        }
        let (cx, cy) = full.semi_axes(z);
        let (hx, hy) = (1.25 * cx.max(0.1 * z.abs()).max(1e-3), 1.25 * cy.max(0.1 * z.abs()).max(1e-3));
        let points = std::iter::once(Vec3::new(0.0, 0.0, z))
            .chain((0..count).map(|_| Vec3::new(rng.random_range(-hx..=hx), rng.random_range(-hy..=hy), z)))
            .collect::<Vec<_>>();
        for f in points {
            let reachable = ebrca(&Wrench::force(f), &m, &hover, SaturationFlags::all_free(team.n()), &afs)
                .map(|r| r.c_u == 1.0)
                .map_err(CliError::from)?;
            let row = SampleRow { fx: f.x, fy: f.y, fz: f.z, in_cone: cone.contains(&f), ebrca_reachable: reachable };
            match w.serialize(row) {
                Err(e) if is_broken_pipe(&e) => return Ok(()),
                r => r.map_err(|e| CliError::Runtime(e.to_string()))?,
            }
        }
    }
    match w.flush() {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Runtime(e.to_string())),
        _ => Ok(()),
    }
}

fn is_broken_pipe(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::BrokenPipe)
}
