//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Run with `cargo test -p tvmd-core --test acceptance`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI, TAU};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvmd_core::actuation::{
    agent_force, effectiveness_matrix, hover_stack, inverse_map, team_inertia, wrench_of, ActuationLimits,
    AgentCommand, ForceStack, TeamConfig, ThrustCoefficients,
};
use tvmd_core::afs::{scale_t_tf, AfsCone, AgentAfs};
use tvmd_core::allocation::{ebrca, numerical_rank, truncated_effectiveness, SaturationFlags};
use tvmd_core::controller::{plan_attitude, Reference};
use tvmd_core::dynamics::{
    integrate, run_scenario, RigidBody, ScenarioParams, SimState, Trace, TraceRecord, TILT_END, TILT_START,
};
use tvmd_core::frames::{rodrigues, Mat3, Rotation, Twist, Vec3, Wrench};
use tvmd_core::GRAVITY;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn scenario(s: f64) -> (Trace, Duration) {
    let start = Instant::now();
    let trace = run_scenario(&ScenarioParams { s, ..Default::default() }).expect("scenario runs");
    (trace, start.elapsed())
}

fn max_of(trace: &Trace, f: impl Fn(&TraceRecord) -> f64) -> f64 {
    trace.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
}

fn position_error(r: &TraceRecord) -> f64 {
    (r.x - r.x_r).norm()
}

fn criterion_1(trace: &Trace, elapsed: Duration) -> Outcome {
    let phi = max_of(trace, |r| r.phi_d);
    check(
        "1 planner truncation",
        (0.24..=0.30).contains(&phi) && elapsed < Duration::from_secs(30),
        format!("max phi_d = {phi:.4} rad (want [0.24, 0.30]), runtime {:.2?} (want < 30 s)", elapsed),
    )
}

fn time(t: Option<f64>) -> String {
    t.map_or("never".into(), |t| format!("{t:.2}"))
}

fn criterion_2(trace: &Trace) -> Outcome {
    let e_f = max_of(trace, |r| r.e_f);
    check("2 allocation exactness", e_f <= 1e-6, format!("max e_f = {e_f:.3e} N (want <= 1e-6)"))
}

fn criterion_3(half: &Trace, full: &Trace) -> Outcome {
    let (e_half, e_full) = (max_of(half, |r| r.e_f), max_of(full, |r| r.e_f));
    let phi_max = max_of(full, |r| r.phi_d);
    let first = full.iter().find(|r| r.e_f > 1e-6);
    let near_tilt = first.is_some_and(|r| r.phi_d >= 0.95 * phi_max);
    check(
        "3 relaxation ordering",
        e_full > e_half && near_tilt,
        format!(
            "max e_f s=1: {e_full:.3e}, s=0.5: {e_half:.3e}; first violation at t = {} with phi_d = {:.4} (max {phi_max:.4})",
            time(first.map(|r| r.t)),
            first.map_or(f64::NAN, |r| r.phi_d)
        ),
    )
}

/// Same recursive redistribution, but each stage's step is found by scanning
/// agent membership on a 1e-4 grid and the direction comes from an SVD
/// pseudoinverse.
fn line_search_oracle(u_d: &Wrench, m: &DMatrix<f64>, f0: &ForceStack, afs: &AgentAfs) -> f64 {
    let n = f0.n();
    let target = DVector::from_column_slice(u_d.to_vector().as_slice());
    let mut f = f0.clone();
    let mut free = SaturationFlags::all_free(n);
    let mut c_u = 0.0;
    for _ in 0..(2 * n + 2) {
        let m_eps = truncated_effectiveness(m, &free);
        if !free.any_free() || numerical_rank(&m_eps) < 6 {
            break;
        }
        let residual = &target - m * &f.0;
        let delta = m_eps.pseudo_inverse(1e-12).unwrap() * residual;
        let fails = |c: f64| {
            (0..n).find(|&i| free.0[i] && !afs.contains(&(f.agent(i) + delta.fixed_rows::<3>(3 * i) * c), 0.0))
        };
        let mut step = None;
        for k in 1..=10_000 {
            let c = k as f64 * 1e-4;
            if let Some(i) = fails(c) {
                step = Some(((k - 1) as f64 * 1e-4, i));
                break;
            }
        }
        match step {
            None => return 1.0,
            Some((c, i)) => {
                f.0.axpy(c, &delta, 1.0);
                c_u += (1.0 - c_u) * c;
                free.0[i] = false;
            }
        }
    }
    c_u
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 1e-3 && v.norm() <= 1.0 {
            return v.normalize();
        }
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cfg = TeamConfig::a4_inc();
    let m = effectiveness_matrix(&cfg);
    let afs = AgentAfs::new(cfg.limits);
    let cone = AfsCone::new(&cfg, 0.5).unwrap();
    let f0 = hover_stack(&cfg, GRAVITY);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let (mut worst_a, mut worst_c, mut worst_d) = (0.0f64, 0.0f64, 0.0f64);
    let (mut interior, mut infeasible, mut infeasible_b) = (0, 0, 0usize);
    let mut all_feasible = true;
    let mut interior_exact = true;

    for k in 0..1000 {
        let u_d = if k % 2 == 0 {
            // zero-torque force inside the relaxed cone
            loop {
                let z = rng.random_range(0.5..cone.max_thrust());
                let (cx, cy) = cone.semi_axes(z);
                let (r, a) = (rng.random_range(0.0..1.0f64).sqrt(), rng.random_range(0.0..TAU));
                let u = Vec3::new(r * cx * a.cos(), r * cy * a.sin(), z);
                if cone.contains(&u) {
                    break Wrench::force(u);
                }
            }
        } else {
            let tau = Vec3::from_fn(|_, _| rng.random_range(-6.0..6.0));
            let f = random_unit(&mut rng) * rng.random_range(0.0..3.0 * cone.max_thrust());
            Wrench::new(tau, f)
        };
        let r = ebrca(&u_d, &m, &f0, SaturationFlags::all_free(4), &afs).unwrap();
        let norm = u_d.to_vector().norm();
        let achieved = wrench_of(&m, &ForceStack(&r.f.0 - &f0.0)).to_vector();
        let requested = u_d.to_vector() - wrench_of(&m, &f0).to_vector();
        worst_c = worst_c.max((achieved - requested * r.c_u).norm() / norm.max(1.0));
        all_feasible &= r.f.agents().all(|f| afs.contains(&f, 1e-9));

        if k % 2 == 0 {
            interior += 1;
            let err = (wrench_of(&m, &r.f).to_vector() - u_d.to_vector()).norm() / norm;
            worst_a = worst_a.max(err);
            interior_exact &= r.c_u == 1.0;
        } else if r.c_u < 1.0 {
            infeasible += 1;
            let oracle = line_search_oracle(&u_d, &m, &f0, &afs);
            let gap = (r.c_u - oracle).abs();
            if gap > 2e-4 {
                infeasible_b += 1;
            }
            worst_d = worst_d.max(gap);
        }
    }
    let elapsed = start.elapsed();
    check(
        "4 EBRCA property suite",
        interior_exact
            && worst_a <= 1e-9
            && all_feasible
            && worst_c <= 1e-9
            && infeasible_b == 0
            && elapsed < Duration::from_secs(60),
        format!(
            "(a) {interior} interior, c_u=1 for all: {interior_exact}, worst rel err {worst_a:.2e}; (b) feasible: {all_feasible}; \
             (c) worst direction err {worst_c:.2e}; (d) {infeasible} saturated, worst |c_u - oracle| {worst_d:.2e}, \
             {infeasible_b} over 2e-4; runtime {elapsed:.2?}"
        ),
    )
}

fn random_in_afs(rng: &mut ChaCha8Rng, limits: &ActuationLimits, coeffs: &ThrustCoefficients) -> Vec3 {
    let cmd = AgentCommand {
        eta_x: rng.random_range(-limits.sigma_x..=limits.sigma_x),
        eta_y: rng.random_range(-limits.sigma_y..=limits.sigma_y),
        omega: limits.sigma_omega * rng.random_range(0.0..1.0f64).sqrt(),
    };
    agent_force(&cmd, coeffs)
}

/// Membership scan on a 4000-point grid, then bisection of the first failing
/// interval.
fn bisection_exit(a: &AgentAfs, f0: &Vec3, d: &Vec3) -> f64 {
    let c_max = 2.0 * a.limits.sigma_tf / d.norm();
    let inside = |c: f64| a.contains(&(f0 + d * c), 0.0);
    let (mut lo, mut hi) = (0.0, c_max);
    for i in 1..=4000 {
        let c = c_max * i as f64 / 4000.0;
        if !inside(c) {
            hi = c;
            break;
        }
        lo = c;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_5() -> Outcome {
    let coeffs = ThrustCoefficients::default();
    let mut worst = 0.0f64;
    let mut convex_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for (sx, sy) in [(FRAC_PI_6, FRAC_PI_4), (FRAC_PI_6, FRAC_PI_2)] {
        let limits = ActuationLimits::from_max_thrust(sx, sy, 9.81, &coeffs);
        let a = AgentAfs::new(limits);
        for _ in 0..1000 {
            let f0 = random_in_afs(&mut rng, &limits, &coeffs);
            let d = random_unit(&mut rng) * limits.sigma_tf * rng.random_range(0.1..3.0);
            let hit = a.boundary_increment(&f0, &d).unwrap();
            worst = worst.max((hit.c - bisection_exit(&a, &f0, &d)).abs());
            convex_ok &= (0..=100).all(|j| a.contains(&(f0 + d * (hit.c * j as f64 / 100.0)), 1e-9));
        }
    }
    check(
        "5 boundary intersection",
        worst <= 1e-6 && convex_ok,
        format!("worst |c - oracle| = {worst:.2e} over 2x1000 rays (want <= 1e-6); segment inside: {convex_ok}"),
    )
}

fn criterion_6() -> Outcome {
    let cfg = TeamConfig::a4_inc();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let f = random_in_afs(&mut rng, &cfg.limits, &cfg.coeffs);
        let back = agent_force(&inverse_map(&f, &cfg.coeffs).unwrap(), &cfg.coeffs);
        worst = worst.max((back - f).amax());
    }
    check("6 inverse round trip", worst <= 1e-12, format!("worst component error {worst:.2e} N (want <= 1e-12)"))
}

fn criterion_7(trace: &Trace) -> Outcome {
    let reached = trace.iter().find(|r| position_error(r) < 0.05).map(|r| r.t);
    let body = RigidBody::of_team(&TeamConfig::a4_inc()).unwrap();
    let start = SimState::at_rest(Vec3::new(0.0, 0.0, 1.5));
    let end = integrate(&start, &Wrench::force(Vec3::new(0.0, 0.0, body.mass * GRAVITY)), &body, 10.0, 1e-3);
    let drift = (end.x - start.x).norm();
    check(
        "7 hover convergence",
        reached.is_some_and(|t| t <= 10.0) && drift <= 1e-9,
        format!("|e_x| < 0.05 m first at t = {} s (want <= 10); hover drift {drift:.2e} m (want <= 1e-9)", time(reached)),
    )
}

fn criterion_8() -> Outcome {
    let (mass, inertia) = team_inertia(&TeamConfig::a4_inc());
    let body = RigidBody::new(mass, inertia, 0.0).unwrap();
    let start = SimState {
        xi: Twist::new(Vec3::new(1.2, -0.7, 2.0), Vec3::new(0.3, 0.1, -0.2)),
        ..SimState::at_rest(Vec3::zeros())
    };
    let coarse = integrate(&start, &Wrench::default(), &body, 10.0, 1e-3);
    let fine = integrate(&start, &Wrench::default(), &body, 10.0, 5e-4);
    let diff = (coarse.x - fine.x).norm()
        + (coarse.r.matrix() - fine.r.matrix()).norm()
        + (coarse.xi.to_vector() - fine.xi.to_vector()).norm();
    let e0 = body.kinetic_energy(&start.xi);
    let drift = ((body.kinetic_energy(&coarse.xi) - e0) / e0).abs();
    check(
        "8 integrator order",
        diff < 1e-8 && drift <= 1e-6,
        format!("step-halving change {diff:.2e} (want < 1e-8); relative energy drift {drift:.2e} (want <= 1e-6)"),
    )
}

fn criterion_9() -> Outcome {
    let cfg = TeamConfig::a4_inc();
    let cone = AfsCone::new(&cfg, 0.5).unwrap();
    let (mass, _) = team_inertia(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut worst, mut all_feasible, mut cases) = (0.0f64, true, 0);
    while cases < 500 {
        let tilt_axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
        if tilt_axis.norm() < 1e-3 {
            continue;
        }
        let r_r = Rotation::from_axis_angle(&nalgebra::Unit::new_normalize(tilt_axis), rng.random_range(0.3..1.4))
            * Rotation::from_axis_angle(&Vec3::z_axis(), rng.random_range(-PI..PI));
        let f_world = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), mass * GRAVITY)
            * rng.random_range(0.5..2.5);
        let r_c = Rotation::from_axis_angle(&Vec3::x_axis(), rng.random_range(-0.3..0.3));
        let u_fr = r_c.transpose() * f_world;
        let f_r = f_world * scale_t_tf(&u_fr, &cone);
        if cone.contains(&(r_r.transpose() * f_r)) {
            continue;
        }
        cases += 1;
        let out = plan_attitude(&Reference::hold(Vec3::zeros(), r_r), &u_fr, &cone, &r_c);
        all_feasible &= cone.contains_with_slack(&(out.r_d.transpose() * f_r), 1e-6);
        worst = worst.max((out.theta_star - grid_theta(&r_r, &f_r, &cone)).abs());
    }
    check(
        "9 planner oracle",
        worst <= 2e-4 && all_feasible,
        format!("worst |theta* - grid| = {worst:.2e} rad over 500 cases (want <= 2e-4); all feasible: {all_feasible}"),
    )
}

/// Smallest feasible tilt on a 1e-5 rad grid, building the candidate frame
/// the same way the planner does.
fn grid_theta(r_r: &Rotation, f_r: &Vec3, cone: &AfsCone) -> f64 {
    let m = r_r.matrix();
    let (b_x, b_z): (Vec3, Vec3) = (m.column(0).into(), m.column(2).into());
    let f_hat = f_r.normalize();
    let axis = b_z.cross(&f_hat).normalize();
    let theta_max = b_z.dot(&f_hat).clamp(-1.0, 1.0).acos();
    let steps = (theta_max / 1e-5).ceil() as usize;
    for k in 0..=steps {
        let theta = (k as f64 * 1e-5).min(theta_max);
        let z = rodrigues(&b_z, &axis, theta).unwrap();
        let y = z.cross(&b_x).normalize();
        let r = Mat3::from_columns(&[y.cross(&z), y, z]);
        if cone.contains(&(r.transpose() * f_r)) {
            return theta;
        }
    }
    theta_max
}

/// Closed-loop properties of the default run beyond the numbered criteria.
fn invariants(trace: &Trace) -> Vec<Outcome> {
    let stage_b = trace.iter().filter(|r| (TILT_START..=TILT_END).contains(&r.t));
    let worst_b = stage_b.clone().map(position_error).fold(0.0, f64::max);
    let reached = trace.iter().find(|r| position_error(r) < 0.05).map(|r| r.t);
    let held = reached.is_some_and(|t| t <= 12.0)
        && trace.iter().filter(|r| r.t >= reached.unwrap() && r.t <= TILT_END).all(|r| position_error(r) < 0.05);

    let samples: Vec<&TraceRecord> = trace.iter().step_by(100).collect();
    let stages = [(0.0, 4.0), (4.0, 10.0), (10.0, 20.0)];
    let mut worst_rise = (0.0f64, 0.0);
    for (a, b) in stages {
        // the first second of each segment is treated as transient
        let seg: Vec<&&TraceRecord> = samples.iter().filter(|r| r.t >= a + 1.0 && r.t < b).collect();
        for w in seg.windows(2) {
            let rise = w[1].v_x / w[0].v_x - 1.0;
            if rise > worst_rise.0 {
                worst_rise = (rise, w[1].t);
            }
        }
    }

    let ortho = max_of(trace, |r| r.ortho_err);
    let admissible = trace.iter().all(|r| r.feasible);
    vec![
        check(
            "inv position hold through tilt",
            held,
            format!("|e_x| < 0.05 m from t = {} kept until t = {TILT_END}: {held}; worst |e_x| in tilt stage {worst_b:.3} m", time(reached)),
        ),
        check(
            "inv V_x non-increasing (1 Hz, 5%)",
            worst_rise.0 <= 0.05,
            format!("largest sampled rise {:.1}% at t = {} s", 100.0 * worst_rise.0, worst_rise.1),
        ),
        check("inv attitude orthonormal", ortho <= 1e-6, format!("worst defect {ortho:.2e}")),
        check("inv allocation admissible", admissible, format!("every tick admissible: {admissible}")),
    ]
}

fn main() {
    let (half, elapsed) = scenario(0.5);
    let (full, _) = scenario(1.0);
    let mut outcomes = vec![
        criterion_1(&half, elapsed),
        criterion_2(&half),
        criterion_3(&half, &full),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(&half),
        criterion_8(),
        criterion_9(),
    ];
    outcomes.extend(invariants(&half));

    let mut failed = 0;
    for o in &outcomes {
        println!("{} {:<36} {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
