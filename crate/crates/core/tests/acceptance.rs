//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::Instant;

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use invsep::closed_loop::{
    closed_loop_error_rate, controller_error_rate, linearize_along, observer_error_rate,
    separation_matrix, simulate, time_invariance_probe, Scenario,
};
use invsep::config::{load_config, ScenarioConfig};
use invsep::controller::{ctrl_loop_matrix, ControllerGains};
use invsep::ekf::ekf_time_invariance_probe;
use invsep::lie::{normalize_angle, Pose};
use invsep::mech::{lemma1_probe, EpSystem, ForceModel};
use invsep::numerics::{eigenvalues, jacobian_fd, Spectrum, DEFAULT_FD_STEP};
use invsep::observer::{
    body_frame_landmarks, correction_matrix, gain_matrix, obs_error_matrix, ObserverGains,
};
use invsep::robot::{dynamics, invariance_residual, LandmarkSet, RobotInput};
use invsep::trajectory::{PermanentTrajectory, Reference};

struct Gate {
    failures: usize,
}

impl Gate {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!(
            "{} criterion {id}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.failures += 1;
        }
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn random_landmarks(rng: &mut ChaCha8Rng) -> LandmarkSet {
    loop {
        let p = rng.gen_range(3..7);
        let pts: Vec<[f64; 2]> = (0..p)
            .map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)])
            .collect();
        if let Ok(lm) = LandmarkSet::new(pts) {
            return lm;
        }
    }
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    Pose::new(
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-PI..PI),
    )
}

fn roots_of_unit_quadratic() -> [Complex64; 3] {
    let h = 3.0f64.sqrt() / 2.0;
    [
        Complex64::new(-1.0, 0.0),
        Complex64::new(-0.5, h),
        Complex64::new(-0.5, -h),
    ]
}

fn circle() -> Reference {
    PermanentTrajectory::new(1.0, 0.5, Pose::identity())
        .unwrap()
        .into()
}

fn criterion_1(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let g0 = random_pose(&mut rng);
        let x = random_pose(&mut rng);
        let inp = RobotInput::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let lm = random_landmarks(&mut rng);
        worst = worst.max(invariance_residual(&g0, &x, &inp, &lm));
    }
    let secs = start.elapsed().as_secs_f64();
    g.check(
        "1",
        worst < 1e-9 && secs < 1.0,
        format!(
            "max invariance residual {worst:.3e} (< 1e-9) over 100 samples in {secs:.3} s (< 1 s)"
        ),
    );
}

fn criterion_2(g: &mut Gate) {
    let mut worst = 0.0f64;
    for (traj, t_end) in [
        (
            PermanentTrajectory::new(1.3, 0.0, Pose::new(1.0, -2.0, 0.4)).unwrap(),
            20.0,
        ),
        (
            PermanentTrajectory::new(1.0, 0.5, Pose::new(0.5, 0.5, -1.0)).unwrap(),
            4.0 * PI,
        ),
    ] {
        let h = 1e-4;
        for k in 0..1000 {
            let t = t_end * k as f64 / 999.0;
            let (a, b) = (traj.pose(t + h), traj.pose(t - h));
            let fd = [
                (a.x - b.x) / (2.0 * h),
                (a.y - b.y) / (2.0 * h),
                normalize_angle(a.theta - b.theta) / (2.0 * h),
            ];
            let f = dynamics(&traj.pose(t), &traj.reference_input());
            for i in 0..3 {
                worst = worst.max((fd[i] - f[i]).abs());
            }
        }
    }
    let c = PermanentTrajectory::new(1.0, 0.5, Pose::new(0.5, 0.5, -1.0)).unwrap();
    let closure = c
        .pose(2.0 * PI / (1.0f64 * 0.5).abs())
        .distance(&c.pose(0.0));
    g.check(
        "2",
        worst < 1e-8 && closure < 1e-10,
        format!("dynamics residual {worst:.3e} (< 1e-8) on line and circle, circle closure {closure:.3e} (< 1e-10)"),
    );
}

fn criterion_3(g: &mut Gate) {
    let kg = ControllerGains::default();
    let og = ObserverGains::default();
    let expected = Spectrum::new(roots_of_unit_quadratic().to_vec());
    let ctrl = ctrl_loop_matrix(1.0, 0.5, &kg);
    let obs = obs_error_matrix(1.0, 0.5, &og);
    let ctrl_err = eigenvalues(&ctrl).unwrap().max_mismatch(&expected).unwrap();
    let obs_err = eigenvalues(&obs).unwrap().max_mismatch(&expected).unwrap();

    let ctrl_fd = jacobian_fd(
        |e| controller_error_rate(1.0, 0.5, &kg, e).unwrap(),
        &[0.0; 3],
        DEFAULT_FD_STEP,
    )
    .unwrap();
    let lm = Scenario::standard().landmarks;
    let reference = circle();
    let mut obs_fd_err = 0.0f64;
    for t in [0.0, 2.0, 7.5] {
        let fd = jacobian_fd(
            |e| observer_error_rate(&reference, &lm, &og, t, e).unwrap(),
            &[0.0; 3],
            DEFAULT_FD_STEP,
        )
        .unwrap();
        obs_fd_err = obs_fd_err.max(fd.max_abs_diff(&obs));
    }
    let ctrl_fd_err = ctrl_fd.max_abs_diff(&ctrl);
    g.check(
        "3",
        ctrl_err < 1e-9 && obs_err < 1e-9 && ctrl_fd_err < 1e-5 && obs_fd_err < 1e-5,
        format!(
            "spectra off by {ctrl_err:.3e} / {obs_err:.3e} (< 1e-9), finite-difference gaps {ctrl_fd_err:.3e} / {obs_fd_err:.3e} (< 1e-5)"
        ),
    );
}

fn criterion_4(g: &mut Gate) {
    let kg = ControllerGains::default();
    let og = ObserverGains::default();
    let m = separation_matrix(1.0, 0.5, &kg, &og).unwrap();
    let roots = Spectrum::new(roots_of_unit_quadratic().to_vec());
    let mismatch = eigenvalues(&m)
        .unwrap()
        .max_mismatch(&roots.union(&roots))
        .unwrap();
    let lm = Scenario::standard().landmarks;
    let reference = circle();
    let mats = linearize_along(
        |t, z| closed_loop_error_rate(&reference, &lm, &kg, &og, t, z),
        6,
        &[0.0, 3.0, 11.0],
    )
    .unwrap();
    let recon = mats.iter().map(|j| j.max_abs_diff(&m)).fold(0.0, f64::max);
    g.check(
        "4",
        mismatch < 1e-6 && recon < 1e-4,
        format!("union mismatch {mismatch:.3e} (< 1e-6), reconstruction at 3 times {recon:.3e} (< 1e-4)"),
    );
}

fn closed_loop_probe(cfg: &ScenarioConfig) -> f64 {
    let sc = cfg.scenario().unwrap();
    time_invariance_probe(
        |t, z| {
            closed_loop_error_rate(
                &sc.reference,
                &sc.landmarks,
                &sc.controller,
                &sc.observer,
                t,
                z,
            )
        },
        6,
        &cfg.probe_times,
    )
    .unwrap()
}

fn criterion_5(g: &mut Gate) {
    let mut permanent = 0.0f64;
    for doc in [
        r#"{"trajectory": {"u": 1.0, "v": 0.5}}"#,
        r#"{"trajectory": {"u": 2.0, "v": 0.0, "start": [1, 2, 3]}}"#,
        r#"{"trajectory": {"u": -0.7, "v": -1.2, "start": [-3, 1, -2]}, "gains": {"k1": 2, "l3": 0.5}}"#,
    ] {
        permanent = permanent.max(closed_loop_probe(
            &invsep::config::parse_config(doc).unwrap(),
        ));
    }
    let oscillating =
        closed_loop_probe(&load_config(&configs_dir().join("oscillating.json")).unwrap());

    let cfg = load_config(&configs_dir().join("standard.json")).unwrap();
    let sc = cfg.scenario().unwrap();
    let invariant = closed_loop_probe(&cfg);
    let times: Vec<f64> = cfg
        .probe_times
        .iter()
        .map(|t| t + cfg.ekf.burn_in)
        .collect();
    let ekf = ekf_time_invariance_probe(
        &sc.reference,
        &sc.landmarks,
        &cfg.ekf_noise(),
        &cfg.ekf_initial(),
        &times,
        cfg.dt,
    )
    .unwrap();
    g.check(
        "5",
        permanent < 1e-6 && oscillating > 1e-2 && ekf > 0.1 && invariant < 1e-6,
        format!(
            "permanent probe {permanent:.3e} (< 1e-6), non-permanent {oscillating:.3e} (> 1e-2), EKF {ekf:.3e} (> 0.1) vs invariant {invariant:.3e} (< 1e-6)"
        ),
    );
}

fn criterion_6(g: &mut Gate) {
    let sc = Scenario::standard().with_initial_errors([0.1; 3], [0.1; 3]);
    let start = Instant::now();
    let r = simulate(&sc).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (eta, eps) = (r.final_tracking_norm(), r.final_estimation_norm());
    g.check(
        "6",
        eta < 1e-3 && eps < 1e-3 && secs < 5.0 && *r.time.last().unwrap() == 30.0,
        format!("|eta(30)| {eta:.3e}, |eps(30)| {eps:.3e} (< 1e-3), run took {secs:.3} s (< 5 s)"),
    );
}

fn criterion_7(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 100 {
        let x_hat = random_pose(&mut rng);
        let lm = random_landmarks(&mut rng);
        let Ok(body) = body_frame_landmarks(&x_hat, &lm) else {
            continue;
        };
        let (u, v) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let og = ObserverGains::new(
            rng.gen_range(0.1..5.0),
            rng.gen_range(0.1..5.0),
            rng.gen_range(0.1..5.0),
        )
        .unwrap();
        let l = gain_matrix(&body, u, v, &og);
        let lhs = &l * &body.matrix().transpose().scale(-2.0);
        worst = worst.max(lhs.max_abs_diff(&correction_matrix(u, v, &og)));
        cases += 1;
    }
    g.check(
        "7",
        worst < 1e-10,
        format!("gain identity gap {worst:.3e} (< 1e-10) over 100 cases"),
    );
}

fn criterion_8(g: &mut Gate) {
    let xi_r = Vector3::new(0.3, -0.2, 0.5);
    let times = [0.0, 1.0, 2.0, 3.0];
    let inertia = [1.0, 2.0, 3.0];
    let damped = EpSystem::at_rest(
        inertia,
        ForceModel::Damping(nalgebra::Matrix3::from_diagonal(&Vector3::new(
            0.2, 0.3, 0.4,
        ))),
    )
    .unwrap();
    let heavy = EpSystem::at_rest(
        inertia,
        ForceModel::OffsetMass {
            offset: Vector3::new(0.1, 0.05, 0.2),
            mass: 1.0,
            gravity: 9.81,
        },
    )
    .unwrap();
    let p_damped = lemma1_probe(&damped, &xi_r, &times).unwrap();
    let p_heavy = lemma1_probe(&heavy, &xi_r, &times).unwrap();
    let free = EpSystem::at_rest(inertia, ForceModel::Free).unwrap();
    let free = free.with_state(free.attitude, Vector3::new(1.0, 0.5, -0.3));
    let e0 = free.kinetic_energy();
    let drift = free
        .integrate(&Vector3::zeros(), 10.0, 1e-3)
        .unwrap()
        .iter()
        .map(|s| (s.kinetic_energy() - e0).abs())
        .fold(0.0, f64::max);
    g.check(
        "8",
        p_damped < 1e-6 && p_heavy > 1e-2 && drift < 1e-8,
        format!("damped probe {p_damped:.3e} (< 1e-6), offset-mass probe {p_heavy:.3e} (> 1e-2), energy drift {drift:.3e} (< 1e-8)"),
    );
}

fn run_cli(command: &str, config: &Path, out: &Path) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_invsep"))
        .args([command, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn criterion_9(g: &mut Gate) {
    let config = configs_dir().join("standard.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut identical = true;
    let mut files = 0;
    let mut codes = Vec::new();
    for cmd in [
        "simulate",
        "eigs",
        "separation",
        "invariance",
        "ekf-compare",
        "mech-lemma",
    ] {
        let (da, db) = (a.path().join(cmd), b.path().join(cmd));
        codes.push(run_cli(cmd, &config, &da));
        codes.push(run_cli(cmd, &config, &db));
        for entry in std::fs::read_dir(&da).unwrap() {
            let name = entry.unwrap().file_name();
            let left = std::fs::read(da.join(&name)).unwrap();
            let right = std::fs::read(db.join(&name)).unwrap_or_default();
            identical &= left == right;
            files += 1;
        }
    }
    let all_zero = codes.iter().all(|&c| c == 0);
    g.check(
        "9",
        identical && files >= 8 && all_zero,
        format!("{files} output files byte-identical across two runs: {identical}, all exit codes 0: {all_zero}"),
    );
}

fn main() {
    let mut gate = Gate { failures: 0 };
    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    if gate.failures > 0 {
        println!("{} acceptance criteria failed", gate.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
