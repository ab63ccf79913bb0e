//! Command dispatch and report files.
//!
//! Each command writes `report.json`
//! (`{command, pass, metrics, tolerances, scenario_digest}`); `simulate` also
//! writes `timeseries.csv` and `eigs` also writes `eigs.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::Serialize;

use crate::closed_loop::{
    closed_loop_error_rate, controller_error_rate, linearize_along, observer_error_rate,
    separation_matrix, simulate, time_invariance_probe, SimulationResult,
};
use crate::config::ScenarioConfig;
use crate::controller::ctrl_loop_matrix;
use crate::ekf::ekf_time_invariance_probe;
use crate::error::{Error, Result};
use crate::mech::{lemma1_probe, orthonormality_residual, ForceModel};
use crate::numerics::{eigenvalues, Spectrum};
use crate::observer::obs_error_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Eigs,
    Separation,
    Invariance,
    EkfCompare,
    MechLemma,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Eigs => "eigs",
            Command::Separation => "separation",
            Command::Invariance => "invariance",
            Command::EkfCompare => "ekf-compare",
            Command::MechLemma => "mech-lemma",
        }
    }

    /// Threshold replaced by `--tol`.
    pub fn default_tolerance(self) -> f64 {
        match self {
            Command::Simulate => 1e-3,
            _ => 1e-6,
        }
    }
}

/// Verdict written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub scenario_digest: String,
}

/// Fixed thresholds that `--tol` does not touch.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-4;
pub const EKF_PROBE_MIN: f64 = 0.1;
pub const VARIANT_PROBE_MIN: f64 = 1e-2;
pub const ENERGY_TOLERANCE: f64 = 1e-8;

pub const TIMESERIES_HEADER: &str =
    "t,x,y,theta,xhat,yhat,thetahat,xr,yr,thetar,eta_x,eta_y,eta_theta,eps_x,eps_y,eps_theta,u,v";

struct Builder {
    metrics: BTreeMap<String, f64>,
    tolerances: BTreeMap<String, f64>,
    pass: bool,
}

impl Builder {
    fn new() -> Self {
        Self {
            metrics: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            pass: true,
        }
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    /// Records `value` and requires it below `tol`.
    fn below(&mut self, name: &str, value: f64, tol_name: &str, tol: f64) {
        self.metric(name, value);
        self.tolerances.insert(tol_name.to_string(), tol);
        self.pass &= value < tol;
    }

    /// Records `value` and requires it above `min`.
    fn above(&mut self, name: &str, value: f64, tol_name: &str, min: f64) {
        self.metric(name, value);
        self.tolerances.insert(tol_name.to_string(), min);
        self.pass &= value > min;
    }

    fn finish(self, command: Command, cfg: &ScenarioConfig) -> Report {
        Report {
            command: command.name().to_string(),
            pass: self.pass,
            metrics: self.metrics,
            tolerances: self.tolerances,
            scenario_digest: cfg.digest(),
        }
    }
}

/// Runs `command`, writes its files into `out_dir` (created if missing) and
/// returns the verdict. A failing verdict is still written.
pub fn run(
    command: Command,
    cfg: &ScenarioConfig,
    out_dir: &Path,
    tol: Option<f64>,
) -> Result<Report> {
    let tol = tol.unwrap_or_else(|| command.default_tolerance());
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    fs::create_dir_all(out_dir)?;
    let report = match command {
        Command::Simulate => run_simulate(cfg, out_dir, tol)?,
        Command::Eigs => run_eigs(cfg, out_dir, tol)?,
        Command::Separation => run_separation(cfg, tol)?,
        Command::Invariance => run_invariance(cfg, tol)?,
        Command::EkfCompare => run_ekf_compare(cfg, tol)?,
        Command::MechLemma => run_mech(cfg, tol)?,
    }
    .finish(command, cfg);
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// CSV with [`TIMESERIES_HEADER`]; every value in `{:.16e}` form.
pub fn timeseries_csv(r: &SimulationResult) -> String {
    let mut out = String::with_capacity(r.len() * 18 * 24 + 128);
    out.push_str(TIMESERIES_HEADER);
    out.push('\n');
    for k in 0..r.len() {
        let row = [
            r.time[k],
            r.truth[k].x,
            r.truth[k].y,
            r.truth[k].theta,
            r.estimate[k].x,
            r.estimate[k].y,
            r.estimate[k].theta,
            r.reference[k].x,
            r.reference[k].y,
            r.reference[k].theta,
            r.tracking[k].eta_x,
            r.tracking[k].eta_y,
            r.tracking[k].eta_theta,
            r.estimation[k][0],
            r.estimation[k][1],
            r.estimation[k][2],
            r.inputs[k].u,
            r.inputs[k].v,
        ];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("string write");
        }
        out.push('\n');
    }
    out
}

fn run_simulate(cfg: &ScenarioConfig, out_dir: &Path, tol: f64) -> Result<Builder> {
    let r = simulate(&cfg.scenario()?)?;
    fs::write(out_dir.join("timeseries.csv"), timeseries_csv(&r))?;
    let mut b = Builder::new();
    b.below(
        "final_tracking_error",
        r.final_tracking_norm(),
        "final_error_max",
        tol,
    );
    b.below(
        "final_estimation_error",
        r.final_estimation_norm(),
        "final_error_max",
        tol,
    );
    b.metric("max_tracking_error", r.max_tracking_norm());
    b.metric("max_estimation_error", r.max_estimation_norm());
    b.metric("samples", r.len() as f64);
    Ok(b)
}

#[derive(Debug, Serialize)]
struct SpectraAtInput {
    u: f64,
    v: f64,
    controller: Vec<[f64; 2]>,
    observer: Vec<[f64; 2]>,
    closed_loop: Vec<[f64; 2]>,
    union_mismatch: f64,
}

struct Spectra {
    controller: Spectrum,
    observer: Spectrum,
    closed_loop: Spectrum,
    mismatch: f64,
}

fn spectra(cfg: &ScenarioConfig, u: f64, v: f64) -> Result<Spectra> {
    let kg = cfg.controller_gains()?;
    let og = cfg.observer_gains()?;
    let controller = eigenvalues(&ctrl_loop_matrix(u, v, &kg))?;
    let observer = eigenvalues(&obs_error_matrix(u, v, &og))?;
    let closed_loop = eigenvalues(&separation_matrix(u, v, &kg, &og)?)?;
    let mismatch = closed_loop
        .max_mismatch(&controller.union(&observer))
        .expect("six eigenvalues on both sides");
    Ok(Spectra {
        controller,
        observer,
        closed_loop,
        mismatch,
    })
}

fn run_eigs(cfg: &ScenarioConfig, out_dir: &Path, tol: f64) -> Result<Builder> {
    let reference = cfg.reference();
    let mut entries = Vec::new();
    let (mut worst, mut abscissa) = (0.0f64, f64::NEG_INFINITY);
    for inp in reference.input_samples(&cfg.probe_times) {
        let s = spectra(cfg, inp.u, inp.v)?;
        worst = worst.max(s.mismatch);
        abscissa = abscissa.max(s.closed_loop.abscissa());
        entries.push(SpectraAtInput {
            u: inp.u,
            v: inp.v,
            controller: s.controller.to_pairs(),
            observer: s.observer.to_pairs(),
            closed_loop: s.closed_loop.to_pairs(),
            union_mismatch: s.mismatch,
        });
    }
    write_json(
        &out_dir.join("eigs.json"),
        &BTreeMap::from([("inputs", entries)]),
    )?;
    let mut b = Builder::new();
    b.below("union_mismatch", worst, "union_mismatch_max", tol);
    b.below("spectral_abscissa", abscissa, "spectral_abscissa_max", 0.0);
    Ok(b)
}

fn run_separation(cfg: &ScenarioConfig, tol: f64) -> Result<Builder> {
    let sc = cfg.scenario()?;
    let mut b = Builder::new();
    let mut worst = 0.0f64;
    for inp in sc.reference.input_samples(&cfg.probe_times) {
        worst = worst.max(spectra(cfg, inp.u, inp.v)?.mismatch);
    }
    b.below("union_mismatch", worst, "union_mismatch_max", tol);

    let times: Vec<f64> = cfg.probe_times.iter().copied().take(3).collect();
    let mats = linearize_along(
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
        &times,
    )?;
    let mut recon = 0.0f64;
    let mut lower = 0.0f64;
    for (m, &t) in mats.iter().zip(&times) {
        let inp = sc.reference.input(t);
        let expected = separation_matrix(inp.u, inp.v, &sc.controller, &sc.observer)?;
        recon = recon.max(m.max_abs_diff(&expected));
        lower = lower.max(m.block(3, 0, 3, 3).max_abs());
    }
    b.below(
        "reconstruction_error",
        recon,
        "reconstruction_max",
        RECONSTRUCTION_TOLERANCE,
    );
    b.metric("lower_left_block", lower);
    Ok(b)
}

fn run_invariance(cfg: &ScenarioConfig, tol: f64) -> Result<Builder> {
    let sc = cfg.scenario()?;
    let times = &cfg.probe_times;
    let closed = time_invariance_probe(
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
        times,
    )?;
    let observer = time_invariance_probe(
        |t, e| observer_error_rate(&sc.reference, &sc.landmarks, &sc.observer, t, e),
        3,
        times,
    )?;
    let controller = time_invariance_probe(
        |t, e| {
            let inp = sc.reference.input(t);
            controller_error_rate(inp.u, inp.v, &sc.controller, e)
        },
        3,
        times,
    )?;
    let mut b = Builder::new();
    b.below("time_invariance_probe", closed, "time_invariance_max", tol);
    b.metric("observer_probe", observer);
    b.metric("controller_probe", controller);
    Ok(b)
}

fn run_ekf_compare(cfg: &ScenarioConfig, tol: f64) -> Result<Builder> {
    let sc = cfg.scenario()?;
    let invariant = time_invariance_probe(
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
    )?;
    // Sample after the covariance transient so the probe reflects the
    // settled gain rather than its decay from P0.
    let ekf_times: Vec<f64> = cfg
        .probe_times
        .iter()
        .map(|t| t + cfg.ekf.burn_in)
        .collect();
    let ekf = ekf_time_invariance_probe(
        &sc.reference,
        &sc.landmarks,
        &cfg.ekf_noise(),
        &cfg.ekf_initial(),
        &ekf_times,
        cfg.dt,
    )?;
    let mut b = Builder::new();
    b.below("invariant_probe", invariant, "invariant_probe_max", tol);
    b.above("ekf_probe", ekf, "ekf_probe_min", EKF_PROBE_MIN);
    b.metric("ekf_burn_in", cfg.ekf.burn_in);
    Ok(b)
}

fn run_mech(cfg: &ScenarioConfig, tol: f64) -> Result<Builder> {
    let m = &cfg.mech;
    let xi_r = Vector3::from(m.xi_r);
    let probe = |force: ForceModel| lemma1_probe(&cfg.mech_system(force)?, &xi_r, &m.probe_times);
    let mut b = Builder::new();
    b.below(
        "probe_free",
        probe(ForceModel::Free)?,
        "invariant_probe_max",
        tol,
    );
    b.below(
        "probe_damped",
        probe(cfg.mech_damping())?,
        "invariant_probe_max",
        tol,
    );
    b.above(
        "probe_offset_mass",
        probe(cfg.mech_offset_mass())?,
        "variant_probe_min",
        VARIANT_PROBE_MIN,
    );

    let free = cfg.mech_system(ForceModel::Free)?;
    let start = free.with_state(free.attitude, Vector3::from(m.xi0));
    let run = start.integrate(&Vector3::zeros(), m.energy_t_end, m.energy_dt)?;
    let e0 = start.kinetic_energy();
    let drift = run
        .iter()
        .map(|s| (s.kinetic_energy() - e0).abs())
        .fold(0.0, f64::max);
    let ortho = run
        .iter()
        .map(|s| orthonormality_residual(&s.attitude))
        .fold(0.0, f64::max);
    b.below("energy_drift", drift, "energy_drift_max", ENERGY_TOLERANCE);
    b.metric("attitude_residual", ortho);
    Ok(b)
}
