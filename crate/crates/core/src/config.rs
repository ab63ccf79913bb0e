//! JSON scenario documents.
//!
//! Every field is optional; omitted fields take the standard scenario
//! values. Parsing produces a fully resolved [`ScenarioConfig`] whose
//! canonical serialization is hashed into the report digest.
//!
//! ```json
//! {
//!   "trajectory": {"u": 1.0, "v": 0.5, "start": [0, 0, 0]},
//!   "landmarks": [[10, 0], [0, 10], [-10, -10]],
//!   "gains": {"k1": 1, "k2": 1, "k3": 1, "l1": 1, "l2": 1, "l3": 1},
//!   "perturbation": {"eta": [0.1, 0.1, 0.1], "eps": [0.1, 0.1, 0.1]},
//!   "dt": 0.001,
//!   "t_end": 30
//! }
//! ```
//!
//! The trajectory may instead list `segments` (`[{"u", "v", "duration"}]`) or
//! add an `oscillation` (`{"amplitude", "frequency"}`) to the steering input.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::closed_loop::Scenario;
use crate::controller::ControllerGains;
use crate::ekf::{EkfNoise, EkfState};
use crate::error::{Error, Result};
use crate::lie::Pose;
use crate::mech::{EpSystem, ForceModel};
use crate::observer::ObserverGains;
use crate::robot::LandmarkSet;
use crate::trajectory::{
    OscillatingSteering, PermanentTrajectory, PiecewiseTrajectory, Reference, Segment,
};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    trajectory: Option<RawTrajectory>,
    landmarks: Option<Vec<[f64; 2]>>,
    gains: Option<RawGains>,
    initial_pose: Option<[f64; 3]>,
    initial_estimate: Option<[f64; 3]>,
    perturbation: Option<RawPerturbation>,
    dt: Option<f64>,
    t_end: Option<f64>,
    probe_times: Option<Vec<f64>>,
    ekf: Option<RawEkf>,
    mech: Option<RawMech>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrajectory {
    u: Option<f64>,
    v: Option<f64>,
    start: Option<[f64; 3]>,
    segments: Option<Vec<RawSegment>>,
    oscillation: Option<RawOscillation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    u: f64,
    v: f64,
    duration: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOscillation {
    amplitude: f64,
    frequency: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    k1: Option<f64>,
    k2: Option<f64>,
    k3: Option<f64>,
    l1: Option<f64>,
    l2: Option<f64>,
    l3: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    eta: Option<[f64; 3]>,
    eps: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEkf {
    q: Option<f64>,
    r: Option<f64>,
    p0: Option<f64>,
    burn_in: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMech {
    inertia: Option<[f64; 3]>,
    xi_r: Option<[f64; 3]>,
    damping: Option<[f64; 3]>,
    offset: Option<[f64; 3]>,
    mass: Option<f64>,
    gravity: Option<f64>,
    probe_times: Option<Vec<f64>>,
    xi0: Option<[f64; 3]>,
    energy_t_end: Option<f64>,
    energy_dt: Option<f64>,
}

/// Reference trajectory after defaulting.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryConfig {
    Permanent {
        u: f64,
        v: f64,
        start: [f64; 3],
    },
    Piecewise {
        segments: Vec<[f64; 3]>,
        start: [f64; 3],
    },
    Oscillating {
        u: f64,
        v: f64,
        amplitude: f64,
        frequency: f64,
        start: [f64; 3],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainsConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EkfConfig {
    pub q: f64,
    pub r: f64,
    pub p0: f64,
    /// Time the Riccati flow runs before the first probe sample.
    pub burn_in: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechConfig {
    pub inertia: [f64; 3],
    pub xi_r: [f64; 3],
    pub damping: [f64; 3],
    pub offset: [f64; 3],
    pub mass: f64,
    pub gravity: f64,
    pub probe_times: Vec<f64>,
    pub xi0: [f64; 3],
    pub energy_t_end: f64,
    pub energy_dt: f64,
}

/// Fully resolved scenario document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub trajectory: TrajectoryConfig,
    pub landmarks: Vec<[f64; 2]>,
    pub gains: GainsConfig,
    pub initial_pose: [f64; 3],
    pub initial_estimate: [f64; 3],
    pub dt: f64,
    pub t_end: f64,
    pub probe_times: Vec<f64>,
    pub ekf: EkfConfig,
    pub mech: MechConfig,
}

fn invalid(field: &str, constraint: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        constraint: constraint.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be > 0 (got {v})")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be >= 0 (got {v})")))
    }
}

fn finite<const N: usize>(field: &str, v: [f64; N]) -> Result<[f64; N]> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(invalid(field, "must be finite"))
    }
}

fn nonzero_speed(field: &str, u: f64) -> Result<f64> {
    if u != 0.0 && u.is_finite() {
        Ok(u)
    } else {
        Err(invalid(
            field,
            format!("must be finite and nonzero (got {u})"),
        ))
    }
}

fn sample_times(field: &str, times: Vec<f64>) -> Result<Vec<f64>> {
    if times.len() < 2 {
        return Err(invalid(field, "needs at least two times"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(invalid(field, "times must be finite and >= 0"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(field, "times must be strictly increasing"));
    }
    Ok(times)
}

fn resolve_trajectory(raw: Option<RawTrajectory>) -> Result<TrajectoryConfig> {
    let Some(raw) = raw else {
        return Ok(TrajectoryConfig::Permanent {
            u: 1.0,
            v: 0.5,
            start: [0.0; 3],
        });
    };
    let start = finite("trajectory.start", raw.start.unwrap_or([0.0; 3]))?;
    if let Some(segments) = raw.segments {
        if raw.u.is_some() || raw.v.is_some() || raw.oscillation.is_some() {
            return Err(invalid(
                "trajectory.segments",
                "cannot be combined with u, v or oscillation",
            ));
        }
        if segments.is_empty() {
            return Err(invalid("trajectory.segments", "needs at least one segment"));
        }
        let mut out = Vec::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            let u = nonzero_speed(&format!("trajectory.segments[{i}].u"), s.u)?;
            let [v] = finite(&format!("trajectory.segments[{i}].v"), [s.v])?;
            let d = positive(&format!("trajectory.segments[{i}].duration"), s.duration)?;
            out.push([u, v, d]);
        }
        return Ok(TrajectoryConfig::Piecewise {
            segments: out,
            start,
        });
    }
    let u = nonzero_speed(
        "trajectory.u",
        raw.u
            .ok_or_else(|| invalid("trajectory.u", "required unless segments are given"))?,
    )?;
    let [v] = finite("trajectory.v", [raw.v.unwrap_or(0.0)])?;
    Ok(match raw.oscillation {
        None => TrajectoryConfig::Permanent { u, v, start },
        Some(o) => TrajectoryConfig::Oscillating {
            u,
            v,
            amplitude: finite("trajectory.oscillation.amplitude", [o.amplitude])?[0],
            frequency: finite("trajectory.oscillation.frequency", [o.frequency])?[0],
            start,
        },
    })
}

fn resolve_gains(raw: Option<RawGains>) -> Result<GainsConfig> {
    let g = raw.unwrap_or_default();
    let pick = |name: &str, v: Option<f64>| positive(&format!("gains.{name}"), v.unwrap_or(1.0));
    Ok(GainsConfig {
        k1: pick("k1", g.k1)?,
        k2: pick("k2", g.k2)?,
        k3: pick("k3", g.k3)?,
        l1: pick("l1", g.l1)?,
        l2: pick("l2", g.l2)?,
        l3: pick("l3", g.l3)?,
    })
}

fn resolve_mech(raw: Option<RawMech>) -> Result<MechConfig> {
    let m = raw.unwrap_or_default();
    let inertia = m.inertia.unwrap_or([1.0, 2.0, 3.0]);
    for (i, v) in inertia.iter().enumerate() {
        positive(&format!("mech.inertia[{i}]"), *v)?;
    }
    let damping = m.damping.unwrap_or([0.2, 0.3, 0.4]);
    for (i, v) in damping.iter().enumerate() {
        non_negative(&format!("mech.damping[{i}]"), *v)?;
    }
    Ok(MechConfig {
        inertia,
        xi_r: finite("mech.xi_r", m.xi_r.unwrap_or([0.3, -0.2, 0.5]))?,
        damping,
        offset: finite("mech.offset", m.offset.unwrap_or([0.1, 0.05, 0.2]))?,
        mass: positive("mech.mass", m.mass.unwrap_or(1.0))?,
        gravity: positive("mech.gravity", m.gravity.unwrap_or(9.81))?,
        probe_times: sample_times(
            "mech.probe_times",
            m.probe_times.unwrap_or_else(|| vec![0.0, 1.0, 2.0, 3.0]),
        )?,
        xi0: finite("mech.xi0", m.xi0.unwrap_or([1.0, 0.5, -0.3]))?,
        energy_t_end: positive("mech.energy_t_end", m.energy_t_end.unwrap_or(10.0))?,
        energy_dt: positive("mech.energy_dt", m.energy_dt.unwrap_or(1e-3))?,
    })
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." {
            "<document>".to_string()
        } else {
            path
        };
        invalid(&field, e.into_inner().to_string())
    })?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<ScenarioConfig> {
    let trajectory = resolve_trajectory(raw.trajectory)?;
    let landmarks = raw
        .landmarks
        .unwrap_or_else(|| vec![[10.0, 0.0], [0.0, 10.0], [-10.0, -10.0]]);
    LandmarkSet::new(landmarks.clone()).map_err(|e| match e {
        Error::Landmarks(msg) => invalid("landmarks", msg),
        other => other,
    })?;
    let gains = resolve_gains(raw.gains)?;
    let dt = positive("dt", raw.dt.unwrap_or(1e-3))?;
    let t_end = positive("t_end", raw.t_end.unwrap_or(30.0))?;
    let probe_times = sample_times(
        "probe_times",
        raw.probe_times
            .unwrap_or_else(|| vec![0.0, PI / 2.0, PI, 3.0 * PI / 2.0]),
    )?;
    let ekf = raw.ekf.unwrap_or_default();
    let ekf = EkfConfig {
        q: positive("ekf.q", ekf.q.unwrap_or(1e-3))?,
        r: positive("ekf.r", ekf.r.unwrap_or(1e-2))?,
        p0: positive("ekf.p0", ekf.p0.unwrap_or(0.1))?,
        burn_in: non_negative("ekf.burn_in", ekf.burn_in.unwrap_or(20.0))?,
    };
    let mech = resolve_mech(raw.mech)?;

    let mut cfg = ScenarioConfig {
        trajectory,
        landmarks,
        gains,
        initial_pose: [0.0; 3],
        initial_estimate: [0.0; 3],
        dt,
        t_end,
        probe_times,
        ekf,
        mech,
    };
    let x_r0 = cfg.reference().pose(0.0);
    match (raw.perturbation, raw.initial_pose, raw.initial_estimate) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(invalid(
                "perturbation",
                "cannot be combined with initial_pose or initial_estimate",
            ))
        }
        (Some(p), None, None) => {
            let eta = finite("perturbation.eta", p.eta.unwrap_or([0.0; 3]))?;
            let eps = finite("perturbation.eps", p.eps.unwrap_or([0.0; 3]))?;
            let x0 = x_r0.compose(&Pose::from_array(eta));
            cfg.initial_pose = x0.to_array();
            cfg.initial_estimate = x0.compose(&Pose::from_array(eps)).to_array();
        }
        (None, pose, estimate) => {
            let x0 = match pose {
                Some(p) => Pose::from_array(finite("initial_pose", p)?),
                None => x_r0,
            };
            let xh0 = match estimate {
                Some(p) => Pose::from_array(finite("initial_estimate", p)?),
                None => x0,
            };
            cfg.initial_pose = x0.to_array();
            cfg.initial_estimate = xh0.to_array();
        }
    }
    Ok(cfg)
}

/// Reads `path` and parses it.
pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Parses a document straight into a closed-loop scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_config(text)?.scenario()
}

impl ScenarioConfig {
    /// The standard scenario, identical to parsing `{}`.
    pub fn standard() -> Self {
        resolve(RawConfig::default()).expect("defaults are valid")
    }

    /// Replaces `dt` and `t_end` when given, revalidating them.
    pub fn with_overrides(mut self, dt: Option<f64>, t_end: Option<f64>) -> Result<Self> {
        if let Some(dt) = dt {
            self.dt = positive("dt", dt)?;
        }
        if let Some(t) = t_end {
            self.t_end = positive("t_end", t)?;
        }
        Ok(self)
    }

    pub fn reference(&self) -> Reference {
        let pose = |s: &[f64; 3]| Pose::from_array(*s);
        match &self.trajectory {
            TrajectoryConfig::Permanent { u, v, start } => {
                Reference::Permanent(PermanentTrajectory {
                    u_bar: *u,
                    v_bar: *v,
                    start: pose(start),
                })
            }
            TrajectoryConfig::Piecewise { segments, start } => {
                let segs: Vec<Segment> = segments
                    .iter()
                    .map(|s| Segment {
                        u: s[0],
                        v: s[1],
                        duration: s[2],
                    })
                    .collect();
                Reference::Piecewise(
                    PiecewiseTrajectory::new(pose(start), &segs).expect("validated segments"),
                )
            }
            TrajectoryConfig::Oscillating {
                u,
                v,
                amplitude,
                frequency,
                start,
            } => Reference::Oscillating(OscillatingSteering {
                start: pose(start),
                u: *u,
                v0: *v,
                amplitude: *amplitude,
                frequency: *frequency,
            }),
        }
    }

    pub fn landmark_set(&self) -> Result<LandmarkSet> {
        LandmarkSet::new(self.landmarks.clone())
    }

    pub fn controller_gains(&self) -> Result<ControllerGains> {
        ControllerGains::new(self.gains.k1, self.gains.k2, self.gains.k3)
    }

    pub fn observer_gains(&self) -> Result<ObserverGains> {
        ObserverGains::new(self.gains.l1, self.gains.l2, self.gains.l3)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let sc = Scenario {
            reference: self.reference(),
            landmarks: self.landmark_set()?,
            controller: self.controller_gains()?,
            observer: self.observer_gains()?,
            initial_pose: Pose::from_array(self.initial_pose),
            initial_estimate: Pose::from_array(self.initial_estimate),
            t_end: self.t_end,
            dt: self.dt,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn ekf_noise(&self) -> EkfNoise {
        EkfNoise::isotropic(self.ekf.q, self.ekf.r, self.landmarks.len())
    }

    /// EKF started on the reference with `P = p0 I`.
    pub fn ekf_initial(&self) -> EkfState {
        use crate::numerics::SmallMatrix;
        EkfState::new(
            self.reference().pose(0.0),
            SmallMatrix::identity(3).scale(self.ekf.p0),
        )
        .expect("3x3 covariance")
    }

    /// Rigid body at rest in the identity attitude under `force`.
    pub fn mech_system(&self, force: ForceModel) -> Result<EpSystem> {
        EpSystem::at_rest(self.mech.inertia, force)
    }

    pub fn mech_damping(&self) -> ForceModel {
        ForceModel::Damping(Matrix3::from_diagonal(&Vector3::from(self.mech.damping)))
    }

    pub fn mech_offset_mass(&self) -> ForceModel {
        ForceModel::OffsetMass {
            offset: Vector3::from(self.mech.offset),
            mass: self.mech.mass,
            gravity: self.mech.gravity,
        }
    }

    /// Compact JSON with fields in declaration order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Lowercase hex SHA-256 of [`Self::canonical_json`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
