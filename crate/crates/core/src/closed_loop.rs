//! Plant, invariant observer and tracking controller in one loop, plus the
//! linearization tools used to check separation and time invariance.
//!
//! The closed-loop error state is `(eta, eps)` with `eta = x_r^-1 x` (tracking)
//! and `eps = x^-1 x_hat` (estimation), both in `(x, y, theta)` coordinates.
//! The controller only sees `eta_hat = x_r^-1 x_hat = eta * eps`.

use crate::controller::{
    ctrl_loop_matrix, feedback, tracking_error, tracking_error_dynamics, ControllerGains,
    TrackingError,
};
use crate::error::{Error, Result};
use crate::lie::{compose, inverse, relative_rate, Pose};
use crate::numerics::{time_grid, try_jacobian_fd, try_rk4_step, SmallMatrix, DEFAULT_FD_STEP};
use crate::observer::{obs_error_matrix, observer_field, ObserverGains};
use crate::robot::{dynamics, measure, LandmarkSet, RobotInput};
use crate::trajectory::{PermanentTrajectory, Reference};

/// State norm beyond which a run is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub reference: Reference,
    pub landmarks: LandmarkSet,
    pub controller: ControllerGains,
    pub observer: ObserverGains,
    pub initial_pose: Pose,
    pub initial_estimate: Pose,
    pub t_end: f64,
    pub dt: f64,
}

impl Scenario {
    /// Circle `u = 1, v = 0.5` from the origin, three landmarks, unit gains,
    /// exact initial conditions, 30 s at `dt = 1e-3`.
    pub fn standard() -> Self {
        let reference: Reference = PermanentTrajectory::new(1.0, 0.5, Pose::identity())
            .expect("finite")
            .into();
        Self {
            reference,
            landmarks: LandmarkSet::new(vec![[10.0, 0.0], [0.0, 10.0], [-10.0, -10.0]])
                .expect("non-collinear"),
            controller: ControllerGains::default(),
            observer: ObserverGains::default(),
            initial_pose: Pose::identity(),
            initial_estimate: Pose::identity(),
            t_end: 30.0,
            dt: 1e-3,
        }
    }

    /// Starts the truth at `x_r(0) * eta0` and the estimate at `x(0) * eps0`.
    pub fn with_initial_errors(mut self, eta0: [f64; 3], eps0: [f64; 3]) -> Self {
        self.initial_pose = compose(&self.reference.pose(0.0), &Pose::from_array(eta0));
        self.initial_estimate = compose(&self.initial_pose, &Pose::from_array(eps0));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "t_end must be > 0, got {}",
                self.t_end
            )));
        }
        let degenerate = match &self.reference {
            Reference::Permanent(p) => p.u_bar == 0.0,
            Reference::Piecewise(p) => p.arcs().iter().any(|a| a.u_bar == 0.0),
            Reference::Oscillating(o) => o.u == 0.0,
        };
        if degenerate {
            return Err(Error::DegenerateReference);
        }
        Ok(())
    }

    /// Every pose and the reference left-translated by `g0`.
    pub fn transformed(&self, g0: &Pose) -> Self {
        Self {
            reference: self.reference.transformed(g0),
            landmarks: self.landmarks.transformed(g0),
            initial_pose: compose(g0, &self.initial_pose),
            initial_estimate: compose(g0, &self.initial_estimate),
            ..self.clone()
        }
    }
}

/// Time series of one closed-loop run, all on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub time: Vec<f64>,
    pub truth: Vec<Pose>,
    pub estimate: Vec<Pose>,
    pub reference: Vec<Pose>,
    /// `x_r^-1 x`.
    pub tracking: Vec<TrackingError>,
    /// `x^-1 x_hat`.
    pub estimation: Vec<[f64; 3]>,
    pub inputs: Vec<RobotInput>,
}

impl SimulationResult {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn final_tracking_norm(&self) -> f64 {
        self.tracking.last().map_or(0.0, TrackingError::norm)
    }

    pub fn final_estimation_norm(&self) -> f64 {
        self.estimation.last().map_or(0.0, norm3)
    }

    pub fn max_tracking_norm(&self) -> f64 {
        self.tracking
            .iter()
            .map(TrackingError::norm)
            .fold(0.0, f64::max)
    }

    pub fn max_estimation_norm(&self) -> f64 {
        self.estimation.iter().map(norm3).fold(0.0, f64::max)
    }
}

fn norm3(e: &[f64; 3]) -> f64 {
    (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
}

fn applied_input(
    reference: &Reference,
    gains: &ControllerGains,
    t: f64,
    x_hat: &Pose,
) -> Result<RobotInput> {
    let r_in = reference.input(t);
    let eta_hat = tracking_error(&reference.pose(t), x_hat);
    feedback(&eta_hat, r_in.u, r_in.v, gains)
}

/// Integrates truth and estimate together with RK4. Measurements come from the
/// true pose; the controller acts on the estimate.
pub fn simulate(sc: &Scenario) -> Result<SimulationResult> {
    sc.validate()?;
    let field = |t: f64, z: &[f64]| -> Result<Vec<f64>> {
        let x = Pose::new(z[0], z[1], z[2]);
        let x_hat = Pose::new(z[3], z[4], z[5]);
        let inp = applied_input(&sc.reference, &sc.controller, t, &x_hat)?;
        let y = measure(&x, &sc.landmarks);
        let fx = dynamics(&x, &inp);
        let fh = observer_field(&x_hat, &inp, &sc.landmarks, &y, &sc.observer)?;
        Ok(vec![fx[0], fx[1], fx[2], fh[0], fh[1], fh[2]])
    };

    let grid = time_grid(0.0, sc.t_end, sc.dt)?;
    let n = grid.len();
    let mut out = SimulationResult {
        time: Vec::with_capacity(n),
        truth: Vec::with_capacity(n),
        estimate: Vec::with_capacity(n),
        reference: Vec::with_capacity(n),
        tracking: Vec::with_capacity(n),
        estimation: Vec::with_capacity(n),
        inputs: Vec::with_capacity(n),
    };
    let mut record = |t: f64, x: Pose, x_hat: Pose| -> Result<()> {
        let x_r = sc.reference.pose(t);
        let inp = applied_input(&sc.reference, &sc.controller, t, &x_hat)?;
        out.time.push(t);
        out.truth.push(x);
        out.estimate.push(x_hat);
        out.reference.push(x_r);
        out.tracking.push(tracking_error(&x_r, &x));
        out.estimation
            .push(compose(&inverse(&x), &x_hat).to_array());
        out.inputs.push(inp);
        Ok(())
    };

    let mut x = sc.initial_pose;
    let mut x_hat = sc.initial_estimate;
    record(0.0, x, x_hat).map_err(|e| abort(0.0, e))?;
    for w in grid.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let z = [x.x, x.y, x.theta, x_hat.x, x_hat.y, x_hat.theta];
        let next = try_rk4_step(&field, t, &z, h).map_err(|e| abort(t, e))?;
        if next
            .iter()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
        {
            return Err(Error::Aborted {
                t: w[1],
                reason: "state diverged".into(),
            });
        }
        x = Pose::new(next[0], next[1], next[2]);
        x_hat = Pose::new(next[3], next[4], next[5]);
        record(w[1], x, x_hat).map_err(|e| abort(w[1], e))?;
    }
    Ok(out)
}

fn abort(t: f64, e: Error) -> Error {
    match e {
        Error::Aborted { .. } => e,
        other => Error::Aborted {
            t,
            reason: other.to_string(),
        },
    }
}

/// Rate of the closed-loop error `(eta, eps)` at time `t` along `reference`.
pub fn closed_loop_error_rate(
    reference: &Reference,
    lm: &LandmarkSet,
    kg: &ControllerGains,
    og: &ObserverGains,
    t: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    if z.len() != 6 {
        return Err(Error::Dimension(format!(
            "closed-loop error has 6 components, got {}",
            z.len()
        )));
    }
    let x_r = reference.pose(t);
    let r_in = reference.input(t);
    let x = compose(&x_r, &Pose::new(z[0], z[1], z[2]));
    let x_hat = compose(&x, &Pose::new(z[3], z[4], z[5]));
    let inp = feedback(&tracking_error(&x_r, &x_hat), r_in.u, r_in.v, kg)?;
    let y = measure(&x, lm);
    let fx = dynamics(&x, &inp);
    let fh = observer_field(&x_hat, &inp, lm, &y, og)?;
    let eta_dot = relative_rate(&x_r, dynamics(&x_r, &r_in), &x, fx);
    let eps_dot = relative_rate(&x, fx, &x_hat, fh);
    Ok(vec![
        eta_dot[0], eta_dot[1], eta_dot[2], eps_dot[0], eps_dot[1], eps_dot[2],
    ])
}

/// Rate of the estimation error `eps = x^-1 x_hat` when the truth rides on
/// `reference` under the reference input.
pub fn observer_error_rate(
    reference: &Reference,
    lm: &LandmarkSet,
    og: &ObserverGains,
    t: f64,
    e: &[f64],
) -> Result<Vec<f64>> {
    if e.len() != 3 {
        return Err(Error::Dimension(format!(
            "estimation error has 3 components, got {}",
            e.len()
        )));
    }
    let x = reference.pose(t);
    let inp = reference.input(t);
    let x_hat = compose(&x, &Pose::new(e[0], e[1], e[2]));
    let fx = dynamics(&x, &inp);
    let fh = observer_field(&x_hat, &inp, lm, &measure(&x, lm), og)?;
    Ok(relative_rate(&x, fx, &x_hat, fh).to_vec())
}

/// Closed-loop tracking error rate under full state feedback (`eta_hat = eta`).
pub fn controller_error_rate(
    u_r: f64,
    v_r: f64,
    kg: &ControllerGains,
    eta: &[f64],
) -> Result<Vec<f64>> {
    let eta = TrackingError::from_array([eta[0], eta[1], eta[2]]);
    let applied = feedback(&eta, u_r, v_r, kg)?;
    Ok(tracking_error_dynamics(&eta, u_r, v_r, &applied).to_vec())
}

/// Block matrix `[[A - BK, -BK], [0, A_obs]]` of the linearized observer-
/// controller loop. The coupling block is the input matrix times the
/// feedback Jacobian, both by central differences.
pub fn separation_matrix(
    u_r: f64,
    v_r: f64,
    kg: &ControllerGains,
    og: &ObserverGains,
) -> Result<SmallMatrix> {
    let mut m = SmallMatrix::zeros(6, 6);
    if u_r == 0.0 {
        return Ok(m);
    }
    let input_matrix = try_jacobian_fd(
        |d| {
            let applied = RobotInput::new(u_r + d[0], v_r + d[1]);
            Ok(tracking_error_dynamics(&TrackingError::default(), u_r, v_r, &applied).to_vec())
        },
        &[0.0, 0.0],
        DEFAULT_FD_STEP,
    )?;
    let feedback_jac = try_jacobian_fd(
        |e| {
            let out = feedback(&TrackingError::from_array([e[0], e[1], e[2]]), u_r, v_r, kg)?;
            Ok(vec![out.u, out.v])
        },
        &[0.0; 3],
        DEFAULT_FD_STEP,
    )?;
    m.set_block(0, 0, &ctrl_loop_matrix(u_r, v_r, kg));
    m.set_block(0, 3, &(&input_matrix * &feedback_jac));
    m.set_block(3, 3, &obs_error_matrix(u_r, v_r, og));
    Ok(m)
}

/// Jacobians at the origin of a time-dependent error field, one per time.
pub fn linearize_along<F>(field: F, dim: usize, times: &[f64]) -> Result<Vec<SmallMatrix>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let origin = vec![0.0; dim];
    times
        .iter()
        .map(|&t| try_jacobian_fd(|z| field(t, z), &origin, DEFAULT_FD_STEP))
        .collect()
}

/// Largest pairwise distance (Frobenius) between the linearizations of
/// `field` at the origin over `times`.
pub fn time_invariance_probe<F>(field: F, dim: usize, times: &[f64]) -> Result<f64>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    if times.len() < 2 {
        return Err(Error::InvalidArgument(
            "time-invariance probe needs at least two times".into(),
        ));
    }
    let mats = linearize_along(field, dim, times)?;
    Ok(max_pairwise_deviation(&mats))
}

pub fn max_pairwise_deviation(mats: &[SmallMatrix]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in mats.iter().enumerate() {
        for b in &mats[i + 1..] {
            worst = worst.max((a - b).frobenius_norm());
        }
    }
    worst
}
