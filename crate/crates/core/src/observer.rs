//! Invariant observer for the unicycle with squared-distance landmark outputs.
//!
//! The correction is computed in the estimate's body frame from the invariant
//! quantities (landmarks seen from the estimate) and pushed to the world frame
//! by left translation:
//!
//! ```text
//! d/dt x_hat = f(x_hat, u) + x_hat * (-L eps)
//! L = -1/2 Lc (I I^T)^-1 I
//! ```
//!
//! `I` is the 2 x p matrix of body-frame landmark coordinates and `Lc` the 3 x 2
//! matrix below. Since `L (-2 I^T) = Lc`, the linearized estimation error does
//! not depend on where the landmarks are.

use crate::error::{Error, Result};
use crate::lie::{inverse, transport_tangent, Pose, Twist};
use crate::numerics::SmallMatrix;
use crate::robot::{dynamics, measure, LandmarkSet, Measurement, RobotInput};

/// Largest accepted condition number of `I I^T`.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGains {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl ObserverGains {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self> {
        for (name, value) in [("l1", l1), ("l2", l2), ("l3", l3)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Gain { name, value });
            }
        }
        Ok(Self { l1, l2, l3 })
    }
}

impl Default for ObserverGains {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 1.0,
            l3: 1.0,
        }
    }
}

/// Landmark coordinates seen from the estimate, one column per landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyFrameLandmarks {
    matrix: SmallMatrix,
    gram_inverse: SmallMatrix,
    condition: f64,
}

impl BodyFrameLandmarks {
    /// The 2 x p matrix `I`.
    pub fn matrix(&self) -> &SmallMatrix {
        &self.matrix
    }

    /// `(I I^T)^-1`.
    pub fn gram_inverse(&self) -> &SmallMatrix {
        &self.gram_inverse
    }

    /// Condition number of `I I^T`.
    pub fn condition(&self) -> f64 {
        self.condition
    }
}

pub fn body_frame_landmarks(x_hat: &Pose, lm: &LandmarkSet) -> Result<BodyFrameLandmarks> {
    body_frame_landmarks_with_bound(x_hat, lm, DEFAULT_CONDITION_BOUND)
}

pub fn body_frame_landmarks_with_bound(
    x_hat: &Pose,
    lm: &LandmarkSet,
    bound: f64,
) -> Result<BodyFrameLandmarks> {
    let inv = inverse(x_hat);
    let p = lm.len();
    let mut m = SmallMatrix::zeros(2, p);
    for (i, pt) in lm.points().iter().enumerate() {
        let b = inv.transform_point(*pt);
        m[(0, i)] = b[0];
        m[(1, i)] = b[1];
    }
    let gram = &m * &m.transpose();
    let (a, b, d) = (gram[(0, 0)], gram[(0, 1)], gram[(1, 1)]);
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let lmax = half_tr + disc;
    let det = a * d - b * b;
    let lmin = if lmax > 0.0 { det / lmax } else { 0.0 };
    let condition = if lmin > 0.0 {
        lmax / lmin
    } else {
        f64::INFINITY
    };
    if !(condition <= bound) {
        return Err(Error::Geometry { condition, bound });
    }
    let gram_inverse = SmallMatrix::from_rows(&[[d / det, -b / det], [-b / det, a / det]]);
    Ok(BodyFrameLandmarks {
        matrix: m,
        gram_inverse,
        condition,
    })
}

/// `eps_i = |p_hat - p_i|^2 - lambda_i`.
pub fn output_error(x_hat: &Pose, lm: &LandmarkSet, y: &Measurement) -> Result<Vec<f64>> {
    if y.len() != lm.len() {
        return Err(Error::Dimension(format!(
            "{} measurements for {} landmarks",
            y.len(),
            lm.len()
        )));
    }
    Ok(measure(x_hat, lm)
        .values()
        .iter()
        .zip(y.values())
        .map(|(h, l)| h - l)
        .collect())
}

/// The 3 x 2 matrix that the linearized correction reduces to:
///
/// ```text
/// [ |u| l1   u v   ]
/// [ -u v     |u| l2 ]
/// [ 0        u l3   ]
/// ```
///
/// The sign of the `l3` entry makes the `(e_y, e_theta)` block of the error
/// dynamics Hurwitz, given `d/dt e_y = u e_theta + ...` for the error `x^-1 x_hat`.
pub fn correction_matrix(u: f64, v: f64, gains: &ObserverGains) -> SmallMatrix {
    let a = u.abs();
    SmallMatrix::from_rows(&[
        [a * gains.l1, u * v],
        [-u * v, a * gains.l2],
        [0.0, u * gains.l3],
    ])
}

/// `L = -1/2 Lc (I I^T)^-1 I`, a 3 x p matrix.
pub fn gain_matrix(
    body: &BodyFrameLandmarks,
    u: f64,
    v: f64,
    gains: &ObserverGains,
) -> SmallMatrix {
    let lc = correction_matrix(u, v, gains);
    (&(&lc * body.gram_inverse()) * body.matrix()).scale(-0.5)
}

/// Time derivative of the estimate.
pub fn observer_field(
    x_hat: &Pose,
    inp: &RobotInput,
    lm: &LandmarkSet,
    y: &Measurement,
    gains: &ObserverGains,
) -> Result<[f64; 3]> {
    let eps = output_error(x_hat, lm, y)?;
    let body = body_frame_landmarks(x_hat, lm)?;
    let l = gain_matrix(&body, inp.u, inp.v, gains);
    let c = l.mul_vec(&eps);
    let corr = transport_tangent(x_hat, &Twist::new(-c[0], -c[1], -c[2]));
    let f = dynamics(x_hat, inp);
    Ok([f[0] + corr.vx, f[1] + corr.vy, f[2] + corr.omega])
}

/// Linearized dynamics of the state error `x^-1 x_hat` at the origin; depends
/// only on the input and the gains.
pub fn obs_error_matrix(u: f64, _v: f64, gains: &ObserverGains) -> SmallMatrix {
    let a = u.abs();
    SmallMatrix::from_rows(&[
        [-a * gains.l1, 0.0, 0.0],
        [0.0, -a * gains.l2, u],
        [0.0, -u * gains.l3, 0.0],
    ])
}
