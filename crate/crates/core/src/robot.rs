//! Unicycle kinematics with squared-distance landmark measurements, and the
//! SE(2) transformation group acting on state, input, landmarks and output.

use crate::error::{Error, Result};
use crate::lie::{compose, transport_tangent, Pose, Twist};

/// Forward speed `u` (m/s) and steering tangent `v` (1/m); heading rate is `u * v`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RobotInput {
    pub u: f64,
    pub v: f64,
}

impl RobotInput {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Body-frame velocity generated by this input.
    pub fn twist(&self) -> Twist {
        Twist::new(self.u, 0.0, self.u * self.v)
    }
}

/// At least three known, non-collinear planar landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub const MIN_COUNT: usize = 3;
    const COLLINEARITY_RTOL: f64 = 1e-8;

    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < Self::MIN_COUNT {
            return Err(Error::Landmarks(format!(
                "need at least {} landmarks, got {}",
                Self::MIN_COUNT,
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Landmarks("non-finite landmark coordinate".into()));
        }
        let (smin, smax) = centered_singular_values(&points);
        if !(smin > Self::COLLINEARITY_RTOL * smax) {
            return Err(Error::Landmarks(format!(
                "landmarks are collinear (singular values {smin:e}, {smax:e})"
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Landmarks moved rigidly by `g0`. Rigid motions preserve non-collinearity.
    pub fn transformed(&self, g0: &Pose) -> Self {
        Self {
            points: self.points.iter().map(|p| g0.transform_point(*p)).collect(),
        }
    }

    /// Uniform scaling about the origin.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.points.iter().map(|p| [p[0] * s, p[1] * s]).collect())
    }
}

// Singular values of the centered p x 2 coordinate matrix, ascending.
fn centered_singular_values(points: &[[f64; 2]]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let dx = p[0] - mx;
        let dy = p[1] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let half_tr = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let lmax = half_tr + disc;
    // Product form avoids cancellation in the small eigenvalue.
    let lmin = if lmax > 0.0 {
        (sxx * syy - sxy * sxy).max(0.0) / lmax
    } else {
        0.0
    };
    (lmin.sqrt(), lmax.sqrt())
}

/// Squared distances `lambda_i` to each landmark, in landmark order.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement(pub Vec<f64>);

impl Measurement {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `(u cos theta, u sin theta, u v)`.
pub fn dynamics(g: &Pose, inp: &RobotInput) -> [f64; 3] {
    let (s, c) = g.theta.sin_cos();
    [inp.u * c, inp.u * s, inp.u * inp.v]
}

pub fn measure(g: &Pose, lm: &LandmarkSet) -> Measurement {
    Measurement(
        lm.points()
            .iter()
            .map(|p| {
                let dx = g.x - p[0];
                let dy = g.y - p[1];
                dx * dx + dy * dy
            })
            .collect(),
    )
}

/// Transformed arguments produced by [`act`].
#[derive(Debug, Clone, PartialEq)]
pub struct Acted {
    pub pose: Pose,
    pub input: RobotInput,
    pub landmarks: LandmarkSet,
    pub measurement: Measurement,
}

/// Action of `g0`: left multiplication on the pose, rigid motion on the
/// landmarks, identity on `(u, v)` and on the squared distances.
pub fn act(g0: &Pose, g: &Pose, inp: &RobotInput, lm: &LandmarkSet, y: &Measurement) -> Acted {
    Acted {
        pose: compose(g0, g),
        input: *inp,
        landmarks: lm.transformed(g0),
        measurement: y.clone(),
    }
}

/// How far the system is from commuting with the action of `g0`; zero for an
/// invariant system.
pub fn invariance_residual(g0: &Pose, g: &Pose, inp: &RobotInput, lm: &LandmarkSet) -> f64 {
    let y = measure(g, lm);
    let acted = act(g0, g, inp, lm, &y);
    let lhs = dynamics(&acted.pose, &acted.input);
    let rhs = transport_tangent(g0, &Twist::from_array(dynamics(g, inp))).to_array();
    let dyn_res = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let out = measure(&acted.pose, &acted.landmarks);
    let out_res = out
        .values()
        .iter()
        .zip(acted.measurement.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    dyn_res.max(out_res)
}
