//! SE(2) group arithmetic.
//!
//! Poses are stored as `(x, y, theta)` with the heading kept in `(-pi, pi]`.
//! Tangent vectors live in se(2), identified with R^3 as `(vx, vy, omega)`,
//! where `(vx, vy)` is expressed in the body frame.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const SMALL_ANGLE: f64 = 1e-7;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

/// Element of SE(2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Element of se(2).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    /// Group product `self * other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose {
        inverse(self)
    }

    /// Rotates a planar vector by this pose's heading.
    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    /// Applies the pose as a rigid motion to a planar point.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let r = self.rotate(p);
        [r[0] + self.x, r[1] + self.y]
    }

    /// Componentwise distance, with the heading difference wrapped.
    pub fn distance(&self, other: &Pose) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dt = normalize_angle(self.theta - other.theta);
        (dx * dx + dy * dy + dt * dt).sqrt()
    }
}

impl Twist {
    pub const fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.vx, self.vy, self.omega]
    }

    pub fn scale(&self, s: f64) -> Twist {
        Twist::new(self.vx * s, self.vy * s, self.omega * s)
    }

    pub fn norm(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy + self.omega * self.omega).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    let (s, c) = a.theta.sin_cos();
    Pose::new(
        b.x * c - b.y * s + a.x,
        b.x * s + b.y * c + a.y,
        a.theta + b.theta,
    )
}

pub fn inverse(g: &Pose) -> Pose {
    let (s, c) = g.theta.sin_cos();
    Pose::new(-g.x * c - g.y * s, g.x * s - g.y * c, -g.theta)
}

// sin(w)/w and (1 - cos w)/w with a series branch near zero.
fn left_jacobian_coeffs(w: f64) -> (f64, f64) {
    if w.abs() < SMALL_ANGLE {
        (1.0 - w * w / 6.0, w / 2.0 - w * w * w / 24.0)
    } else {
        (w.sin() / w, (1.0 - w.cos()) / w)
    }
}

/// Closed-form exponential map.
pub fn exp(xi: &Twist) -> Pose {
    let (a, b) = left_jacobian_coeffs(xi.omega);
    Pose::new(a * xi.vx - b * xi.vy, b * xi.vx + a * xi.vy, xi.omega)
}

/// Principal-branch logarithm. Fails for `theta = pi`, where the branch is ambiguous.
pub fn log(g: &Pose) -> Result<Twist> {
    let w = normalize_angle(g.theta);
    if w.abs() >= PI {
        return Err(Error::LogBranch { theta: g.theta });
    }
    let (a, b) = left_jacobian_coeffs(w);
    let det = a * a + b * b;
    Ok(Twist::new(
        (a * g.x + b * g.y) / det,
        (-b * g.x + a * g.y) / det,
        w,
    ))
}

/// Pushes a body-frame tangent vector forward by left translation with `g`:
/// rotate `(vx, vy)` by `g.theta`, leave `omega` unchanged.
pub fn transport_tangent(g: &Pose, xi: &Twist) -> Twist {
    let [vx, vy] = g.rotate([xi.vx, xi.vy]);
    Twist::new(vx, vy, xi.omega)
}

/// Time derivative of the coordinates of `a^-1 * b`, given the coordinate
/// derivatives of `a` and `b`.
pub fn relative_rate(a: &Pose, a_dot: [f64; 3], b: &Pose, b_dot: [f64; 3]) -> [f64; 3] {
    let (s, c) = a.theta.sin_cos();
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let ex = c * dx + s * dy;
    let ey = -s * dx + c * dy;
    let vx = b_dot[0] - a_dot[0];
    let vy = b_dot[1] - a_dot[1];
    [
        c * vx + s * vy + a_dot[2] * ey,
        -s * vx + c * vy - a_dot[2] * ex,
        b_dot[2] - a_dot[2],
    ]
}
