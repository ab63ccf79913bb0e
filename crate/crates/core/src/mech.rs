//! Rigid body on SO(3) written as an Euler-Poincare system, and a numerical
//! check of whether its linearized tracking error is time invariant along
//! constant-velocity references.
//!
//! ```text
//! x' = x hat(xi)
//! xi' = A(xi) + I^-1 (F(x, xi) + u),   A(xi) = I^-1 (I xi x xi)
//! ```

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::closed_loop::max_pairwise_deviation;
use crate::error::{Error, Result};
use crate::numerics::{try_jacobian_fd, DEFAULT_FD_STEP};

/// Orthonormality tolerance accepted on construction.
pub const ATTITUDE_TOLERANCE: f64 = 1e-9;

/// External torque acting on the body, expressed in body axes.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceModel {
    Free,
    /// `F = -D xi`.
    Damping(Matrix3<f64>),
    /// Point mass `mass` at body-fixed `offset` under gravity along `-z` of
    /// the inertial frame.
    OffsetMass {
        offset: Vector3<f64>,
        mass: f64,
        gravity: f64,
    },
}

impl ForceModel {
    pub fn torque(&self, attitude: &Matrix3<f64>, xi: &Vector3<f64>) -> Vector3<f64> {
        match self {
            ForceModel::Free => Vector3::zeros(),
            ForceModel::Damping(d) => -(d * xi),
            ForceModel::OffsetMass {
                offset,
                mass,
                gravity,
            } => {
                let weight = attitude.transpose() * Vector3::new(0.0, 0.0, -mass * gravity);
                offset.cross(&weight)
            }
        }
    }

    /// True when the torque does not depend on the attitude.
    pub fn is_attitude_free(&self) -> bool {
        !matches!(self, ForceModel::OffsetMass { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpSystem {
    pub attitude: Matrix3<f64>,
    pub xi: Vector3<f64>,
    pub inertia: Matrix3<f64>,
    pub force: ForceModel,
    inertia_inv: Matrix3<f64>,
}

impl EpSystem {
    pub fn new(
        attitude: Matrix3<f64>,
        xi: Vector3<f64>,
        inertia: Matrix3<f64>,
        force: ForceModel,
    ) -> Result<Self> {
        if orthonormality_residual(&attitude) > ATTITUDE_TOLERANCE || attitude.determinant() <= 0.0
        {
            return Err(Error::InvalidArgument("attitude is not a rotation".into()));
        }
        if (inertia - inertia.transpose()).amax() > 1e-12 * inertia.amax()
            || inertia.cholesky().is_none()
        {
            return Err(Error::InvalidArgument(
                "inertia must be symmetric positive definite".into(),
            ));
        }
        if !xi.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "body velocity must be finite".into(),
            ));
        }
        let inertia_inv = inertia.try_inverse().ok_or(Error::Singular)?;
        Ok(Self {
            attitude,
            xi,
            inertia,
            force,
            inertia_inv,
        })
    }

    /// Identity attitude, zero velocity, `I = diag(inertia)`.
    pub fn at_rest(inertia: [f64; 3], force: ForceModel) -> Result<Self> {
        Self::new(
            Matrix3::identity(),
            Vector3::zeros(),
            Matrix3::from_diagonal(&Vector3::from(inertia)),
            force,
        )
    }

    pub fn with_state(&self, attitude: Matrix3<f64>, xi: Vector3<f64>) -> Self {
        Self {
            attitude,
            xi,
            ..self.clone()
        }
    }

    /// `A(xi) = I^-1 (I xi x xi)`.
    pub fn bilinear(&self, xi: &Vector3<f64>) -> Vector3<f64> {
        self.inertia_inv * (self.inertia * xi).cross(xi)
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.xi.dot(&(self.inertia * self.xi))
    }

    pub fn angular_momentum(&self) -> Vector3<f64> {
        self.attitude * (self.inertia * self.xi)
    }

    fn rates(
        &self,
        attitude: &Matrix3<f64>,
        xi: &Vector3<f64>,
        u: &Vector3<f64>,
    ) -> (Matrix3<f64>, Vector3<f64>) {
        let x_dot = attitude * hat(xi);
        let xi_dot = self.bilinear(xi) + self.inertia_inv * (self.force.torque(attitude, xi) + u);
        (x_dot, xi_dot)
    }

    /// One RK4 step under constant torque `u`, followed by projection of the
    /// attitude back onto SO(3).
    pub fn step(&self, u: &Vector3<f64>, h: f64) -> Self {
        let (r0, w0) = (self.attitude, self.xi);
        let (k1r, k1w) = self.rates(&r0, &w0, u);
        let (k2r, k2w) = self.rates(&(r0 + k1r * (h / 2.0)), &(w0 + k1w * (h / 2.0)), u);
        let (k3r, k3w) = self.rates(&(r0 + k2r * (h / 2.0)), &(w0 + k2w * (h / 2.0)), u);
        let (k4r, k4w) = self.rates(&(r0 + k3r * h), &(w0 + k3w * h), u);
        let r = r0 + (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (h / 6.0);
        let w = w0 + (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (h / 6.0);
        self.with_state(project_to_rotation(&r), w)
    }

    /// States at `0, dt, ..., t_end` (the final step is shortened to land on
    /// `t_end`).
    pub fn integrate(&self, u: &Vector3<f64>, t_end: f64, dt: f64) -> Result<Vec<Self>> {
        let grid = crate::numerics::time_grid(0.0, t_end, dt)?;
        let mut out = Vec::with_capacity(grid.len());
        out.push(self.clone());
        for w in grid.windows(2) {
            let next = out.last().expect("non-empty").step(u, w[1] - w[0]);
            if !next.xi.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { t: w[0] });
            }
            out.push(next);
        }
        Ok(out)
    }
}

/// `(x', xi')` for the current state of `s` under torque `u`.
pub fn ep_dynamics(s: &EpSystem, u: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    s.rates(&s.attitude, &s.xi, u)
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Largest entry of `R^T R - I`.
pub fn orthonormality_residual(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Nearest rotation in the Frobenius sense, `U V^T` from the SVD.
pub fn project_to_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

pub fn exp_so3(phi: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*phi).into_inner()
}

/// Inverse right Jacobian of SO(3):
/// `I + hat(phi)/2 + (1/theta^2 - (1 + cos theta) / (2 theta sin theta)) hat(phi)^2`.
pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let p = hat(phi);
    let c = if theta < 1e-4 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() + p * 0.5 + p * p * c
}

/// Reference along which `xi` stays at `xi_r`: attitude `x0 exp(t xi_r)` and
/// feedforward torque cancelling the bilinear and external terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantVelocityReference {
    pub start: Matrix3<f64>,
    pub xi_r: Vector3<f64>,
}

impl ConstantVelocityReference {
    pub fn attitude(&self, t: f64) -> Matrix3<f64> {
        self.start * exp_so3(&(self.xi_r * t))
    }

    pub fn torque(&self, s: &EpSystem, t: f64) -> Vector3<f64> {
        -(s.inertia * self.xi_r).cross(&self.xi_r) - s.force.torque(&self.attitude(t), &self.xi_r)
    }
}

/// Rate of the tracking error `(phi, eta_xi)` with `x = x_r exp(phi)` and
/// `xi = xi_r + eta_xi`, under the reference torque.
pub fn tracking_error_rate(
    s: &EpSystem,
    reference: &ConstantVelocityReference,
    t: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    if z.len() != 6 {
        return Err(Error::Dimension(format!(
            "rigid-body error has 6 components, got {}",
            z.len()
        )));
    }
    let phi = Vector3::new(z[0], z[1], z[2]);
    let eta_xi = Vector3::new(z[3], z[4], z[5]);
    let e = exp_so3(&phi);
    let x = reference.attitude(t) * e;
    let xi = reference.xi_r + eta_xi;
    let phi_dot = right_jacobian_inv(&phi) * (xi - e.transpose() * reference.xi_r);
    let (_, xi_dot) = s.rates(&x, &xi, &reference.torque(s, t));
    Ok(vec![
        phi_dot.x, phi_dot.y, phi_dot.z, xi_dot.x, xi_dot.y, xi_dot.z,
    ])
}

/// Largest pairwise Frobenius distance between the linearized tracking error
/// matrices at `times`, along the reference starting at `s.attitude` with
/// constant body velocity `xi_r`.
pub fn lemma1_probe(s: &EpSystem, xi_r: &Vector3<f64>, times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InvalidArgument(
            "probe needs at least two times".into(),
        ));
    }
    let reference = ConstantVelocityReference {
        start: s.attitude,
        xi_r: *xi_r,
    };
    let mats = times
        .iter()
        .map(|&t| {
            try_jacobian_fd(
                |z| tracking_error_rate(s, &reference, t, z),
                &[0.0; 6],
                DEFAULT_FD_STEP,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(max_pairwise_deviation(&mats))
}
