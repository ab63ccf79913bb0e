//! Invariant tracking error and the linearized state-feedback tracking law.

use crate::error::{Error, Result};
use crate::lie::{compose, inverse, Pose};
use crate::numerics::SmallMatrix;
use crate::robot::RobotInput;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl ControllerGains {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        for (name, value) in [("k1", k1), ("k2", k2), ("k3", k3)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Gain { name, value });
            }
        }
        Ok(Self { k1, k2, k3 })
    }
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
        }
    }
}

/// Components of `g_r^-1 * g`: position error in the reference body frame
/// and heading error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingError {
    pub eta_x: f64,
    pub eta_y: f64,
    pub eta_theta: f64,
}

impl TrackingError {
    pub fn from_pose(p: &Pose) -> Self {
        Self {
            eta_x: p.x,
            eta_y: p.y,
            eta_theta: p.theta,
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            eta_x: a[0],
            eta_y: a[1],
            eta_theta: a[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.eta_x, self.eta_y, self.eta_theta]
    }

    pub fn norm(&self) -> f64 {
        (self.eta_x.powi(2) + self.eta_y.powi(2) + self.eta_theta.powi(2)).sqrt()
    }
}

pub fn tracking_error(g_r: &Pose, g: &Pose) -> TrackingError {
    TrackingError::from_pose(&compose(&inverse(g_r), g))
}

/// Nonlinear tracking error dynamics for a reference driven by `(u_r, v_r)`
/// and a plant driven by `applied`.
pub fn tracking_error_dynamics(
    eta: &TrackingError,
    u_r: f64,
    v_r: f64,
    applied: &RobotInput,
) -> [f64; 3] {
    let (s, c) = eta.eta_theta.sin_cos();
    let w_r = u_r * v_r;
    [
        applied.u * c - u_r + w_r * eta.eta_y,
        applied.u * s - w_r * eta.eta_x,
        applied.u * applied.v - w_r,
    ]
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Tracking law acting on the estimated error `eta_hat`:
///
/// ```text
/// u = u_r - u_r v_r eta_y - |u_r| k1 eta_x
/// v = v_r + v_r sgn(u_r) k1 eta_x + v_r^2 eta_y - k2 eta_y - sgn(u_r) k3 eta_theta
/// ```
pub fn feedback(
    eta_hat: &TrackingError,
    u_r: f64,
    v_r: f64,
    gains: &ControllerGains,
) -> Result<RobotInput> {
    if u_r == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let sg = sign(u_r);
    let TrackingError {
        eta_x,
        eta_y,
        eta_theta,
    } = *eta_hat;
    let u = u_r - u_r * v_r * eta_y - u_r.abs() * gains.k1 * eta_x;
    let v = v_r + v_r * sg * gains.k1 * eta_x + v_r * v_r * eta_y
        - gains.k2 * eta_y
        - sg * gains.k3 * eta_theta;
    Ok(RobotInput::new(u, v))
}

/// Linearized closed-loop tracking error matrix around a permanent reference.
pub fn ctrl_loop_matrix(u_r: f64, v_r: f64, gains: &ControllerGains) -> SmallMatrix {
    let a = u_r.abs();
    SmallMatrix::from_rows(&[
        [-a * gains.k1, 0.0, 0.0],
        [-u_r * v_r, 0.0, u_r],
        [0.0, -u_r * gains.k2, -a * gains.k3],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{eigenvalues, jacobian_fd, spectral_abscissa, Spectrum, DEFAULT_FD_STEP};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn unit_gains() -> ControllerGains {
        ControllerGains::default()
    }

    #[test]
    fn gains_must_be_positive() {
        assert!(ControllerGains::new(1.0, 2.0, 3.0).is_ok());
        assert_eq!(
            ControllerGains::new(-1.0, 1.0, 1.0),
            Err(Error::Gain {
                name: "k1",
                value: -1.0
            })
        );
        assert!(ControllerGains::new(1.0, 0.0, 1.0).is_err());
        assert!(ControllerGains::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn tracking_error_examples() {
        let g_r = Pose::new(1.0, 2.0, 0.7);
        assert!(tracking_error(&g_r, &g_r).norm() < 1e-15);
        let e = tracking_error(&Pose::identity(), &Pose::new(1.0, 2.0, 0.3));
        assert_eq!(e.to_array(), [1.0, 2.0, 0.3]);
    }

    #[test]
    fn tracking_error_is_invariant() {
        let g_r = Pose::new(1.0, 2.0, 0.7);
        let g = Pose::new(-0.5, 2.4, 1.9);
        let base = tracking_error(&g_r, &g);
        for g0 in [Pose::new(3.0, -1.0, 2.0), Pose::new(-7.0, 0.1, -3.0)] {
            let moved = tracking_error(&compose(&g0, &g_r), &compose(&g0, &g));
            for (a, b) in base.to_array().iter().zip(moved.to_array()) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tracking_error_dynamics_agree_with_pose_rates() {
        use crate::lie::relative_rate;
        use crate::robot::dynamics;
        let g_r = Pose::new(1.0, 2.0, 0.7);
        let g = Pose::new(1.3, 1.8, 0.9);
        let r_in = RobotInput::new(1.2, 0.4);
        let applied = RobotInput::new(0.9, -0.3);
        let direct = relative_rate(&g_r, dynamics(&g_r, &r_in), &g, dynamics(&g, &applied));
        let eta = tracking_error(&g_r, &g);
        let closed = tracking_error_dynamics(&eta, r_in.u, r_in.v, &applied);
        for i in 0..3 {
            assert_abs_diff_eq!(direct[i], closed[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn feedback_examples() {
        let zero = TrackingError::default();
        assert_eq!(
            feedback(&zero, 1.3, -0.4, &unit_gains()).unwrap(),
            RobotInput::new(1.3, -0.4)
        );
        let out = feedback(
            &TrackingError::from_array([0.1, 0.2, 0.05]),
            1.0,
            0.0,
            &unit_gains(),
        )
        .unwrap();
        assert_abs_diff_eq!(out.u, 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(out.v, -0.25, epsilon = 1e-15);
        assert_eq!(
            feedback(&zero, 0.0, 0.5, &unit_gains()),
            Err(Error::DegenerateReference)
        );
    }

    #[test]
    fn feedback_linearization_matches_stated_coefficients() {
        let (u_r, v_r) = (-1.5, 0.4);
        let k = ControllerGains::new(0.7, 1.3, 2.1).unwrap();
        let j = jacobian_fd(
            |e| {
                let o =
                    feedback(&TrackingError::from_array([e[0], e[1], e[2]]), u_r, v_r, &k).unwrap();
                vec![o.u, o.v]
            },
            &[0.0; 3],
            DEFAULT_FD_STEP,
        )
        .unwrap();
        let expected = SmallMatrix::from_rows(&[
            [-u_r.abs() * k.k1, -u_r * v_r, 0.0],
            [-v_r * k.k1, v_r * v_r - k.k2, k.k3],
        ]);
        assert!(j.max_abs_diff(&expected) < 1e-9);
    }

    #[test]
    fn ctrl_loop_examples() {
        assert_eq!(ctrl_loop_matrix(0.0, 0.3, &unit_gains()).max_abs(), 0.0);
        let spec = eigenvalues(&ctrl_loop_matrix(1.0, 0.5, &unit_gains())).unwrap();
        let h = 3.0f64.sqrt() / 2.0;
        let expected = Spectrum::new(vec![
            Complex64::new(-1.0, 0.0),
            Complex64::new(-0.5, h),
            Complex64::new(-0.5, -h),
        ]);
        assert!(spec.max_mismatch(&expected).unwrap() < 1e-9);
    }

    fn closed_loop_jacobian(u_r: f64, v_r: f64, k: &ControllerGains) -> SmallMatrix {
        jacobian_fd(
            |e| {
                let eta = TrackingError::from_array([e[0], e[1], e[2]]);
                let applied = feedback(&eta, u_r, v_r, k).unwrap();
                tracking_error_dynamics(&eta, u_r, v_r, &applied).to_vec()
            },
            &[0.0; 3],
            DEFAULT_FD_STEP,
        )
        .unwrap()
    }

    #[test]
    fn ctrl_loop_matches_nonlinear_linearization() {
        for (u_r, v_r) in [(1.0, 0.5), (-2.0, 0.3), (0.4, -1.7), (1.0, 0.0)] {
            let k = ControllerGains::new(0.8, 1.4, 2.2).unwrap();
            let fd = closed_loop_jacobian(u_r, v_r, &k);
            assert!(fd.max_abs_diff(&ctrl_loop_matrix(u_r, v_r, &k)) < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn ctrl_loop_is_hurwitz(u_r in prop_oneof![-5.0..-0.05f64, 0.05..5.0f64],
                                v_r in -3.0..3.0f64,
                                k1 in 0.05..5.0f64, k2 in 0.05..5.0f64, k3 in 0.05..5.0f64) {
            let k = ControllerGains::new(k1, k2, k3).unwrap();
            prop_assert!(spectral_abscissa(&ctrl_loop_matrix(u_r, v_r, &k)).unwrap() < 0.0);
        }

        #[test]
        fn feedback_is_invariant(x in -5.0..5.0f64, y in -5.0..5.0f64, t in -3.0..3.0f64,
                                 x0 in -5.0..5.0f64, y0 in -5.0..5.0f64, t0 in -3.0..3.0f64) {
            let g_r = Pose::new(1.0, -1.0, 0.3);
            let g = Pose::new(x, y, t);
            let g0 = Pose::new(x0, y0, t0);
            let a = feedback(&tracking_error(&g_r, &g), 1.0, 0.5, &unit_gains()).unwrap();
            let b = feedback(&tracking_error(&compose(&g0, &g_r), &compose(&g0, &g)), 1.0, 0.5, &unit_gains()).unwrap();
            prop_assert!((a.u - b.u).abs() < 1e-9 && (a.v - b.v).abs() < 1e-9);
        }
    }
}
