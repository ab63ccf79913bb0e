//! Continuous-time extended Kalman filter in Cartesian coordinates.
//!
//! Serves as the non-invariant contrast: its linearized error matrix
//! `F - L H` rotates with the heading, so it changes along a circle even
//! when the invariant observer's does not.

use crate::error::{Error, Result};
use crate::lie::Pose;
use crate::numerics::{rk4_step, time_grid, SmallMatrix};
use crate::robot::{dynamics, measure, LandmarkSet, Measurement, RobotInput};
use crate::trajectory::Reference;

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub estimate: Pose,
    pub covariance: SmallMatrix,
}

/// Process and measurement noise intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfNoise {
    pub q: SmallMatrix,
    pub r: SmallMatrix,
}

impl EkfNoise {
    pub fn isotropic(q: f64, r: f64, landmarks: usize) -> Self {
        Self {
            q: SmallMatrix::identity(3).scale(q),
            r: SmallMatrix::identity(landmarks).scale(r),
        }
    }

    /// `Q = 1e-3 I`, `R = 1e-2 I`.
    pub fn standard(landmarks: usize) -> Self {
        Self::isotropic(1e-3, 1e-2, landmarks)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfDerivative {
    pub estimate: [f64; 3],
    pub covariance: SmallMatrix,
}

/// State Jacobian `F` (3 x 3) of the unicycle and output Jacobian `H` (p x 3)
/// of the squared distances, both at `x_hat`.
pub fn ekf_jacobians(
    x_hat: &Pose,
    inp: &RobotInput,
    lm: &LandmarkSet,
) -> (SmallMatrix, SmallMatrix) {
    let (s, c) = x_hat.theta.sin_cos();
    let mut f = SmallMatrix::zeros(3, 3);
    f[(0, 2)] = -inp.u * s;
    f[(1, 2)] = inp.u * c;
    let mut h = SmallMatrix::zeros(lm.len(), 3);
    for (i, p) in lm.points().iter().enumerate() {
        h[(i, 0)] = 2.0 * (x_hat.x - p[0]);
        h[(i, 1)] = 2.0 * (x_hat.y - p[1]);
    }
    (f, h)
}

/// `L = P H^T R^-1`.
pub fn ekf_gain(p: &SmallMatrix, h: &SmallMatrix, r: &SmallMatrix) -> Result<SmallMatrix> {
    let r_inv = r.inverse()?;
    Ok(&(p * &h.transpose()) * &r_inv)
}

/// `F P + P F^T + Q - P H^T R^-1 H P`.
pub fn riccati_rate(
    f: &SmallMatrix,
    h: &SmallMatrix,
    p: &SmallMatrix,
    q: &SmallMatrix,
    r: &SmallMatrix,
) -> Result<SmallMatrix> {
    let gain = ekf_gain(p, h, r)?;
    let fp = f * p;
    let drift = &(&fp + &fp.transpose()) + q;
    Ok(&drift - &(&(&gain * h) * p))
}

pub fn ekf_field(
    s: &EkfState,
    inp: &RobotInput,
    lm: &LandmarkSet,
    y: &Measurement,
    noise: &EkfNoise,
) -> Result<EkfDerivative> {
    if y.len() != lm.len() || noise.r.rows() != lm.len() {
        return Err(Error::Dimension(format!(
            "{} landmarks, {} measurements, R is {}x{}",
            lm.len(),
            y.len(),
            noise.r.rows(),
            noise.r.cols()
        )));
    }
    let (f, h) = ekf_jacobians(&s.estimate, inp, lm);
    let gain = ekf_gain(&s.covariance, &h, &noise.r)?;
    let innovation: Vec<f64> = measure(&s.estimate, lm)
        .values()
        .iter()
        .zip(y.values())
        .map(|(a, b)| a - b)
        .collect();
    let corr = gain.mul_vec(&innovation);
    let model = dynamics(&s.estimate, inp);
    let p_dot = riccati_rate(&f, &h, &s.covariance, &noise.q, &noise.r)?;
    Ok(EkfDerivative {
        estimate: [model[0] - corr[0], model[1] - corr[1], model[2] - corr[2]],
        covariance: p_dot.symmetrized(),
    })
}

/// Linearized Cartesian estimation error matrix `F - L H` at `x_hat`.
pub fn ekf_error_matrix(
    x_hat: &Pose,
    inp: &RobotInput,
    lm: &LandmarkSet,
    gain: &SmallMatrix,
) -> SmallMatrix {
    let (f, h) = ekf_jacobians(x_hat, inp, lm);
    &f - &(gain * &h)
}

impl EkfState {
    pub fn new(estimate: Pose, covariance: SmallMatrix) -> Result<Self> {
        if covariance.rows() != 3 || covariance.cols() != 3 {
            return Err(Error::Dimension("EKF covariance must be 3x3".into()));
        }
        Ok(Self {
            estimate,
            covariance: covariance.symmetrized(),
        })
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.estimate.to_array().to_vec();
        v.extend_from_slice(self.covariance.as_slice());
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        let cov = SmallMatrix::from_row_major(3, 3, v[3..12].to_vec()).expect("3x3 block");
        Self {
            estimate: Pose::new(v[0], v[1], v[2]),
            covariance: cov.symmetrized(),
        }
    }
}

/// Upper bound on the rate of the `P H^T R^-1 H` terms.
fn correction_rate(s: &EkfState, lm: &LandmarkSet, r_inv_norm: &f64) -> f64 {
    let (_, h) = ekf_jacobians(&s.estimate, &RobotInput::new(0.0, 0.0), lm);
    let hn = h.frobenius_norm();
    s.covariance.frobenius_norm() * hn * hn * r_inv_norm
}

/// Runs the filter with the truth riding on `reference` (exact measurements,
/// reference input) and returns the state at each of `times`, which must be
/// non-decreasing and start at or after zero.
pub fn run_along_reference(
    reference: &Reference,
    lm: &LandmarkSet,
    noise: &EkfNoise,
    initial: &EkfState,
    times: &[f64],
    dt: f64,
) -> Result<Vec<EkfState>> {
    let field = |t: f64, z: &[f64]| -> Vec<f64> {
        let s = EkfState::from_vec(z);
        let truth = reference.pose(t);
        let y = measure(&truth, lm);
        match ekf_field(&s, &reference.input(t), lm, &y, noise) {
            Ok(d) => {
                let mut out = d.estimate.to_vec();
                out.extend_from_slice(d.covariance.as_slice());
                out
            }
            Err(_) => vec![f64::NAN; 12],
        }
    };
    let r_inv_norm = noise.r.inverse()?.frobenius_norm();
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut z = initial.to_vec();
    for &target in times {
        if target < t {
            return Err(Error::InvalidArgument(format!(
                "sample times must be non-decreasing and >= 0, got {target} after {t}"
            )));
        }
        if target > t {
            let grid = time_grid(t, target, dt)?;
            for w in grid.windows(2) {
                let h = w[1] - w[0];
                // The correction term is stiff while P is large; substep so
                // that h times its rate scale stays below one.
                let rate = correction_rate(&EkfState::from_vec(&z), lm, &r_inv_norm);
                let n = (h * rate).ceil().clamp(1.0, 1e6) as usize;
                let sub = h / n as f64;
                for k in 0..n {
                    z = rk4_step(&field, w[0] + k as f64 * sub, &z, sub);
                    if z.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Divergence { t: w[0] });
                    }
                    // Keep P exactly symmetric.
                    let s = EkfState::from_vec(&z);
                    z[3..12].copy_from_slice(s.covariance.as_slice());
                }
            }
            t = target;
        }
        out.push(EkfState::from_vec(&z));
    }
    Ok(out)
}

/// Rate of the Cartesian estimation error `delta = x_hat - x` with the truth
/// on `reference` and the gain frozen at `gain`.
pub fn cartesian_error_rate(
    reference: &Reference,
    lm: &LandmarkSet,
    gain: &SmallMatrix,
    t: f64,
    delta: &[f64],
) -> Vec<f64> {
    let x = reference.pose(t);
    let inp = reference.input(t);
    let x_hat = Pose {
        x: x.x + delta[0],
        y: x.y + delta[1],
        theta: x.theta + delta[2],
    };
    let innovation: Vec<f64> = measure(&x_hat, lm)
        .values()
        .iter()
        .zip(measure(&x, lm).values())
        .map(|(a, b)| a - b)
        .collect();
    let corr = gain.mul_vec(&innovation);
    let fh = dynamics(&x_hat, &inp);
    let f = dynamics(&x, &inp);
    (0..3).map(|i| fh[i] - corr[i] - f[i]).collect()
}

/// Largest pairwise Frobenius distance between the EKF error matrices
/// `F - L H` at `times`, with `L` from the Riccati flow along `reference`.
pub fn ekf_time_invariance_probe(
    reference: &Reference,
    lm: &LandmarkSet,
    noise: &EkfNoise,
    initial: &EkfState,
    times: &[f64],
    dt: f64,
) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InvalidArgument(
            "probe needs at least two times".into(),
        ));
    }
    let states = run_along_reference(reference, lm, noise, initial, times, dt)?;
    let mats = states
        .iter()
        .zip(times)
        .map(|(s, &t)| {
            let (_, h) = ekf_jacobians(&s.estimate, &reference.input(t), lm);
            let gain = ekf_gain(&s.covariance, &h, &noise.r)?;
            Ok(ekf_error_matrix(
                &s.estimate,
                &reference.input(t),
                lm,
                &gain,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::closed_loop::max_pairwise_deviation(&mats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{eigenvalues, integrate_rk4, jacobian_fd, DEFAULT_FD_STEP};
    use crate::trajectory::PermanentTrajectory;
    use approx::assert_abs_diff_eq;

    fn standard() -> LandmarkSet {
        LandmarkSet::new(vec![[10.0, 0.0], [0.0, 10.0], [-10.0, -10.0]]).unwrap()
    }

    #[test]
    fn jacobian_examples() {
        let lm = LandmarkSet::new(vec![[3.0, 4.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (f, h) = ekf_jacobians(&Pose::new(1.0, 1.0, 0.4), &RobotInput::new(0.0, 0.5), &lm);
        assert_eq!(f.max_abs(), 0.0);
        let (_, h0) = ekf_jacobians(&Pose::identity(), &RobotInput::new(1.0, 0.0), &lm);
        assert_eq!(h0.row(0), &[-6.0, -8.0, 0.0]);
        assert_eq!(h.rows(), 3);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let lm = standard();
        for (x, inp) in [
            (Pose::new(1.0, 2.0, 0.4), RobotInput::new(1.0, 0.5)),
            (Pose::new(-3.0, 0.7, -2.2), RobotInput::new(-0.7, 1.4)),
            (Pose::new(6.0, -4.0, 3.0), RobotInput::new(2.0, -0.1)),
        ] {
            let (f, h) = ekf_jacobians(&x, &inp, &lm);
            let a = x.to_array();
            let fd_f = jacobian_fd(
                |p| {
                    dynamics(
                        &Pose {
                            x: p[0],
                            y: p[1],
                            theta: p[2],
                        },
                        &inp,
                    )
                    .to_vec()
                },
                &a,
                DEFAULT_FD_STEP,
            )
            .unwrap();
            let fd_h = jacobian_fd(
                |p| {
                    measure(
                        &Pose {
                            x: p[0],
                            y: p[1],
                            theta: p[2],
                        },
                        &lm,
                    )
                    .0
                },
                &a,
                DEFAULT_FD_STEP,
            )
            .unwrap();
            assert!(f.max_abs_diff(&fd_f) < 1e-6);
            assert!(h.max_abs_diff(&fd_h) < 1e-6);
        }
    }

    #[test]
    fn exact_measurement_gives_pure_model() {
        let lm = standard();
        let x = Pose::new(1.0, 2.0, 0.4);
        let inp = RobotInput::new(1.0, 0.5);
        let s = EkfState::new(x, SmallMatrix::identity(3)).unwrap();
        let d = ekf_field(&s, &inp, &lm, &measure(&x, &lm), &EkfNoise::standard(3)).unwrap();
        assert_eq!(d.estimate, dynamics(&x, &inp));
    }

    #[test]
    fn singular_r_is_rejected() {
        let lm = standard();
        let s = EkfState::new(Pose::identity(), SmallMatrix::identity(3)).unwrap();
        let noise = EkfNoise {
            q: SmallMatrix::identity(3),
            r: SmallMatrix::zeros(3, 3),
        };
        let y = measure(&Pose::identity(), &lm);
        assert_eq!(
            ekf_field(&s, &RobotInput::new(1.0, 0.0), &lm, &y, &noise),
            Err(Error::Singular)
        );
    }

    #[test]
    fn scalar_riccati_reaches_fixed_point() {
        // Static position measured directly: P' = Q - P^2 / R -> sqrt(Q R).
        let (q, r) = (0.3, 0.05);
        let f = SmallMatrix::zeros(1, 1);
        let h = SmallMatrix::identity(1);
        let qm = SmallMatrix::diag(&[q]);
        let rm = SmallMatrix::diag(&[r]);
        let run = integrate_rk4(
            |_, p| {
                let pm = SmallMatrix::diag(&[p[0]]);
                vec![riccati_rate(&f, &h, &pm, &qm, &rm).unwrap()[(0, 0)]]
            },
            &[2.0],
            0.0,
            20.0,
            1e-3,
        )
        .unwrap();
        assert_abs_diff_eq!(run.last().1[0], (q * r).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn covariance_stays_symmetric_psd_on_a_circle() {
        let lm = standard();
        let reference: Reference = PermanentTrajectory::new(1.0, 0.5, Pose::identity())
            .unwrap()
            .into();
        let init = EkfState::new(Pose::identity(), SmallMatrix::identity(3).scale(0.1)).unwrap();
        let times: Vec<f64> = (0..=30).map(|k| k as f64).collect();
        let states =
            run_along_reference(&reference, &lm, &EkfNoise::standard(3), &init, &times, 1e-2)
                .unwrap();
        for s in states {
            let p = &s.covariance;
            assert_eq!(p.max_abs_diff(&p.transpose()), 0.0);
            let e = eigenvalues(p).unwrap();
            assert!(e.values().iter().all(|z| z.re >= -1e-10), "{e:?}");
            assert!(s.estimate.distance(&reference.pose(0.0)) < 1e3);
        }
    }

    #[test]
    fn error_matrix_matches_cartesian_linearization() {
        let lm = standard();
        let reference: Reference = PermanentTrajectory::new(1.0, 0.5, Pose::new(0.5, -1.0, 0.3))
            .unwrap()
            .into();
        let gain =
            SmallMatrix::from_rows(&[[0.01, -0.02, 0.005], [0.0, 0.03, 0.01], [-0.01, 0.0, 0.02]]);
        for t in [0.0, 1.7, 5.2] {
            let x = reference.pose(t);
            let fd = jacobian_fd(
                |d| cartesian_error_rate(&reference, &lm, &gain, t, d),
                &[0.0; 3],
                DEFAULT_FD_STEP,
            )
            .unwrap();
            let m = ekf_error_matrix(&x, &reference.input(t), &lm, &gain);
            assert!(fd.max_abs_diff(&m) < 1e-6, "{fd:?} {m:?}");
        }
    }

    #[test]
    fn ekf_probe_sees_time_variation_on_a_circle() {
        let lm = standard();
        let reference: Reference = PermanentTrajectory::new(1.0, 0.5, Pose::identity())
            .unwrap()
            .into();
        let init = EkfState::new(Pose::identity(), SmallMatrix::identity(3).scale(0.1)).unwrap();
        let period = 4.0 * std::f64::consts::PI;
        let times: Vec<f64> = (0..4).map(|k| k as f64 * period / 4.0).collect();
        let p =
            ekf_time_invariance_probe(&reference, &lm, &EkfNoise::standard(3), &init, &times, 1e-2)
                .unwrap();
        assert!(p > 0.1, "{p}");
    }

    #[test]
    fn error_matrix_examples() {
        let lm = standard();
        let m = ekf_error_matrix(
            &Pose::new(1.0, 1.0, 0.3),
            &RobotInput::new(0.0, 0.5),
            &lm,
            &SmallMatrix::zeros(3, 3),
        );
        assert_eq!(m.max_abs(), 0.0);
    }
}
