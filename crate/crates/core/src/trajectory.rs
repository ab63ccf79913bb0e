//! Reference trajectories.
//!
//! A permanent trajectory is generated by a constant input `(u, v)`; for the
//! unicycle these are lines (`v = 0`) and circles of radius `1/|v|`. Each one
//! is a left-translated one-parameter subgroup, `pose(t) = g0 * exp(t * xi)`
//! with `xi = (u, 0, u v)`.

use crate::error::{Error, Result};
use crate::lie::{compose, exp, Pose};
use crate::robot::RobotInput;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermanentTrajectory {
    pub u_bar: f64,
    pub v_bar: f64,
    pub start: Pose,
}

impl PermanentTrajectory {
    pub fn new(u_bar: f64, v_bar: f64, start: Pose) -> Result<Self> {
        if !u_bar.is_finite() || !v_bar.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite reference input ({u_bar}, {v_bar})"
            )));
        }
        Ok(Self {
            u_bar,
            v_bar,
            start,
        })
    }

    pub fn pose(&self, t: f64) -> Pose {
        let xi = self.reference_input().twist().scale(t);
        compose(&self.start, &exp(&xi))
    }

    pub fn reference_input(&self) -> RobotInput {
        RobotInput::new(self.u_bar, self.v_bar)
    }

    /// Time to close the circle; `None` for lines and for a robot at rest.
    pub fn period(&self) -> Option<f64> {
        let w = (self.u_bar * self.v_bar).abs();
        (w > 0.0).then(|| 2.0 * std::f64::consts::PI / w)
    }
}

/// One constant-input arc of a piecewise reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub u: f64,
    pub v: f64,
    pub duration: f64,
}

/// Permanent arcs joined end to end. The last arc continues past its
/// nominal duration.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTrajectory {
    arcs: Vec<PermanentTrajectory>,
    switch_times: Vec<f64>,
}

impl PiecewiseTrajectory {
    pub fn new(start: Pose, segments: &[Segment]) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument(
                "piecewise trajectory needs a segment".into(),
            ));
        }
        let mut arcs = Vec::with_capacity(segments.len());
        let mut switch_times = Vec::with_capacity(segments.len());
        let mut pose = start;
        let mut t = 0.0;
        for s in segments {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "segment duration must be > 0, got {}",
                    s.duration
                )));
            }
            let arc = PermanentTrajectory::new(s.u, s.v, pose)?;
            pose = arc.pose(s.duration);
            arcs.push(arc);
            switch_times.push(t);
            t += s.duration;
        }
        Ok(Self { arcs, switch_times })
    }

    /// Start times of each arc; the first is zero.
    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn arcs(&self) -> &[PermanentTrajectory] {
        &self.arcs
    }

    fn locate(&self, t: f64) -> usize {
        self.switch_times.iter().rposition(|&s| t >= s).unwrap_or(0)
    }

    pub fn pose(&self, t: f64) -> Pose {
        let k = self.locate(t);
        self.arcs[k].pose(t - self.switch_times[k])
    }

    pub fn input(&self, t: f64) -> RobotInput {
        self.arcs[self.locate(t)].reference_input()
    }
}

/// Constant speed with a sinusoidal steering profile
/// `v(t) = v0 + amplitude * sin(frequency * t)`. Not permanent unless the
/// amplitude is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatingSteering {
    pub start: Pose,
    pub u: f64,
    pub v0: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl OscillatingSteering {
    const QUADRATURE_STEP: f64 = 1e-3;

    pub fn input(&self, t: f64) -> RobotInput {
        RobotInput::new(
            self.u,
            self.v0 + self.amplitude * (self.frequency * t).sin(),
        )
    }

    fn heading(&self, t: f64) -> f64 {
        let w = self.frequency;
        let integral_v = if w == 0.0 {
            self.v0 * t
        } else {
            self.v0 * t + self.amplitude / w * (1.0 - (w * t).cos())
        };
        self.start.theta + self.u * integral_v
    }

    /// Heading in closed form; position by composite Simpson quadrature.
    pub fn pose(&self, t: f64) -> Pose {
        let n = {
            let k = (t.abs() / Self::QUADRATURE_STEP).ceil() as usize;
            (k.max(2) + 1) & !1
        };
        let h = t / n as f64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let th = self.heading(i as f64 * h);
            sx += w * th.cos();
            sy += w * th.sin();
        }
        Pose::new(
            self.start.x + self.u * h / 3.0 * sx,
            self.start.y + self.u * h / 3.0 * sy,
            self.heading(t),
        )
    }
}

/// Any reference the closed loop can track.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Permanent(PermanentTrajectory),
    Piecewise(PiecewiseTrajectory),
    Oscillating(OscillatingSteering),
}

impl Reference {
    pub fn pose(&self, t: f64) -> Pose {
        match self {
            Reference::Permanent(p) => p.pose(t),
            Reference::Piecewise(p) => p.pose(t),
            Reference::Oscillating(o) => o.pose(t),
        }
    }

    pub fn input(&self, t: f64) -> RobotInput {
        match self {
            Reference::Permanent(p) => p.reference_input(),
            Reference::Piecewise(p) => p.input(t),
            Reference::Oscillating(o) => o.input(t),
        }
    }

    /// Whether the invariant input is constant for all time.
    pub fn is_permanent(&self) -> bool {
        match self {
            Reference::Permanent(_) => true,
            Reference::Piecewise(p) => p
                .arcs()
                .windows(2)
                .all(|w| w[0].reference_input() == w[1].reference_input()),
            Reference::Oscillating(o) => o.amplitude == 0.0,
        }
    }

    /// The same reference, left-translated by `g0`.
    pub fn transformed(&self, g0: &Pose) -> Reference {
        match self {
            Reference::Permanent(p) => Reference::Permanent(PermanentTrajectory {
                start: compose(g0, &p.start),
                ..*p
            }),
            Reference::Piecewise(p) => Reference::Piecewise(PiecewiseTrajectory {
                arcs: p
                    .arcs
                    .iter()
                    .map(|a| PermanentTrajectory {
                        start: compose(g0, &a.start),
                        ..*a
                    })
                    .collect(),
                switch_times: p.switch_times.clone(),
            }),
            Reference::Oscillating(o) => Reference::Oscillating(OscillatingSteering {
                start: compose(g0, &o.start),
                ..*o
            }),
        }
    }

    /// Distinct constant inputs along the reference (one per arc), or the
    /// inputs at `times` for a time-varying profile.
    pub fn input_samples(&self, times: &[f64]) -> Vec<RobotInput> {
        match self {
            Reference::Permanent(p) => vec![p.reference_input()],
            Reference::Piecewise(p) => {
                let mut v: Vec<RobotInput> = Vec::new();
                for a in p.arcs() {
                    if !v.contains(&a.reference_input()) {
                        v.push(a.reference_input());
                    }
                }
                v
            }
            Reference::Oscillating(o) => times.iter().map(|&t| o.input(t)).collect(),
        }
    }
}

impl From<PermanentTrajectory> for Reference {
    fn from(p: PermanentTrajectory) -> Self {
        Reference::Permanent(p)
    }
}

/// Largest deviation of the invariant input from its initial value over a
/// sampled trajectory. For the unicycle the invariant input is `(u, v)`
/// itself, so the poses only fix the time alignment.
pub fn permanence_probe(poses: &[Pose], inputs: &[RobotInput]) -> Result<f64> {
    if poses.len() != inputs.len() {
        return Err(Error::Dimension(format!(
            "{} poses but {} inputs",
            poses.len(),
            inputs.len()
        )));
    }
    let Some(first) = inputs.first() else {
        return Ok(0.0);
    };
    Ok(inputs
        .iter()
        .map(|i| ((i.u - first.u).powi(2) + (i.v - first.v).powi(2)).sqrt())
        .fold(0.0, f64::max))
}
