//! Acquisition geometry: node trajectories, point targets and times of flight.

use num_complex::Complex64;

use crate::vec3::{add, dist, is_finite, scale};
use crate::{Error, Result, Vec3, C0};

/// Time-stamped positions of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub node_id: String,
    /// `(t, position)` pairs with strictly increasing `t`.
    pub samples: Vec<(f64, Vec3)>,
}

impl Trajectory {
    pub fn new(node_id: impl Into<String>, samples: Vec<(f64, Vec3)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParams("trajectory needs >= 1 sample".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidParams(
                    "trajectory times must be strictly increasing".into(),
                ));
            }
        }
        if samples
            .iter()
            .any(|(t, p)| !t.is_finite() || !is_finite(*p))
        {
            return Err(Error::InvalidParams("non-finite trajectory sample".into()));
        }
        Ok(Self {
            node_id: node_id.into(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    /// Same time stamps, every position moved by `offset`.
    pub fn translated(&self, node_id: impl Into<String>, offset: Vec3) -> Self {
        Self {
            node_id: node_id.into(),
            samples: self
                .samples
                .iter()
                .map(|&(t, p)| (t, add(p, offset)))
                .collect(),
        }
    }
}

/// Linear interpolation between the samples bracketing `t`.
pub fn position_at(traj: &Trajectory, t: f64) -> Result<Vec3> {
    let (start, end) = traj.span();
    if !(t >= start && t <= end) {
        return Err(Error::OutOfRange { t, start, end });
    }
    let s = &traj.samples;
    let hi = s.partition_point(|&(ts, _)| ts < t);
    if hi < s.len() && s[hi].0 == t {
        return Ok(s[hi].1);
    }
    let (t0, p0) = s[hi - 1];
    let (t1, p1) = s[hi];
    let f = (t - t0) / (t1 - t0);
    Ok([
        p0[0] + f * (p1[0] - p0[0]),
        p0[1] + f * (p1[1] - p0[1]),
        p0[2] + f * (p1[2] - p0[2]),
    ])
}

/// `count` samples at `t_m = m / prf`, `pos_m = start + velocity * t_m`.
pub fn linear_trajectory(
    node_id: impl Into<String>,
    start: Vec3,
    velocity: Vec3,
    prf: f64,
    count: usize,
) -> Result<Trajectory> {
    if count < 1 || !(prf > 0.0) {
        return Err(Error::InvalidParams(
            "linear trajectory needs count >= 1 and prf > 0".into(),
        ));
    }
    let samples = (0..count)
        .map(|m| {
            let t = m as f64 / prf;
            (t, add(start, scale(velocity, t)))
        })
        .collect();
    Trajectory::new(node_id, samples)
}

/// Transmitter -> target -> receiver time of flight.
pub fn tof_bistatic(tx: Vec3, rx: Vec3, target: Vec3) -> f64 {
    (dist(tx, target) + dist(target, rx)) / C0
}

/// Direct transmitter -> receiver time of flight.
pub fn tof_sidelink(tx: Vec3, rx: Vec3) -> f64 {
    dist(tx, rx) / C0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTarget {
    pub pos: Vec3,
    pub reflectivity: Complex64,
}

impl PointTarget {
    pub fn new(pos: Vec3, reflectivity: Complex64) -> Result<Self> {
        if !is_finite(pos) || reflectivity.is_nan() || reflectivity.is_infinite() {
            return Err(Error::InvalidParams("non-finite point target".into()));
        }
        Ok(Self { pos, reflectivity })
    }
}

/// A receiving node. Monostatic receivers share the transmitter's antenna
/// position and clock.
#[derive(Debug, Clone, PartialEq)]
pub enum Receiver {
    Monostatic,
    Bistatic(Trajectory),
}

impl Receiver {
    pub fn is_monostatic(&self) -> bool {
        matches!(self, Receiver::Monostatic)
    }

    /// Trajectory of the receive antenna.
    pub fn trajectory<'a>(&'a self, tx: &'a Trajectory) -> &'a Trajectory {
        match self {
            Receiver::Monostatic => tx,
            Receiver::Bistatic(t) => t,
        }
    }
}

/// Propagation switches that are not clock errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagation {
    /// Scale echoes by the two-leg inverse-distance product.
    pub path_loss: bool,
    /// Complex amplitude of the direct sidelink path.
    pub sidelink_gain: Complex64,
}

impl Default for Propagation {
    fn default() -> Self {
        Self {
            path_loss: true,
            sidelink_gain: Complex64::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub tx: Trajectory,
    pub receivers: Vec<Receiver>,
    pub targets: Vec<PointTarget>,
    /// Internal delay of the transmit/receive chain expressed as range [m].
    pub r_cal: f64,
    pub propagation: Propagation,
}

impl Scene {
    /// Checks that every receiver trajectory covers `[0, (count-1)/prf]`.
    pub fn check_coverage(&self, prf: f64, count: usize) -> Result<()> {
        let t_last = (count.saturating_sub(1)) as f64 / prf;
        for traj in std::iter::once(&self.tx).chain(self.receivers.iter().filter_map(|r| match r {
            Receiver::Bistatic(t) => Some(t),
            Receiver::Monostatic => None,
        })) {
            let (a, b) = traj.span();
            if a > 0.0 || b < t_last - 1e-12 {
                return Err(Error::OutOfRange {
                    t: t_last,
                    start: a,
                    end: b,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interpolation() {
        let t =
            Trajectory::new("a", vec![(0.0, [0.0, 0.0, 0.0]), (2.0, [2.0, 4.0, -2.0])]).unwrap();
        assert_eq!(position_at(&t, 0.0).unwrap(), [0.0, 0.0, 0.0]);
        assert_eq!(position_at(&t, 2.0).unwrap(), [2.0, 4.0, -2.0]);
        assert_eq!(position_at(&t, 1.0).unwrap(), [1.0, 2.0, -1.0]);
        assert!(matches!(
            position_at(&t, 2.5),
            Err(Error::OutOfRange { .. })
        ));
        assert!(position_at(&t, -0.1).is_err());
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::new("a", vec![]).is_err());
        assert!(Trajectory::new("a", vec![(1.0, [0.0; 3]), (1.0, [0.0; 3])]).is_err());
        assert!(Trajectory::new("a", vec![(0.0, [f64::NAN, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn linear_trajectories() {
        let still = linear_trajectory("a", [1.0, 2.0, 3.0], [0.0; 3], 10.0, 5).unwrap();
        assert!(still.samples.iter().all(|(_, p)| *p == [1.0, 2.0, 3.0]));

        let t1 = linear_trajectory("a", [-15.0, 0.0, 10.0], [1.0, 0.0, 0.0], 100.0, 3001).unwrap();
        assert_eq!(t1.len(), 3001);
        let last = t1.samples[3000].1;
        assert!((last[0] - 15.0).abs() < 1e-9);
        let step = t1.samples[1].1[0] - t1.samples[0].1[0];
        assert!((step - 0.01).abs() < 1e-12);

        let one = linear_trajectory("a", [1.0, 1.0, 1.0], [5.0, 0.0, 0.0], 1.0, 1).unwrap();
        assert_eq!(one.samples, vec![(0.0, [1.0, 1.0, 1.0])]);
    }

    #[test]
    fn times_of_flight() {
        let o = [0.0; 3];
        let mono = tof_bistatic(o, o, [15.0, 0.0, 0.0]);
        assert!((mono - 30.0 / C0).abs() < 1e-20);
        assert!((mono - 100.07e-9).abs() < 0.01e-9);
        let rx = [4.7, 0.0, 0.0];
        assert!((tof_bistatic(o, rx, o) - 4.7 / C0).abs() < 1e-20);
        assert!((tof_bistatic(o, o, [3.0, 4.0, 0.0]) - 10.0 / C0).abs() < 1e-20);

        assert_eq!(tof_sidelink(o, o), 0.0);
        assert!((tof_sidelink(o, rx) - 15.68e-9).abs() < 0.01e-9);
        assert!((tof_sidelink(o, [300.0, 0.0, 0.0]) - 1.0007e-6).abs() < 0.0001e-6);
    }

    fn point() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-100.0f64..100.0)
    }

    proptest! {
        #[test]
        fn bistatic_symmetry(a in point(), b in point(), q in point()) {
            prop_assert!((tof_bistatic(a, b, q) - tof_bistatic(b, a, q)).abs() < 1e-18);
        }

        #[test]
        fn bistatic_never_shorter_than_baseline(a in point(), b in point(), q in point()) {
            prop_assert!(tof_bistatic(a, b, q) >= tof_sidelink(a, b) - 1e-18);
        }

        #[test]
        fn monostatic_collapse(a in point(), q in point()) {
            prop_assert!((tof_bistatic(a, a, q) - 2.0 * dist(a, q) / C0).abs() < 1e-18);
        }
    }
}
