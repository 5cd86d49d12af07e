//! Ground-truth target simulation and the steerable radar that turns truth
//! into noisy, field-of-view-limited detections.

use std::f64::consts::FRAC_PI_3;

use nalgebra::{Matrix2, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{self, KinematicState, MeasurementVector, NoiseParams, SphericalCoords};

/// Angular limit of the dwell centre in both axes.
pub const DWELL_LIMIT: f64 = FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub measurement: MeasurementVector,
    pub time: f64,
    /// Truth-side bookkeeping; the tracker never reads these.
    pub is_clutter: bool,
    pub target_id: Option<u64>,
}

impl Detection {
    pub fn new(measurement: MeasurementVector, time: f64) -> Self {
        Self {
            measurement,
            time,
            is_clutter: false,
            target_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPath {
    pub target_id: u64,
    pub states: Vec<KinematicState>,
    pub birth_time: f64,
    pub death_time: f64,
}

impl GroundTruthPath {
    pub fn current(&self) -> &KinematicState {
        self.states.last().expect("paths are created with a birth state")
    }

    pub fn is_alive(&self, time: f64) -> bool {
        time >= self.birth_time - 1e-9 && time <= self.death_time + 1e-9
    }
}

/// Spawn region, expressed around the sensor in spherical terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRegion {
    pub range_min: f64,
    pub range_max: f64,
    /// Radians, symmetric about boresight.
    pub max_azimuth: f64,
    pub max_elevation: f64,
}

impl Default for TargetRegion {
    fn default() -> Self {
        Self {
            range_min: 1000.0,
            range_max: 10_000.0,
            max_azimuth: 50f64.to_radians(),
            max_elevation: 50f64.to_radians(),
        }
    }
}

impl TargetRegion {
    pub fn validate(&self) -> Result<()> {
        let ok = self.range_min > 0.0
            && self.range_max >= self.range_min
            && self.range_max.is_finite()
            && (0.0..=std::f64::consts::PI).contains(&self.max_azimuth)
            && (0.0..std::f64::consts::FRAC_PI_2).contains(&self.max_elevation);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid target region {self:?}")))
        }
    }
}

pub fn spawn_targets<R: Rng + ?Sized>(
    count: usize,
    region: &TargetRegion,
    speed: (f64, f64),
    birth_time: f64,
    death_time: f64,
    rng: &mut R,
) -> Result<Vec<GroundTruthPath>> {
    region.validate()?;
    if !(speed.0 >= 0.0 && speed.1 >= speed.0 && speed.1.is_finite()) {
        return Err(Error::Config(format!("invalid speed range {speed:?}")));
    }
    if death_time < birth_time {
        return Err(Error::Config(format!(
            "death time {death_time} precedes birth time {birth_time}"
        )));
    }
    let paths = (0..count)
        .map(|id| {
            let s = SphericalCoords::new(
                uniform(rng, region.range_min, region.range_max),
                uniform(rng, -region.max_azimuth, region.max_azimuth),
                uniform(rng, -region.max_elevation, region.max_elevation),
            );
            let direction: [f64; 3] = UnitSphere.sample(rng);
            let velocity = Vector3::from(direction) * uniform(rng, speed.0, speed.1);
            GroundTruthPath {
                target_id: id as u64,
                states: vec![KinematicState::new(models::spherical_to_cart(&s), velocity, birth_time)],
                birth_time,
                death_time,
            }
        })
        .collect();
    Ok(paths)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Propagates every live path to `to_time` with CV dynamics plus process
/// noise drawn from `Q(dt, q_truth)`.
pub fn advance_truth<R: Rng + ?Sized>(paths: &mut [GroundTruthPath], to_time: f64, q_truth: f64, rng: &mut R) {
    for path in paths.iter_mut().filter(|p| p.is_alive(to_time)) {
        let current = *path.current();
        let dt = to_time - current.time;
        if dt <= 0.0 {
            continue;
        }
        let mut position = current.position + current.velocity * dt;
        let mut velocity = current.velocity;
        if q_truth > 0.0 {
            // Per-axis Cholesky factor of q·[[dt³/3, dt²/2], [dt²/2, dt]].
            let block = Matrix2::new(dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt.powi(2) / 2.0, dt) * q_truth;
            let l = block
                .cholesky()
                .expect("CV process noise block is positive definite")
                .l();
            for axis in 0..3 {
                let (a, b): (f64, f64) = (
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                );
                position[axis] += l[(0, 0)] * a;
                velocity[axis] += l[(1, 0)] * a + l[(1, 1)] * b;
            }
        }
        path.states.push(KinematicState::new(position, velocity, to_time));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarSensor {
    pub position: Vector3<f64>,
    /// `(azimuth, elevation)` of the beam centre, radians.
    pub dwell_centre: (f64, f64),
    /// Half the square window width, radians.
    pub fov_halfwidth: f64,
    pub detection_probability: f64,
    /// Measurement standard deviations; zero disables the corresponding noise.
    pub noise: NoiseParams,
    /// Expected false alarms per scan.
    pub clutter_rate: f64,
    /// Range interval clutter is drawn from.
    pub clutter_range: (f64, f64),
}

impl RadarSensor {
    /// Points the beam, clamping each angle to ±π/3. Returns whether clamping occurred.
    pub fn point_dwell(&mut self, command: (f64, f64)) -> bool {
        let clamp = |a: f64| a.clamp(-DWELL_LIMIT, DWELL_LIMIT);
        let clamped = (clamp(command.0), clamp(command.1));
        self.dwell_centre = clamped;
        clamped != command
    }

    pub fn in_fov(&self, azimuth: f64, elevation: f64) -> bool {
        let (da, de) = (
            models::wrap_angle(azimuth - self.dwell_centre.0),
            elevation - self.dwell_centre.1,
        );
        da.abs() <= self.fov_halfwidth && de.abs() <= self.fov_halfwidth
    }

    /// Detections of live targets inside the beam window at `time`, plus clutter, in random order.
    pub fn sense<R: Rng + ?Sized>(&self, truths: &[GroundTruthPath], time: f64, rng: &mut R) -> Vec<Detection> {
        let mut out = Vec::new();
        for path in truths.iter().filter(|p| p.is_alive(time)) {
            let state = path.current();
            debug_assert!((state.time - time).abs() < 1e-9, "truth not propagated to sensing time");
            let Ok(truth) = models::measure(state, &self.position) else {
                continue;
            };
            if !self.in_fov(truth.azimuth, truth.elevation) {
                continue;
            }
            let draw: f64 = rng.random();
            if draw >= self.detection_probability {
                continue;
            }
            let measurement = MeasurementVector::new(
                models::wrap_angle(truth.azimuth + gaussian(rng, self.noise.sigma_azimuth)),
                truth.elevation + gaussian(rng, self.noise.sigma_elevation),
                (truth.range + gaussian(rng, self.noise.sigma_range)).abs(),
            );
            out.push(Detection {
                measurement,
                time,
                is_clutter: false,
                target_id: Some(path.target_id),
            });
        }

        if self.clutter_rate > 0.0 {
            let n = Poisson::new(self.clutter_rate).map(|p| p.sample(rng)).unwrap_or(0.0) as usize;
            let (cx, cy) = self.dwell_centre;
            let hw = self.fov_halfwidth;
            for _ in 0..n {
                let measurement = MeasurementVector::new(
                    models::wrap_angle(uniform(rng, cx - hw, cx + hw)),
                    uniform(rng, cy - hw, cy + hw),
                    uniform(rng, self.clutter_range.0, self.clutter_range.1),
                );
                out.push(Detection {
                    measurement,
                    time,
                    is_clutter: true,
                    target_id: None,
                });
            }
        }
        out.shuffle(rng);
        out
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn quiet_noise() -> NoiseParams {
        NoiseParams {
            sigma_azimuth: 0.0,
            sigma_elevation: 0.0,
            sigma_range: 0.0,
            process_intensity: 0.0,
        }
    }

    fn sensor(pd: f64) -> RadarSensor {
        RadarSensor {
            position: Vector3::zeros(),
            dwell_centre: (0.0, 0.0),
            fov_halfwidth: 4.5f64.to_radians(),
            detection_probability: pd,
            noise: quiet_noise(),
            clutter_rate: 0.0,
            clutter_range: (1000.0, 10_000.0),
        }
    }

    fn fixed_target(id: u64, position: Vector3<f64>) -> GroundTruthPath {
        GroundTruthPath {
            target_id: id,
            states: vec![KinematicState::new(position, Vector3::zeros(), 0.0)],
            birth_time: 0.0,
            death_time: 30.0,
        }
    }

    #[test]
    fn spawn_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let region = TargetRegion::default();
        assert!(spawn_targets(0, &region, (10.0, 100.0), 0.0, 5.0, &mut rng)
            .unwrap()
            .is_empty());

        let a = spawn_targets(5, &region, (10.0, 100.0), 0.0, 5.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = spawn_targets(5, &region, (10.0, 100.0), 0.0, 5.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);

        for path in &a {
            let s = models::cart_to_spherical(&path.current().position).unwrap();
            assert!((1000.0 - 1e-9..=10_000.0 + 1e-9).contains(&s.range));
            assert!(s.azimuth.abs() <= 50f64.to_radians() + 1e-12);
            assert!(s.elevation.abs() <= 50f64.to_radians() + 1e-12);
            let speed = path.current().velocity.norm();
            assert!((10.0 - 1e-9..=100.0 + 1e-9).contains(&speed));
            assert_eq!((path.birth_time, path.death_time), (0.0, 5.0));
        }
    }

    #[test]
    fn spawn_rejects_bad_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bad = TargetRegion {
            range_min: 5000.0,
            range_max: 1000.0,
            ..TargetRegion::default()
        };
        assert!(matches!(
            spawn_targets(1, &bad, (10.0, 100.0), 0.0, 5.0, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(spawn_targets(1, &TargetRegion::default(), (100.0, 10.0), 0.0, 5.0, &mut rng).is_err());
    }

    #[test]
    fn noiseless_truth_moves_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut paths = vec![GroundTruthPath {
            target_id: 0,
            states: vec![KinematicState::new(
                Vector3::zeros(),
                Vector3::new(100.0, 0.0, 0.0),
                0.0,
            )],
            birth_time: 0.0,
            death_time: 30.0,
        }];
        advance_truth(&mut paths, 0.005, 0.0, &mut rng);
        assert_relative_eq!(paths[0].current().position.x, 0.5, epsilon = 1e-12);

        for k in 2..=6000 {
            advance_truth(&mut paths, k as f64 * 0.005, 0.0, &mut rng);
        }
        assert_relative_eq!(paths[0].current().time, 30.0, epsilon = 1e-9);
        assert_eq!(paths[0].states.len(), 6001);
    }

    #[test]
    fn truth_is_seed_reproducible() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut paths = spawn_targets(3, &TargetRegion::default(), (10.0, 100.0), 0.0, 5.0, &mut rng).unwrap();
            for k in 1..=50 {
                advance_truth(&mut paths, k as f64 * 0.005, 0.1, &mut rng);
            }
            paths
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn dwell_commands() {
        let mut s = sensor(1.0);
        assert!(!s.point_dwell((0.0, 0.0)));
        assert_eq!(s.dwell_centre, (0.0, 0.0));
        assert!(!s.point_dwell((FRAC_PI_3, -FRAC_PI_3)));
        assert_eq!(s.dwell_centre, (FRAC_PI_3, -FRAC_PI_3));
        assert!(s.point_dwell((std::f64::consts::PI, 0.0)));
        assert_eq!(s.dwell_centre, (FRAC_PI_3, 0.0));
    }

    #[test]
    fn sense_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sensor(1.0);
        let outside = [fixed_target(0, Vector3::new(0.0, 5000.0, 0.0))];
        assert!(s.sense(&outside, 0.0, &mut rng).is_empty());

        let boresight = [fixed_target(1, Vector3::new(4000.0, 0.0, 0.0))];
        let d = s.sense(&boresight, 0.0, &mut rng);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].measurement, MeasurementVector::new(0.0, 0.0, 4000.0));
        assert_eq!(d[0].target_id, Some(1));
        assert!(!d[0].is_clutter);
    }

    #[test]
    fn detection_frequency_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let s = sensor(0.9);
        let target = [fixed_target(0, Vector3::new(4000.0, 0.0, 0.0))];
        let n = 10_000;
        let hits: usize = (0..n).map(|_| s.sense(&target, 0.0, &mut rng).len()).sum();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.9).abs() <= 0.01, "{freq}");
    }

    #[test]
    fn clutter_lands_in_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = sensor(1.0);
        s.clutter_rate = 3.0;
        s.point_dwell((0.4, -0.2));
        let mut total = 0;
        for _ in 0..500 {
            for d in s.sense(&[], 0.0, &mut rng) {
                assert!(d.is_clutter);
                assert!(s.in_fov(d.measurement.azimuth, d.measurement.elevation));
                assert!((1000.0..=10_000.0).contains(&d.measurement.range));
                total += 1;
            }
        }
        assert!((total as f64 / 500.0 - 3.0).abs() < 0.3);
    }
}
