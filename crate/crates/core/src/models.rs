//! Coordinate geometry, the constant-velocity motion model and the
//! azimuth/elevation/range measurement model.
//!
//! Conventions: azimuth is measured in the horizontal (x, y) plane from the
//! +x boresight, positive toward +y, and lies in (−π, π]. Elevation is
//! measured from the horizontal plane, positive toward +z, and lies in
//! [−π/2, π/2]. At the zenith and nadir the azimuth is defined as 0.
//!
//! State vectors are ordered `(x, y, z, vx, vy, vz)`.

use std::f64::consts::PI;

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cartesian position/velocity of a target at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Seconds since episode start.
    pub time: f64,
}

impl KinematicState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, time: f64) -> Self {
        Self {
            position,
            velocity,
            time,
        }
    }

    pub fn from_vector(state: &Vector6<f64>, time: f64) -> Self {
        Self {
            position: state.fixed_rows::<3>(0).into_owned(),
            velocity: state.fixed_rows::<3>(3).into_owned(),
            time,
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let p = &self.position;
        let v = &self.velocity;
        Vector6::new(p.x, p.y, p.z, v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|c| c.is_finite()) && self.time.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoords {
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl SphericalCoords {
    pub fn new(range: f64, azimuth: f64, elevation: f64) -> Self {
        Self {
            range,
            azimuth,
            elevation,
        }
    }
}

/// A noise-free or noisy radar measurement, ordered `(azimuth, elevation, range)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub azimuth: f64,
    pub elevation: f64,
    pub range: f64,
}

impl MeasurementVector {
    pub fn new(azimuth: f64, elevation: f64, range: f64) -> Self {
        Self {
            azimuth,
            elevation,
            range,
        }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.azimuth, self.elevation, self.range)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_spherical(&self) -> SphericalCoords {
        SphericalCoords::new(self.range, self.azimuth, self.elevation)
    }
}

/// Measurement noise standard deviations and the process-noise intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Radians.
    pub sigma_azimuth: f64,
    /// Radians.
    pub sigma_elevation: f64,
    /// Meters.
    pub sigma_range: f64,
    /// Continuous white-noise acceleration intensity, m²/s³ per axis.
    pub process_intensity: f64,
}

impl NoiseParams {
    pub fn new(sigma_azimuth: f64, sigma_elevation: f64, sigma_range: f64, process_intensity: f64) -> Result<Self> {
        let params = Self {
            sigma_azimuth,
            sigma_elevation,
            sigma_range,
            process_intensity,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma_azimuth", self.sigma_azimuth),
            ("sigma_elevation", self.sigma_elevation),
            ("sigma_range", self.sigma_range),
            ("process_intensity", self.process_intensity),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Argument(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }

    /// Diagonal measurement covariance in `(azimuth, elevation, range)` order.
    pub fn measurement_covariance(&self) -> nalgebra::Matrix3<f64> {
        nalgebra::Matrix3::from_diagonal(&Vector3::new(
            self.sigma_azimuth.powi(2),
            self.sigma_elevation.powi(2),
            self.sigma_range.powi(2),
        ))
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn cart_to_spherical(p: &Vector3<f64>) -> Result<SphericalCoords> {
    let range = p.norm();
    if range == 0.0 {
        return Err(Error::Domain("spherical angles undefined at the origin".into()));
    }
    if !range.is_finite() {
        return Err(Error::Domain(format!("non-finite position {p:?}")));
    }
    let horizontal = p.x.hypot(p.y);
    let azimuth = if horizontal == 0.0 {
        0.0
    } else {
        wrap_angle(p.y.atan2(p.x))
    };
    let elevation = p.z.atan2(horizontal);
    Ok(SphericalCoords {
        range,
        azimuth,
        elevation,
    })
}

pub fn spherical_to_cart(s: &SphericalCoords) -> Vector3<f64> {
    let (sin_el, cos_el) = s.elevation.sin_cos();
    let (sin_az, cos_az) = s.azimuth.sin_cos();
    Vector3::new(s.range * cos_el * cos_az, s.range * cos_el * sin_az, s.range * sin_el)
}

/// State-transition and process-noise matrices of the constant-velocity model
/// over an interval `dt` with white-noise acceleration intensity `q`.
pub fn cv_transition(dt: f64, q: f64) -> Result<(Matrix6<f64>, Matrix6<f64>)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Argument(format!("transition interval must be > 0, got {dt}")));
    }
    Ok(cv_matrices(dt, q))
}

/// Same as [`cv_transition`] but admits `dt = 0`, where it returns `(I, 0)`.
pub(crate) fn cv_matrices(dt: f64, q: f64) -> (Matrix6<f64>, Matrix6<f64>) {
    let mut f = Matrix6::identity();
    let mut noise = Matrix6::zeros();
    let (q11, q12, q22) = (q * dt.powi(3) / 3.0, q * dt.powi(2) / 2.0, q * dt);
    for axis in 0..3 {
        let (p, v) = (axis, axis + 3);
        f[(p, v)] = dt;
        noise[(p, p)] = q11;
        noise[(p, v)] = q12;
        noise[(v, p)] = q12;
        noise[(v, v)] = q22;
    }
    (f, noise)
}

/// Noise-free measurement of `position` seen from `sensor_position`.
pub fn measure_position(position: &Vector3<f64>, sensor_position: &Vector3<f64>) -> Result<MeasurementVector> {
    let s = cart_to_spherical(&(position - sensor_position))?;
    Ok(MeasurementVector::new(s.azimuth, s.elevation, s.range))
}

pub fn measure(state: &KinematicState, sensor_position: &Vector3<f64>) -> Result<MeasurementVector> {
    measure_position(&state.position, sensor_position)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn boresight_and_quadrant_points() {
        let s = cart_to_spherical(&Vector3::new(1000.0, 0.0, 0.0)).unwrap();
        assert_eq!((s.range, s.azimuth, s.elevation), (1000.0, 0.0, 0.0));

        let s = cart_to_spherical(&Vector3::new(0.0, 1000.0, 0.0)).unwrap();
        assert_relative_eq!(s.range, 1000.0);
        assert_relative_eq!(s.azimuth, FRAC_PI_2);
        assert_eq!(s.elevation, 0.0);

        let s = cart_to_spherical(&Vector3::new(1000.0, 1000.0, 1414.2136)).unwrap();
        assert_relative_eq!(s.range, 2000.0, epsilon = 1e-4);
        assert_relative_eq!(s.azimuth, FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(s.elevation, FRAC_PI_4, epsilon = 1e-7);
    }

    #[test]
    fn origin_is_a_domain_error() {
        assert!(matches!(cart_to_spherical(&Vector3::zeros()), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_examples() {
        let p = spherical_to_cart(&SphericalCoords::new(1000.0, 0.0, 0.0));
        assert_eq!(p, Vector3::new(1000.0, 0.0, 0.0));

        let p = spherical_to_cart(&SphericalCoords::new(1.0, FRAC_PI_2, 0.0));
        assert_relative_eq!(p, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);

        let p = spherical_to_cart(&SphericalCoords::new(2000.0, FRAC_PI_4, FRAC_PI_4));
        assert_relative_eq!(p, Vector3::new(1000.0, 1000.0, 1414.2136), epsilon = 1e-4);
    }

    #[test]
    fn azimuth_half_open_interval() {
        let s = cart_to_spherical(&Vector3::new(-1.0, -0.0, 0.0)).unwrap();
        assert_eq!(s.azimuth, PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(-6.2), 2.0 * PI - 6.2, epsilon = 1e-12);
    }

    #[test]
    fn zenith_convention() {
        let m = measure(
            &KinematicState::new(Vector3::new(0.0, 0.0, 1000.0), Vector3::zeros(), 0.0),
            &Vector3::zeros(),
        )
        .unwrap();
        assert_eq!(m, MeasurementVector::new(0.0, FRAC_PI_2, 1000.0));
    }

    #[test]
    fn measure_examples() {
        let origin = Vector3::zeros();
        let m = measure(
            &KinematicState::new(Vector3::new(1000.0, 0.0, 0.0), Vector3::zeros(), 0.0),
            &origin,
        )
        .unwrap();
        assert_eq!(m, MeasurementVector::new(0.0, 0.0, 1000.0));

        let m = measure(
            &KinematicState::new(Vector3::new(1000.0, 1000.0, 1414.2136), Vector3::zeros(), 0.0),
            &origin,
        )
        .unwrap();
        assert_relative_eq!(m.azimuth, FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(m.elevation, FRAC_PI_4, epsilon = 1e-7);
        assert_relative_eq!(m.range, 2000.0, epsilon = 1e-4);

        let coincident = KinematicState::new(Vector3::new(5.0, 5.0, 5.0), Vector3::zeros(), 0.0);
        assert!(measure(&coincident, &Vector3::new(5.0, 5.0, 5.0)).is_err());
    }

    #[test]
    fn cv_transition_examples() {
        let (f, _) = cv_transition(1.0, 1.0).unwrap();
        let x = f * Vector6::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        assert_eq!(x, Vector6::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0));

        let (_, q) = cv_transition(0.005, 1.0).unwrap();
        assert_relative_eq!(q[(0, 0)], 4.1667e-8, max_relative = 1e-4);
        assert_relative_eq!(q[(0, 3)], 1.25e-5, max_relative = 1e-12);
        assert_relative_eq!(q[(3, 0)], 1.25e-5, max_relative = 1e-12);
        assert_relative_eq!(q[(3, 3)], 5e-3, max_relative = 1e-12);

        let (f, _) = cv_transition(7.5, 1.0).unwrap();
        let still = Vector6::new(3.0, -2.0, 1.0, 0.0, 0.0, 0.0);
        assert_eq!(f * still, still);

        assert!(cv_transition(0.0, 1.0).is_err());
        assert!(cv_transition(-1.0, 1.0).is_err());
    }

    #[test]
    fn noise_params_reject_non_positive() {
        assert!(NoiseParams::new(0.1, 0.1, 1.0, 1.0).is_ok());
        assert!(NoiseParams::new(0.0, 0.1, 1.0, 1.0).is_err());
        assert!(NoiseParams::new(0.1, 0.1, -1.0, 1.0).is_err());
    }

    #[test]
    fn spherical_round_trip_sweep() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let s = SphericalCoords::new(
                rng.random_range(1.0..1e5),
                rng.random_range(-PI..PI),
                rng.random_range(-FRAC_PI_2 + 1e-6..FRAC_PI_2 - 1e-6),
            );
            let p = spherical_to_cart(&s);
            let back = spherical_to_cart(&cart_to_spherical(&p).unwrap());
            assert!((back - p).norm() <= 1e-9 * p.norm());
        }
    }

    proptest! {
        #[test]
        fn process_noise_is_symmetric_psd(dt in 1e-6f64..10.0, q in 1e-3f64..100.0) {
            let (f, noise) = cv_transition(dt, q).unwrap();
            prop_assert_eq!(noise, noise.transpose());
            let eig = noise.symmetric_eigen();
            let scale = noise.trace();
            prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12 * scale));
            prop_assert!((f.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn spherical_round_trip(r in 1.0f64..1e5, az in -3.1f64..3.1, el in -1.5f64..1.5) {
            let s = SphericalCoords::new(r, az, el);
            let back = cart_to_spherical(&spherical_to_cart(&s)).unwrap();
            prop_assert!((back.range - r).abs() <= 1e-9 * r);
            prop_assert!((back.azimuth - az).abs() <= 1e-9);
            prop_assert!((back.elevation - el).abs() <= 1e-9);
        }
    }
}
