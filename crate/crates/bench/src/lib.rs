//! Shared fixtures for the benchmarks.

use nalgebra::{Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackgym_core::estimation::GaussianEstimate;
use trackgym_core::models::{measure_position, MeasurementVector};
use trackgym_core::Detection;

/// A mid-range track with a moderately converged covariance.
pub fn track_estimate() -> GaussianEstimate {
    let mut cov = Matrix6::identity() * 50.0;
    for i in 3..6 {
        cov[(i, i)] = 100.0;
    }
    GaussianEstimate::new(Vector6::new(5000.0, 800.0, 400.0, -30.0, 10.0, 0.0), cov, 1.0)
}

pub fn detection_of(estimate: &GaussianEstimate) -> Detection {
    let m = measure_position(&estimate.position(), &Vector3::zeros()).expect("off-origin");
    Detection::new(m, estimate.time)
}

/// `n` random position pairs for GOSPA.
pub fn point_sets(n: usize, seed: u64) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = || -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-2000.0..2000.0)))
            .collect()
    };
    (cloud(), cloud())
}

/// `n` detections spread over the search region at `time`.
pub fn scattered_detections(n: usize, time: f64, seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let m = MeasurementVector::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(1000.0..10_000.0),
            );
            Detection::new(m, time)
        })
        .collect()
}
