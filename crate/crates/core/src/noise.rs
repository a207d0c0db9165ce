//! Seeded Gaussian noise. Each agent owns an independent ChaCha stream, so
//! the samples an agent sees do not depend on how steps interleave.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ConfigError;

/// Standard normal samples by the Box–Muller transform.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        GaussianStream { rng, spare: None }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Sample `L z` for a precomputed covariance square root `L`.
    pub fn sample(&mut self, sqrt_cov: &Matrix2<f64>) -> Vector2<f64> {
        let z = Vector2::new(self.standard_normal(), self.standard_normal());
        sqrt_cov * z
    }
}

/// Checks that a covariance is symmetric positive semidefinite.
pub fn check_psd(m: &Matrix2<f64>, what: &str) -> Result<(), ConfigError> {
    if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 || !m.iter().all(|x| x.is_finite()) {
        return Err(ConfigError::NotPsd(format!("{what} is not symmetric")));
    }
    let eig = SymmetricEigen::new(*m);
    if eig.eigenvalues.iter().any(|l| *l < -1e-12) {
        return Err(ConfigError::NotPsd(what.to_string()));
    }
    Ok(())
}

/// Symmetric square root factor `L` with `L Lᵀ = Σ` for a PSD `Σ`.
pub fn psd_sqrt(m: &Matrix2<f64>) -> Matrix2<f64> {
    if m[(0, 1)] == 0.0 && m[(1, 0)] == 0.0 {
        return Matrix2::new(m[(0, 0)].max(0.0).sqrt(), 0.0, 0.0, m[(1, 1)].max(0.0).sqrt());
    }
    let eig = SymmetricEigen::new(*m);
    let v = eig.eigenvectors;
    let l = Matrix2::from_diagonal(&eig.eigenvalues.map(|x| x.max(0.0).sqrt()));
    v * l
}
