//! Deterministic synthetic data and independent brute-force oracles.
//!
//! Everything here is a pure function of its seed through the counter-based
//! generator in [`crate::rng`], so fixtures reproduce bit-for-bit across
//! platforms. The oracles deliberately use the slow, obvious formulations
//! (explicit double loops, per-dimension closed forms) so they stay
//! independent of the optimized implementations they check.

use thiserror::Error;

use crate::embed::FeatureMatrix;
use crate::ingest::ImageTile;
use crate::rng::{derive, normal_at};

pub type Result<T> = std::result::Result<T, FixtureError>;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("invalid fixture spec: {0}")]
    InvalidSpec(String),
}

/// Diagonal-Gaussian sample specification.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    pub mu: Vec<f64>,
    /// Per-dimension variances.
    pub sigma_diag: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl GaussianSpec {
    fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma_diag.len() || self.mu.is_empty() {
            return Err(FixtureError::InvalidSpec(format!(
                "mu has {} entries, sigma_diag has {}",
                self.mu.len(),
                self.sigma_diag.len()
            )));
        }
        if self.sigma_diag.iter().any(|&v| v <= 0.0) {
            return Err(FixtureError::InvalidSpec("variances must be > 0".into()));
        }
        if self.n < 2 {
            return Err(FixtureError::InvalidSpec("n must be >= 2".into()));
        }
        Ok(())
    }
}

/// Draw `n x D` samples from the diagonal Gaussian. Sample `(i, j)` uses the
/// normal draw at stream position `i * D + j` of the spec's seed.
pub fn gen_gaussian_features(spec: &GaussianSpec) -> Result<FeatureMatrix> {
    spec.validate()?;
    let d = spec.mu.len();
    let mut data = Vec::with_capacity(spec.n * d);
    for i in 0..spec.n {
        for j in 0..d {
            let z = normal_at(spec.seed, (i * d + j) as u64);
            data.push((spec.mu[j] + spec.sigma_diag[j].sqrt() * z) as f32);
        }
    }
    Ok(FeatureMatrix::new(spec.n, d, data).expect("finite by construction"))
}

/// A synthetic training run: epoch features slide from a displaced mean
/// toward the real distribution as the epoch index grows.
#[derive(Debug, Clone)]
pub struct ConvergenceFixture {
    pub real: FeatureMatrix,
    pub epochs: Vec<(u32, FeatureMatrix)>,
    /// Interpolation positions per epoch; strictly increasing, final = 1.
    pub alphas: Vec<f64>,
}

/// Build the convergence fixture: the real set sits at `mu_real`, epoch `t`
/// draws from `(1 - alpha_t) * mu_far + alpha_t * mu_real` with
/// `alpha_t = t / n_epochs`, and `mu_far` is displaced from `mu_real` by 8
/// standard deviations (unit variances; displacement norm exactly 8, along a
/// direction orthogonal to the mean for even `D`).
///
/// `mu_real` itself is placed away from the origin so that cosine
/// similarities carry signal the way pooled CNN features do.
pub fn gen_convergence_fixture(
    d: usize,
    n_per_epoch: usize,
    n_epochs: usize,
    seed: u64,
) -> Result<ConvergenceFixture> {
    if n_epochs < 3 {
        return Err(FixtureError::InvalidSpec("n_epochs must be >= 3".into()));
    }
    if d == 0 {
        return Err(FixtureError::InvalidSpec("d must be >= 1".into()));
    }
    let scale = 8.0 / (d as f64).sqrt();
    let mu_real: Vec<f64> = vec![scale; d];
    let displacement: Vec<f64> = (0..d)
        .map(|j| if j % 2 == 0 { scale } else { -scale })
        .collect();

    let real = gen_gaussian_features(&GaussianSpec {
        mu: mu_real.clone(),
        sigma_diag: vec![1.0; d],
        n: n_per_epoch,
        seed: derive(seed, 0),
    })?;

    let mut epochs = Vec::with_capacity(n_epochs);
    let mut alphas = Vec::with_capacity(n_epochs);
    for t in 1..=n_epochs {
        let alpha = t as f64 / n_epochs as f64;
        let mu: Vec<f64> = mu_real
            .iter()
            .zip(&displacement)
            .map(|(&m, &w)| m + (1.0 - alpha) * w)
            .collect();
        let features = gen_gaussian_features(&GaussianSpec {
            mu,
            sigma_diag: vec![1.0; d],
            n: n_per_epoch,
            seed: derive(seed, t as u64),
        })?;
        epochs.push((t as u32, features));
        alphas.push(alpha);
    }
    Ok(ConvergenceFixture {
        real,
        epochs,
        alphas,
    })
}

/// Add `amplitude` to every pixel whose row or column index is a multiple of
/// `period` (all three bands), clamping to `[0, 1]`.
pub fn gen_grid_image(base: &ImageTile, period: u32, amplitude: f32) -> Result<ImageTile> {
    if period < 2 {
        return Err(FixtureError::InvalidSpec("period must be >= 2".into()));
    }
    let mut out = base.clone();
    for y in 0..out.height() {
        for x in 0..out.width() {
            if y % period == 0 || x % period == 0 {
                for band in 0..ImageTile::BANDS {
                    let v = (out.get(y, x, band) + amplitude).clamp(0.0, 1.0);
                    out.set(y, x, band, v);
                }
            }
        }
    }
    Ok(out)
}

/// Mean pairwise dot product by the explicit O(N M D) double loop.
pub fn oracle_crd_bruteforce(generated: &FeatureMatrix, real: &FeatureMatrix) -> f64 {
    let mut total = 0.0f64;
    for i in 0..generated.n_samples() {
        for j in 0..real.n_samples() {
            let dot: f64 = generated
                .row(i)
                .iter()
                .zip(real.row(j))
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            total += dot;
        }
    }
    total / (generated.n_samples() as f64 * real.n_samples() as f64)
}

/// Fréchet distance between diagonal Gaussians by the per-dimension closed
/// form `sum_d (dmu_d)^2 + v_a,d + v_b,d - 2 sqrt(v_a,d v_b,d)`.
pub fn oracle_frechet_diag(mu_a: &[f64], var_a: &[f64], mu_b: &[f64], var_b: &[f64]) -> f64 {
    let mut total = 0.0f64;
    for i in 0..mu_a.len() {
        let dm = mu_a[i] - mu_b[i];
        total += dm * dm + var_a[i] + var_b[i] - 2.0 * (var_a[i] * var_b[i]).sqrt();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{fit_gaussian, frechet_distance};

    #[test]
    fn gaussian_generator_is_deterministic() {
        let spec = GaussianSpec {
            mu: vec![1.0, 2.0],
            sigma_diag: vec![1.0, 4.0],
            n: 32,
            seed: 5,
        };
        assert_eq!(
            gen_gaussian_features(&spec).unwrap(),
            gen_gaussian_features(&spec).unwrap()
        );
    }

    #[test]
    fn gaussian_generator_moments() {
        let spec = GaussianSpec {
            mu: vec![0.0; 4],
            sigma_diag: vec![1.0; 4],
            n: 5000,
            seed: 42,
        };
        let f = gen_gaussian_features(&spec).unwrap();
        for j in 0..4 {
            let mean: f64 = (0..5000).map(|i| f.get(i, j) as f64).sum::<f64>() / 5000.0;
            let var: f64 = (0..5000)
                .map(|i| (f.get(i, j) as f64 - mean).powi(2))
                .sum::<f64>()
                / 4999.0;
            assert!((var - 1.0).abs() < 0.1, "var[{j}] = {var}");
        }
        let mean_norm: f64 = (0..4)
            .map(|j| {
                let m: f64 = (0..5000).map(|i| f.get(i, j) as f64).sum::<f64>() / 5000.0;
                m * m
            })
            .sum::<f64>()
            .sqrt();
        assert!(mean_norm <= 0.1, "mean norm {mean_norm}");
    }

    #[test]
    fn gaussian_spec_validation() {
        let bad = GaussianSpec {
            mu: vec![0.0],
            sigma_diag: vec![-1.0],
            n: 10,
            seed: 0,
        };
        assert!(gen_gaussian_features(&bad).is_err());
        let tiny = GaussianSpec {
            mu: vec![0.0],
            sigma_diag: vec![1.0],
            n: 1,
            seed: 0,
        };
        assert!(gen_gaussian_features(&tiny).is_err());
    }

    #[test]
    fn convergence_fixture_alphas_increase_to_one() {
        let fixture = gen_convergence_fixture(8, 50, 10, 7).unwrap();
        assert_eq!(fixture.alphas.len(), 10);
        for pair in fixture.alphas.windows(2) {
            assert!(pair[1] > pair[0]);
        }
        assert_eq!(*fixture.alphas.last().unwrap(), 1.0);
        assert_eq!(fixture.epochs.len(), 10);
        assert_eq!(fixture.epochs[0].0, 1);
        assert_eq!(fixture.epochs[9].0, 10);
    }

    #[test]
    fn convergence_fixture_frechet_endpoints() {
        let fixture = gen_convergence_fixture(8, 500, 10, 99).unwrap();
        let real = fit_gaussian(&fixture.real).unwrap();

        let first = fit_gaussian(&fixture.epochs[0].1).unwrap();
        let fd_first = frechet_distance(&first, &real).unwrap().value;
        // True mean term at alpha = 0.1 is (0.9^2) * 64 = 51.84.
        assert!(fd_first >= 32.0, "first-epoch FD {fd_first}");

        let last = fit_gaussian(&fixture.epochs[9].1).unwrap();
        let fd_last = frechet_distance(&last, &real).unwrap().value;
        assert!(fd_last <= 0.5, "final-epoch FD {fd_last}");
    }

    #[test]
    fn grid_image_zero_amplitude_is_identity() {
        let base = ImageTile::new(10, 10, vec![0.5; 300]).unwrap();
        assert_eq!(gen_grid_image(&base, 4, 0.0).unwrap(), base);
        assert!(gen_grid_image(&base, 1, 0.1).is_err());
    }

    #[test]
    fn grid_image_lattice_structure_and_density() {
        let (h, w, period) = (20u32, 20u32, 5u32);
        let base = ImageTile::new(h, w, vec![0.4; (h * w * 3) as usize]).unwrap();
        let gridded = gen_grid_image(&base, period, 0.3).unwrap();
        let mut nonzero = 0usize;
        for y in 0..h {
            for x in 0..w {
                let changed = (0..3).any(|b| gridded.get(y, x, b) != base.get(y, x, b));
                let on_lattice = y % period == 0 || x % period == 0;
                assert_eq!(changed, on_lattice, "pixel ({y},{x})");
                if changed {
                    nonzero += 1;
                }
            }
        }
        // Counting oracle: rows + columns - overlap.
        let p = period as usize;
        let expected = (h as usize / p) * w as usize + (w as usize / p) * h as usize
            - (h as usize / p) * (w as usize / p);
        assert_eq!(nonzero, expected);
        let density = nonzero as f64 / (h as f64 * w as f64);
        let formula = 2.0 / p as f64 - 1.0 / (p as f64 * p as f64);
        assert!((density - formula).abs() < 1e-12);
    }

    #[test]
    fn oracles_trivial_cases() {
        let e1 = FeatureMatrix::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(oracle_crd_bruteforce(&e1, &e1), 1.0);
        assert_eq!(oracle_frechet_diag(&[0.0], &[1.0], &[3.0], &[1.0]), 9.0);
        assert_eq!(
            oracle_frechet_diag(&[1.0, 2.0], &[1.0, 1.0], &[1.0, 2.0], &[1.0, 1.0]),
            0.0
        );
    }
}
