//! Embedding-space metric kernels.
//!
//! Gaussian fitting, PSD matrix square root, the Fréchet distance between
//! Gaussian fits (FID when the features come from an Inception-style model,
//! FRD for Resnet-style features), the cosine embedding distance (CRD), and
//! a round-trip L1 estimator over image pairs. All arithmetic is 64-bit;
//! every operation is a pure function of its inputs.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::embed::FeatureMatrix;
use crate::ingest::ImageTile;

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 samples to fit a Gaussian, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is not symmetric within tolerance (max asymmetry {max_asym:.3e})")]
    NotSymmetric { max_asym: f64 },
    #[error("eigenvalue {value:.6e} below the PSD tolerance {tolerance:.6e}")]
    NotPsd { value: f64, tolerance: f64 },
    #[error("non-finite result{0}")]
    NonFinite(&'static str),
    #[error("row {row} has zero norm; cannot normalize")]
    ZeroNormRow { row: usize },
    #[error("pair count mismatch: {left} originals vs {right} reconstructions")]
    PairCountMismatch { left: usize, right: usize },
    #[error("pair {index} shape mismatch")]
    PairShapeMismatch { index: usize },
}

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone)]
pub struct GaussianSummary {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl GaussianSummary {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Fréchet distance between two Gaussian summaries, with its two terms and
/// the record of whether diagonal jitter was needed.
#[derive(Debug, Clone, Serialize)]
pub struct FrechetResult {
    pub value: f64,
    /// `||mu_a - mu_b||^2`
    pub mean_term: f64,
    /// `Tr(Sigma_a + Sigma_b - 2 (Sigma_a Sigma_b)^{1/2})`
    pub trace_term: f64,
    pub jitter_applied: bool,
    pub jitter_epsilon: f64,
}

/// Mean pairwise cosine quantity between two embedded sets.
#[derive(Debug, Clone, Serialize)]
pub struct CrdResult {
    pub mean_similarity: f64,
    /// `1 - mean_similarity`; lower is better.
    pub distance: f64,
    pub n: usize,
    pub m: usize,
}

/// Column means and unbiased sample covariance (divisor `N - 1`), explicitly
/// symmetrized as `(C + C^T) / 2`.
pub fn fit_gaussian(features: &FeatureMatrix) -> Result<GaussianSummary> {
    let n = features.n_samples();
    let d = features.dim();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let mut mu = vec![0.0f64; d];
    for row in features.rows() {
        for (m, &v) in mu.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    for m in mu.iter_mut() {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| features.get(i, j) as f64 - mu[j]);
    let mut sigma = centered.transpose() * &centered / (n as f64 - 1.0);
    let sigma_t = sigma.transpose();
    sigma = (sigma + sigma_t) / 2.0;
    Ok(GaussianSummary {
        mu: DVector::from_vec(mu),
        sigma,
    })
}

/// Relative asymmetry tolerance for [`sqrtm_psd`] inputs.
const ASYM_TOLERANCE: f64 = 1e-8;
/// Eigenvalues below `-1e-8 * max|eig|` are an error; milder negative noise
/// is clamped to zero.
const EIG_TOLERANCE: f64 = 1e-8;

/// Square root of a symmetric PSD matrix via symmetric eigendecomposition:
/// `S = Q L Q^T` gives `Q L^{1/2} Q^T` with negative noise eigenvalues
/// clamped to zero. The result is explicitly symmetrized.
pub fn sqrtm_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    assert_eq!(s.nrows(), s.ncols(), "sqrtm_psd requires a square matrix");
    let scale = s.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    let max_asym = (s - s.transpose())
        .iter()
        .fold(0.0f64, |a, &v| a.max(v.abs()));
    if max_asym > ASYM_TOLERANCE * scale {
        return Err(MetricsError::NotSymmetric { max_asym });
    }

    let eig = s.clone().symmetric_eigen();
    let max_abs_eig = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tolerance = -EIG_TOLERANCE * max_abs_eig;
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < tolerance {
            return Err(MetricsError::NotPsd {
                value: lambda,
                tolerance,
            });
        }
        roots[i] = lambda.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&roots) * q.transpose();
    let root_t = root.transpose();
    Ok((root + root_t) / 2.0)
}

/// Amount added to both covariance diagonals when the plain computation
/// fails numerically (singular covariances are expected whenever `N < D`).
pub const FRECHET_JITTER_EPSILON: f64 = 1e-6;

fn frechet_trace_term(sigma_a: &DMatrix<f64>, sigma_b: &DMatrix<f64>) -> Result<f64> {
    // Symmetric reformulation: (Sigma_a Sigma_b)^{1/2} has the trace of
    // sqrt(Sigma_a^{1/2} Sigma_b Sigma_a^{1/2}), which keeps every
    // eigendecomposition on a symmetric matrix.
    let root_a = sqrtm_psd(sigma_a)?;
    let inner = &root_a * sigma_b * &root_a;
    let inner_t = inner.transpose();
    let cross = sqrtm_psd(&((inner + inner_t) / 2.0))?;
    let trace = sigma_a.trace() + sigma_b.trace() - 2.0 * cross.trace();
    if trace.is_finite() {
        Ok(trace)
    } else {
        Err(MetricsError::NonFinite(" in Frechet trace term"))
    }
}

/// Fréchet (Wasserstein-2) distance between two Gaussian summaries:
/// `||mu_a - mu_b||^2 + Tr(Sigma_a + Sigma_b - 2 (Sigma_a Sigma_b)^{1/2})`.
///
/// If the trace term fails numerically, the computation is retried once with
/// `FRECHET_JITTER_EPSILON * I` added to both covariances; the retry is
/// recorded in the result, never silent.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<FrechetResult> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let mean_term = (&a.mu - &b.mu).norm_squared();

    let (trace_term, jitter_applied) = match frechet_trace_term(&a.sigma, &b.sigma) {
        Ok(t) => (t, false),
        Err(_) => {
            let eye = DMatrix::identity(a.dim(), a.dim());
            let sig_a = &a.sigma + &eye * FRECHET_JITTER_EPSILON;
            let sig_b = &b.sigma + &eye * FRECHET_JITTER_EPSILON;
            (frechet_trace_term(&sig_a, &sig_b)?, true)
        }
    };

    let raw = mean_term + trace_term;
    if !raw.is_finite() {
        return Err(MetricsError::NonFinite(" in Frechet distance"));
    }
    // Tolerate rounding noise just below zero; anything more negative is a
    // numerical failure, not a distance.
    let value = if raw < 0.0 {
        if raw >= -1e-9 {
            0.0
        } else {
            return Err(MetricsError::NonFinite(": Frechet distance below zero"));
        }
    } else {
        raw
    };
    Ok(FrechetResult {
        value,
        mean_term,
        trace_term,
        jitter_applied,
        jitter_epsilon: if jitter_applied {
            FRECHET_JITTER_EPSILON
        } else {
            0.0
        },
    })
}

fn mean_row(features: &FeatureMatrix, normalize: bool) -> Result<Vec<f64>> {
    let d = features.dim();
    let mut mean = vec![0.0f64; d];
    for (i, row) in features.rows().enumerate() {
        let scale = if normalize {
            let norm = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(MetricsError::ZeroNormRow { row: i });
            }
            1.0 / norm
        } else {
            1.0
        };
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64 * scale;
        }
    }
    let n = features.n_samples() as f64;
    for m in mean.iter_mut() {
        *m /= n;
    }
    Ok(mean)
}

/// Cosine embedding distance between a generated set `G` and a real set `X`.
///
/// The mean over all `N * M` pairs of `g_i . x_j` equals the dot product of
/// the two row means, so the computation is `O((N + M) D)` instead of
/// `O(N M D)`. With `normalize` set, rows are L2-normalized first and the
/// pairwise quantity is a true cosine similarity.
pub fn crd(generated: &FeatureMatrix, real: &FeatureMatrix, normalize: bool) -> Result<CrdResult> {
    if generated.dim() != real.dim() {
        return Err(MetricsError::DimensionMismatch {
            left: generated.dim(),
            right: real.dim(),
        });
    }
    let g_mean = mean_row(generated, normalize)?;
    let x_mean = mean_row(real, normalize)?;
    let mean_similarity: f64 = g_mean.iter().zip(&x_mean).map(|(a, b)| a * b).sum();
    if !mean_similarity.is_finite() {
        return Err(MetricsError::NonFinite(" in CRD"));
    }
    Ok(CrdResult {
        mean_similarity,
        distance: 1.0 - mean_similarity,
        n: generated.n_samples(),
        m: real.n_samples(),
    })
}

/// Round-trip reconstruction error: the mean over pairs of the mean absolute
/// per-element difference between each original and its reconstruction.
pub fn round_trip_l1(originals: &[ImageTile], reconstructions: &[ImageTile]) -> Result<f64> {
    if originals.len() != reconstructions.len() {
        return Err(MetricsError::PairCountMismatch {
            left: originals.len(),
            right: reconstructions.len(),
        });
    }
    if originals.is_empty() {
        return Err(MetricsError::PairCountMismatch { left: 0, right: 0 });
    }
    let mut total = 0.0f64;
    for (index, (a, b)) in originals.iter().zip(reconstructions).enumerate() {
        if !a.same_shape(b) {
            return Err(MetricsError::PairShapeMismatch { index });
        }
        let sum: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (x as f64 - y as f64).abs())
            .sum();
        total += sum / a.data().len() as f64;
    }
    Ok(total / originals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{gen_gaussian_features, oracle_frechet_diag, GaussianSpec};
    use crate::rng::CounterRng;
    use approx::assert_relative_eq;

    fn matrix(rows: &[&[f32]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn diag_summary(mu: &[f64], var: &[f64]) -> GaussianSummary {
        GaussianSummary {
            mu: DVector::from_row_slice(mu),
            sigma: DMatrix::from_diagonal(&DVector::from_row_slice(var)),
        }
    }

    #[test]
    fn gaussian_fit_on_constant_rows() {
        let f = matrix(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let g = fit_gaussian(&f).unwrap();
        assert_eq!(g.mu.as_slice(), &[1.0, 1.0]);
        assert!(g.sigma.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_fit_hand_computed_covariance() {
        let f = matrix(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let g = fit_gaussian(&f).unwrap();
        assert_eq!(g.mu.as_slice(), &[1.0, 1.0]);
        for &v in g.sigma.iter() {
            assert_relative_eq!(v, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_fit_needs_two_samples() {
        let f = matrix(&[&[1.0, 2.0]]);
        assert!(matches!(
            fit_gaussian(&f).unwrap_err(),
            MetricsError::TooFewSamples(1)
        ));
    }

    #[test]
    fn gaussian_fit_recovers_known_moments() {
        let spec = GaussianSpec {
            mu: vec![1.0, -2.0, 0.5, 3.0],
            sigma_diag: vec![1.0, 0.5, 2.0, 1.5],
            n: 2000,
            seed: 404,
        };
        let f = gen_gaussian_features(&spec).unwrap();
        let g = fit_gaussian(&f).unwrap();
        for j in 0..4 {
            assert!((g.mu[j] - spec.mu[j]).abs() < 0.1, "mu[{j}] = {}", g.mu[j]);
            for i in 0..4 {
                let truth = if i == j { spec.sigma_diag[j] } else { 0.0 };
                assert!(
                    (g.sigma[(i, j)] - truth).abs() < 0.15,
                    "sigma[({i},{j})] = {}",
                    g.sigma[(i, j)]
                );
            }
        }
    }

    #[test]
    fn sqrtm_identity_and_diagonal() {
        let eye = DMatrix::<f64>::identity(5, 5);
        let r = sqrtm_psd(&eye).unwrap();
        assert_relative_eq!(r, eye, epsilon = 1e-12);

        let s = DMatrix::from_diagonal(&DVector::from_row_slice(&[4.0, 9.0]));
        let r = sqrtm_psd(&s).unwrap();
        assert_relative_eq!(r[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(r[(1, 1)], 3.0, epsilon = 1e-12);
        assert!(r[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn sqrtm_multiplies_back() {
        let mut rng = CounterRng::new(12);
        for d in [3usize, 8, 32, 64] {
            let a = DMatrix::from_fn(d, d, |_, _| rng.next_normal());
            let s = &a * a.transpose();
            let r = sqrtm_psd(&s).unwrap();
            let err = (&r * &r - &s).norm() / s.norm();
            assert!(err <= 1e-8, "d={d} relative error {err:.3e}");
        }
    }

    #[test]
    fn sqrtm_rejects_asymmetric_input() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            sqrtm_psd(&s).unwrap_err(),
            MetricsError::NotSymmetric { .. }
        ));
    }

    #[test]
    fn sqrtm_rejects_indefinite_input() {
        let s = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, -0.5]));
        assert!(matches!(
            sqrtm_psd(&s).unwrap_err(),
            MetricsError::NotPsd { .. }
        ));
    }

    #[test]
    fn frechet_of_identical_summaries_is_zero() {
        let spec = GaussianSpec {
            mu: vec![0.2; 6],
            sigma_diag: vec![1.0; 6],
            n: 64,
            seed: 7,
        };
        let g = fit_gaussian(&gen_gaussian_features(&spec).unwrap()).unwrap();
        let fd = frechet_distance(&g, &g).unwrap();
        assert!(fd.value <= 1e-9, "value {}", fd.value);
        assert!(!fd.jitter_applied);
    }

    #[test]
    fn frechet_one_dimensional_closed_form() {
        let a = diag_summary(&[0.0], &[1.0]);
        let b = diag_summary(&[3.0], &[1.0]);
        let fd = frechet_distance(&a, &b).unwrap();
        assert_relative_eq!(fd.value, 9.0, epsilon = 1e-9);
        assert_relative_eq!(fd.mean_term, 9.0, epsilon = 1e-12);
        assert!(fd.trace_term.abs() < 1e-9);
    }

    #[test]
    fn frechet_two_dimensional_diagonal_oracle() {
        let a = diag_summary(&[0.0, 0.0], &[1.0, 4.0]);
        let b = diag_summary(&[1.0, 1.0], &[4.0, 1.0]);
        let fd = frechet_distance(&a, &b).unwrap();
        assert_relative_eq!(fd.value, 4.0, epsilon = 1e-8);
    }

    #[test]
    fn frechet_matches_diagonal_closed_form_and_is_symmetric() {
        let mut rng = CounterRng::new(31);
        for d in [2usize, 5, 16] {
            let mu_a: Vec<f64> = (0..d).map(|_| rng.next_normal() * 2.0).collect();
            let mu_b: Vec<f64> = (0..d).map(|_| rng.next_normal() * 2.0).collect();
            let var_a: Vec<f64> = (0..d).map(|_| 0.2 + rng.next_f64() * 3.0).collect();
            let var_b: Vec<f64> = (0..d).map(|_| 0.2 + rng.next_f64() * 3.0).collect();
            let a = diag_summary(&mu_a, &var_a);
            let b = diag_summary(&mu_b, &var_b);
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            let oracle = oracle_frechet_diag(&mu_a, &var_a, &mu_b, &var_b);
            assert_relative_eq!(ab.value, oracle, max_relative = 1e-8);
            assert!((ab.value - ba.value).abs() <= 1e-9);
            assert!(ab.value >= 0.0);
            assert_relative_eq!(
                ab.value,
                ab.mean_term + ab.trace_term,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn frechet_dimension_mismatch() {
        let a = diag_summary(&[0.0], &[1.0]);
        let b = diag_summary(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(
            frechet_distance(&a, &b).unwrap_err(),
            MetricsError::DimensionMismatch { left: 1, right: 2 }
        ));
    }

    #[test]
    fn frechet_jitter_on_singular_rank_deficient_fit() {
        // A covariance with a small negative eigenvalue trips the PSD check
        // on the first attempt; the documented jitter absorbs it.
        let mut sigma = DMatrix::<f64>::zeros(3, 3);
        sigma[(0, 0)] = 1.0;
        sigma[(1, 1)] = -1e-7; // beyond -1e-8 * max|eig|, within the jitter
        sigma[(2, 2)] = 1.0;
        let a = GaussianSummary {
            mu: DVector::zeros(3),
            sigma,
        };
        let b = diag_summary(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]);
        let fd = frechet_distance(&a, &b).unwrap();
        assert!(fd.jitter_applied);
        assert_eq!(fd.jitter_epsilon, FRECHET_JITTER_EPSILON);
        assert!(fd.value.is_finite());
    }

    #[test]
    fn crd_unit_vector_cases() {
        let e1 = matrix(&[&[1.0, 0.0, 0.0]]);
        let e2 = matrix(&[&[0.0, 1.0, 0.0]]);
        let same = crd(&e1, &e1, true).unwrap();
        assert_eq!(same.mean_similarity, 1.0);
        assert_eq!(same.distance, 0.0);
        let orth = crd(&e1, &e2, true).unwrap();
        assert_eq!(orth.mean_similarity, 0.0);
        assert_eq!(orth.distance, 1.0);
    }

    #[test]
    fn crd_matches_brute_force_oracle() {
        let mut rng = CounterRng::new(77);
        let g = FeatureMatrix::from_rows(
            (0..7)
                .map(|_| (0..16).map(|_| rng.next_normal() as f32).collect())
                .collect(),
        )
        .unwrap();
        let x = FeatureMatrix::from_rows(
            (0..9)
                .map(|_| (0..16).map(|_| rng.next_normal() as f32).collect())
                .collect(),
        )
        .unwrap();
        let fast = crd(&g, &x, false).unwrap();
        let brute = crate::fixtures::oracle_crd_bruteforce(&g, &x);
        assert!((fast.mean_similarity - brute).abs() <= 1e-10);
        assert_eq!(fast.n, 7);
        assert_eq!(fast.m, 9);
    }

    #[test]
    fn crd_is_symmetric_in_its_arguments() {
        let mut rng = CounterRng::new(13);
        let g = FeatureMatrix::from_rows(
            (0..5)
                .map(|_| (0..8).map(|_| rng.next_f64() as f32 + 0.1).collect())
                .collect(),
        )
        .unwrap();
        let x = FeatureMatrix::from_rows(
            (0..6)
                .map(|_| (0..8).map(|_| rng.next_f64() as f32 + 0.1).collect())
                .collect(),
        )
        .unwrap();
        let gx = crd(&g, &x, true).unwrap();
        let xg = crd(&x, &g, true).unwrap();
        assert_eq!(gx.mean_similarity, xg.mean_similarity);
    }

    #[test]
    fn crd_zero_row_under_normalize() {
        let g = matrix(&[&[0.0, 0.0]]);
        let x = matrix(&[&[1.0, 0.0]]);
        assert!(matches!(
            crd(&g, &x, true).unwrap_err(),
            MetricsError::ZeroNormRow { row: 0 }
        ));
        assert!(crd(&g, &x, false).is_ok());
    }

    #[test]
    fn round_trip_l1_cases() {
        let a = ImageTile::new(2, 2, vec![0.0; 12]).unwrap();
        let b = ImageTile::new(2, 2, vec![1.0; 12]).unwrap();
        assert_eq!(round_trip_l1(&[a.clone()], &[a.clone()]).unwrap(), 0.0);
        assert_eq!(round_trip_l1(&[a.clone()], &[b.clone()]).unwrap(), 1.0);

        let mut rng = CounterRng::new(55);
        let originals: Vec<ImageTile> = (0..4)
            .map(|_| {
                ImageTile::new(3, 3, (0..27).map(|_| rng.next_f64() as f32).collect()).unwrap()
            })
            .collect();
        let recons: Vec<ImageTile> = (0..4)
            .map(|_| {
                ImageTile::new(3, 3, (0..27).map(|_| rng.next_f64() as f32).collect()).unwrap()
            })
            .collect();
        let got = round_trip_l1(&originals, &recons).unwrap();
        // Direct summation oracle.
        let mut expected = 0.0f64;
        for (o, r) in originals.iter().zip(&recons) {
            let mut s = 0.0f64;
            for (x, y) in o.data().iter().zip(r.data()) {
                s += (*x as f64 - *y as f64).abs();
            }
            expected += s / 27.0;
        }
        expected /= 4.0;
        assert!((got - expected).abs() <= 1e-12);

        assert!(matches!(
            round_trip_l1(&originals[..2], &recons[..3]).unwrap_err(),
            MetricsError::PairCountMismatch { left: 2, right: 3 }
        ));
        let small = ImageTile::new(2, 3, vec![0.0; 18]).unwrap();
        assert!(matches!(
            round_trip_l1(&[a], &[small]).unwrap_err(),
            MetricsError::PairShapeMismatch { index: 0 }
        ));
    }
}
