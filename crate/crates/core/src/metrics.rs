//! Distortion and distribution metrics: L1, L2, PSNR, and a desk-scale
//! Fréchet feature distance ("FD32") over a frozen random projection of
//! pooled log-spectra.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::linalg::{sqrt_psd, SymMatrix};
use crate::rng::SeededRng;
use crate::spectral::extract_pooled;

/// PSNR is capped here so identical images do not produce infinities.
pub const PSNR_CAP_DB: f64 = 99.0;

/// MSE below this floor is treated as zero for PSNR purposes.
const PSNR_MSE_FLOOR: f64 = 1e-10;

/// Seed of the frozen FD32 projection. Never change this: reports produced
/// with different projections are not comparable.
pub const EMBEDDER_SEED: u64 = 0x4644_3332; // "FD32"

/// Output dimension of the frozen feature projection.
pub const EMBED_DIM: usize = 32;

/// Pooling grid used to featurize images before projection.
pub const EMBED_POOL_GRID: usize = 8;

/// Mean absolute difference over all samples.
pub fn l1_distance(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(a.shape_error(b));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Root mean squared difference over all samples.
pub fn l2_distance(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

/// Mean squared difference over all samples.
pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(a.shape_error(b));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB for unit-range images, capped at 99 dB.
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    let mse = mse(a, b)?;
    if mse < PSNR_MSE_FLOOR {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Gaussian fit of a feature set: sample mean and ridged unbiased covariance.
#[derive(Clone, Debug)]
pub struct FrechetStats {
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
    pub n: usize,
}

/// Fit a Gaussian to `features` (each a d-vector); `ridge` is added to the
/// covariance diagonal. Requires at least two samples.
pub fn fit_gaussian(features: &[Vec<f64>], ridge: f64) -> Result<FrechetStats> {
    if features.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples to fit a gaussian, got {}",
            features.len()
        )));
    }
    let d = features[0].len();
    for f in features {
        if f.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.len(),
            });
        }
    }
    let n = features.len();
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = SymMatrix::zeros(d);
    for f in features {
        for i in 0..d {
            let di = f[i] - mean[i];
            for j in 0..d {
                cov.data[i * d + j] += di * (f[j] - mean[j]);
            }
        }
    }
    for v in &mut cov.data {
        *v /= (n - 1) as f64;
    }
    for i in 0..d {
        cov.data[i * d + i] += ridge;
    }
    Ok(FrechetStats { mean, cov, n })
}

/// Point statistics for a single feature vector: mean = the vector,
/// covariance = ridge * I. Used for per-image feature distances.
pub fn point_stats(feature: &[f64], ridge: f64) -> FrechetStats {
    let d = feature.len();
    let mut cov = SymMatrix::zeros(d);
    for i in 0..d {
        cov.data[i * d + i] = ridge;
    }
    FrechetStats {
        mean: feature.to_vec(),
        cov,
        n: 1,
    }
}

/// Squared Fréchet distance between two Gaussians:
/// `|m1 - m2|^2 + tr(C1 + C2 - 2 (C1^{1/2} C2 C1^{1/2})^{1/2})`.
/// Negative round-off is clamped to zero.
pub fn frechet_distance(s1: &FrechetStats, s2: &FrechetStats) -> Result<f64> {
    if s1.mean.len() != s2.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: s1.mean.len(),
            got: s2.mean.len(),
        });
    }
    let mean_term: f64 = s1
        .mean
        .iter()
        .zip(&s2.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let root1 = sqrt_psd(&s1.cov)?;
    let inner = root1.matmul(&s2.cov).matmul(&root1);
    // Symmetrize before the second root to shed round-off asymmetry.
    let mut sym = inner.clone();
    let d = sym.dim;
    for i in 0..d {
        for j in 0..d {
            let v = 0.5 * (inner.get(i, j) + inner.get(j, i));
            sym.set(i, j, v);
        }
    }
    let cross = sqrt_psd(&sym)?;
    let value = mean_term + s1.cov.trace() + s2.cov.trace() - 2.0 * cross.trace();
    Ok(value.max(0.0))
}

/// Frozen random projection used as the FD32 feature embedding.
#[derive(Clone, Debug)]
pub struct FeatureEmbedder {
    /// d_out x d_in, row-major.
    projection: Vec<f64>,
    d_in: usize,
    d_out: usize,
}

impl FeatureEmbedder {
    /// The standard embedder: 64-D pooled log-spectra down to 32-D, with a
    /// projection drawn once from the fixed global seed.
    pub fn standard() -> Self {
        Self::with_seed(EMBEDDER_SEED, EMBED_POOL_GRID * EMBED_POOL_GRID, EMBED_DIM)
    }

    pub fn with_seed(seed: u64, d_in: usize, d_out: usize) -> Self {
        let mut rng = SeededRng::new(seed);
        let scale = 1.0 / (d_in as f64).sqrt();
        let projection = (0..d_in * d_out).map(|_| rng.normal() * scale).collect();
        Self {
            projection,
            d_in,
            d_out,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.d_out
    }

    /// Project one feature vector.
    pub fn project(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                got: feature.len(),
            });
        }
        let mut out = vec![0.0; self.d_out];
        for (o, row) in out.iter_mut().zip(self.projection.chunks(self.d_in)) {
            *o = row.iter().zip(feature).map(|(w, f)| w * f).sum();
        }
        Ok(out)
    }

    /// Embed a single image: pooled log-spectrum, then projection.
    pub fn embed_image(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        let pooled = extract_pooled(img, EMBED_POOL_GRID)?;
        self.project(&pooled.values)
    }
}

/// Embed every image of a dataset, in dataset order.
pub fn embed_features(images: &Dataset, embedder: &FeatureEmbedder) -> Result<Vec<Vec<f64>>> {
    images
        .iter()
        .map(|item| embedder.embed_image(&item.image))
        .collect()
}

/// Squared FD32 distance between two image sets: Gaussian fits of their
/// embeddings, then the Fréchet distance.
pub fn frechet_between_sets(a: &Dataset, b: &Dataset, ridge: f64) -> Result<f64> {
    let embedder = FeatureEmbedder::standard();
    let fa = fit_gaussian(&embed_features(a, &embedder)?, ridge)?;
    let fb = fit_gaussian(&embed_features(b, &embedder)?, ridge)?;
    frechet_distance(&fa, &fb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(values: &[f32]) -> ImageTensor {
        ImageTensor::new(1, values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn l1_definition_cases() {
        let a = img(&[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
        let ones = img(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(l1_distance(&a, &ones).unwrap(), 1.0);
        let half = img(&[0.5, 0.5, 0.0, 0.0]);
        assert!((l1_distance(&a, &half).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn l2_definition_cases() {
        let a = img(&[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
        let ones = img(&[1.0, 1.0, 1.0, 1.0]);
        assert!((l2_distance(&a, &ones).unwrap() - 1.0).abs() < 1e-12);
        let single = img(&[0.6, 0.0, 0.0, 0.0]);
        assert!((l2_distance(&a, &single).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn psnr_cases() {
        let a = img(&[0.25, 0.75]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        // MSE 0.01 -> 20 dB
        let b = img(&[0.35, 0.85]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        // MSE 1 -> 0 dB
        let zero = img(&[0.0, 0.0]);
        let one = img(&[1.0, 1.0]);
        assert!(psnr(&zero, &one).unwrap().abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = img(&[0.0]);
        let b = img(&[0.0, 0.0]);
        assert!(l1_distance(&a, &b).is_err());
        assert!(l2_distance(&a, &b).is_err());
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn two_point_gaussian_fit() {
        let stats = fit_gaussian(&[vec![0.0, 0.0], vec![2.0, 0.0]], 1e-6).unwrap();
        assert_eq!(stats.mean, vec![1.0, 0.0]);
        assert!((stats.cov.get(0, 0) - (2.0 + 1e-6)).abs() < 1e-12);
        assert!((stats.cov.get(1, 1) - 1e-6).abs() < 1e-15);
        assert_eq!(stats.cov.get(0, 1), 0.0);
    }

    #[test]
    fn identical_samples_leave_only_ridge() {
        let stats = fit_gaussian(&[vec![3.0, 4.0], vec![3.0, 4.0], vec![3.0, 4.0]], 1e-6).unwrap();
        assert_eq!(stats.mean, vec![3.0, 4.0]);
        assert!((stats.cov.get(0, 0) - 1e-6).abs() < 1e-15);
        assert!((stats.cov.get(1, 1) - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn single_sample_is_rejected() {
        assert!(fit_gaussian(&[vec![0.0]], 1e-6).is_err());
    }

    #[test]
    fn law_of_large_numbers_fit() {
        let mut rng = SeededRng::new(101);
        let samples: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..4).map(|_| rng.normal()).collect())
            .collect();
        let stats = fit_gaussian(&samples, 0.0).unwrap();
        for m in &stats.mean {
            assert!(m.abs() < 0.05);
        }
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((stats.cov.get(i, j) - expected).abs() < 0.05);
            }
        }
    }

    #[test]
    fn frechet_identical_stats_is_zero() {
        let stats = fit_gaussian(
            &[vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 3.0]],
            1e-6,
        )
        .unwrap();
        assert!(frechet_distance(&stats, &stats).unwrap() <= 1e-9);
    }

    #[test]
    fn frechet_one_dimensional_analytic_case() {
        // mu 0 vs 1 with unit variances: d^2 = 1.
        let s1 = FrechetStats {
            mean: vec![0.0],
            cov: SymMatrix::from_rows(&[vec![1.0]]),
            n: 2,
        };
        let s2 = FrechetStats {
            mean: vec![1.0],
            cov: SymMatrix::from_rows(&[vec![1.0]]),
            n: 2,
        };
        assert!((frechet_distance(&s1, &s2).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn frechet_commuting_diagonal_matches_scalar_formula() {
        // diag(4, 1) vs diag(1, 1), equal means: d^2 = (2-1)^2 = 1.
        let s1 = FrechetStats {
            mean: vec![0.0, 0.0],
            cov: SymMatrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 1.0]]),
            n: 2,
        };
        let s2 = FrechetStats {
            mean: vec![0.0, 0.0],
            cov: SymMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            n: 2,
        };
        assert!((frechet_distance(&s1, &s2).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn embedder_is_frozen_and_shaped() {
        let a = FeatureEmbedder::standard();
        let b = FeatureEmbedder::standard();
        assert_eq!(a.projection, b.projection);
        let out = a.project(&vec![1.0; 64]).unwrap();
        assert_eq!(out.len(), 32);
        assert!(a.project(&vec![0.0; 63]).is_err());
    }

    #[test]
    fn point_stats_distance_is_squared_feature_distance() {
        let p1 = point_stats(&[0.0, 0.0], 1e-6);
        let p2 = point_stats(&[3.0, 4.0], 1e-6);
        let d = frechet_distance(&p1, &p2).unwrap();
        assert!((d - 25.0).abs() < 1e-6);
    }
}
