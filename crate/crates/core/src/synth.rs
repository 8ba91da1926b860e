//! Deterministic synthetic texture generation: the stand-in for natural
//! training photographs.
//!
//! A texture is low-pass-filtered noise plus a random linear gradient,
//! softly squashed so values stay inside the open unit interval. The heavy
//! low-pass keeps mid- and high-frequency energy small, which is what makes
//! the textures behave like photographs under spectral analysis.

use crate::dataset::{Dataset, DatasetItem};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::rng::SeededRng;

/// Class label attached to synthetic textures.
pub const REAL_LABEL: &str = "Real";

/// Generate `n` seeded RGB textures of `size`×`size` pixels, labeled "Real".
///
/// Draw order per image is fixed: shared noise plane, three channel noise
/// planes, gradient angle, gradient amplitude, three channel offsets. Any
/// change to this order changes every downstream regression value.
pub fn synth_texture_dataset(n: usize, size: usize, rng: &mut SeededRng) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one image".into()));
    }
    if size < 16 {
        return Err(Error::InvalidArgument(format!(
            "size must be at least 16, got {size}"
        )));
    }
    let mut dataset = Dataset::new();
    for i in 0..n {
        dataset.push(DatasetItem {
            image: synth_texture(size, rng),
            label: REAL_LABEL.into(),
            id: format!("real{i:05}"),
        })?;
    }
    Ok(dataset)
}

/// One seeded texture; consumes a fixed number of draws from `rng`.
pub fn synth_texture(size: usize, rng: &mut SeededRng) -> ImageTensor {
    let sigma = size as f64 / 24.0;

    let shared: Vec<f64> = (0..size * size).map(|_| rng.range(-1.0, 1.0)).collect();
    let mut planes = Vec::with_capacity(3);
    for _ in 0..3 {
        let own: Vec<f64> = (0..size * size).map(|_| rng.range(-1.0, 1.0)).collect();
        let mixed: Vec<f64> = shared
            .iter()
            .zip(&own)
            .map(|(s, o)| 0.65 * s + 0.35 * o)
            .collect();
        let mut blurred = gaussian_blur(&mixed, size, size, sigma);
        normalize_plane(&mut blurred, 0.16);
        planes.push(blurred);
    }

    let theta = rng.range(0.0, std::f64::consts::TAU);
    let grad_amp = rng.range(0.1, 0.3);
    let offsets: Vec<f64> = (0..3).map(|_| rng.range(-0.05, 0.05)).collect();

    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    ImageTensor::from_fn(size, size, 3, |y, x, c| {
        let gx = x as f64 / size as f64 - 0.5;
        let gy = y as f64 / size as f64 - 0.5;
        let gradient = grad_amp * (gx * cos_t + gy * sin_t);
        let raw = 0.5 + planes[c][y * size + x] + gradient + offsets[c];
        // Soft squash: near-identity mid-range, asymptotes inside (0.05, 0.95).
        (0.5 + 0.45 * ((raw - 0.5) / 0.45).tanh()) as f32
    })
}

/// Scale a zero-meaned plane to the requested standard deviation.
fn normalize_plane(plane: &mut [f64], target_std: f64) {
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-12);
    for v in plane.iter_mut() {
        *v = (*v - mean) / std * target_std;
    }
}

/// Separable Gaussian blur with reflected edges.
pub(crate) fn gaussian_blur(plane: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for k in -radius..=radius {
        kernel.push((-0.5 * (k as f64 / sigma).powi(2)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= norm;
    }

    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * n - 2 - i;
        }
        i.clamp(0, n - 1) as usize
    };

    // Rows then columns.
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let xi = reflect(x as isize + ki as isize - radius, width);
                acc += w * plane[y * width + xi];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let yi = reflect(y as isize + ki as isize - radius, height);
                acc += w * tmp[yi * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_bit_identical_datasets() {
        let a = synth_texture_dataset(3, 16, &mut SeededRng::new(7)).unwrap();
        let b = synth_texture_dataset(3, 16, &mut SeededRng::new(7)).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.image.data(), y.image.data());
        }
    }

    #[test]
    fn single_texture_respects_shape_and_range() {
        let d = synth_texture_dataset(1, 16, &mut SeededRng::new(1)).unwrap();
        let img = &d.items()[0].image;
        assert_eq!(img.shape(), (16, 16, 3));
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn preconditions_are_enforced() {
        assert!(synth_texture_dataset(0, 16, &mut SeededRng::new(0)).is_err());
        assert!(synth_texture_dataset(1, 8, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn seed7_histogram_is_nondegenerate() {
        // Regression: pixel std over 200 seed-7 16x16 textures. Frozen from
        // the first run of this generator.
        let d = synth_texture_dataset(200, 16, &mut SeededRng::new(7)).unwrap();
        let values: Vec<f64> = d
            .iter()
            .flat_map(|it| it.image.data().iter().map(|&v| v as f64).collect::<Vec<_>>())
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(std > 0.05, "std {std}");
        assert!(
            (std - SEED7_PIXEL_STD).abs() < 0.02,
            "std {std} drifted from frozen {SEED7_PIXEL_STD}"
        );
    }

    // Frozen from the first run; see seed7_histogram_is_nondegenerate.
    const SEED7_PIXEL_STD: f64 = 0.19455;
}
