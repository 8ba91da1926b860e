//! 2-D discrete cosine transform machinery and log-spectrum features.
//!
//! The transform is the orthonormal DCT-II, applied separably (rows, then
//! columns). Orthonormality makes energy checks exact: the sum of squared
//! coefficients equals the sum of squared pixels.

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Default floor added inside the logarithm of [`log_spectrum`].
pub const DEFAULT_EPS_LOG: f64 = 1e-6;

/// Orthonormal 2-D DCT-II coefficients of one channel plane.
#[derive(Clone, Debug)]
pub struct DctSpectrum {
    pub height: usize,
    pub width: usize,
    /// Row-major; index (u, v) is `coeffs[u * width + v]`.
    pub coeffs: Vec<f64>,
}

/// Flattened log-magnitude spectral feature vector.
#[derive(Clone, Debug)]
pub struct SpectralFeature {
    pub values: Vec<f64>,
}

/// Orthonormal DCT-II basis for size `n`: `basis[k][i] = s_k cos(pi (2i+1) k / 2n)`
/// with `s_0 = sqrt(1/n)` and `s_k = sqrt(2/n)` otherwise.
fn dct_basis(n: usize) -> Vec<f64> {
    let mut basis = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            basis[k * n + i] =
                scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    basis
}

/// Forward orthonormal 2-D DCT-II of a row-major H×W plane.
pub fn dct2(plane: &[f64], height: usize, width: usize) -> Result<DctSpectrum> {
    if height == 0 || width == 0 || plane.len() != height * width {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} plane", height, width),
            got: format!("{} samples", plane.len()),
        });
    }
    if plane.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dct2 input".into()));
    }
    let row_basis = dct_basis(width);
    let col_basis = dct_basis(height);

    // Rows: tmp[y][v] = sum_x plane[y][x] * row_basis[v][x]
    let mut tmp = vec![0.0; height * width];
    for y in 0..height {
        for v in 0..width {
            let mut acc = 0.0;
            for x in 0..width {
                acc += plane[y * width + x] * row_basis[v * width + x];
            }
            tmp[y * width + v] = acc;
        }
    }
    // Columns: coeffs[u][v] = sum_y tmp[y][v] * col_basis[u][y]
    let mut coeffs = vec![0.0; height * width];
    for u in 0..height {
        for v in 0..width {
            let mut acc = 0.0;
            for y in 0..height {
                acc += tmp[y * width + v] * col_basis[u * height + y];
            }
            coeffs[u * width + v] = acc;
        }
    }
    Ok(DctSpectrum {
        height,
        width,
        coeffs,
    })
}

/// Inverse of [`dct2`]: reconstructs the plane from its spectrum.
pub fn idct2(spec: &DctSpectrum) -> Result<Vec<f64>> {
    let (height, width) = (spec.height, spec.width);
    if spec.coeffs.len() != height * width {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} spectrum", height, width),
            got: format!("{} coefficients", spec.coeffs.len()),
        });
    }
    if spec.coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("idct2 input".into()));
    }
    let row_basis = dct_basis(width);
    let col_basis = dct_basis(height);

    // Columns first (transpose of forward order; order does not matter).
    let mut tmp = vec![0.0; height * width];
    for y in 0..height {
        for v in 0..width {
            let mut acc = 0.0;
            for u in 0..height {
                acc += spec.coeffs[u * width + v] * col_basis[u * height + y];
            }
            tmp[y * width + v] = acc;
        }
    }
    let mut plane = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for v in 0..width {
                acc += tmp[y * width + v] * row_basis[v * width + x];
            }
            plane[y * width + x] = acc;
        }
    }
    Ok(plane)
}

/// Whole-image log-magnitude spectrum of the gray (channel-mean) plane:
/// `log(|coeff| + eps_log)` per coefficient.
pub fn log_spectrum(img: &ImageTensor, eps_log: f64) -> Result<SpectralFeature> {
    if eps_log <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eps_log must be positive, got {eps_log}"
        )));
    }
    let gray = img.gray_plane();
    let spec = dct2(&gray, img.height(), img.width())?;
    Ok(SpectralFeature {
        values: spec.coeffs.iter().map(|c| (c.abs() + eps_log).ln()).collect(),
    })
}

/// Log spectrum pooled over a `grid`×`grid` partition of the (u, v) plane.
/// Band (i, j) is the mean of the log spectrum over its block; output is
/// row-major of length `grid * grid`.
pub fn extract_pooled(img: &ImageTensor, grid: usize) -> Result<SpectralFeature> {
    if grid == 0 || img.height() % grid != 0 || img.width() % grid != 0 {
        return Err(Error::InvalidArgument(format!(
            "grid {grid} must divide image dimensions {}x{}",
            img.height(),
            img.width()
        )));
    }
    let full = log_spectrum(img, DEFAULT_EPS_LOG)?;
    let (bh, bw) = (img.height() / grid, img.width() / grid);
    let mut values = Vec::with_capacity(grid * grid);
    for bi in 0..grid {
        for bj in 0..grid {
            let mut acc = 0.0;
            for u in bi * bh..(bi + 1) * bh {
                for v in bj * bw..(bj + 1) * bw {
                    acc += full.values[u * img.width() + v];
                }
            }
            values.push(acc / (bh * bw) as f64);
        }
    }
    Ok(SpectralFeature { values })
}

/// Mean of pooled bands whose (i, j) block index satisfies `i + j >= grid`,
/// i.e. the upper anti-diagonal (high-frequency) half of the pooled plane.
pub fn high_band_mean(feature: &SpectralFeature, grid: usize) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..grid {
        for j in 0..grid {
            if i + j >= grid {
                acc += feature.values[i * grid + j];
                count += 1;
            }
        }
    }
    acc / count as f64
}

/// Serialize features as CSV rows of decimal values with 9 significant digits.
pub fn write_feature_csv(
    path: impl AsRef<std::path::Path>,
    rows: &[(String, &SpectralFeature)],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (name, feature) in rows {
        out.push_str(name);
        for v in &feature.values {
            out.push(',');
            out.push_str(&format!("{v:.8e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
