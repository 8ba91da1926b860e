//! In-memory image representation: the currency every pipeline stage trades in.

use crate::error::{Error, Result};

/// An H×W×C image with row-major, channel-interleaved samples in `[0, 1]`.
///
/// Channels is 1 (gray) or 3 (RGB). The sample for (row y, column x,
/// channel c) lives at `data[(y * width + x) * channels + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(
                "image dimensions must be positive".into(),
            ));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} samples", height * width * channels),
                got: format!("{} samples", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// All-zero image.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
            .expect("valid dimensions")
    }

    /// Constant-valued image; `value` is clamped to `[0, 1]`.
    pub fn constant(height: usize, width: usize, channels: usize, value: f32) -> Self {
        let v = value.clamp(0.0, 1.0);
        Self::new(height, width, channels, vec![v; height * width * channels])
            .expect("valid dimensions")
    }

    /// Build from a closure over (y, x, c); results are clamped to `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(height, width, channels, data).expect("valid dimensions")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Clamp every sample into `[0, 1]` in place.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// One channel as a row-major H×W plane of doubles.
    pub fn channel_plane(&self, c: usize) -> Vec<f64> {
        assert!(c < self.channels);
        let mut plane = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                plane.push(self.get(y, x, c) as f64);
            }
        }
        plane
    }

    /// Unweighted channel mean as a row-major H×W plane of doubles.
    pub fn gray_plane(&self) -> Vec<f64> {
        let mut plane = Vec::with_capacity(self.height * self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = 0.0f64;
                for c in 0..self.channels {
                    acc += self.get(y, x, c) as f64;
                }
                plane.push(acc / self.channels as f64);
            }
        }
        plane
    }

    /// Rebuild an image from per-pixel doubles, clamping into `[0, 1]`.
    /// `planes` holds one H×W plane per channel.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        for p in planes {
            if p.len() != height * width {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} samples per plane", height * width),
                    got: format!("{} samples", p.len()),
                });
            }
        }
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height * width {
            for p in planes {
                let v = p[i];
                if !v.is_finite() {
                    return Err(Error::NonFinite("channel plane".into()));
                }
                data.push(v.clamp(0.0, 1.0) as f32);
            }
        }
        Self::new(height, width, channels, data)
    }

    /// True when both images have identical shape.
    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn shape_error(&self, other: &ImageTensor) -> Error {
        Error::ShapeMismatch {
            expected: format!("{:?}", self.shape()),
            got: format!("{:?}", other.shape()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn rejects_bad_channel_count() {
        assert!(ImageTensor::new(1, 1, 2, vec![0.0; 2]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ImageTensor::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn indexing_is_row_major_interleaved() {
        let img = ImageTensor::from_fn(2, 2, 3, |y, x, c| (y * 4 + x * 2 + c) as f32 / 16.0);
        assert_eq!(img.get(1, 0, 2), 6.0 / 16.0);
        assert_eq!(img.data()[(1 * 2 + 0) * 3 + 2], 6.0 / 16.0);
    }

    #[test]
    fn gray_plane_is_channel_mean() {
        let img = ImageTensor::new(1, 1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        assert!((img.gray_plane()[0] - 0.5).abs() < 1e-9);
    }
}
