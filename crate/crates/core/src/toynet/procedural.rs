//! Procedural generator families: downscale by two, then re-upsample with a
//! family-specific kernel. Each family leaves a distinct frequency artifact,
//! which is what the attribution classifier learns to separate.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::toynet::{upsample_bilinear, upsample_nearest, upsample_tconv, Planar};

/// The three resampling families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProcFamily {
    /// Blocky 2x2 replication; strong aliasing harmonics.
    Nearest,
    /// Smooth interpolation; attenuated high frequencies.
    Bilinear,
    /// Unbalanced transposed convolution; a 2-pixel-period checkerboard
    /// ridge at the top of the spectrum.
    CheckerboardTconv,
}

/// 1-D taps of the checkerboard kernel. Even outputs see gain 0.8, odd
/// outputs 1.2, so the mean gain is 1 but a strong Nyquist ripple remains.
const CHECKERBOARD_TAPS: [f64; 3] = [0.6, 0.8, 0.6];

impl ProcFamily {
    pub fn all() -> [ProcFamily; 3] {
        [
            ProcFamily::Nearest,
            ProcFamily::Bilinear,
            ProcFamily::CheckerboardTconv,
        ]
    }

    /// Ground-truth label used in attribution datasets.
    pub fn name(&self) -> &'static str {
        match self {
            ProcFamily::Nearest => "nearest",
            ProcFamily::Bilinear => "bilinear",
            ProcFamily::CheckerboardTconv => "checkerboard_tconv",
        }
    }
}

impl FromStr for ProcFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(ProcFamily::Nearest),
            "bilinear" => Ok(ProcFamily::Bilinear),
            "checkerboard_tconv" => Ok(ProcFamily::CheckerboardTconv),
            other => Err(Error::InvalidArgument(format!(
                "unknown family '{other}' (expected nearest, bilinear, or checkerboard_tconv)"
            ))),
        }
    }
}

/// 2x2 box-average downscale; dimensions must be even.
pub fn downscale2(src: &ImageTensor) -> Result<ImageTensor> {
    let (h, w, c) = src.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be even, got {h}x{w}"
        )));
    }
    Ok(ImageTensor::from_fn(h / 2, w / 2, c, |y, x, ch| {
        0.25 * (src.get(2 * y, 2 * x, ch)
            + src.get(2 * y, 2 * x + 1, ch)
            + src.get(2 * y + 1, 2 * x, ch)
            + src.get(2 * y + 1, 2 * x + 1, ch))
    }))
}

/// Downscale `src` by two, then re-upsample with the family's kernel.
/// Output has the same shape as `src` and is clamped to [0, 1].
///
/// `_seed` is reserved for stochastic families; the current three are
/// fully deterministic.
pub fn procedural_generate(
    family: ProcFamily,
    src: &ImageTensor,
    _seed: u64,
) -> Result<ImageTensor> {
    let small = downscale2(src)?;
    let planar = Planar::from_image(&small);
    let up = match family {
        ProcFamily::Nearest => upsample_nearest(&planar),
        ProcFamily::Bilinear => upsample_bilinear(&planar),
        ProcFamily::CheckerboardTconv => {
            let mut kernel = [0.0f64; 9];
            for (ky, row) in kernel.chunks_mut(3).enumerate() {
                for (kx, k) in row.iter_mut().enumerate() {
                    *k = CHECKERBOARD_TAPS[ky] * CHECKERBOARD_TAPS[kx];
                }
            }
            upsample_tconv(&planar, &kernel)
        }
    };
    up.to_image()
}
