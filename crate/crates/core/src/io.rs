//! Image file I/O: PNG (8-bit gray/RGB) plus binary PGM/PPM as a
//! dependency-free interchange fallback.
//!
//! Quantization on save is round-half-up: `byte = round(v * 255)` with ties
//! going away from zero. Loading maps bytes back via `v = byte / 255`, so a
//! save/load roundtrip moves no sample by more than 1/510.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Quantize one unit-interval sample to a byte (round-half-up).
pub fn quantize_u8(v: f32) -> u8 {
    (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Load a PNG, PGM, or PPM image. The format is chosen by file extension
/// (`.png`, `.pgm`, `.ppm`); anything else is an unsupported-format error.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    match extension(path) {
        Some("png") => load_png(path),
        Some("pgm") | Some("ppm") => load_pnm(path),
        _ => Err(Error::UnsupportedFormat { path: path.into() }),
    }
}

/// Save an image as PNG, PGM, or PPM depending on the file extension.
/// PGM only accepts single-channel images; PPM only three-channel.
pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path) {
        Some("png") => save_png(img, path),
        Some("pgm") => {
            if img.channels() != 1 {
                return Err(Error::InvalidArgument(
                    "pgm stores single-channel images only".into(),
                ));
            }
            save_pnm(img, path)
        }
        Some("ppm") => {
            if img.channels() != 3 {
                return Err(Error::InvalidArgument(
                    "ppm stores three-channel images only".into(),
                ));
            }
            save_pnm(img, path)
        }
        _ => Err(Error::UnsupportedFormat { path: path.into() }),
    }
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}

fn load_png(path: &Path) -> Result<ImageTensor> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(_) => Error::UnsupportedFormat { path: path.into() },
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::CorruptImage {
            path: path.into(),
            detail: other.to_string(),
        },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => {
            let data = buf.into_raw().iter().map(|&b| b as f32 / 255.0).collect();
            ImageTensor::new(h, w, 1, data)
        }
        other => {
            let rgb = other.to_rgb8();
            let data = rgb.into_raw().iter().map(|&b| b as f32 / 255.0).collect();
            ImageTensor::new(h, w, 3, data)
        }
    }
}

fn save_png(img: &ImageTensor, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize_u8(v)).collect();
    let (h, w) = (img.height() as u32, img.width() as u32);
    let result = match img.channels() {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("length checked by ImageTensor")
            .save_with_format(path, image::ImageFormat::Png),
        _ => image::RgbImage::from_raw(w, h, bytes)
            .expect("length checked by ImageTensor")
            .save_with_format(path, image::ImageFormat::Png),
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::CorruptImage {
            path: path.into(),
            detail: other.to_string(),
        },
    })
}

/// Binary PGM (P5) / PPM (P6), maxval 255. Header: magic, whitespace,
/// width, height, maxval, single whitespace byte, then raw samples.
fn save_pnm(img: &ImageTensor, path: &Path) -> Result<()> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize_u8(v)));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn load_pnm(path: &Path) -> Result<ImageTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    let corrupt = |detail: &str| Error::CorruptImage {
        path: path.into(),
        detail: detail.into(),
    };

    if bytes.len() < 2 {
        return Err(corrupt("file shorter than magic"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::UnsupportedFormat { path: path.into() }),
    };

    // Parse the three header integers, skipping whitespace and '#' comments.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        while pos < bytes.len() {
            let b = bytes[pos];
            if b == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                pos += 1;
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(corrupt("missing header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("unparseable header field"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(corrupt("only maxval 255 is supported"));
    }
    if width == 0 || height == 0 {
        return Err(corrupt("zero dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(corrupt("missing raster separator"));
    }
    pos += 1;

    let expected = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(corrupt("truncated raster"));
    }
    let data = raster[..expected].iter().map(|&b| b as f32 / 255.0).collect();
    ImageTensor::new(height, width, channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn quantization_convention() {
        assert_eq!(quantize_u8(0.0), 0);
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(0.5), 128); // 127.5 rounds up
    }

    #[test]
    fn pgm_endpoints_map_to_unit_interval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\xff\x00\xff").unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.shape(), (2, 2, 1));
        assert_eq!(img.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn roundtrip_error_is_within_half_quantum() {
        let mut rng = SeededRng::new(9);
        let img = ImageTensor::from_fn(7, 5, 3, |_, _, _| rng.uniform() as f32);
        let dir = tempfile::tempdir().unwrap();
        for name in ["t.png", "t.ppm"] {
            let path = dir.path().join(name);
            save_image(&img, &path).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(back.shape(), img.shape());
            let max_err = img
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(max_err <= 1.0 / 510.0 + 1e-7, "{name}: {max_err}");
        }
    }

    #[test]
    fn save_then_load_is_stable() {
        // A quantized image reloads bit-identically.
        let img = ImageTensor::from_fn(4, 4, 1, |y, x, _| (y * 4 + x) as f32 / 15.0);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.png");
        let p2 = dir.path().join("b.png");
        save_image(&img, &p1).unwrap();
        let once = load_image(&p1).unwrap();
        save_image(&once, &p2).unwrap();
        let twice = load_image(&p2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn truncated_png_is_a_corrupt_file_error() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("g.png");
        save_image(&ImageTensor::constant(8, 8, 3, 0.5), &good).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
        match load_image(&bad) {
            Err(Error::CorruptImage { .. }) => {}
            other => panic!("expected corrupt-image error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_extension_is_unsupported() {
        match load_image("/tmp/never-read.bmp") {
            Err(Error::UnsupportedFormat { .. }) => {}
            other => panic!("expected unsupported-format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        match load_image("/definitely/not/here.png") {
            Err(Error::Io { .. }) => {}
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
