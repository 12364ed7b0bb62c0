//! Image loading: 8-bit grayscale or RGB PNG/PGM into unit-range pixels.
//!
//! Color is reduced to luma with the Rec. 601 weights (0.299, 0.587, 0.114)
//! in floating point, so no precision is lost to an 8-bit intermediate.

use std::path::Path;

use deepsc_core::descriptor::GrayImage;
use image::DynamicImage;

use crate::error::{data_error, CmdError, CmdResult};

pub fn load_gray_image(path: &Path) -> CmdResult<GrayImage> {
    let decoded = image::open(path)
        .map_err(|e| data_error!("cannot decode {}: {e}", path.display()))?;
    gray_from_dynamic(decoded, path)
}

fn gray_from_dynamic(decoded: DynamicImage, path: &Path) -> CmdResult<GrayImage> {
    let (width, height) = (decoded.width(), decoded.height());
    let pixels: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma601(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| luma601(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            return Err(data_error!(
                "{}: unsupported pixel format {:?}; expected 8-bit grayscale or RGB",
                path.display(),
                other.color()
            ));
        }
    };
    GrayImage::new(width, height, pixels)
        .map_err(|e| data_error!("{}: {e}", path.display()))
}

fn luma601(r: u8, g: u8, b: u8) -> f64 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    (y / 255.0).clamp(0.0, 1.0)
}

/// Writes unit-range pixels as an 8-bit grayscale PNG.
pub fn save_gray_png(image: &GrayImage, path: &Path) -> CmdResult<()> {
    let bytes: Vec<u8> = image
        .pixels()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(image.width(), image.height(), bytes)
        .expect("buffer sized from image");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CmdError::Data(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(width: u32, height: u32) -> GrayImage {
        let pixels = (0..width as usize * height as usize)
            .map(|i| if i % 2 == 0 { 0.25 } else { 0.75 })
            .collect();
        GrayImage::new(width, height, pixels).unwrap()
    }

    #[test]
    fn png_round_trip_preserves_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = checker(20, 18);
        save_gray_png(&img, &path).unwrap();
        let back = load_gray_image(&path).unwrap();
        assert_eq!((back.width(), back.height()), (20, 18));
        for (a, b) in back.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn rgb_uses_rec601_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let buf = image::RgbImage::from_fn(3, 1, |x, _| match x {
            0 => image::Rgb([255, 0, 0]),
            1 => image::Rgb([0, 255, 0]),
            _ => image::Rgb([0, 0, 255]),
        });
        buf.save_with_format(&path, image::ImageFormat::Png).unwrap();
        let gray = load_gray_image(&path).unwrap();
        let got = gray.pixels();
        assert!((got[0] - 0.299).abs() < 1e-12);
        assert!((got[1] - 0.587).abs() < 1e-12);
        assert!((got[2] - 0.114).abs() < 1e-12);
    }

    #[test]
    fn pgm_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let bytes: Vec<u8> = (0..255).map(|i| (i % 256) as u8).collect();
        let buf = image::GrayImage::from_raw(17, 15, bytes).unwrap();
        buf.save_with_format(&path, image::ImageFormat::Pnm).unwrap();
        let gray = load_gray_image(&path).unwrap();
        assert_eq!((gray.width(), gray.height()), (17, 15));
        assert!((gray.pixels()[16] - 16.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let err = load_gray_image(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(matches!(err, CmdError::Data(_)));
    }
}
