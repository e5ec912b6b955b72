//! Raster ingestion and debug output. PNG and PGM in, grayscale f64 out.

use std::path::Path;

use image::DynamicImage;

use crate::error::{Result, SetRegError};
use crate::grid::ImageGrid;

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Reduces a decoded raster to a single-channel grid with intensities in
/// [0, 1]. Accepts 1- or 3-channel images with 8- or 16-bit integer samples;
/// 3-channel input is reduced with luma weights 0.299/0.587/0.114.
pub fn to_grayscale(raw: &DynamicImage) -> Result<ImageGrid> {
    let (w, h) = (raw.width() as usize, raw.height() as usize);
    let data: Vec<f64> = match raw {
        DynamicImage::ImageLuma8(img) => img.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(img) => img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(img) => img
            .pixels()
            .map(|p| {
                (LUMA_R * p.0[0] as f64 + LUMA_G * p.0[1] as f64 + LUMA_B * p.0[2] as f64) / 255.0
            })
            .collect(),
        DynamicImage::ImageRgb16(img) => img
            .pixels()
            .map(|p| {
                (LUMA_R * p.0[0] as f64 + LUMA_G * p.0[1] as f64 + LUMA_B * p.0[2] as f64)
                    / 65535.0
            })
            .collect(),
        other => {
            return Err(SetRegError::UnsupportedFormat(format!(
                "{:?}: expected 1 or 3 channels with 8- or 16-bit samples",
                other.color()
            )))
        }
    };
    ImageGrid::new(w, h, data)
}

/// Loads a PNG or PGM file and converts it to a grayscale grid.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let raw = image::open(path).map_err(|e| SetRegError::malformed(path, e.to_string()))?;
    to_grayscale(&raw).map_err(|e| SetRegError::malformed(path, e.to_string()))
}

fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a [0, 1] grid as an 8-bit grayscale PNG.
pub fn save_png(grid: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: Vec<u8> = grid.data().iter().map(|&v| quantize_u8(v)).collect();
    let img = image::GrayImage::from_raw(grid.width() as u32, grid.height() as u32, buf)
        .expect("buffer sized from grid");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| SetRegError::malformed(path, e.to_string()))
}

/// Writes a grid as an 8-bit PGM, rescaled so its maximum maps to 255.
/// Debug output only; not a round-trippable encoding of the values.
pub fn save_pgm_normalized(grid: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let max = grid.max_value().max(1e-30);
    let buf: Vec<u8> = grid
        .data()
        .iter()
        .map(|&v| quantize_u8(v.max(0.0) / max))
        .collect();
    let img = image::GrayImage::from_raw(grid.width() as u32, grid.height() as u32, buf)
        .expect("buffer sized from grid");
    img.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| SetRegError::malformed(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Rgb, RgbImage};
    use rand::prelude::*;

    #[test]
    fn full_scale_gray_pixel() {
        let img = DynamicImage::ImageLuma8(GrayImage::from_pixel(1, 1, image::Luma([255])));
        let g = to_grayscale(&img).unwrap();
        assert_eq!(g.data(), &[1.0]);
    }

    #[test]
    fn pure_red_pixel_uses_luma_weight() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(1, 1, Rgb([255, 0, 0])));
        let g = to_grayscale(&img).unwrap();
        assert!((g.at(0, 0) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn rgb_matches_scalar_reference_loop() {
        let mut rng = StdRng::seed_from_u64(2);
        let mut img = RgbImage::new(2, 2);
        for p in img.pixels_mut() {
            *p = Rgb([rng.random(), rng.random(), rng.random()]);
        }
        let g = to_grayscale(&DynamicImage::ImageRgb8(img.clone())).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                let p = img.get_pixel(x as u32, y as u32).0;
                let want =
                    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0;
                assert!((g.at(x, y) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grayscale_output_in_unit_range() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut img = RgbImage::new(8, 8);
        for p in img.pixels_mut() {
            *p = Rgb([rng.random(), rng.random(), rng.random()]);
        }
        let g = to_grayscale(&DynamicImage::ImageRgb8(img)).unwrap();
        assert!(g.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn rejects_alpha_channels() {
        let img = DynamicImage::ImageRgba8(image::RgbaImage::new(2, 2));
        assert!(matches!(
            to_grayscale(&img),
            Err(SetRegError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn png_round_trip_is_exact_on_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let g = ImageGrid::from_fn(5, 4, |x, y| ((x * 7 + y * 3) % 256) as f64 / 255.0).unwrap();
        save_png(&g, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.data(), g.data());
    }

    #[test]
    fn pgm_is_readable_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.pgm");
        let g = ImageGrid::from_fn(4, 3, |x, y| (x + y) as f64 / 6.0).unwrap();
        save_pgm_normalized(&g, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.width(), 4);
        assert_eq!(back.height(), 3);
    }

    #[test]
    fn load_missing_file_names_path() {
        let err = load_image("/nonexistent/zz.png").unwrap_err();
        assert!(err.to_string().contains("zz.png"));
    }
}
