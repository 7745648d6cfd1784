//! 16-bit depth and 8-bit colour PNG loading.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};
use crate::ingest::{ColorImage, DepthImage};

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    reader.decode().map_err(|e| Error::Parse {
        path: path.display().to_string(),
        location: "image data".into(),
        message: e.to_string(),
    })
}

/// Loads a single-channel 16-bit PNG and multiplies each raw value by
/// `scale` to get metres. Zero stays zero (invalid).
pub fn load_depth_png(path: &Path, scale: f64) -> Result<DepthImage> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::input("depth scale must be positive"));
    }
    let DynamicImage::ImageLuma16(img) = open(path)? else {
        return Err(Error::input(format!("{}: depth must be a 16-bit greyscale PNG", path.display())));
    };
    let (w, h) = img.dimensions();
    let values = img.pixels().map(|p| f64::from(p.0[0]) * scale).collect();
    DepthImage::new(w as usize, h as usize, values)
}

/// Loads an 8-bit greyscale, RGB or RGBA PNG as RGB in `[0, 1]`.
pub fn load_color_png(path: &Path) -> Result<ColorImage> {
    let img = match open(path)? {
        img @ (DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_)) => img.to_rgb8(),
        _ => return Err(Error::input(format!("{}: colour must be an 8-bit PNG", path.display()))),
    };
    let (w, h) = img.dimensions();
    let pixels = img
        .pixels()
        .map(|p| [0, 1, 2].map(|c| f64::from(p.0[c]) / 255.0))
        .collect();
    Ok(ColorImage {
        width: w as usize,
        height: h as usize,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma, Rgb};

    #[test]
    fn depth_scaled_to_metres() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(3, 2, |x, y| Luma([(1000 * (x + y)) as u16]));
        img.save(&p).unwrap();
        let d = load_depth_png(&p, 0.001).unwrap();
        assert_eq!((d.width, d.height), (3, 2));
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.get(2, 1), 3.0);
    }

    #[test]
    fn colour_and_wrong_depth_type() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_pixel(2, 2, Rgb([255, 0, 51]));
        img.save(&p).unwrap();
        let c = load_color_png(&p).unwrap();
        assert_eq!(c.pixels[3], [1.0, 0.0, 0.2]);
        assert!(load_depth_png(&p, 0.001).is_err());
    }
}
