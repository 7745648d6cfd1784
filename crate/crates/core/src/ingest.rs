//! RGB-D back-projection and farthest point sampling.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::input("focal lengths must be positive"));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::input("principal point lies outside the image"));
        }
        Ok(())
    }

    /// Projects a camera-frame point to `(u, v, depth)`.
    pub fn project(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z)
    }

    /// Inverse of [`project`](Self::project) for a pixel and depth.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Point3<f64> {
        Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }
}

/// Row-major depth map in metres; 0 or NaN marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::input(format!(
                "depth buffer has {} values, expected {width}x{height}",
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_finite() && *v < 0.0) {
            return Err(Error::input("depth values must be non-negative"));
        }
        Ok(DepthImage { width, height, values })
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }
}

/// Row-major RGB image, channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

/// Back-projects every valid depth pixel through the pinhole model.
///
/// Pixels are visited in row-major order, so the output order is stable.
pub fn back_project(
    depth: &DepthImage,
    intr: &PinholeIntrinsics,
    color: Option<&ColorImage>,
) -> Result<PointCloud> {
    intr.validate()?;
    if depth.width != intr.width || depth.height != intr.height {
        return Err(Error::input(format!(
            "depth image is {}x{} but intrinsics expect {}x{}",
            depth.width, depth.height, intr.width, intr.height
        )));
    }
    if let Some(c) = color {
        if c.width != depth.width || c.height != depth.height || c.pixels.len() != c.width * c.height {
            return Err(Error::input("color image dimensions do not match depth"));
        }
    }

    let mut positions = Vec::new();
    let mut colors = color.map(|_| Vec::new());
    for v in 0..depth.height {
        for u in 0..depth.width {
            let z = depth.get(u, v);
            if !(z.is_finite() && z > 0.0) {
                continue;
            }
            positions.push(intr.unproject(u as f64, v as f64, z));
            if let (Some(out), Some(img)) = (colors.as_mut(), color) {
                out.push(img.pixels[v * img.width + u]);
            }
        }
    }
    Ok(PointCloud {
        positions,
        colors,
        semantic_labels: None,
        instance_labels: None,
    })
}

/// Farthest point sampling.
///
/// Starts from `start` and repeatedly adds the point whose distance to the
/// selected set is largest, breaking ties by lowest index. When `k >= N` the
/// cloud is returned unchanged with the identity index map.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, start: usize) -> Result<(PointCloud, Vec<usize>)> {
    let n = cloud.len();
    if n == 0 {
        return Err(Error::input("cannot sample from an empty cloud"));
    }
    if k == 0 {
        return Err(Error::input("sample count must be at least 1"));
    }
    if start >= n {
        return Err(Error::input(format!("start index {start} out of range for {n} points")));
    }
    if k >= n {
        return Ok((cloud.clone(), (0..n).collect()));
    }

    let pts = &cloud.positions;
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut chosen = Vec::with_capacity(k);
    let mut current = start;
    for _ in 0..k {
        chosen.push(current);
        min_d2[current] = f64::NEG_INFINITY;
        let p = pts[current];
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, (q, d)) in pts.iter().zip(min_d2.iter_mut()).enumerate() {
            if *d == f64::NEG_INFINITY {
                continue;
            }
            let d2 = (q - p).norm_squared();
            if d2 < *d {
                *d = d2;
            }
            if *d > best.0 {
                best = (*d, i);
            }
        }
        current = best.1;
    }
    Ok((cloud.select(&chosen), chosen))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr(fx: f64, cx: f64, size: usize) -> PinholeIntrinsics {
        PinholeIntrinsics {
            fx,
            fy: fx,
            cx,
            cy: cx,
            width: size,
            height: size,
        }
    }

    #[test]
    fn principal_ray() {
        let k = intr(500.0, 2.0, 5);
        let mut values = vec![0.0; 25];
        values[2 * 5 + 2] = 1.0;
        let cloud = back_project(&DepthImage::new(5, 5, values).unwrap(), &k, None).unwrap();
        assert_eq!(cloud.positions, vec![Point3::new(0.0, 0.0, 1.0)]);
    }

    #[test]
    fn off_axis_pixel() {
        // (800 - 400) * 2 / 400 = 2
        let k = intr(400.0, 400.0, 801);
        let p = k.unproject(800.0, 400.0, 2.0);
        assert_eq!(p, Point3::new(2.0, 0.0, 2.0));
    }

    #[test]
    fn zero_and_nan_depth_skipped() {
        let k = intr(100.0, 1.0, 3);
        let mut values = vec![0.0; 9];
        values[0] = f64::NAN;
        let cloud = back_project(&DepthImage::new(3, 3, values).unwrap(), &k, None).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let k = intr(100.0, 1.0, 3);
        let depth = DepthImage::new(4, 3, vec![1.0; 12]).unwrap();
        assert!(matches!(back_project(&depth, &k, None), Err(Error::Input(_))));
    }

    #[test]
    fn colors_follow_valid_pixels() {
        let k = intr(100.0, 0.5, 2);
        let depth = DepthImage::new(2, 2, vec![1.0, 0.0, 2.0, 3.0]).unwrap();
        let color = ColorImage {
            width: 2,
            height: 2,
            pixels: vec![[0.1; 3], [0.2; 3], [0.3; 3], [0.4; 3]],
        };
        let cloud = back_project(&depth, &k, Some(&color)).unwrap();
        assert_eq!(cloud.colors.unwrap(), vec![[0.1; 3], [0.3; 3], [0.4; 3]]);
    }

    fn square_with_center() -> PointCloud {
        PointCloud::from_positions(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.5, 0.5, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn fps_square_corners() {
        let (_, idx) = farthest_point_sample(&square_with_center(), 4, 0).unwrap();
        assert_eq!(idx, vec![0, 3, 1, 2]);
    }

    #[test]
    fn fps_k_equals_n_is_identity() {
        let cloud = square_with_center();
        let (out, idx) = farthest_point_sample(&cloud, 5, 0).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        assert_eq!(out, cloud);
    }

    #[test]
    fn fps_k_one_is_seed() {
        let (out, idx) = farthest_point_sample(&square_with_center(), 1, 4).unwrap();
        assert_eq!(idx, vec![4]);
        assert_eq!(out.positions, vec![Point3::new(0.5, 0.5, 0.0)]);
    }

    #[test]
    fn fps_errors() {
        assert!(farthest_point_sample(&PointCloud::default(), 3, 0).is_err());
        assert!(farthest_point_sample(&square_with_center(), 0, 0).is_err());
    }

    #[test]
    fn fps_carries_labels() {
        let mut cloud = square_with_center();
        cloud.semantic_labels = Some(vec![1, 2, 3, 4, 5]);
        cloud.instance_labels = Some(vec![10, 20, 30, 40, 50]);
        let (out, _) = farthest_point_sample(&cloud, 2, 0).unwrap();
        assert_eq!(out.semantic_labels.unwrap(), vec![1, 4]);
        assert_eq!(out.instance_labels.unwrap(), vec![10, 40]);
    }
}
