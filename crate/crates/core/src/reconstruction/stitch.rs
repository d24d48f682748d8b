//! Sigmoid-feathered accumulation of local normal maps into a global mosaic.

use crate::error::{Error, Result};
use crate::grid::{Mask, NormalMap, Pose2D};

/// Logistic steepness that takes the weight from 0.05 to 0.95 across one margin width.
pub fn default_steepness() -> f64 {
    2.0 * 19f64.ln()
}

/// Separable per-pixel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl WeightMap {
    pub fn uniform(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![1.0; width * height] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// 1-D profile: logistic in the distance to the nearer edge, centred at
/// `margin_frac * n`, with slope `steepness / margin`.
pub fn sigmoid_profile(n: usize, margin_frac: f64, steepness: f64) -> Vec<f64> {
    let margin = margin_frac * n as f64;
    let s = steepness / margin;
    (0..n)
        .map(|i| {
            let e = i.min(n - 1 - i) as f64;
            1.0 / (1.0 + (-s * (e - margin)).exp())
        })
        .collect()
}

pub fn sigmoid_weight_map(width: usize, height: usize, margin_frac: f64, steepness: f64) -> Result<WeightMap> {
    if !(margin_frac > 0.0 && margin_frac < 0.5) {
        return Err(Error::invalid(format!("margin fraction {margin_frac} outside (0, 0.5)")));
    }
    if !(steepness > 0.0 && steepness.is_finite()) {
        return Err(Error::invalid("sigmoid steepness must be positive"));
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("weight map needs non-zero dimensions"));
    }
    let wx = sigmoid_profile(width, margin_frac, steepness);
    let wy = sigmoid_profile(height, margin_frac, steepness);
    let data = (0..width * height).map(|i| wx[i % width] * wy[i / width]).collect();
    Ok(WeightMap { width, height, data })
}

/// Weighted normal sums over a global pixel box whose top-left is `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMosaic {
    origin: [i64; 2],
    width: usize,
    height: usize,
    sums: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl GlobalMosaic {
    /// Box covering frames of `dims` placed at each pose.
    pub fn covering(poses: &[Pose2D], dims: (usize, usize)) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::invalid("mosaic needs at least one pose"));
        }
        if poses.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("poses must be finite"));
        }
        let min_x = poses.iter().map(|p| p.tx).fold(f64::INFINITY, f64::min).floor() as i64;
        let min_y = poses.iter().map(|p| p.ty).fold(f64::INFINITY, f64::min).floor() as i64;
        let max_x = poses.iter().map(|p| p.tx).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let max_y = poses.iter().map(|p| p.ty).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let width = (max_x - min_x) as usize + dims.0;
        let height = (max_y - min_y) as usize + dims.1;
        Ok(Self {
            origin: [min_x, min_y],
            width,
            height,
            sums: vec![[0.0; 3]; width * height],
            weights: vec![0.0; width * height],
        })
    }

    /// Global pixel coordinate of mosaic pixel (0, 0).
    pub fn origin(&self) -> [i64; 2] {
        self.origin
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Splats `map` at `pose` with bilinear sub-pixel weights; pixels outside `valid` are skipped.
    pub fn add(&mut self, map: &NormalMap, pose: Pose2D, weights: &WeightMap, valid: Option<&Mask>) -> Result<()> {
        if weights.dims() != map.dims() {
            return Err(Error::DimensionMismatch { expected: map.dims(), actual: weights.dims() });
        }
        if let Some(m) = valid {
            if m.dims() != map.dims() {
                return Err(Error::DimensionMismatch { expected: map.dims(), actual: m.dims() });
            }
        }
        if !pose.is_finite() {
            return Err(Error::invalid("pose must be finite"));
        }
        let gx = pose.tx - self.origin[0] as f64;
        let gy = pose.ty - self.origin[1] as f64;
        let (ix, iy) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - ix, gy - iy);
        let taps = [
            (0usize, 0usize, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ];
        let (w, h) = map.dims();
        for y in 0..h {
            for x in 0..w {
                if valid.is_some_and(|m| !m.get(x, y)) {
                    continue;
                }
                let wt = weights.get(x, y);
                let n = map.get(x, y);
                for &(ox, oy, b) in &taps {
                    if b == 0.0 {
                        continue;
                    }
                    let (px, py) = (ix as i64 + (x + ox) as i64, iy as i64 + (y + oy) as i64);
                    if px < 0 || py < 0 || px >= self.width as i64 || py >= self.height as i64 {
                        return Err(Error::OutOfBounds {
                            x: px as f64,
                            y: py as f64,
                            width: self.width,
                            height: self.height,
                        });
                    }
                    let i = py as usize * self.width + px as usize;
                    let k = wt * b;
                    self.weights[i] += k;
                    for c in 0..3 {
                        self.sums[i][c] += k * n[c];
                    }
                }
            }
        }
        Ok(())
    }

    /// Weighted mean normals, renormalised; pixels with weight ≤ `min_weight` are masked and flat.
    pub fn finalize(&self, pixel_pitch: f64, min_weight: f64) -> Result<(NormalMap, Mask)> {
        let mut mask = Mask::full(self.width, self.height);
        let mut data = Vec::with_capacity(self.sums.len());
        for (i, (s, &w)) in self.sums.iter().zip(&self.weights).enumerate() {
            let norm = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
            if w > min_weight && norm > 0.0 {
                data.push([s[0] / norm, s[1] / norm, s[2] / norm]);
            } else {
                mask.set(i % self.width, i / self.width, false);
                data.push([0.0, 0.0, -1.0]);
            }
        }
        Ok((NormalMap::new(self.width, self.height, pixel_pitch, data)?, mask))
    }
}

pub const MIN_STITCH_WEIGHT: f64 = 1e-9;

/// Accumulates every map at its pose and finalises.
pub fn stitch(
    maps: &[NormalMap],
    poses: &[Pose2D],
    weights: &WeightMap,
    valid: Option<&[Mask]>,
) -> Result<(GlobalMosaic, NormalMap, Mask)> {
    if maps.is_empty() {
        return Err(Error::invalid("nothing to stitch"));
    }
    if maps.len() != poses.len() || valid.is_some_and(|v| v.len() != maps.len()) {
        return Err(Error::invalid("maps, poses and masks differ in length"));
    }
    let dims = maps[0].dims();
    if let Some(m) = maps.iter().find(|m| m.dims() != dims) {
        return Err(Error::DimensionMismatch { expected: dims, actual: m.dims() });
    }
    let mut mosaic = GlobalMosaic::covering(poses, dims)?;
    for (k, (map, &pose)) in maps.iter().zip(poses).enumerate() {
        mosaic.add(map, pose, weights, valid.map(|v| &v[k]))?;
    }
    let (normals, mask) = mosaic.finalize(maps[0].pixel_pitch(), MIN_STITCH_WEIGHT)?;
    Ok((mosaic, normals, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::normal_from_slope;

    fn textured(w: usize, h: usize, phase: f64) -> NormalMap {
        let data = (0..w * h)
            .map(|i| normal_from_slope(0.2 * ((i % w) as f64 / 3.0 + phase).sin(), 0.1 * ((i / w) as f64 / 5.0).cos()))
            .collect();
        NormalMap::new(w, h, 0.25, data).unwrap()
    }

    #[test]
    fn plateau_and_midpoint() {
        let m = sigmoid_weight_map(240, 160, 0.1, default_steepness()).unwrap();
        assert!((m.get(120, 80) - 1.0).abs() < 1e-6);
        let p = sigmoid_profile(240, 0.1, default_steepness());
        assert!((p[24] - 0.5).abs() < 1e-12);
        // 0.05 and 0.95 half a margin either side of the centre
        assert!((p[12] - 0.05).abs() < 1e-12 && (p[36] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn profile_monotone_towards_centre() {
        let m = sigmoid_weight_map(101, 57, 0.2, default_steepness()).unwrap();
        for y in 0..57 {
            for x in 1..=50 {
                assert!(m.get(x, y) >= m.get(x - 1, y));
                assert!(m.get(100 - x, y) >= m.get(101 - x, y));
            }
        }
    }

    #[test]
    fn bad_margin_rejected() {
        assert!(sigmoid_weight_map(10, 10, 0.5, 1.0).is_err());
        assert!(sigmoid_weight_map(10, 10, 0.0, 1.0).is_err());
    }

    #[test]
    fn single_frame_round_trips() {
        let a = textured(40, 30, 0.0);
        let w = sigmoid_weight_map(40, 30, 0.1, default_steepness()).unwrap();
        let (_, out, mask) = stitch(std::slice::from_ref(&a), &[Pose2D::new(3.0, -2.0)], &w, None).unwrap();
        assert_eq!(out.dims(), (40, 30));
        assert_eq!(mask.count(), 1200);
        for (p, q) in out.data().iter().zip(a.data()) {
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_frames_overlap_exactly() {
        let full = textured(60, 20, 0.0);
        let left = full.crop(0, 0, 40, 20).unwrap();
        let right = full.crop(20, 0, 40, 20).unwrap();
        let w = sigmoid_weight_map(40, 20, 0.1, default_steepness()).unwrap();
        let (_, out, _) = stitch(&[left, right], &[Pose2D::ORIGIN, Pose2D::new(20.0, 0.0)], &w, None).unwrap();
        for (p, q) in out.data().iter().zip(full.data()) {
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disagreeing_frames_match_scalar_oracle() {
        let a = textured(30, 20, 0.0);
        let b = textured(30, 20, 1.3);
        let w = sigmoid_weight_map(30, 20, 0.15, default_steepness()).unwrap();
        let (mosaic, out, _) = stitch(&[a.clone(), b.clone()], &[Pose2D::ORIGIN, Pose2D::new(10.0, 0.0)], &w, None).unwrap();
        for gy in 0..20 {
            for gx in 0..40 {
                let mut acc = [0.0; 3];
                let mut wsum = 0.0;
                for (m, off) in [(&a, 0usize), (&b, 10)] {
                    if gx >= off && gx < off + 30 {
                        let (x, y) = (gx - off, gy);
                        let wt = w.get(x, y);
                        let n = m.get(x, y);
                        wsum += wt;
                        for c in 0..3 {
                            acc[c] += wt * n[c];
                        }
                    }
                }
                assert!((mosaic.weights()[gy * 40 + gx] - wsum).abs() < 1e-12);
                let norm = (acc[0].powi(2) + acc[1].powi(2) + acc[2].powi(2)).sqrt();
                let got = out.get(gx, gy);
                for c in 0..3 {
                    assert!((got[c] - acc[c] / norm).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn uncovered_pixels_masked() {
        let a = textured(10, 10, 0.0);
        let w = WeightMap::uniform(10, 10);
        let (_, out, mask) = stitch(&[a.clone(), a], &[Pose2D::ORIGIN, Pose2D::new(15.0, 12.0)], &w, None).unwrap();
        assert_eq!(out.dims(), (25, 22));
        assert!(!mask.get(12, 0));
        assert_eq!(out.get(12, 0), [0.0, 0.0, -1.0]);
        assert_eq!(mask.count(), 200);
    }

    #[test]
    fn subpixel_pose_spreads_weight() {
        let a = NormalMap::flat(4, 4, 1.0).unwrap();
        let w = WeightMap::uniform(4, 4);
        let (m, _, _) = stitch(&[a], &[Pose2D::new(0.5, 0.0)], &w, None).unwrap();
        let total: f64 = m.weights().iter().sum();
        assert!((total - 16.0).abs() < 1e-12);
    }
}
