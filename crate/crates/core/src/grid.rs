//! Grid containers shared by every stage of the pipeline.
//!
//! Coordinates follow image convention: `x` is the column index and grows
//! rightward (the scan direction), `y` is the row index and grows downward.
//! Slopes are dimensionless (mm of height per mm of travel) and normals use
//! the `n = (gx, gy, -1) / |.|` convention, so every valid normal has a
//! negative `z` component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-6;

/// Planar translation of a frame in global scan coordinates, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub tx: f64,
    pub ty: f64,
}

impl Pose2D {
    pub const ORIGIN: Pose2D = Pose2D { tx: 0.0, ty: 0.0 };

    pub fn new(tx: f64, ty: f64) -> Self {
        Self { tx, ty }
    }

    pub fn to_mm(self, pixel_pitch: f64) -> (f64, f64) {
        (self.tx * pixel_pitch, self.ty * pixel_pitch)
    }

    pub fn is_finite(&self) -> bool {
        self.tx.is_finite() && self.ty.is_finite()
    }
}

impl std::ops::Add for Pose2D {
    type Output = Pose2D;
    fn add(self, rhs: Pose2D) -> Pose2D {
        Pose2D::new(self.tx + rhs.tx, self.ty + rhs.ty)
    }
}

impl std::ops::Sub for Pose2D {
    type Output = Pose2D;
    fn sub(self, rhs: Pose2D) -> Pose2D {
        Pose2D::new(self.tx - rhs.tx, self.ty - rhs.ty)
    }
}

fn check_pitch(pixel_pitch: f64) -> Result<()> {
    if !(pixel_pitch.is_finite() && pixel_pitch > 0.0) {
        return Err(Error::invalid(format!(
            "pixel pitch must be positive and finite, got {pixel_pitch}"
        )));
    }
    Ok(())
}

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width.checked_mul(height) != Some(len) {
        return Err(Error::invalid(format!(
            "payload holds {len} pixels, expected {width}x{height}"
        )));
    }
    Ok(())
}

/// Scalar height grid in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    width: usize,
    height: usize,
    pixel_pitch: f64,
    data: Vec<f64>,
}

impl HeightField {
    pub fn new(width: usize, height: usize, pixel_pitch: f64, data: Vec<f64>) -> Result<Self> {
        check_pitch(pixel_pitch)?;
        check_len(width, height, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("height field contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            pixel_pitch,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, pixel_pitch: f64) -> Result<Self> {
        Self::new(width, height, pixel_pitch, vec![0.0; width * height])
    }

    /// Builds a field by evaluating `f(x_mm, y_mm)` at every pixel centre.
    pub fn from_fn(
        width: usize,
        height: usize,
        pixel_pitch: f64,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x as f64 * pixel_pitch, y as f64 * pixel_pitch));
            }
        }
        Self::new(width, height, pixel_pitch, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample at fractional pixel coordinates, clamped to the grid.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<HeightField> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::OutOfBounds {
                x: x0 as f64,
                y: y0 as f64,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        HeightField::new(width, height, self.pixel_pitch, data)
    }
}

pub(crate) fn bilinear(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let xc = x.clamp(0.0, (width - 1) as f64);
    let yc = y.clamp(0.0, (height - 1) as f64);
    let x0 = (xc.floor() as usize).min(width.saturating_sub(2));
    let y0 = (yc.floor() as usize).min(height.saturating_sub(2));
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let a = data[y0 * width + x0];
    let b = data[y0 * width + x1];
    let c = data[y1 * width + x0];
    let d = data[y1 * width + x1];
    (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
}

/// Per-pixel surface slopes `(dh/dx, dh/dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    pixel_pitch: f64,
    data: Vec<[f64; 2]>,
}

impl GradientField {
    pub fn new(width: usize, height: usize, pixel_pitch: f64, data: Vec<[f64; 2]>) -> Result<Self> {
        check_pitch(pixel_pitch)?;
        check_len(width, height, data.len())?;
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gradient field contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            pixel_pitch,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, pixel_pitch: f64) -> Result<Self> {
        Self::new(width, height, pixel_pitch, vec![[0.0; 2]; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        pixel_pitch: f64,
        mut f: impl FnMut(f64, f64) -> [f64; 2],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x as f64 * pixel_pitch, y as f64 * pixel_pitch));
            }
        }
        Self::new(width, height, pixel_pitch, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }
    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[y * self.width + x]
    }
}

/// Per-pixel unit surface normals.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    pixel_pitch: f64,
    data: Vec<[f64; 3]>,
}

impl NormalMap {
    /// Validates that every vector is unit length with a negative `z`.
    pub fn new(width: usize, height: usize, pixel_pitch: f64, data: Vec<[f64; 3]>) -> Result<Self> {
        check_pitch(pixel_pitch)?;
        check_len(width, height, data.len())?;
        for n in &data {
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::invalid(format!("normal {n:?} is not unit length")));
            }
        }
        Ok(Self {
            width,
            height,
            pixel_pitch,
            data,
        })
    }

    /// Uniform map of `(0, 0, -1)`.
    pub fn flat(width: usize, height: usize, pixel_pitch: f64) -> Result<Self> {
        Self::new(width, height, pixel_pitch, vec![[0.0, 0.0, -1.0]; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }
    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    /// Extracts one channel (0 = x, 1 = y, 2 = z) as a flat row-major buffer.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().map(|n| n[c]).collect()
    }

    pub fn negated(&self) -> NormalMap {
        NormalMap {
            data: self.data.iter().map(|n| [-n[0], -n[1], -n[2]]).collect(),
            ..self.clone()
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<NormalMap> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::invalid("crop window exceeds normal map"));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Ok(NormalMap {
            width,
            height,
            pixel_pitch: self.pixel_pitch,
            data,
        })
    }
}

/// Boolean validity mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_len(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }

    /// Bounding box `(x0, y0, width, height)` of the selected pixels when they
    /// form a solid axis-aligned rectangle.
    pub fn as_rectangle(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        if !any {
            return None;
        }
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        (w * h == self.count()).then_some((x0, y0, w, h))
    }
}

/// `n = (gx, gy, -1) / sqrt(gx^2 + gy^2 + 1)`.
#[inline]
pub fn normal_from_slope(gx: f64, gy: f64) -> [f64; 3] {
    let inv = 1.0 / (gx * gx + gy * gy + 1.0).sqrt();
    [gx * inv, gy * inv, -inv]
}

/// Inverse of [`normal_from_slope`]; `nz` is clamped away from zero.
#[inline]
pub fn slope_from_normal(n: [f64; 3]) -> [f64; 2] {
    let nz = if n[2] > -1e-6 { -1e-6 } else { n[2] };
    [-n[0] / nz, -n[1] / nz]
}

pub fn normal_from_gradients(g: &GradientField) -> Result<NormalMap> {
    let data = g.data.iter().map(|&[gx, gy]| normal_from_slope(gx, gy)).collect();
    // Finite slopes always map onto the unit sphere; GradientField already rejects non-finite input.
    Ok(NormalMap {
        width: g.width,
        height: g.height,
        pixel_pitch: g.pixel_pitch,
        data,
    })
}

pub fn gradients_from_normals(n: &NormalMap) -> GradientField {
    GradientField {
        width: n.width,
        height: n.height,
        pixel_pitch: n.pixel_pitch,
        data: n.data.iter().map(|&v| slope_from_normal(v)).collect(),
    }
}

/// Mean of `pred . truth` over the masked pixels.
pub fn mean_dot_product(pred: &NormalMap, truth: &NormalMap, mask: &Mask) -> Result<f64> {
    if pred.dims() != truth.dims() {
        return Err(Error::DimensionMismatch {
            expected: truth.dims(),
            actual: pred.dims(),
        });
    }
    if mask.dims() != truth.dims() {
        return Err(Error::DimensionMismatch {
            expected: truth.dims(),
            actual: mask.dims(),
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((p, t), &m) in pred.data.iter().zip(&truth.data).zip(&mask.data) {
        if m {
            sum += p[0] * t[0] + p[1] * t[1] + p[2] * t[2];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((sum / count as f64).clamp(-1.0, 1.0))
}

/// Central differences in the interior, one-sided differences on the border.
pub fn gradient_of(h: &HeightField) -> Result<GradientField> {
    let (w, ht) = h.dims();
    if w < 3 || ht < 3 {
        return Err(Error::invalid(format!(
            "gradient needs at least a 3x3 grid, got {w}x{ht}"
        )));
    }
    let p = h.pixel_pitch;
    let mut data = Vec::with_capacity(w * ht);
    for y in 0..ht {
        for x in 0..w {
            let gx = if x == 0 {
                (h.get(1, y) - h.get(0, y)) / p
            } else if x == w - 1 {
                (h.get(w - 1, y) - h.get(w - 2, y)) / p
            } else {
                (h.get(x + 1, y) - h.get(x - 1, y)) / (2.0 * p)
            };
            let gy = if y == 0 {
                (h.get(x, 1) - h.get(x, 0)) / p
            } else if y == ht - 1 {
                (h.get(x, ht - 1) - h.get(x, ht - 2)) / p
            } else {
                (h.get(x, y + 1) - h.get(x, y - 1)) / (2.0 * p)
            };
            data.push([gx, gy]);
        }
    }
    GradientField::new(w, ht, p, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn normal_examples() {
        let g = GradientField::new(3, 1, 1.0, vec![[0.0, 0.0], [1.0, 0.0], [3.0, 4.0]]).unwrap();
        let n = normal_from_gradients(&g).unwrap();
        assert_eq!(n.get(0, 0), [0.0, 0.0, -1.0]);
        let s = 0.5f64.sqrt();
        let n1 = n.get(1, 0);
        assert_close(n1[0], s, 1e-12);
        assert_close(n1[1], 0.0, 1e-12);
        assert_close(n1[2], -s, 1e-12);
        let r = 26f64.sqrt();
        let n2 = n.get(2, 0);
        assert_close(n2[0], 3.0 / r, 1e-12);
        assert_close(n2[1], 4.0 / r, 1e-12);
        assert_close(n2[2], -1.0 / r, 1e-12);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        assert!(matches!(
            GradientField::new(1, 1, 1.0, vec![[f64::NAN, 0.0]]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn dot_product_identity_and_flip() {
        let g = GradientField::from_fn(8, 6, 0.5, |x, y| [0.3 * x - 0.1, (y * 0.7).sin()]).unwrap();
        let n = normal_from_gradients(&g).unwrap();
        let m = Mask::full(8, 6);
        assert_close(mean_dot_product(&n, &n, &m).unwrap(), 1.0, 1e-12);
        assert_close(mean_dot_product(&n.negated(), &n, &m).unwrap(), -1.0, 1e-12);
    }

    #[test]
    fn dot_product_tilted_ten_degrees() {
        let truth = NormalMap::flat(5, 5, 1.0).unwrap();
        // A constant slope of tan(10 deg) tilts the normal by exactly 10 deg.
        let tilt = 10f64.to_radians();
        let g = GradientField::new(5, 5, 1.0, vec![[tilt.tan(), 0.0]; 25]).unwrap();
        let pred = normal_from_gradients(&g).unwrap();
        let d = mean_dot_product(&pred, &truth, &Mask::full(5, 5)).unwrap();
        assert_close(d, 0.984_807_753_012_208, 1e-12);
    }

    #[test]
    fn dot_product_empty_mask_and_mismatch() {
        let n = NormalMap::flat(4, 4, 1.0).unwrap();
        let empty = Mask::new(4, 4, vec![false; 16]).unwrap();
        assert!(matches!(mean_dot_product(&n, &n, &empty), Err(Error::EmptyMask)));
        let other = NormalMap::flat(3, 4, 1.0).unwrap();
        assert!(matches!(
            mean_dot_product(&other, &n, &Mask::full(4, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_of_constant_and_plane() {
        let c = HeightField::new(4, 4, 0.1, vec![2.5; 16]).unwrap();
        assert!(gradient_of(&c).unwrap().data().iter().all(|g| *g == [0.0, 0.0]));

        let a = 0.37;
        let plane = HeightField::from_fn(10, 7, 0.2, |x, _| a * x).unwrap();
        let g = gradient_of(&plane).unwrap();
        for y in 0..7 {
            for x in 0..10 {
                assert_close(g.get(x, y)[0], a, 1e-12);
                assert_close(g.get(x, y)[1], 0.0, 1e-12);
            }
        }
    }

    #[test]
    fn gradient_of_sinusoid_truncation() {
        // Central differences carry an O(pitch^2) error: k^2 pitch^2 / 6 relative.
        let pitch = 0.05;
        let period = 8.0;
        let k = 2.0 * std::f64::consts::PI / period;
        let h = HeightField::from_fn(200, 3, pitch, |x, _| (k * x).sin()).unwrap();
        let g = gradient_of(&h).unwrap();
        let bound = k * (k * pitch).powi(2) / 6.0 * 1.01;
        for x in 1..199 {
            let exact = k * (k * x as f64 * pitch).cos();
            assert_close(g.get(x, 1)[0], exact, bound);
        }
    }

    #[test]
    fn gradient_of_too_small() {
        let h = HeightField::zeros(2, 5, 1.0).unwrap();
        assert!(matches!(gradient_of(&h), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn invariants_enforced() {
        assert!(HeightField::new(2, 2, 0.0, vec![0.0; 4]).is_err());
        assert!(HeightField::new(2, 2, 1.0, vec![0.0; 3]).is_err());
        assert!(HeightField::new(1, 1, 1.0, vec![f64::INFINITY]).is_err());
        assert!(NormalMap::new(1, 1, 1.0, vec![[0.0, 0.0, -0.5]]).is_err());
    }

    #[test]
    fn rectangle_detection() {
        let m = Mask::from_fn(6, 5, |x, y| (1..4).contains(&x) && (2..5).contains(&y));
        assert_eq!(m.as_rectangle(), Some((1, 2, 3, 3)));
        let mut holes = m.clone();
        holes.set(2, 3, false);
        assert_eq!(holes.as_rectangle(), None);
    }

    proptest::proptest! {
        #[test]
        fn normals_are_unit(gx in -1e3f64..1e3, gy in -1e3f64..1e3) {
            let n = normal_from_slope(gx, gy);
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            proptest::prop_assert!((norm - 1.0).abs() <= 1e-6);
            proptest::prop_assert!(n[2] < 0.0);
        }

        #[test]
        fn dot_product_symmetric(seed in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 12)) {
            let a = GradientField::new(4, 3, 1.0, seed.iter().map(|&(x, y)| [x, y]).collect()).unwrap();
            let b = GradientField::new(4, 3, 1.0, seed.iter().map(|&(x, y)| [y, -x * 0.5]).collect()).unwrap();
            let (na, nb) = (normal_from_gradients(&a).unwrap(), normal_from_gradients(&b).unwrap());
            let m = Mask::full(4, 3);
            let ab = mean_dot_product(&na, &nb, &m).unwrap();
            let ba = mean_dot_product(&nb, &na, &m).unwrap();
            proptest::prop_assert!((ab - ba).abs() < 1e-15);
            proptest::prop_assert!((mean_dot_product(&na, &na, &m).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
