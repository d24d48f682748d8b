//! Neumann-boundary Poisson integration of a gradient field via the DCT.

use rustdct::DctPlanner;

use crate::error::{Error, Result};
use crate::grid::{GradientField, HeightField, Mask};

/// Integrates `g` over the rectangular region covered by `mask`.
///
/// The result has the region's dimensions, is in mm and has zero mean.
pub fn poisson_integrate(g: &GradientField, mask: &Mask) -> Result<HeightField> {
    if mask.dims() != g.dims() {
        return Err(Error::DimensionMismatch {
            expected: g.dims(),
            actual: mask.dims(),
        });
    }
    let (x0, y0, w, h) = match mask.as_rectangle() {
        Some(r) => r,
        None if mask.count() == 0 => return Err(Error::EmptyMask),
        None => return Err(Error::UnsupportedRegion("integration needs a rectangular mask".into())),
    };
    let gw = g.width();
    let p = g.pixel_pitch();
    let at = |x: usize, y: usize| g.data()[(y0 + y) * gw + x0 + x];

    // Height differences across each interior edge (trapezoid rule), then divergence.
    let mut div = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w.saturating_sub(1) {
            let e = 0.5 * (at(x, y)[0] + at(x + 1, y)[0]) * p;
            div[y * w + x] += e;
            div[y * w + x + 1] -= e;
        }
    }
    for y in 0..h.saturating_sub(1) {
        for x in 0..w {
            let e = 0.5 * (at(x, y)[1] + at(x, y + 1)[1]) * p;
            div[y * w + x] += e;
            div[(y + 1) * w + x] -= e;
        }
    }
    let mut planner = DctPlanner::new();
    let row = planner.plan_dct2(w);
    let col = planner.plan_dct2(h);
    transform_2d(&mut div, w, h, |r| row.process_dct2(r), |c| col.process_dct2(c));

    let lx: Vec<f64> = (0..w).map(|k| 2.0 * (std::f64::consts::PI * k as f64 / w as f64).cos() - 2.0).collect();
    let ly: Vec<f64> = (0..h).map(|k| 2.0 * (std::f64::consts::PI * k as f64 / h as f64).cos() - 2.0).collect();
    for l in 0..h {
        for k in 0..w {
            let d = lx[k] + ly[l];
            div[l * w + k] = if k == 0 && l == 0 { 0.0 } else { div[l * w + k] / d };
        }
    }

    transform_2d(&mut div, w, h, |r| row.process_dct3(r), |c| col.process_dct3(c));
    let scale = (2.0 / w as f64) * (2.0 / h as f64);
    div.iter_mut().for_each(|v| *v *= scale);
    let mean = div.iter().sum::<f64>() / div.len() as f64;
    div.iter_mut().for_each(|v| *v -= mean);
    HeightField::new(w, h, p, div)
}

fn transform_2d(data: &mut [f64], w: usize, h: usize, mut rows: impl FnMut(&mut [f64]), mut cols: impl FnMut(&mut [f64])) {
    for r in data.chunks_exact_mut(w) {
        rows(r);
    }
    let mut buf = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            buf[y] = data[y * w + x];
        }
        cols(&mut buf);
        for y in 0..h {
            data[y * w + x] = buf[y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::gradient_of;
    use std::f64::consts::PI;

    fn rmse(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    fn demean(v: &[f64]) -> Vec<f64> {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x - m).collect()
    }

    #[test]
    fn zero_gradient_gives_zero_height() {
        let g = GradientField::zeros(33, 17, 0.25).unwrap();
        let h = poisson_integrate(&g, &Mask::full(33, 17)).unwrap();
        assert!(h.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn plane_is_exact() {
        let (a, b, p) = (0.3, -0.7, 0.25);
        let g = GradientField::from_fn(64, 40, p, |_, _| [a, b]).unwrap();
        let h = poisson_integrate(&g, &Mask::full(64, 40)).unwrap();
        let truth = demean(&(0..64 * 40).map(|i| a * (i % 64) as f64 * p + b * (i / 64) as f64 * p).collect::<Vec<_>>());
        let scale = truth.iter().map(|v| v * v).sum::<f64>().sqrt() / (truth.len() as f64).sqrt();
        assert!(rmse(h.data(), &truth) < 1e-6 * scale);
        assert!(h.mean().abs() < 1e-12);
    }

    #[test]
    fn sinusoid_within_tolerance() {
        let (n, l, amp) = (256usize, 128.0, 1.0);
        let k = 2.0 * PI / l;
        let g = GradientField::from_fn(n, n, 1.0, |x, y| {
            [amp * k * (k * x).cos() * (k * y).sin(), amp * k * (k * x).sin() * (k * y).cos()]
        })
        .unwrap();
        let h = poisson_integrate(&g, &Mask::full(n, n)).unwrap();
        let truth = demean(&(0..n * n).map(|i| amp * (k * (i % n) as f64).sin() * (k * (i / n) as f64).sin()).collect::<Vec<_>>());
        assert!(rmse(h.data(), &truth) < 1e-3 * amp);
    }

    #[test]
    fn rectangular_submask_is_cropped() {
        let g = GradientField::from_fn(20, 20, 1.0, |x, _| [x / 10.0, 0.0]).unwrap();
        let mask = Mask::from_fn(20, 20, |x, y| (2..12).contains(&x) && (5..9).contains(&y));
        let h = poisson_integrate(&g, &mask).unwrap();
        assert_eq!(h.dims(), (10, 4));
    }

    #[test]
    fn irregular_mask_is_unsupported() {
        let g = GradientField::zeros(10, 10, 1.0).unwrap();
        let mask = Mask::from_fn(10, 10, |x, y| x + y < 10);
        assert!(matches!(poisson_integrate(&g, &mask), Err(Error::UnsupportedRegion(_))));
        let empty = Mask::from_fn(10, 10, |_, _| false);
        assert!(matches!(poisson_integrate(&g, &empty), Err(Error::EmptyMask)));
    }

    #[test]
    fn gradient_round_trip() {
        let h0 = HeightField::from_fn(96, 64, 0.25, |x, y| 0.3 * (x / 3.0).sin() * (y / 2.5).cos() + 0.05 * x).unwrap();
        let g = gradient_of(&h0).unwrap();
        let h = poisson_integrate(&g, &Mask::full(96, 64)).unwrap();
        let g2 = gradient_of(&h).unwrap();
        let flat = |g: &GradientField| g.data().iter().flat_map(|v| [v[0], v[1]]).collect::<Vec<_>>();
        let (a, b) = (flat(&g), flat(&g2));
        let rms = (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt();
        assert!(rmse(&a, &b) < 1e-2 * rms, "{} vs {}", rmse(&a, &b), rms);
    }
}
