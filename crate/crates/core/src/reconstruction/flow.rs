//! Translation-only Lucas-Kanade registration of normal maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bilinear, NormalMap, Pose2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// 2x reductions above full resolution; the coarsest image is `2^levels` smaller.
    pub levels: usize,
    /// Stop when the Gauss-Newton step is shorter than this (px).
    pub tolerance_px: f64,
    pub max_iterations: usize,
    /// Smallest structure-tensor eigenvalue per pixel before the problem counts as degenerate.
    pub min_eigenvalue: f64,
    pub min_confidence: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            tolerance_px: 0.01,
            max_iterations: 50,
            min_eigenvalue: 1e-6,
            min_confidence: 0.5,
        }
    }
}

/// Frame-to-frame translation: `next(x) ≈ prev(x + (dx, dy))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEstimate {
    pub dx: f64,
    pub dy: f64,
    pub confidence: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
}

impl FlowEstimate {
    pub fn as_pose(&self) -> Pose2D {
        Pose2D::new(self.dx, self.dy)
    }

    /// A delta known from elsewhere (marker prior, fallback).
    pub fn fixed(delta: Pose2D, confidence: f64) -> Self {
        Self {
            dx: delta.tx,
            dy: delta.ty,
            confidence,
            iterations: 0,
            converged: true,
            degenerate: false,
        }
    }

    pub fn is_reliable(&self, cfg: &FlowConfig) -> bool {
        self.converged && !self.degenerate && self.confidence >= cfg.min_confidence
    }
}

/// Two-channel image.
#[derive(Debug, Clone)]
struct Planes {
    w: usize,
    h: usize,
    c: [Vec<f64>; 2],
}

impl Planes {
    fn from_normals(n: &NormalMap) -> Self {
        Self {
            w: n.width(),
            h: n.height(),
            c: [n.channel(0), n.channel(1)],
        }
    }

    /// [1 4 6 4 1]/16 blur with clamped borders, then 2x decimation.
    fn downsample(&self) -> Self {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w, h) = (self.w, self.h);
        let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
        let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
        let c = self.c.clone().map(|src| {
            let mut tmp = vec![0.0; w * h];
            for y in 0..h {
                for x in 0..w {
                    tmp[y * w + x] = (0..5).map(|k| K[k] * src[y * w + clamp(x as isize + k as isize - 2, w)]).sum();
                }
            }
            let mut out = vec![0.0; nw * nh];
            for y in 0..nh {
                for x in 0..nw {
                    out[y * nw + x] =
                        (0..5).map(|k| K[k] * tmp[clamp(2 * y as isize + k as isize - 2, h) * w + 2 * x]).sum();
                }
            }
            out
        });
        Self { w: nw, h: nh, c }
    }

    /// Central-difference derivatives, one-sided at the border.
    fn derivatives(&self) -> [[Vec<f64>; 2]; 2] {
        let (w, h) = (self.w, self.h);
        let d = |src: &Vec<f64>, along_x: bool| {
            let mut out = vec![0.0; w * h];
            for y in 0..h {
                for x in 0..w {
                    let (i, n) = if along_x { (x, w) } else { (y, h) };
                    if n < 2 {
                        continue;
                    }
                    let at = |j: usize| if along_x { src[y * w + j] } else { src[j * w + x] };
                    let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
                    out[y * w + x] = (at(hi) - at(lo)) / (hi - lo) as f64;
                }
            }
            out
        };
        [
            [d(&self.c[0], true), d(&self.c[0], false)],
            [d(&self.c[1], true), d(&self.c[1], false)],
        ]
    }
}

struct Step {
    delta: [f64; 2],
    samples: usize,
    rms_residual: f64,
    rms_signal: f64,
    min_eig: f64,
}

/// One Gauss-Newton step at displacement `d`.
fn gauss_newton_step(prev: &Planes, grads: &[[Vec<f64>; 2]; 2], next: &Planes, d: [f64; 2]) -> Step {
    let (w, h) = (prev.w, prev.h);
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    let (mut bx, mut by) = (0.0, 0.0);
    let (mut res2, mut sig2) = (0.0, 0.0);
    let mut n = 0usize;
    for y in 0..next.h {
        let py = y as f64 + d[1];
        if py < 0.0 || py > (h - 1) as f64 {
            continue;
        }
        for x in 0..next.w {
            let px = x as f64 + d[0];
            if px < 0.0 || px > (w - 1) as f64 {
                continue;
            }
            n += 1;
            for ch in 0..2 {
                let r = bilinear(&prev.c[ch], w, h, px, py) - next.c[ch][y * next.w + x];
                let jx = bilinear(&grads[ch][0], w, h, px, py);
                let jy = bilinear(&grads[ch][1], w, h, px, py);
                a += jx * jx;
                b += jx * jy;
                c += jy * jy;
                bx += jx * r;
                by += jy * r;
                res2 += r * r;
                sig2 += next.c[ch][y * next.w + x].powi(2);
            }
        }
    }
    let tr = a + c;
    let det = a * c - b * b;
    let min_eig = 0.5 * (tr - ((a - c).powi(2) + 4.0 * b * b).sqrt());
    let delta = if n > 0 && det.abs() > f64::EPSILON * tr * tr && det != 0.0 {
        [-(c * bx - b * by) / det, -(a * by - b * bx) / det]
    } else {
        [0.0, 0.0]
    };
    let m = (2 * n).max(1) as f64;
    Step {
        delta,
        samples: n,
        rms_residual: (res2 / m).sqrt(),
        rms_signal: (sig2 / m).sqrt(),
        min_eig: if n > 0 { min_eig / n as f64 } else { 0.0 },
    }
}

/// Coarse-to-fine registration of `next` against `prev`, warm-started at `init`.
pub fn estimate_flow(prev: &NormalMap, next: &NormalMap, init: Pose2D, cfg: &FlowConfig) -> Result<FlowEstimate> {
    if prev.dims() != next.dims() {
        return Err(Error::DimensionMismatch {
            expected: prev.dims(),
            actual: next.dims(),
        });
    }
    if !init.is_finite() {
        return Err(Error::invalid("flow initialisation must be finite"));
    }
    if cfg.levels > 12 {
        return Err(Error::invalid("flow pyramid deeper than 12 levels"));
    }
    let levels = cfg.levels;
    let mut pyr_prev = vec![Planes::from_normals(prev)];
    let mut pyr_next = vec![Planes::from_normals(next)];
    for _ in 0..levels {
        let (p, q) = (pyr_prev.last().unwrap().downsample(), pyr_next.last().unwrap().downsample());
        pyr_prev.push(p);
        pyr_next.push(q);
    }

    let mut d = [init.tx, init.ty];
    let mut iterations = 0;
    let mut last = None;
    let mut converged = false;
    for level in (0..=levels).rev() {
        let scale = (1u64 << level) as f64;
        let mut dl = [d[0] / scale, d[1] / scale];
        let grads = pyr_prev[level].derivatives();
        converged = false;
        for _ in 0..cfg.max_iterations {
            iterations += 1;
            let step = gauss_newton_step(&pyr_prev[level], &grads, &pyr_next[level], dl);
            let degenerate = step.samples == 0 || step.min_eig < cfg.min_eigenvalue;
            let len = step.delta[0].hypot(step.delta[1]);
            last = Some(step);
            if degenerate {
                break;
            }
            let s = last.as_ref().unwrap();
            dl = [dl[0] + s.delta[0], dl[1] + s.delta[1]];
            if len < cfg.tolerance_px / scale {
                converged = true;
                break;
            }
        }
        d = [dl[0] * scale, dl[1] * scale];
    }

    // Residual at the final estimate drives the confidence.
    let grads = pyr_prev[0].derivatives();
    let fin = gauss_newton_step(&pyr_prev[0], &grads, &pyr_next[0], d);
    let degenerate = fin.samples == 0 || fin.min_eig < cfg.min_eigenvalue || last.is_none();
    let confidence = if fin.rms_signal > 0.0 {
        (1.0 - fin.rms_residual / fin.rms_signal).clamp(0.0, 1.0)
    } else {
        0.0
    };
    if !(d[0].is_finite() && d[1].is_finite()) {
        return Ok(FlowEstimate {
            dx: init.tx,
            dy: init.ty,
            confidence: 0.0,
            iterations,
            converged: false,
            degenerate: true,
        });
    }
    Ok(FlowEstimate {
        dx: d[0],
        dy: d[1],
        confidence,
        iterations,
        converged,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::normal_from_slope;

    /// Smooth aperiodic texture of slopes.
    fn texture(x: f64, y: f64) -> [f64; 2] {
        let gx = 0.3 * (x / 7.0).sin() * (y / 11.0).cos() + 0.2 * ((x + 2.0 * y) / 13.0).sin();
        let gy = 0.25 * (y / 6.0).cos() * (x / 17.0).sin() + 0.15 * ((x - y) / 9.0).cos();
        [gx, gy]
    }

    fn map(w: usize, h: usize, ox: f64, oy: f64) -> NormalMap {
        let data = (0..w * h)
            .map(|i| {
                let [gx, gy] = texture((i % w) as f64 + ox, (i / w) as f64 + oy);
                normal_from_slope(gx, gy)
            })
            .collect();
        NormalMap::new(w, h, 0.25, data).unwrap()
    }

    #[test]
    fn zero_shift_is_fixed_point() {
        let a = map(96, 64, 0.0, 0.0);
        let f = estimate_flow(&a, &a, Pose2D::ORIGIN, &FlowConfig::default()).unwrap();
        assert!(f.dx.abs() < 0.01 && f.dy.abs() < 0.01, "{f:?}");
        assert!(f.converged && !f.degenerate);
        assert!(f.confidence > 0.99);
    }

    #[test]
    fn recovers_integer_shift() {
        let prev = map(120, 80, 0.0, 0.0);
        let next = map(120, 80, 7.0, 0.0);
        let f = estimate_flow(&prev, &next, Pose2D::ORIGIN, &FlowConfig::default()).unwrap();
        assert!((f.dx - 7.0).abs() < 0.25 && f.dy.abs() < 0.25, "{f:?}");
    }

    #[test]
    fn coarsest_level_extends_capture_range() {
        let prev = map(240, 160, 0.0, 0.0);
        let next = map(240, 160, 14.0, -1.0);
        let f = estimate_flow(&prev, &next, Pose2D::ORIGIN, &FlowConfig::default()).unwrap();
        assert!((f.dx - 14.0).abs() < 0.25 && (f.dy + 1.0).abs() < 0.25, "{f:?}");
        let single = FlowConfig { levels: 0, ..FlowConfig::default() };
        let g = estimate_flow(&prev, &prev, Pose2D::new(0.5, 0.0), &single).unwrap();
        assert!(g.dx.abs() < 0.01, "{g:?}");
    }

    #[test]
    fn flat_maps_are_degenerate() {
        let a = NormalMap::flat(64, 48, 0.25).unwrap();
        let f = estimate_flow(&a, &a, Pose2D::new(3.0, 0.0), &FlowConfig::default()).unwrap();
        assert!(f.degenerate);
        assert!(!f.is_reliable(&FlowConfig::default()));
    }

    #[test]
    fn downsample_halves_dims() {
        let p = Planes::from_normals(&map(121, 80, 0.0, 0.0));
        let q = p.downsample();
        assert_eq!((q.w, q.h), (61, 40));
    }

    #[test]
    fn mismatched_dims_rejected() {
        let a = map(40, 30, 0.0, 0.0);
        let b = map(41, 30, 0.0, 0.0);
        assert!(matches!(
            estimate_flow(&a, &b, Pose2D::ORIGIN, &FlowConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
