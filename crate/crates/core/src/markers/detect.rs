//! Difference-of-Gaussian blob detection on the marker bands.

use serde::{Deserialize, Serialize};

use crate::frame::{Band, TactileFrame};
use crate::grid::bilinear;

/// Sub-pixel dot centres of one band, in frame pixels, sorted by x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerObservation {
    pub band: Band,
    pub frame_index: usize,
    pub centers: Vec<[f64; 2]>,
}

impl MarkerObservation {
    pub fn xs(&self) -> Vec<f64> {
        self.centers.iter().map(|c| c[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub dot_radius_px: f64,
    pub scales: usize,
    /// Minimum DoG response on the inverted [0, 1] channel.
    pub threshold: f64,
    pub centroid_iterations: usize,
}

impl DetectorConfig {
    pub fn for_radius(dot_radius_px: f64) -> Self {
        Self {
            dot_radius_px,
            scales: 5,
            threshold: 0.03,
            centroid_iterations: 10,
        }
    }

    /// Geometric sigma ladder spanning ±50% around `r / sqrt(2)`, plus one extra for the last difference.
    fn sigmas(&self) -> Vec<f64> {
        let s0 = self.dot_radius_px / std::f64::consts::SQRT_2;
        let (lo, hi) = (0.5 * s0, 1.5 * s0);
        let n = self.scales.max(2);
        let k = (hi / lo).powf(1.0 / (n - 1) as f64);
        (0..=n).map(|i| lo * k.powi(i as i32)).collect()
    }
}

fn gaussian_blur(img: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * img[y * w + clamp(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[clamp(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

/// Blob centres in band-local pixels.
pub fn detect_blobs(img: &[f64], w: usize, h: usize, cfg: &DetectorConfig) -> Vec<[f64; 2]> {
    if w < 5 || h < 5 {
        return Vec::new();
    }
    let blurred: Vec<Vec<f64>> = cfg.sigmas().iter().map(|&s| gaussian_blur(img, w, h, s)).collect();
    let dog: Vec<Vec<f64>> = blurred.windows(2).map(|p| p[0].iter().zip(&p[1]).map(|(a, b)| a - b).collect()).collect();

    let border = 2usize;
    let mut peaks: Vec<(f64, usize, usize)> = Vec::new();
    for (s, layer) in dog.iter().enumerate() {
        for y in border..h - border {
            for x in border..w - border {
                let v = layer[y * w + x];
                if v < cfg.threshold {
                    continue;
                }
                let is_max = (s.saturating_sub(1)..(s + 2).min(dog.len())).all(|t| {
                    (y - 1..=y + 1).all(|yy| {
                        (x - 1..=x + 1).all(|xx| (t == s && yy == y && xx == x) || dog[t][yy * w + xx] <= v)
                    })
                });
                if is_max {
                    peaks.push((v, x, y));
                }
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let sep = cfg.dot_radius_px.max(1.0) * 2.0;
    let mut kept: Vec<[f64; 2]> = Vec::new();
    for &(_, x, y) in &peaks {
        let p = [x as f64, y as f64];
        if kept.iter().all(|k| (k[0] - p[0]).hypot(k[1] - p[1]) >= sep) {
            kept.push(p);
        }
    }

    let level = median(img);
    // Dots clipped by the frame edge have biased centroids.
    let margin = cfg.dot_radius_px + 2.0;
    let mut centers: Vec<[f64; 2]> = kept
        .into_iter()
        .map(|p| refine_centroid(img, w, h, p, level, cfg))
        .filter(|c| c[0] >= margin && c[0] <= (w - 1) as f64 - margin)
        .collect();
    centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
    centers
}

/// Iterated 5x5 intensity centroid with bilinear sampling about the current estimate.
fn refine_centroid(img: &[f64], w: usize, h: usize, start: [f64; 2], level: f64, cfg: &DetectorConfig) -> [f64; 2] {
    let mut c = start;
    for _ in 0..cfg.centroid_iterations {
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for j in -2..=2 {
            for i in -2..=2 {
                let (px, py) = (c[0] + i as f64, c[1] + j as f64);
                let v = (bilinear(img, w, h, px, py) - level).max(0.0);
                sw += v;
                sx += v * i as f64;
                sy += v * j as f64;
            }
        }
        if sw <= 0.0 {
            break;
        }
        let step = [sx / sw, sy / sw];
        c = [
            (c[0] + step[0]).clamp(0.0, (w - 1) as f64),
            (c[1] + step[1]).clamp(0.0, (h - 1) as f64),
        ];
        if step[0].hypot(step[1]) < 1e-4 {
            break;
        }
    }
    c
}

/// Detects the dots of one band; dark dots are found on the inverted band colour channel.
pub fn detect_band(frame: &TactileFrame, band: Band, cfg: &DetectorConfig) -> MarkerObservation {
    let rect = frame.band(band);
    let img: Vec<f64> = frame.channel_crop(rect, band.channel()).into_iter().map(|v| 1.0 - v).collect();
    let centers = detect_blobs(&img, rect.width, rect.height, cfg)
        .into_iter()
        .map(|[x, y]| [x + rect.x as f64, y + rect.y as f64])
        .collect();
    MarkerObservation {
        band,
        frame_index: frame.frame_index,
        centers,
    }
}

/// Both bands, left first.
pub fn detect_markers(frame: &TactileFrame, cfg: &DetectorConfig) -> [MarkerObservation; 2] {
    Band::BOTH.map(|b| detect_band(frame, b, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_image(w: usize, h: usize, centers: &[[f64; 2]], r: f64) -> Vec<f64> {
        let mut img = vec![0.15; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut cov: f64 = 0.0;
                for c in centers {
                    let mut n = 0;
                    for sy in 0..4 {
                        for sx in 0..4 {
                            let px = x as f64 + (sx as f64 + 0.5) / 4.0 - 0.5;
                            let py = y as f64 + (sy as f64 + 0.5) / 4.0 - 0.5;
                            if (px - c[0]).hypot(py - c[1]) <= r {
                                n += 1;
                            }
                        }
                    }
                    cov = cov.max(n as f64 / 16.0);
                }
                img[y * w + x] += 0.85 * cov;
            }
        }
        img
    }

    #[test]
    fn finds_known_centres() {
        let truth = [[10.3, 20.0], [21.7, 19.6], [35.0, 20.2], [47.45, 20.0]];
        let img = disk_image(60, 40, &truth, 2.0);
        let found = detect_blobs(&img, 60, 40, &DetectorConfig::for_radius(2.0));
        assert_eq!(found.len(), truth.len());
        for (f, t) in found.iter().zip(&truth) {
            assert!((f[0] - t[0]).hypot(f[1] - t[1]) < 0.3, "{f:?} vs {t:?}");
        }
    }

    #[test]
    fn empty_band_gives_nothing() {
        let img = vec![0.15; 60 * 40];
        assert!(detect_blobs(&img, 60, 40, &DetectorConfig::for_radius(2.0)).is_empty());
    }

    #[test]
    fn sigma_ladder_brackets_dot_scale() {
        let s = DetectorConfig::for_radius(2.0).sigmas();
        let s0 = 2.0 / std::f64::consts::SQRT_2;
        assert!((s[0] - 0.5 * s0).abs() < 1e-12);
        assert!((s[s.len() - 2] - 1.5 * s0).abs() < 1e-12);
    }
}
