use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{frame_seed, SensorConfig, BAND_COLORS};
use crate::error::{Error, Result};
use crate::frame::{Band, TactileFrame};
use crate::grid::{gradient_of, normal_from_slope, HeightField};

/// Per-frame rendering state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub speed_mm_s: f64,
    pub fps: f64,
    /// Belt travel so far; marker `p` is drawn at image x = `p - belt_phase_px`.
    pub belt_phase_px: f64,
    pub frame_index: usize,
    pub timestamp: f64,
}

impl Default for FrameParams {
    fn default() -> Self {
        Self {
            speed_mm_s: 0.0,
            fps: 10.0,
            belt_phase_px: 0.0,
            frame_index: 0,
            timestamp: 0.0,
        }
    }
}

/// Lambertian intensity of every channel for a unit normal.
#[inline]
pub(crate) fn shade(cfg: &SensorConfig, n: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for c in 0..3 {
        let l = cfg.light_dirs[c];
        let lambert = (n[0] * l[0] + n[1] * l[1] + n[2] * l[2]).max(0.0);
        out[c] = (cfg.ambient[c] + cfg.gain[c] * lambert).clamp(0.0, 1.0);
    }
    out
}

/// Fraction of pixel `(px, py)` covered by a disk, by 4x4 supersampling.
fn disk_coverage(px: usize, py: usize, cx: f64, cy: f64, r: f64) -> f64 {
    const S: usize = 4;
    let mut hits = 0;
    for sy in 0..S {
        for sx in 0..S {
            let x = px as f64 - 0.5 + (sx as f64 + 0.5) / S as f64;
            let y = py as f64 - 0.5 + (sy as f64 + 0.5) / S as f64;
            if (x - cx).powi(2) + (y - cy).powi(2) <= r * r {
                hits += 1;
            }
        }
    }
    hits as f64 / (S * S) as f64
}

/// Draws dark dots centred at `centers` (image coordinates) into one band.
pub(crate) fn paint_band(
    img: &mut [[f64; 3]],
    width: usize,
    cfg: &SensorConfig,
    band: Band,
    centers: &[(f64, f64)],
) {
    let rect = cfg.band_rect(band);
    let color = BAND_COLORS[match band {
        Band::Left => 0,
        Band::Right => 1,
    }];
    let mut coverage = vec![0.0f64; rect.width * rect.height];
    let r = cfg.marker_spec.dot_radius_px;
    for &(cx, cy) in centers {
        let x0 = ((cx - r - 1.0).floor().max(rect.x as f64)) as usize;
        let x1 = ((cx + r + 1.0).ceil().min((rect.x + rect.width - 1) as f64)) as usize;
        let y0 = ((cy - r - 1.0).floor().max(rect.y as f64)) as usize;
        let y1 = ((cy + r + 1.0).ceil().min((rect.y + rect.height - 1) as f64)) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let c = disk_coverage(x, y, cx, cy, r);
                let slot = &mut coverage[(y - rect.y) * rect.width + (x - rect.x)];
                *slot = slot.max(c);
            }
        }
    }
    for y in 0..rect.height {
        for x in 0..rect.width {
            let k = 1.0 - coverage[y * rect.width + x];
            img[(rect.y + y) * width + rect.x + x] = [color[0] * k, color[1] * k, color[2] * k];
        }
    }
}

/// Box blur of fractional `length` along each row.
pub(crate) fn motion_blur(img: &mut [[f64; 3]], width: usize, height: usize, length: f64) {
    if length <= 1e-9 {
        return;
    }
    let half = length / 2.0;
    let reach = (half + 0.5).ceil() as isize;
    // Weight of integer offset k is the overlap of [k - 0.5, k + 0.5] with [-half, half].
    let weights: Vec<(isize, f64)> = (-reach..=reach)
        .filter_map(|k| {
            let lo = (k as f64 - 0.5).max(-half);
            let hi = (k as f64 + 0.5).min(half);
            (hi > lo).then(|| (k, (hi - lo) / length))
        })
        .collect();
    let mut row = vec![[0.0; 3]; width];
    for y in 0..height {
        let src = &img[y * width..(y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = [0.0; 3];
            for &(k, w) in &weights {
                let xi = (x as isize + k).clamp(0, width as isize - 1) as usize;
                for c in 0..3 {
                    acc[c] += w * src[xi][c];
                }
            }
            *out = acc;
        }
        img[y * width..(y + 1) * width].copy_from_slice(&row);
    }
}

/// Undeflected marker centres of both bands for a belt phase.
pub(crate) fn marker_centers(cfg: &SensorConfig, belt_phase_px: f64, band: Band) -> Vec<(f64, f64)> {
    let (w, _) = cfg.sensing_px();
    let r = cfg.marker_spec.dot_radius_px;
    let y = cfg.band_center_y(band);
    cfg.marker_spec
        .centers_in(belt_phase_px, -r - 1.0, w as f64 + r)
        .into_iter()
        .map(|x| (x, y))
        .collect()
}

fn quantize(img: &[[f64; 3]], noise_sigma: f64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("non-negative sigma");
    let mut out = Vec::with_capacity(img.len() * 3);
    for px in img {
        for &v in px {
            let mut counts = v * 255.0;
            if noise_sigma > 0.0 {
                counts += noise.sample(&mut rng);
            }
            out.push(counts.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Renders an imprinted patch into a full tactile frame.
///
/// Shading, marker compositing, row-wise motion blur of length
/// `blur_px_per_mm_s * speed / fps`, Gaussian noise and 8-bit quantisation
/// are applied in that order. Output is a pure function of the arguments.
pub fn render_frame(
    patch: &HeightField,
    cfg: &SensorConfig,
    params: &FrameParams,
    seed: u64,
) -> Result<TactileFrame> {
    cfg.validate()?;
    let (sw, sh) = cfg.sensing_px();
    if patch.dims() != (sw, sh) {
        return Err(Error::DimensionMismatch {
            expected: (sw, sh),
            actual: patch.dims(),
        });
    }
    let (fw, fh) = cfg.frame_px();
    let mut img = vec![[0.0f64; 3]; fw * fh];

    let g = gradient_of(patch)?;
    let sensing = cfg.sensing_rect();
    for y in 0..sh {
        for x in 0..sw {
            let [gx, gy] = g.get(x, y);
            img[(sensing.y + y) * fw + x] = shade(cfg, normal_from_slope(gx, gy));
        }
    }
    for band in Band::BOTH {
        let centers = marker_centers(cfg, params.belt_phase_px, band);
        paint_band(&mut img, fw, cfg, band, &centers);
    }
    motion_blur(&mut img, fw, fh, cfg.blur_length_px(params.speed_mm_s, params.fps));
    let rgb = quantize(&img, cfg.noise_sigma, seed);
    Ok(TactileFrame::new(
        fw,
        fh,
        rgb,
        sensing,
        cfg.band_rect(Band::Left),
        cfg.band_rect(Band::Right),
    )?
    .with_index(params.frame_index, params.timestamp))
}

/// No-contact captures averaged into a reference frame.
pub const BACKGROUND_CAPTURES: usize = 16;

/// No-contact reference frame, averaged over [`BACKGROUND_CAPTURES`] noisy captures.
///
/// Noise in a single capture would be subtracted from every later frame as a
/// fixed pattern.
pub fn render_reference(cfg: &SensorConfig, params: &FrameParams, seed: u64) -> Result<TactileFrame> {
    let (w, h) = cfg.sensing_px();
    let flat = HeightField::zeros(w, h, cfg.pixel_pitch)?;
    let first = render_frame(&flat, cfg, params, frame_seed(seed, 0))?;
    if cfg.noise_sigma == 0.0 {
        return Ok(first);
    }
    let mut acc: Vec<f64> = first.rgb().iter().map(|&v| v as f64).collect();
    for k in 1..BACKGROUND_CAPTURES {
        let f = render_frame(&flat, cfg, params, frame_seed(seed, k as u64))?;
        acc.iter_mut().zip(f.rgb()).for_each(|(a, &v)| *a += v as f64);
    }
    let n = BACKGROUND_CAPTURES as f64;
    first.with_rgb(acc.iter().map(|a| (a / n).round() as u8).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{make_surface, SurfaceSpec};

    fn quiet() -> SensorConfig {
        SensorConfig {
            noise_sigma: 0.0,
            ..SensorConfig::default()
        }
    }

    #[test]
    fn flat_patch_gives_uniform_background() {
        let cfg = quiet();
        let (w, h) = cfg.sensing_px();
        let patch = HeightField::zeros(w, h, cfg.pixel_pitch).unwrap();
        let frame = render_frame(&patch, &cfg, &FrameParams::default(), 3).unwrap();
        let s = frame.sensing();
        let first = frame.pixel(s.x, s.y);
        for y in s.y..s.y + s.height {
            for x in s.x..s.x + s.width {
                assert_eq!(frame.pixel(x, y), first);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = SensorConfig::default();
        let (w, h) = cfg.sensing_px();
        let patch = HeightField::zeros(w, h, cfg.pixel_pitch).unwrap();
        let p = FrameParams { speed_mm_s: 10.0, ..FrameParams::default() };
        let a = render_frame(&patch, &cfg, &p, 11).unwrap();
        let b = render_frame(&patch, &cfg, &p, 11).unwrap();
        let c = render_frame(&patch, &cfg, &p, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.rgb(), c.rgb());
    }

    #[test]
    fn sphere_channel_means_match_scalar_oracle() {
        let cfg = quiet();
        let (w, h) = cfg.sensing_px();
        let spec = SurfaceSpec::SpherePress {
            width_mm: cfg.sensing_width_mm,
            height_mm: cfg.sensing_height_mm,
            center_mm: [30.0, 20.0],
            radius_mm: 4.0,
            depth_mm: 1.5,
        };
        let patch = make_surface(&spec, cfg.pixel_pitch).unwrap();
        let frame = render_frame(&patch, &cfg, &FrameParams::default(), 0).unwrap();

        // Independent per-pixel loop: finite differences, normalise, dot with each light.
        let p = cfg.pixel_pitch;
        let hgt = |x: usize, y: usize| patch.get(x, y);
        let mut expected = [0.0f64; 3];
        for y in 0..h {
            for x in 0..w {
                let dx = match x {
                    0 => (hgt(1, y) - hgt(0, y)) / p,
                    _ if x == w - 1 => (hgt(x, y) - hgt(x - 1, y)) / p,
                    _ => (hgt(x + 1, y) - hgt(x - 1, y)) / (2.0 * p),
                };
                let dy = match y {
                    0 => (hgt(x, 1) - hgt(x, 0)) / p,
                    _ if y == h - 1 => (hgt(x, y) - hgt(x, y - 1)) / p,
                    _ => (hgt(x, y + 1) - hgt(x, y - 1)) / (2.0 * p),
                };
                let len = (dx * dx + dy * dy + 1.0).sqrt();
                for c in 0..3 {
                    let l = cfg.light_dirs[c];
                    let dot = (dx * l[0] + dy * l[1] - l[2]) / len;
                    let v = (cfg.ambient[c] + cfg.gain[c] * dot.max(0.0)).clamp(0.0, 1.0);
                    expected[c] += (v * 255.0).round().clamp(0.0, 255.0);
                }
            }
        }
        let s = frame.sensing();
        for c in 0..3 {
            let got: f64 = frame.channel_crop(s, c).iter().map(|v| v * 255.0).sum();
            assert!((got - expected[c]).abs() < 1e-6, "channel {c}: {got} vs {}", expected[c]);
        }
    }

    #[test]
    fn blur_preserves_mass_and_spreads() {
        let mut img = vec![[0.0; 3]; 21];
        img[10] = [1.0, 1.0, 1.0];
        motion_blur(&mut img, 21, 1, 4.5);
        let total: f64 = img.iter().map(|p| p[0]).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let centroid: f64 = img.iter().enumerate().map(|(i, p)| i as f64 * p[0]).sum();
        assert!((centroid - 10.0).abs() < 1e-12);
        assert!(img[8][0] > 0.0 && img[12][0] > 0.0 && img[7][0] == 0.0);
    }

    #[test]
    fn blur_kernel_grows_fifteenfold_from_3_to_45() {
        let cfg = SensorConfig::default();
        assert!((cfg.blur_length_px(45.0, 10.0) - 15.0 * cfg.blur_length_px(3.0, 10.0)).abs() < 1e-12);
    }

    #[test]
    fn patch_size_checked() {
        let cfg = quiet();
        let patch = HeightField::zeros(10, 10, cfg.pixel_pitch).unwrap();
        assert!(matches!(
            render_frame(&patch, &cfg, &FrameParams::default(), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
