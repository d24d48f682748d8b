use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{render_frame, render_reference, FrameParams, SensorConfig};
use crate::error::{Error, Result};
use crate::frame::TactileFrame;
use crate::grid::{gradient_of, normal_from_gradients, HeightField, NormalMap, Pose2D};

/// Ordered sensor poses for one pass over a surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTrajectory {
    /// Surface pixel under the sensing window's top-left corner in frame 0.
    pub origin_px: Pose2D,
    /// Per-frame poses relative to frame 0; `poses[0]` is the origin.
    pub poses: Vec<Pose2D>,
    pub speed_mm_s: f64,
    pub fps: f64,
    /// Standard deviation of the per-frame lateral step (0 for robot mode).
    pub jitter_sigma_px: f64,
    #[serde(default)]
    pub belt_phase0_px: f64,
}

impl ScanTrajectory {
    /// Straight pass along +x at constant speed; the lateral coordinate is a
    /// seeded random walk with N(0, jitter^2) steps.
    pub fn linear(
        n_frames: usize,
        speed_mm_s: f64,
        fps: f64,
        pixel_pitch: f64,
        jitter_sigma_px: f64,
        origin_px: Pose2D,
        seed: u64,
    ) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::invalid("a trajectory needs at least one frame"));
        }
        if !(fps > 0.0) || !(speed_mm_s >= 0.0) || !(pixel_pitch > 0.0) || !(jitter_sigma_px >= 0.0) {
            return Err(Error::invalid("speed, fps, pitch and jitter must be non-negative (fps, pitch > 0)"));
        }
        let step = speed_mm_s / fps / pixel_pitch;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a3f_19c2_5be0_d461);
        let jitter = Normal::new(0.0, jitter_sigma_px).expect("non-negative sigma");
        let mut ty = 0.0;
        let poses = (0..n_frames)
            .map(|k| {
                if k > 0 && jitter_sigma_px > 0.0 {
                    ty += jitter.sample(&mut rng);
                }
                Pose2D::new(k as f64 * step, ty)
            })
            .collect();
        Ok(Self {
            origin_px,
            poses,
            speed_mm_s,
            fps,
            jitter_sigma_px,
            belt_phase0_px: 0.0,
        })
    }

    /// Nominal inter-frame travel in pixels.
    pub fn step_px(&self, pixel_pitch: f64) -> f64 {
        self.speed_mm_s / self.fps / pixel_pitch
    }

    /// Total travel along the scan axis, in pixels.
    pub fn travel_px(&self) -> f64 {
        match (self.poses.first(), self.poses.last()) {
            (Some(a), Some(b)) => b.tx - a.tx,
            _ => 0.0,
        }
    }

    /// Absolute surface position of frame `k`'s sensing window.
    pub fn window(&self, k: usize) -> Pose2D {
        self.origin_px + self.poses[k]
    }
}

/// Presses the sensor onto `surface` with its sensing window's top-left at
/// `window` (surface pixels, possibly fractional).
///
/// Heights are sampled bilinearly and clipped at the press plane, so the
/// result never exceeds `cfg.press_depth`.
pub fn imprint(surface: &HeightField, window: Pose2D, cfg: &SensorConfig) -> Result<HeightField> {
    let (w, h) = cfg.sensing_px();
    let (sw, sh) = surface.dims();
    let fits = window.is_finite()
        && window.tx >= 0.0
        && window.ty >= 0.0
        && window.tx + (w - 1) as f64 <= (sw - 1) as f64 + 1e-9
        && window.ty + (h - 1) as f64 <= (sh - 1) as f64 + 1e-9;
    if !fits {
        return Err(Error::OutOfBounds {
            x: window.tx,
            y: window.ty,
            width: sw,
            height: sh,
        });
    }
    let integral = window.tx.fract() == 0.0 && window.ty.fract() == 0.0;
    let mut data = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            let v = if integral {
                surface.get(window.tx as usize + i, window.ty as usize + j)
            } else {
                surface.sample(window.tx + i as f64, window.ty + j as f64)
            };
            data.push(v.min(cfg.press_depth));
        }
    }
    HeightField::new(w, h, surface.pixel_pitch(), data)
}

/// Simulated frames together with the ground truth used to produce them.
#[derive(Debug, Clone)]
pub struct ScanOutput {
    pub frames: Vec<TactileFrame>,
    /// No-contact reference frame rendered with the same optics.
    pub background: TactileFrame,
    pub poses: Vec<Pose2D>,
    pub patches: Vec<HeightField>,
    pub normals: Vec<NormalMap>,
}

pub(crate) fn frame_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 step keeps per-frame streams decorrelated
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders every pose of `trajectory` over `surface`.
pub fn simulate_scan(
    surface: &HeightField,
    trajectory: &ScanTrajectory,
    cfg: &SensorConfig,
    seed: u64,
) -> Result<ScanOutput> {
    cfg.validate()?;
    if trajectory.poses.is_empty() {
        return Err(Error::invalid("trajectory has no poses"));
    }
    if (surface.pixel_pitch() - cfg.pixel_pitch).abs() > 1e-12 {
        return Err(Error::invalid("surface and sensor pixel pitch differ"));
    }
    let patches = (0..trajectory.poses.len())
        .map(|k| imprint(surface, trajectory.window(k), cfg))
        .collect::<Result<Vec<_>>>()?;

    let frames = patches
        .par_iter()
        .enumerate()
        .map(|(k, patch)| {
            let params = FrameParams {
                speed_mm_s: trajectory.speed_mm_s,
                fps: trajectory.fps,
                belt_phase_px: trajectory.belt_phase0_px + trajectory.poses[k].tx,
                frame_index: k,
                timestamp: k as f64 / trajectory.fps,
            };
            render_frame(patch, cfg, &params, frame_seed(seed, k as u64))
        })
        .collect::<Result<Vec<_>>>()?;

    let bg_params = FrameParams {
        belt_phase_px: trajectory.belt_phase0_px,
        fps: trajectory.fps,
        ..FrameParams::default()
    };
    let background = render_reference(cfg, &bg_params, frame_seed(seed, u64::MAX - 1))?;

    let normals = patches
        .iter()
        .map(|p| normal_from_gradients(&gradient_of(p)?))
        .collect::<Result<Vec<_>>>()?;

    Ok(ScanOutput {
        frames,
        background,
        poses: trajectory.poses.clone(),
        patches,
        normals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{make_surface, SurfaceSpec};

    fn cfg() -> SensorConfig {
        SensorConfig {
            noise_sigma: 0.0,
            ..SensorConfig::default()
        }
    }

    #[test]
    fn inter_frame_shift_from_speed() {
        let t = ScanTrajectory::linear(3, 10.0, 10.0, 0.1, 0.0, Pose2D::ORIGIN, 0).unwrap();
        assert_eq!(t.poses[0], Pose2D::ORIGIN);
        assert!((t.poses[1].tx - 10.0).abs() < 1e-12);
        assert!((t.poses[2].tx - 20.0).abs() < 1e-12);
        // 45 mm/s at 10 Hz is 4.5 mm per frame.
        let fast = ScanTrajectory::linear(2, 45.0, 10.0, 0.25, 0.0, Pose2D::ORIGIN, 0).unwrap();
        assert!((fast.poses[1].tx - 4.5 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn manual_jitter_statistics() {
        let sigma = 2.0;
        let t = ScanTrajectory::linear(1001, 10.0, 10.0, 0.25, sigma, Pose2D::ORIGIN, 42).unwrap();
        let again = ScanTrajectory::linear(1001, 10.0, 10.0, 0.25, sigma, Pose2D::ORIGIN, 42).unwrap();
        assert_eq!(t, again);
        let deltas: Vec<f64> = t.poses.windows(2).map(|w| w[1].ty - w[0].ty).collect();
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // 1000 samples: standard error of the mean is 0.063, of the std about 0.045.
        assert!(mean.abs() < 0.25, "mean {mean}");
        assert!((var.sqrt() - sigma).abs() < 0.2, "std {}", var.sqrt());
        for w in t.poses.windows(2) {
            assert!((w[1].tx - w[0].tx - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn imprint_examples() {
        let c = cfg();
        let (w, h) = c.sensing_px();
        let flat = HeightField::zeros(w + 10, h + 10, c.pixel_pitch).unwrap();
        let p = imprint(&flat, Pose2D::new(3.0, 4.0), &c).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.0));

        let cap = SurfaceSpec::SpherePress {
            width_mm: 60.0,
            height_mm: 40.0,
            center_mm: [30.0, 20.0],
            radius_mm: 4.0,
            depth_mm: 1.5,
        };
        let s = make_surface(&cap, c.pixel_pitch).unwrap();
        assert_eq!(imprint(&s, Pose2D::ORIGIN, &c).unwrap(), s);

        // A plateau twice the press depth is clipped flat at the press plane.
        let tall = HeightField::from_fn(w, h, c.pixel_pitch, |x, _| if x > 30.0 { 2.0 * c.press_depth } else { 0.0 })
            .unwrap();
        let clipped = imprint(&tall, Pose2D::ORIGIN, &c).unwrap();
        for (a, b) in clipped.data().iter().zip(tall.data()) {
            assert_eq!(*a, b.min(c.press_depth));
        }
        assert!(clipped.data().iter().all(|&v| v <= c.press_depth));
    }

    #[test]
    fn imprint_out_of_bounds() {
        let c = cfg();
        let (w, h) = c.sensing_px();
        let s = HeightField::zeros(w + 4, h, c.pixel_pitch).unwrap();
        assert!(imprint(&s, Pose2D::new(4.0, 0.0), &c).is_ok());
        assert!(matches!(imprint(&s, Pose2D::new(4.5, 0.0), &c), Err(Error::OutOfBounds { .. })));
        assert!(matches!(imprint(&s, Pose2D::new(-1.0, 0.0), &c), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn single_pose_scan() {
        let c = cfg();
        let (w, h) = c.sensing_px();
        let s = HeightField::zeros(w, h, c.pixel_pitch).unwrap();
        let t = ScanTrajectory::linear(1, 10.0, 10.0, c.pixel_pitch, 0.0, Pose2D::ORIGIN, 0).unwrap();
        let out = simulate_scan(&s, &t, &c, 5).unwrap();
        assert_eq!(out.frames.len(), 1);
        assert_eq!(out.poses, vec![Pose2D::ORIGIN]);
        assert_eq!(out.normals[0].dims(), (w, h));
    }

    #[test]
    fn scan_is_deterministic() {
        let c = SensorConfig::default();
        let spec = SurfaceSpec::PcbLike {
            width_mm: 70.0,
            height_mm: 40.0,
            seed: 3,
            control_points_mm: vec![],
            control_radius_mm: 1.0,
        };
        let s = make_surface(&spec, c.pixel_pitch).unwrap();
        let t = ScanTrajectory::linear(3, 10.0, 10.0, c.pixel_pitch, 0.0, Pose2D::ORIGIN, 0).unwrap();
        let a = simulate_scan(&s, &t, &c, 9).unwrap();
        let b = simulate_scan(&s, &t, &c, 9).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.background, b.background);
    }
}
