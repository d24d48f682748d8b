//! Synthetic belt-scanner: surfaces, contact imprint, Lambertian rendering of
//! tactile frames with marker bands, and whole-scan sequences.
//!
//! The renderer is a deliberately simple three-light Lambertian model. Each
//! colour channel sees one directional light and shades the imprinted patch
//! as `ambient + gain * max(0, n . l)`, where `l` points from the surface to
//! the light and therefore shares the negative-`z` convention of the normals.

mod render;
mod scan;
mod surface;

pub use render::{render_frame, render_reference, FrameParams, BACKGROUND_CAPTURES};
pub use scan::{imprint, simulate_scan, ScanOutput, ScanTrajectory};
pub(crate) use scan::frame_seed;
pub use surface::{make_surface, DefectProfile, SurfaceSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Band, Rect};

/// Side-band marker pattern painted on the belt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub band_height_px: usize,
    pub dot_radius_px: f64,
    /// Centre-to-centre spacings along the belt, repeated end to end.
    pub intervals: Vec<f64>,
}

impl Default for MarkerSpec {
    fn default() -> Self {
        Self {
            band_height_px: 40,
            dot_radius_px: 2.0,
            intervals: vec![8.0, 9.0, 11.0, 14.0, 10.0, 13.0],
        }
    }
}

impl MarkerSpec {
    /// Same layout with evenly spaced dots; useful to demonstrate aliasing.
    pub fn uniform(interval: f64) -> Self {
        Self {
            intervals: vec![interval],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() || self.intervals.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::invalid("marker intervals must be positive"));
        }
        let first = self.intervals[0];
        if self.intervals.iter().all(|&d| d == first) {
            return Err(Error::invalid(
                "marker intervals need at least two distinct values to avoid aliasing",
            ));
        }
        if !(self.dot_radius_px > 0.0) || self.band_height_px as f64 <= 2.0 * self.dot_radius_px {
            return Err(Error::invalid("marker dots must fit inside the band"));
        }
        Ok(())
    }

    /// Length of one repetition of the interval sequence, in px.
    pub fn block_length(&self) -> f64 {
        self.intervals.iter().sum()
    }

    /// Belt positions of every marker whose image position `p - phase` lies in `[lo, hi]`.
    pub fn centers_in(&self, phase: f64, lo: f64, hi: f64) -> Vec<f64> {
        let block = self.block_length();
        let mut out = Vec::new();
        let mut k = ((phase + lo) / block).floor() - 1.0;
        loop {
            let mut p = k * block;
            for &d in &self.intervals {
                let x = p - phase;
                if x > hi {
                    return out;
                }
                if x >= lo {
                    out.push(x);
                }
                p += d;
            }
            k += 1.0;
        }
    }
}

/// Optical and mechanical parameters of the simulated sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub sensing_width_mm: f64,
    pub sensing_height_mm: f64,
    pub pixel_pitch: f64,
    /// Unit vectors towards the R, G and B lights.
    pub light_dirs: [[f64; 3]; 3],
    pub ambient: [f64; 3],
    pub gain: [f64; 3],
    pub press_depth: f64,
    /// Gaussian noise in 8-bit counts.
    pub noise_sigma: f64,
    /// Motion-blur kernel length per (mm/s) of speed per Hz of frame rate.
    pub blur_px_per_mm_s: f64,
    pub marker_spec: MarkerSpec,
}

impl Default for SensorConfig {
    fn default() -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            sensing_width_mm: 60.0,
            sensing_height_mm: 40.0,
            pixel_pitch: 0.25,
            // R from -x, G from -y, B from +x, all at 45 degrees elevation.
            light_dirs: [[-c, 0.0, -c], [0.0, -c, -c], [c, 0.0, -c]],
            ambient: [0.1; 3],
            gain: [0.8; 3],
            press_depth: 2.0,
            noise_sigma: 1.0,
            blur_px_per_mm_s: 1.0,
            marker_spec: MarkerSpec::default(),
        }
    }
}

/// Band background colours; the dots are black.
pub(crate) const BAND_COLORS: [[f64; 3]; 2] = [[0.85, 0.25, 0.25], [0.25, 0.25, 0.85]];

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return Err(Error::invalid("pixel pitch must be positive"));
        }
        if !(self.press_depth > 0.0) {
            return Err(Error::invalid("press depth must be positive"));
        }
        for l in &self.light_dirs {
            let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
            if (n - 1.0).abs() > 1e-6 || l[2] >= 0.0 {
                return Err(Error::invalid(format!(
                    "light direction {l:?} must be unit length with negative z"
                )));
            }
        }
        if self.ambient.iter().chain(&self.gain).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("ambient and gain must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.blur_px_per_mm_s >= 0.0) {
            return Err(Error::invalid("noise and blur coefficients must be non-negative"));
        }
        let (w, h) = self.sensing_px();
        if w < 8 || h < 8 {
            return Err(Error::invalid("sensing region is too small"));
        }
        self.marker_spec.validate()
    }

    /// Sensing region size in pixels.
    pub fn sensing_px(&self) -> (usize, usize) {
        (
            (self.sensing_width_mm / self.pixel_pitch).round() as usize,
            (self.sensing_height_mm / self.pixel_pitch).round() as usize,
        )
    }

    /// Full image size: sensing region with a marker band above and below.
    pub fn frame_px(&self) -> (usize, usize) {
        let (w, h) = self.sensing_px();
        (w, h + 2 * self.marker_spec.band_height_px)
    }

    pub fn sensing_rect(&self) -> Rect {
        let (w, h) = self.sensing_px();
        Rect::new(0, self.marker_spec.band_height_px, w, h)
    }

    pub fn band_rect(&self, band: Band) -> Rect {
        let (w, h) = self.sensing_px();
        let bh = self.marker_spec.band_height_px;
        match band {
            Band::Left => Rect::new(0, 0, w, bh),
            Band::Right => Rect::new(0, bh + h, w, bh),
        }
    }

    /// Image row of the undeflected marker centres in a band.
    pub fn band_center_y(&self, band: Band) -> f64 {
        let r = self.band_rect(band);
        r.y as f64 + (r.height as f64 - 1.0) / 2.0
    }

    /// Horizontal range where whole dots are drawn and detected.
    pub fn marker_x_range(&self) -> (f64, f64) {
        let (w, _) = self.sensing_px();
        let margin = self.marker_spec.dot_radius_px + 2.0;
        (margin, w as f64 - 1.0 - margin)
    }

    /// Blur kernel length in px for a given speed and frame rate.
    pub fn blur_length_px(&self, speed_mm_s: f64, fps: f64) -> f64 {
        if fps <= 0.0 {
            return 0.0;
        }
        self.blur_px_per_mm_s * speed_mm_s / fps
    }
}
