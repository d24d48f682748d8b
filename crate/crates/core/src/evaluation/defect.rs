//! Defect reconstruction against simulator truth: cross-sections, depth, edge width, ICP RMSE.

use serde::{Deserialize, Serialize};

use super::{icp_align, mosaic_offset, reconstruct_simulated, GradientSource, IcpResult};
use crate::error::{Error, Result};
use crate::grid::{HeightField, Pose2D};
use crate::markers::DetectorConfig;
use crate::reconstruction::ReconstructionConfig;
use crate::simulator::{make_surface, simulate_scan, DefectProfile, ScanTrajectory, SensorConfig, SurfaceSpec};

/// Short straight pass over a single defect (or a flat board when `profile` is `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectScenario {
    pub speed_mm_s: f64,
    pub fps: f64,
    pub travel_mm: f64,
    pub border_mm: f64,
    /// Half side of the square analysed around the defect centre.
    pub window_half_mm: f64,
}

impl Default for DefectScenario {
    fn default() -> Self {
        Self {
            speed_mm_s: 10.0,
            fps: 10.0,
            travel_mm: 10.0,
            border_mm: 2.0,
            window_half_mm: 4.0,
        }
    }
}

impl DefectScenario {
    pub fn build(&self, cfg: &SensorConfig, profile: Option<&DefectProfile>) -> Result<(SurfaceSpec, ScanTrajectory, [f64; 2])> {
        if !(self.speed_mm_s > 0.0 && self.fps > 0.0 && self.travel_mm >= 0.0) {
            return Err(Error::invalid("defect scan needs positive speed and fps"));
        }
        let step = self.speed_mm_s / self.fps;
        let steps = (self.travel_mm / step - 1e-9).ceil().max(1.0) as usize;
        let travel = steps as f64 * step;
        let b = self.border_mm;
        let (sw, sh) = (cfg.sensing_width_mm, cfg.sensing_height_mm);
        let (width_mm, height_mm) = (sw + travel + 2.0 * b, sh + 2.0 * b);
        let center_mm = [b + (sw + travel) / 2.0, b + sh / 2.0];
        let spec = match profile {
            Some(p) => SurfaceSpec::Defect {
                width_mm,
                height_mm,
                center_mm,
                profile: p.clone(),
            },
            None => SurfaceSpec::Flat { width_mm, height_mm },
        };
        let origin = Pose2D::new(b / cfg.pixel_pitch, b / cfg.pixel_pitch);
        let traj = ScanTrajectory::linear(steps + 1, self.speed_mm_s, self.fps, cfg.pixel_pitch, 0.0, origin, 0)?;
        Ok((spec, traj, center_mm))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub profile: Option<DefectProfile>,
    /// Cross-section abscissae along x through the defect centre, mm relative to the centre.
    pub x_mm: Vec<f64>,
    pub true_profile_mm: Vec<f64>,
    /// Reconstructed cross-section shifted so its baseline matches the truth.
    pub measured_profile_mm: Vec<f64>,
    pub true_depth_mm: f64,
    pub measured_depth_mm: f64,
    /// 10-90% rise distance of the cross-section.
    pub true_edge_width_mm: Option<f64>,
    pub measured_edge_width_mm: Option<f64>,
    /// RMS point distance after ICP alignment.
    pub rmse_mm: f64,
    pub icp: IcpResult,
}

impl DefectReport {
    pub fn depth_error_frac(&self) -> f64 {
        ((self.measured_depth_mm - self.true_depth_mm) / self.true_depth_mm).abs()
    }

    /// True when the reconstruction blurs the edge wider than it really is.
    pub fn edge_smoothed(&self) -> bool {
        matches!((self.measured_edge_width_mm, self.true_edge_width_mm), (Some(m), Some(t)) if m > t)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Square window of heights, row-major, with side `2 * half + 1`.
struct Window {
    side: usize,
    values: Vec<f64>,
}

impl Window {
    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.side + i]
    }

    fn border_median(&self) -> f64 {
        let s = self.side;
        let mut v = Vec::with_capacity(4 * s);
        for k in 0..s {
            v.extend([self.get(k, 0), self.get(k, s - 1), self.get(0, k), self.get(s - 1, k)]);
        }
        median(v)
    }

    fn row(&self, j: usize) -> Vec<f64> {
        self.values[j * self.side..(j + 1) * self.side].to_vec()
    }

    /// Depth below the border for pits and grooves, rise across the window for steps.
    fn depth(&self, step: bool) -> f64 {
        if step {
            let r = self.row(self.side / 2);
            let q = (self.side / 4).max(1);
            let left = r[..q].iter().sum::<f64>() / q as f64;
            let right = r[self.side - q..].iter().sum::<f64>() / q as f64;
            right - left
        } else {
            self.border_median() - self.values.iter().copied().fold(f64::INFINITY, f64::min)
        }
    }
}

/// Distance between the 10% and 90% crossings walking from the profile minimum toward its maximum.
pub fn edge_width_mm(profile: &[f64], pitch: f64) -> Option<f64> {
    let (il, lo) = profile.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1))?;
    let (ih, hi) = profile.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1))?;
    if !(hi > lo) {
        return None;
    }
    let crossing = |frac: f64| -> Option<f64> {
        let level = lo + frac * (hi - lo);
        let dir: isize = if ih > il { 1 } else { -1 };
        let mut i = il as isize;
        while i != ih as isize {
            let (a, b) = (profile[i as usize], profile[(i + dir) as usize]);
            if a < level && b >= level {
                let t = (level - a) / (b - a);
                return Some(i as f64 + dir as f64 * t);
            }
            i += dir;
        }
        None
    };
    Some((crossing(0.9)? - crossing(0.1)?).abs() * pitch)
}

fn window_at(h: &HeightField, center_px: [f64; 2], half: usize) -> Result<Window> {
    let (w, hh) = h.dims();
    let (cx, cy) = (center_px[0].round() as isize, center_px[1].round() as isize);
    let (x0, y0) = (cx - half as isize, cy - half as isize);
    if x0 < 0 || y0 < 0 || cx + half as isize >= w as isize || cy + half as isize >= hh as isize {
        return Err(Error::invalid("defect window leaves the reconstructed area"));
    }
    let side = 2 * half + 1;
    let values = (0..side * side)
        .map(|k| h.get(x0 as usize + k % side, y0 as usize + k / side))
        .collect();
    Ok(Window { side, values })
}

struct Analysed {
    truth: Window,
    measured: Window,
    origin_mm: [f64; 2],
}

fn analyse(
    cfg: &SensorConfig,
    scenario: &DefectScenario,
    profile: Option<&DefectProfile>,
    source: GradientSource,
    rec_cfg: &ReconstructionConfig,
    seed: u64,
) -> Result<Analysed> {
    let p = cfg.pixel_pitch;
    let (spec, traj, center_mm) = scenario.build(cfg, profile)?;
    let surface = make_surface(&spec, p)?;
    let scan = simulate_scan(&surface, &traj, cfg, seed)?;
    let detector = DetectorConfig::for_radius(cfg.marker_spec.dot_radius_px);
    let rec = reconstruct_simulated(&scan, source, &detector, rec_cfg)?;
    let off = mosaic_offset(traj.origin_px, &rec);
    let half = (scenario.window_half_mm / p).round() as usize;
    // Centre on the nearest mosaic pixel; truth is sampled at the same points.
    let c_rec = [(center_mm[0] / p - off[0]).round(), (center_mm[1] / p - off[1]).round()];
    let measured = window_at(&rec.height, c_rec, half)?;
    let side = 2 * half + 1;
    let origin_mm = [(c_rec[0] - half as f64 + off[0]) * p, (c_rec[1] - half as f64 + off[1]) * p];
    let truth = Window {
        side,
        values: (0..side * side)
            .map(|k| spec.height_at(origin_mm[0] + (k % side) as f64 * p, origin_mm[1] + (k / side) as f64 * p))
            .collect(),
    };
    Ok(Analysed {
        truth,
        measured,
        origin_mm: [origin_mm[0] - center_mm[0], origin_mm[1] - center_mm[1]],
    })
}

fn cloud(w: &Window, origin: [f64; 2], p: f64) -> Vec<[f64; 3]> {
    (0..w.values.len())
        .map(|k| [origin[0] + (k % w.side) as f64 * p, origin[1] + (k / w.side) as f64 * p, w.values[k]])
        .collect()
}

/// Scans one defect, reconstructs it and compares against the simulator surface.
pub fn defect_compare(
    cfg: &SensorConfig,
    scenario: &DefectScenario,
    profile: Option<&DefectProfile>,
    source: GradientSource,
    rec_cfg: &ReconstructionConfig,
    seed: u64,
) -> Result<DefectReport> {
    let p = cfg.pixel_pitch;
    let a = analyse(cfg, scenario, profile, source, rec_cfg, seed)?;
    let step = matches!(profile, Some(DefectProfile::StepEdge { .. }));
    let icp = icp_align(&cloud(&a.measured, a.origin_mm, p), &cloud(&a.truth, a.origin_mm, p), 50, 1e-6)?;

    let mid = a.truth.side / 2;
    let true_row = a.truth.row(mid);
    let shift = a.measured.border_median() - a.truth.border_median();
    let measured_row: Vec<f64> = a.measured.row(mid).iter().map(|v| v - shift).collect();
    let x_mm = (0..a.truth.side).map(|i| a.origin_mm[0] + i as f64 * p).collect();
    let (true_depth, measured_depth) = match profile {
        Some(_) => (a.truth.depth(step), a.measured.depth(step)),
        None => (0.0, a.measured.depth(false)),
    };
    let report = DefectReport {
        profile: profile.cloned(),
        x_mm,
        true_edge_width_mm: edge_width_mm(&true_row, p),
        measured_edge_width_mm: edge_width_mm(&measured_row, p),
        true_profile_mm: true_row,
        measured_profile_mm: measured_row,
        true_depth_mm: true_depth,
        measured_depth_mm: measured_depth,
        rmse_mm: icp.final_residual(),
        icp,
    };
    if report.edge_smoothed() {
        log::info!(
            "edge smoothed: {:.3} mm reconstructed vs {:.3} mm true",
            report.measured_edge_width_mm.unwrap_or(f64::NAN),
            report.true_edge_width_mm.unwrap_or(f64::NAN)
        );
    }
    Ok(report)
}

/// Three times the RMS height deviation of flat-surface reconstructions over the defect window.
pub fn flat_noise_floor(
    cfg: &SensorConfig,
    scenario: &DefectScenario,
    source: GradientSource,
    rec_cfg: &ReconstructionConfig,
    seeds: &[u64],
) -> Result<f64> {
    if seeds.is_empty() {
        return Err(Error::InsufficientData("noise floor needs at least one run".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for &s in seeds {
        let a = analyse(cfg, scenario, None, source, rec_cfg, s)?;
        let m = a.measured.values.iter().sum::<f64>() / a.measured.values.len() as f64;
        sum += a.measured.values.iter().map(|v| (v - m).powi(2)).sum::<f64>();
        n += a.measured.values.len();
    }
    Ok(3.0 * (sum / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_width_of_linear_ramp() {
        // 0 .. 1 over 10 samples; 10% at 0.9, 90% at 8.1 samples
        let ramp: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let w = edge_width_mm(&ramp, 0.25).unwrap();
        assert!((w - 7.2 * 0.25).abs() < 1e-12);
        let rev: Vec<f64> = ramp.iter().rev().copied().collect();
        assert!((edge_width_mm(&rev, 0.25).unwrap() - w).abs() < 1e-12);
        assert_eq!(edge_width_mm(&[1.0; 5], 0.25), None);
    }

    #[test]
    fn oracle_pit_depth_and_flat_floor() {
        let cfg = SensorConfig::default();
        let sc = DefectScenario::default();
        let rc = ReconstructionConfig::default();
        let pit = DefectProfile::GaussianPit { depth_mm: 0.3, sigma_mm: 1.0 };
        let r = defect_compare(&cfg, &sc, Some(&pit), GradientSource::Oracle, &rc, 3).unwrap();
        assert!((r.true_depth_mm - 0.3).abs() < 0.01, "{}", r.true_depth_mm);
        assert!(r.depth_error_frac() < 0.05, "{} vs {}", r.measured_depth_mm, r.true_depth_mm);
        assert!(r.icp.residuals.windows(2).all(|w| w[1] <= w[0] + 1e-12));

        let flat = defect_compare(&cfg, &sc, None, GradientSource::Oracle, &rc, 3).unwrap();
        assert!(flat.rmse_mm < 1e-9, "{}", flat.rmse_mm);
    }
}
