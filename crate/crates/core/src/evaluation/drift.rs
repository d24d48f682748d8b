//! Planar drift from the layout of control bumps in a stitched scan.

use serde::{Deserialize, Serialize};

use super::{mosaic_offset, reconstruct_simulated, truth_normals, GradientSource};
use crate::error::{Error, Result};
use crate::grid::{mean_dot_product, HeightField, Pose2D};
use crate::markers::DetectorConfig;
use crate::reconstruction::{Reconstruction, ReconstructionConfig};
use crate::simulator::{make_surface, simulate_scan, ScanOutput, ScanTrajectory, SensorConfig, SurfaceSpec};

/// One pair of control points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub i: usize,
    pub j: usize,
    pub true_length_mm: f64,
    pub measured_length_mm: f64,
    /// measured - true
    pub distance_error_mm: f64,
    /// measured - true orientation, wrapped to (-180, 180]
    pub angle_error_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub segments: Vec<Segment>,
    pub distance_mae_mm: f64,
    pub angle_mae_deg: f64,
}

fn wrap_deg(a: f64) -> f64 {
    let r = (a + 180.0).rem_euclid(360.0) - 180.0;
    if r == -180.0 {
        180.0
    } else {
        r
    }
}

/// Length and orientation errors over every pair of points.
pub fn drift_metrics(measured_mm: &[[f64; 2]], truth_mm: &[[f64; 2]]) -> Result<DriftReport> {
    if measured_mm.len() != truth_mm.len() {
        return Err(Error::invalid("measured and true point lists differ in length"));
    }
    if truth_mm.len() < 2 {
        return Err(Error::InsufficientData("drift needs at least two control points".into()));
    }
    let mut segments = Vec::new();
    for i in 0..truth_mm.len() {
        for j in i + 1..truth_mm.len() {
            let t = [truth_mm[j][0] - truth_mm[i][0], truth_mm[j][1] - truth_mm[i][1]];
            let m = [measured_mm[j][0] - measured_mm[i][0], measured_mm[j][1] - measured_mm[i][1]];
            let (lt, lm) = (t[0].hypot(t[1]), m[0].hypot(m[1]));
            let angle = wrap_deg(m[1].atan2(m[0]).to_degrees() - t[1].atan2(t[0]).to_degrees());
            segments.push(Segment {
                i,
                j,
                true_length_mm: lt,
                measured_length_mm: lm,
                distance_error_mm: lm - lt,
                angle_error_deg: angle,
            });
        }
    }
    let n = segments.len() as f64;
    Ok(DriftReport {
        distance_mae_mm: segments.iter().map(|s| s.distance_error_mm.abs()).sum::<f64>() / n,
        angle_mae_deg: segments.iter().map(|s| s.angle_error_deg.abs()).sum::<f64>() / n,
        segments,
    })
}

/// Sub-pixel bump centres near each guess (px); `which` names the field in errors.
pub fn locate_control_points(
    height: &HeightField,
    guesses_px: &[[f64; 2]],
    search_radius_px: f64,
    bump_radius_px: f64,
    min_prominence_mm: f64,
    which: &'static str,
) -> Result<Vec<[f64; 2]>> {
    let (w, h) = height.dims();
    let missing = |index| Error::MissingControlPoint { index, which };
    guesses_px
        .iter()
        .enumerate()
        .map(|(index, g)| {
            let x0 = (g[0] - search_radius_px).floor().max(0.0) as usize;
            let y0 = (g[1] - search_radius_px).floor().max(0.0) as usize;
            let x1 = ((g[0] + search_radius_px).ceil() as isize).min(w as isize - 1);
            let y1 = ((g[1] + search_radius_px).ceil() as isize).min(h as isize - 1);
            if x1 < x0 as isize || y1 < y0 as isize {
                return Err(missing(index));
            }
            let (x1, y1) = (x1 as usize, y1 as usize);
            let mut window = Vec::new();
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if (x as f64 - g[0]).hypot(y as f64 - g[1]) <= search_radius_px {
                        window.push((x, y, height.get(x, y)));
                    }
                }
            }
            if window.is_empty() {
                return Err(missing(index));
            }
            let mut vals: Vec<f64> = window.iter().map(|v| v.2).collect();
            vals.sort_by(f64::total_cmp);
            let base = vals[vals.len() / 2];
            let &(px, py, peak) = window.iter().max_by(|a, b| a.2.total_cmp(&b.2)).unwrap();
            if peak - base < min_prominence_mm {
                return Err(missing(index));
            }
            // Centroid of the part above half prominence, re-centred twice.
            let level = base + 0.5 * (peak - base);
            let mut c = [px as f64, py as f64];
            for _ in 0..3 {
                let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
                for &(x, y, v) in &window {
                    if (x as f64 - c[0]).hypot(y as f64 - c[1]) <= bump_radius_px + 1.0 && v > level {
                        let wgt = v - level;
                        sw += wgt;
                        sx += wgt * x as f64;
                        sy += wgt * y as f64;
                    }
                }
                if sw <= 0.0 {
                    return Err(missing(index));
                }
                c = [sx / sw, sy / sw];
            }
            Ok(c)
        })
        .collect()
}

/// Default drift scenario: PCB with a 3x3 bump layout, 40 frames at 10 mm/s and 10 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftScenario {
    pub frames: usize,
    pub speed_mm_s: f64,
    pub fps: f64,
    pub jitter_sigma_px: f64,
    pub bump_radius_mm: f64,
    pub border_mm: f64,
}

impl Default for DriftScenario {
    fn default() -> Self {
        Self {
            frames: 40,
            speed_mm_s: 10.0,
            fps: 10.0,
            jitter_sigma_px: 0.2,
            bump_radius_mm: 1.0,
            border_mm: 3.0,
        }
    }
}

impl DriftScenario {
    pub fn build(&self, cfg: &SensorConfig, seed: u64) -> Result<(SurfaceSpec, ScanTrajectory, Vec<[f64; 2]>)> {
        let travel = (self.frames.max(1) - 1) as f64 * self.speed_mm_s / self.fps;
        let b = self.border_mm;
        let (sw, sh) = (cfg.sensing_width_mm, cfg.sensing_height_mm);
        let width = sw + travel + 2.0 * b;
        let height = sh + 2.0 * b;
        // Columns spread over the swept span, rows over the window height.
        let span = sw + travel;
        let xs = [b + 0.15 * span, b + 0.5 * span, b + 0.85 * span];
        let ys = [b + 0.25 * sh, b + 0.5 * sh, b + 0.75 * sh];
        let points: Vec<[f64; 2]> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect();
        let spec = SurfaceSpec::PcbLike {
            width_mm: width,
            height_mm: height,
            seed,
            control_points_mm: points.clone(),
            control_radius_mm: self.bump_radius_mm,
        };
        let origin = Pose2D::new(b / cfg.pixel_pitch, b / cfg.pixel_pitch);
        let traj = ScanTrajectory::linear(self.frames, self.speed_mm_s, self.fps, cfg.pixel_pitch, self.jitter_sigma_px, origin, seed)?;
        Ok((spec, traj, points))
    }
}

#[derive(Debug, Clone)]
pub struct DriftRun {
    pub report: DriftReport,
    pub truth_mm: Vec<[f64; 2]>,
    pub measured_mm: Vec<[f64; 2]>,
    /// Mean dot product of the stitched normals over every covered pixel.
    pub accuracy: f64,
    /// Last kept frame: estimated minus true pose, px.
    pub final_pose_error_px: f64,
    pub path_length_px: f64,
    pub reconstruction: Reconstruction,
    pub trajectory: ScanTrajectory,
}

/// Simulates the drift scenario, reconstructs it and scores the control-point layout.
pub fn run_drift_scan(
    cfg: &SensorConfig,
    scenario: &DriftScenario,
    source: GradientSource,
    rec_cfg: &ReconstructionConfig,
    seed: u64,
) -> Result<DriftRun> {
    let (spec, traj, points) = scenario.build(cfg, seed)?;
    let surface = make_surface(&spec, cfg.pixel_pitch)?;
    let scan = simulate_scan(&surface, &traj, cfg, seed)?;
    score_drift(cfg, scenario, &spec, &surface, &traj, &scan, &points, source, rec_cfg)
}

#[allow(clippy::too_many_arguments)]
pub fn score_drift(
    cfg: &SensorConfig,
    scenario: &DriftScenario,
    spec: &SurfaceSpec,
    surface: &HeightField,
    traj: &ScanTrajectory,
    scan: &ScanOutput,
    points_mm: &[[f64; 2]],
    source: GradientSource,
    rec_cfg: &ReconstructionConfig,
) -> Result<DriftRun> {
    let p = cfg.pixel_pitch;
    let detector = DetectorConfig::for_radius(cfg.marker_spec.dot_radius_px);
    let rec = reconstruct_simulated(scan, source, &detector, rec_cfg)?;
    let off = mosaic_offset(traj.origin_px, &rec);

    let r_px = scenario.bump_radius_mm / p;
    let search = 3.0 * r_px;
    let prominence = 0.3 * scenario.bump_radius_mm;
    let truth_guess: Vec<[f64; 2]> = points_mm.iter().map(|q| [q[0] / p, q[1] / p]).collect();
    let truth_px = locate_control_points(surface, &truth_guess, search, r_px, prominence, "truth")?;
    let rec_guess: Vec<[f64; 2]> = truth_px.iter().map(|q| [q[0] - off[0], q[1] - off[1]]).collect();
    let measured_px = locate_control_points(&rec.height, &rec_guess, search, r_px, prominence, "reconstruction")?;
    let to_mm = |v: &[[f64; 2]]| v.iter().map(|q| [q[0] * p, q[1] * p]).collect::<Vec<_>>();
    let (truth_mm, measured_mm) = (to_mm(&truth_px), to_mm(&measured_px));
    let report = drift_metrics(&measured_mm, &truth_mm)?;

    let (w, h) = rec.normals.dims();
    let truth = truth_normals(spec, surface, off, w, h)?;
    let accuracy = mean_dot_product(&rec.normals, &truth, &rec.mask)?;
    let last = rec.poses.last().expect("at least one pose");
    let true_last = traj.poses[last.frame_index];
    let final_pose_error_px = (last.pose.tx - true_last.tx).hypot(last.pose.ty - true_last.ty);
    Ok(DriftRun {
        report,
        truth_mm,
        measured_mm,
        accuracy,
        final_pose_error_px,
        path_length_px: traj.travel_px(),
        reconstruction: rec,
        trajectory: traj.clone(),
    })
}
