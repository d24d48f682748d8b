//! Scan speed against stitched-normal accuracy.

use serde::{Deserialize, Serialize};

use super::{mosaic_offset, reconstruct_simulated, truth_normals, GradientSource};
use crate::error::{Error, Result};
use crate::grid::{mean_dot_product, Pose2D};
use crate::markers::DetectorConfig;
use crate::reconstruction::ReconstructionConfig;
use crate::simulator::{make_surface, simulate_scan, SensorConfig, ScanTrajectory, SurfaceSpec};

pub const DEFAULT_SPEEDS: [f64; 7] = [3.0, 5.0, 10.0, 15.0, 25.0, 35.0, 45.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub speed_mm_s: f64,
    pub frames: usize,
    pub accuracy: f64,
}

/// Margin around the swept window on the test surface.
const BORDER_MM: f64 = 2.0;

/// Hex indenter centred in the swept strip, and a straight pass covering at least `travel_mm`.
pub fn sweep_scenario(cfg: &SensorConfig, speed_mm_s: f64, fps: f64, travel_mm: f64) -> Result<(SurfaceSpec, ScanTrajectory)> {
    if !(speed_mm_s > 0.0 && fps > 0.0 && travel_mm >= 0.0) {
        return Err(Error::invalid("sweep needs positive speed and fps"));
    }
    let step_mm = speed_mm_s / fps;
    let steps = (travel_mm / step_mm - 1e-9).ceil().max(1.0) as usize;
    let travel = steps as f64 * step_mm;
    let (sw, sh) = (cfg.sensing_width_mm, cfg.sensing_height_mm);
    let spec = SurfaceSpec::hex_indenter(
        sw + travel + 2.0 * BORDER_MM,
        sh + 2.0 * BORDER_MM,
        [BORDER_MM + (sw + travel) / 2.0, BORDER_MM + sh / 2.0],
    );
    let origin = Pose2D::new(BORDER_MM / cfg.pixel_pitch, BORDER_MM / cfg.pixel_pitch);
    let traj = ScanTrajectory::linear(steps + 1, speed_mm_s, fps, cfg.pixel_pitch, 0.0, origin, 0)?;
    Ok((spec, traj))
}

/// Mean dot product over the indenter footprint of the stitched map, per speed.
pub fn speed_sweep(
    cfg: &SensorConfig,
    source: GradientSource,
    speeds: &[f64],
    fps: f64,
    travel_mm: f64,
    rec_cfg: &ReconstructionConfig,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let detector = DetectorConfig::for_radius(cfg.marker_spec.dot_radius_px);
    speeds
        .iter()
        .map(|&speed| {
            let (spec, traj) = sweep_scenario(cfg, speed, fps, travel_mm)?;
            let surface = make_surface(&spec, cfg.pixel_pitch)?;
            let scan = simulate_scan(&surface, &traj, cfg, seed)?;
            let rec = reconstruct_simulated(&scan, source, &detector, rec_cfg)?;
            let off = mosaic_offset(traj.origin_px, &rec);
            let (w, h) = rec.normals.dims();
            let truth = truth_normals(&spec, &surface, off, w, h)?;
            let p = cfg.pixel_pitch;
            let footprint = spec
                .footprint_mask(w, h, p, [off[0] * p, off[1] * p])
                .expect("hex has a footprint");
            let accuracy = mean_dot_product(&rec.normals, &truth, &footprint.and(&rec.mask)?)?;
            log::info!("speed {speed} mm/s: {} frames, accuracy {accuracy:.5}", traj.poses.len());
            Ok(SweepPoint {
                speed_mm_s: speed,
                frames: traj.poses.len(),
                accuracy,
            })
        })
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; `None` if either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_known_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 100.0]), Some(1.0));
        // ties: ranks (1.5, 1.5, 3) vs (1, 2, 3)
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.8660254037844386).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn scenario_covers_travel() {
        let cfg = SensorConfig::default();
        let (spec, traj) = sweep_scenario(&cfg, 45.0, 10.0, 12.0).unwrap();
        assert_eq!(traj.poses.len(), 4);
        assert!((traj.travel_px() - 54.0).abs() < 1e-9);
        let (w, _) = spec.size_mm();
        assert!((w - (60.0 + 13.5 + 4.0)).abs() < 1e-9);
        let (_, slow) = sweep_scenario(&cfg, 3.0, 10.0, 12.0).unwrap();
        assert_eq!(slow.poses.len(), 41);
    }
}
