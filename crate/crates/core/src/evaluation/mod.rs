//! Evaluation protocols against simulator ground truth.

pub mod accuracy;
pub mod defect;
pub mod drift;
pub mod icp;
pub mod report;
pub mod sweep;

pub use accuracy::{accuracy_grid, AccuracyGrid};
pub use defect::{defect_compare, edge_width_mm, flat_noise_floor, DefectReport, DefectScenario};
pub use drift::{drift_metrics, locate_control_points, run_drift_scan, score_drift, DriftReport, DriftRun, DriftScenario, Segment};
pub use icp::{icp_align, IcpResult, RigidTransform};
pub use sweep::{spearman, speed_sweep, SweepPoint, DEFAULT_SPEEDS};
pub use report::IcpReport;

use crate::calibration::{predict_gradient_field, GradientRegressor};
use crate::error::Result;
use crate::frame::TactileFrame;
use crate::grid::{bilinear, gradient_of, normal_from_gradients, normal_from_slope, HeightField, Mask, NormalMap, Pose2D};
use crate::reconstruction::{reconstruct_normals, Reconstruction, ReconstructionConfig};
use crate::markers::{encode_frames, DetectorConfig};
use crate::simulator::{ScanOutput, SurfaceSpec};

/// Where per-frame normals come from.
#[derive(Debug, Clone, Copy)]
pub enum GradientSource<'a> {
    Model(&'a GradientRegressor),
    /// Ground-truth normals of the pressed patch, bypassing the regressor.
    Oracle,
}

impl GradientSource<'_> {
    /// Normals and validity of one frame over the sensing region.
    pub fn frame_normals(&self, frame: &TactileFrame, background: &TactileFrame, patch: &HeightField) -> Result<(NormalMap, Mask)> {
        match self {
            GradientSource::Model(m) => {
                let (g, mask) = predict_gradient_field(m, frame, background)?.sensing_region()?;
                Ok((normal_from_gradients(&g)?, mask))
            }
            GradientSource::Oracle => {
                let n = normal_from_gradients(&gradient_of(patch)?)?;
                let (w, h) = n.dims();
                Ok((n, Mask::full(w, h)))
            }
        }
    }
}

/// Runs the reconstruction pipeline on a simulated scan with the chosen normal source.
pub fn reconstruct_simulated(
    scan: &ScanOutput,
    source: GradientSource,
    detector: &DetectorConfig,
    cfg: &ReconstructionConfig,
) -> Result<Reconstruction> {
    use rayon::prelude::*;
    let per_frame: Vec<(NormalMap, Mask)> = scan
        .frames
        .par_iter()
        .zip(&scan.patches)
        .map(|(f, p)| source.frame_normals(f, &scan.background, p))
        .collect::<Result<_>>()?;
    let (maps, masks): (Vec<_>, Vec<_>) = per_frame.into_iter().unzip();
    let indices: Vec<usize> = scan.frames.iter().map(|f| f.frame_index).collect();
    let encoder = cfg.use_marker_prior.then(|| encode_frames(&scan.frames, detector, &cfg.matching));
    let priors: Option<Vec<f64>> = encoder.as_ref().map(|e| e[1..].iter().map(|s| s.displacement_px).collect());
    let mut rec = reconstruct_normals(&maps, Some(&masks), &indices, priors.as_deref(), cfg)?;
    rec.encoder = encoder;
    Ok(rec)
}

/// Ground-truth normals on a `width x height` grid whose pixel (0, 0) sits at surface pixel `offset_px`.
///
/// Uses the analytic normals when the surface has them, otherwise bilinearly
/// sampled finite-difference slopes of the rendered height field.
pub fn truth_normals(spec: &SurfaceSpec, surface: &HeightField, offset_px: [f64; 2], width: usize, height: usize) -> Result<NormalMap> {
    let p = surface.pixel_pitch();
    if let Some(n) = spec.analytic_normals(width, height, p, [offset_px[0] * p, offset_px[1] * p]) {
        return Ok(n);
    }
    let g = gradient_of(surface)?;
    let (sw, sh) = g.dims();
    let gx: Vec<f64> = g.data().iter().map(|v| v[0]).collect();
    let gy: Vec<f64> = g.data().iter().map(|v| v[1]).collect();
    let data = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64 + offset_px[0], (i / width) as f64 + offset_px[1]);
            normal_from_slope(bilinear(&gx, sw, sh, x, y), bilinear(&gy, sw, sh, x, y))
        })
        .collect();
    NormalMap::new(width, height, p, data)
}

/// Surface pixel of mosaic pixel (0, 0) for a reconstruction of a simulated scan.
pub fn mosaic_offset(scan_origin: Pose2D, rec: &Reconstruction) -> [f64; 2] {
    [scan_origin.tx + rec.origin[0] as f64, scan_origin.ty + rec.origin[1] as f64]
}
