//! End-to-end scan reconstruction: gradients, normals, marker prior, flow, stitching, integration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::flow::{estimate_flow, FlowConfig, FlowEstimate};
use super::poisson::poisson_integrate;
use super::stitch::{default_steepness, sigmoid_weight_map, stitch};
use crate::calibration::{predict_gradient_field, GradientRegressor};
use crate::error::{Error, Result};
use crate::frame::TactileFrame;
use crate::grid::{gradients_from_normals, normal_from_gradients, HeightField, Mask, NormalMap, Pose2D};
use crate::markers::{encode_frames, DetectorConfig, EncoderStep, MatchConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub flow: FlowConfig,
    pub margin_frac: f64,
    pub steepness: f64,
    pub use_marker_prior: bool,
    /// Frames that moved less than this since the last kept frame are skipped.
    pub min_step_px: f64,
    pub matching: MatchConfig,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            margin_frac: 0.1,
            steepness: default_steepness(),
            use_marker_prior: true,
            min_step_px: 1.0,
            matching: MatchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseSource {
    Origin,
    Flow,
    /// Flow was unreliable; the initial guess was kept.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub frame_index: usize,
    pub pose: Pose2D,
    pub confidence: f64,
    pub source: PoseSource,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub normals: NormalMap,
    /// Pixels covered by at least one frame.
    pub mask: Mask,
    pub height: HeightField,
    /// Kept frames only, in order.
    pub poses: Vec<FramePose>,
    /// Mosaic pixel (0, 0) relative to the first frame, px.
    pub origin: [i64; 2],
    pub encoder: Option<Vec<EncoderStep>>,
}

/// Registers, stitches and integrates per-frame normal maps.
///
/// `priors[k]` is the marker displacement from frame `k` to `k + 1`.
pub fn reconstruct_normals(
    maps: &[NormalMap],
    masks: Option<&[Mask]>,
    frame_indices: &[usize],
    priors: Option<&[f64]>,
    cfg: &ReconstructionConfig,
) -> Result<Reconstruction> {
    if maps.is_empty() {
        return Err(Error::invalid("no frames to reconstruct"));
    }
    if frame_indices.len() != maps.len() || masks.is_some_and(|m| m.len() != maps.len()) {
        return Err(Error::invalid("per-frame inputs differ in length"));
    }
    if let Some(p) = priors {
        if p.len() + 1 != maps.len() {
            return Err(Error::invalid("need one marker displacement per frame pair"));
        }
    }

    // Drop frames that barely moved according to the encoder.
    let mut kept = vec![(0usize, 0.0f64)];
    match priors {
        Some(p) => {
            let mut acc = 0.0;
            for (k, d) in p.iter().enumerate() {
                acc += d;
                if acc.abs() >= cfg.min_step_px {
                    kept.push((k + 1, acc));
                    acc = 0.0;
                }
            }
        }
        None => kept.extend((1..maps.len()).map(|k| (k, 0.0))),
    }
    if kept.len() < maps.len() {
        log::info!("kept {} of {} frames after decimation", kept.len(), maps.len());
    }

    let mut poses = vec![FramePose {
        frame_index: frame_indices[0],
        pose: Pose2D::ORIGIN,
        confidence: 1.0,
        source: PoseSource::Origin,
    }];
    for pair in kept.windows(2) {
        let (a, b) = (pair[0].0, pair[1].0);
        let init = Pose2D::new(pair[1].1, 0.0);
        let est = estimate_flow(&maps[a], &maps[b], init, &cfg.flow)?;
        let (delta, source) = if est.is_reliable(&cfg.flow) {
            (est, PoseSource::Flow)
        } else {
            log::warn!(
                "frame {}: flow unreliable (confidence {:.3}, converged {}, degenerate {}); using initial guess ({:.2}, {:.2})",
                frame_indices[b],
                est.confidence,
                est.converged,
                est.degenerate,
                init.tx,
                init.ty
            );
            (FlowEstimate::fixed(init, est.confidence), PoseSource::Fallback)
        };
        let prev = poses.last().unwrap().pose;
        poses.push(FramePose {
            frame_index: frame_indices[b],
            pose: prev + delta.as_pose(),
            confidence: est.confidence,
            source,
        });
    }

    let (w, h) = maps[0].dims();
    let weights = sigmoid_weight_map(w, h, cfg.margin_frac, cfg.steepness)?;
    let kept_maps: Vec<NormalMap> = kept.iter().map(|&(k, _)| maps[k].clone()).collect();
    let kept_masks: Option<Vec<Mask>> = masks.map(|m| kept.iter().map(|&(k, _)| m[k].clone()).collect());
    let pose_list: Vec<Pose2D> = poses.iter().map(|p| p.pose).collect();
    let (mosaic, normals, mask) = stitch(&kept_maps, &pose_list, &weights, kept_masks.as_deref())?;

    let g = gradients_from_normals(&normals);
    let height = poisson_integrate(&g, &Mask::full(g.width(), g.height()))?;
    Ok(Reconstruction {
        normals,
        mask,
        height,
        poses,
        origin: mosaic.origin(),
        encoder: None,
    })
}

/// Per-frame normals over the sensing region and their validity masks.
pub fn predict_frame_normals(
    frames: &[TactileFrame],
    background: &TactileFrame,
    model: &GradientRegressor,
) -> Result<Vec<(NormalMap, Mask)>> {
    frames
        .par_iter()
        .map(|f| {
            let (g, mask) = predict_gradient_field(model, f, background)?.sensing_region()?;
            let n = g.data().len().max(1) as f64;
            let mean = g.data().iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
            log::debug!("frame {}: mean gradient ({:.4}, {:.4})", f.frame_index, mean[0] / n, mean[1] / n);
            Ok((normal_from_gradients(&g)?, mask))
        })
        .collect()
}

/// Full pipeline from rendered frames.
pub fn reconstruct_scan(
    frames: &[TactileFrame],
    background: &TactileFrame,
    model: &GradientRegressor,
    detector: &DetectorConfig,
    cfg: &ReconstructionConfig,
) -> Result<Reconstruction> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to reconstruct"));
    }
    let predicted = predict_frame_normals(frames, background, model)?;
    let (maps, masks): (Vec<_>, Vec<_>) = predicted.into_iter().unzip();
    let indices: Vec<usize> = frames.iter().map(|f| f.frame_index).collect();
    let encoder = cfg.use_marker_prior.then(|| encode_frames(frames, detector, &cfg.matching));
    let priors: Option<Vec<f64>> = encoder.as_ref().map(|e| e[1..].iter().map(|s| s.displacement_px).collect());
    let mut rec = reconstruct_normals(&maps, Some(&masks), &indices, priors.as_deref(), cfg)?;
    rec.encoder = encoder;
    Ok(rec)
}
