//! Belt displacement from marker interval patterns.

use serde::{Deserialize, Serialize};

use super::detect::{detect_markers, DetectorConfig, MarkerObservation};
use crate::error::{Error, Result};
use crate::frame::TactileFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Candidate displacements outside this range are not considered (px).
    pub min_displacement_px: f64,
    pub max_displacement_px: f64,
    pub min_overlap: usize,
    /// Second-best score within this factor of the best is ambiguous.
    pub ambiguity_ratio: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            min_displacement_px: -8.0,
            max_displacement_px: 56.0,
            min_overlap: 3,
            ambiguity_ratio: 1.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sensor advance in px: markers move by `-displacement` in the image.
    pub displacement_px: f64,
    /// `next[j]` pairs with `prev[j + offset]`.
    pub offset: i64,
    pub best_score: f64,
    pub second_score: f64,
}

/// Matches interval sequences of two observations of the same band.
pub fn match_displacement(prev: &MarkerObservation, next: &MarkerObservation, cfg: &MatchConfig) -> Result<MatchResult> {
    let p = prev.xs();
    let q = next.xs();
    let min = cfg.min_overlap.max(2);
    if p.len() < min || q.len() < min {
        return Err(Error::InsufficientData(format!(
            "need {min} markers per frame, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    let (m, n) = (p.len() as i64, q.len() as i64);
    let mut scored: Vec<(f64, i64, f64)> = Vec::new();
    for o in -(n - min as i64)..=(m - min as i64) {
        let j0 = (-o).max(0);
        let j1 = n.min(m - o);
        if j1 - j0 < min as i64 {
            continue;
        }
        let disp = (j0..j1).map(|j| p[(j + o) as usize] - q[j as usize]).sum::<f64>() / (j1 - j0) as f64;
        if disp < cfg.min_displacement_px || disp >= cfg.max_displacement_px {
            continue;
        }
        let ssd = (j0..j1 - 1)
            .map(|j| {
                let dq = q[(j + 1) as usize] - q[j as usize];
                let dp = p[(j + o + 1) as usize] - p[(j + o) as usize];
                (dq - dp).powi(2)
            })
            .sum::<f64>()
            / (j1 - j0 - 1) as f64;
        scored.push((ssd, o, disp));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let Some(&(best, offset, disp)) = scored.first() else {
        return Err(Error::InsufficientData("no marker alignment inside the search window".into()));
    };
    let second = scored.get(1).map_or(f64::INFINITY, |s| s.0);
    if second <= cfg.ambiguity_ratio * best + 1e-6 {
        return Err(Error::AmbiguousMatch { best, second });
    }
    Ok(MatchResult {
        displacement_px: disp,
        offset,
        best_score: best,
        second_score: second,
    })
}

/// One row of the encoder log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderStep {
    pub frame_index: usize,
    pub displacement_px: f64,
    pub cumulative_px: f64,
    /// Neither band matched uniquely; the previous displacement was held.
    pub ambiguous: bool,
}

/// Displacement between two frames, averaged over the bands that match.
pub fn frame_displacement(prev: &[MarkerObservation; 2], next: &[MarkerObservation; 2], cfg: &MatchConfig) -> Result<f64> {
    let mut ok = Vec::new();
    let mut last_err = None;
    for b in 0..2 {
        match match_displacement(&prev[b], &next[b], cfg) {
            Ok(m) => ok.push(m.displacement_px),
            Err(e) => last_err = Some(e),
        }
    }
    if ok.is_empty() {
        return Err(last_err.expect("two bands tried"));
    }
    Ok(ok.iter().sum::<f64>() / ok.len() as f64)
}

/// Relative position encoder over a frame sequence; the first row is frame 0 at zero.
pub fn encode_frames(frames: &[TactileFrame], detector: &DetectorConfig, cfg: &MatchConfig) -> Vec<EncoderStep> {
    use rayon::prelude::*;
    let obs: Vec<[MarkerObservation; 2]> = frames.par_iter().map(|f| detect_markers(f, detector)).collect();
    encode_observations(&obs, cfg)
}

pub fn encode_observations(obs: &[[MarkerObservation; 2]], cfg: &MatchConfig) -> Vec<EncoderStep> {
    let mut out = Vec::with_capacity(obs.len());
    let Some(first) = obs.first() else {
        return out;
    };
    out.push(EncoderStep {
        frame_index: first[0].frame_index,
        displacement_px: 0.0,
        cumulative_px: 0.0,
        ambiguous: false,
    });
    let mut held = 0.0;
    let mut cumulative = 0.0;
    for pair in obs.windows(2) {
        let (d, ambiguous) = match frame_displacement(&pair[0], &pair[1], cfg) {
            Ok(d) => (d, false),
            Err(e) => {
                log::warn!("frame {}: marker match failed ({e}); holding {held:.3} px", pair[1][0].frame_index);
                (held, true)
            }
        };
        held = d;
        cumulative += d;
        out.push(EncoderStep {
            frame_index: pair[1][0].frame_index,
            displacement_px: d,
            cumulative_px: cumulative,
            ambiguous,
        });
    }
    out
}
