//! Single-press normal accuracy over a grid of indenter positions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GradientSource;
use crate::calibration::{grid_locations, render_background};
use crate::error::{Error, Result};
use crate::grid::mean_dot_product;
use crate::simulator::{frame_seed, make_surface, render_frame, FrameParams, SensorConfig, SurfaceSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGrid {
    pub rows: usize,
    pub cols: usize,
    pub indenter: String,
    /// Indenter centres in sensing-region mm, row-major.
    pub locations_mm: Vec<[f64; 2]>,
    /// Mean normal dot product per cell, row-major.
    pub values: Vec<f64>,
}

impl AccuracyGrid {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Inset from the sensing edges keeping the whole hex footprint inside.
pub const HEX_INSET_MM: f64 = 4.0;

/// Presses the hex indenter at every grid node and scores the single-frame normals.
pub fn accuracy_grid(cfg: &SensorConfig, source: GradientSource, rows: usize, cols: usize, seed: u64) -> Result<AccuracyGrid> {
    cfg.validate()?;
    let (w, h) = cfg.sensing_px();
    let p = cfg.pixel_pitch;
    let locations = grid_locations(rows, cols, (w - 1) as f64 * p, (h - 1) as f64 * p, HEX_INSET_MM)?;
    let background = render_background(cfg, frame_seed(seed, u64::MAX - 2))?;

    let values = locations
        .par_iter()
        .enumerate()
        .map(|(k, &c)| {
            let spec = SurfaceSpec::hex_indenter(cfg.sensing_width_mm, cfg.sensing_height_mm, c);
            let truth = spec.analytic_normals(w, h, p, [0.0, 0.0]).expect("hex has analytic normals");
            let footprint = spec.footprint_mask(w, h, p, [0.0, 0.0]).expect("hex has a footprint");
            let (normals, valid) = match source {
                GradientSource::Oracle => (truth.clone(), footprint.clone()),
                GradientSource::Model(_) => {
                    let patch = make_surface(&spec, p)?;
                    let frame = render_frame(&patch, cfg, &FrameParams { frame_index: k, ..FrameParams::default() }, frame_seed(seed, k as u64))?;
                    source.frame_normals(&frame, &background, &patch)?
                }
            };
            let mask = footprint.and(&valid)?;
            if mask.count() == 0 {
                return Err(Error::EmptyMask);
            }
            mean_dot_product(&normals, &truth, &mask)
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(AccuracyGrid {
        rows,
        cols,
        indenter: "hex_pyramid".into(),
        locations_mm: locations,
        values,
    })
}
