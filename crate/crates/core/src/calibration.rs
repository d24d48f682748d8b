//! Sphere-press calibration and the pixel-wise RGBXY -> (gx, gy) regressor.
//!
//! A ball is pressed at every node of a rows x cols grid over the sensing
//! area. Pixels inside the contact circle are labelled with the analytic
//! spherical-cap slope and paired with their background-subtracted colour and
//! normalised position. An MLP is then fitted to those pairs.

use std::path::Path;

use ndarray::Array2;
use rand::seq::index::{sample, sample_weighted};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::TactileFrame;
use crate::grid::{GradientField, Mask};
use crate::io;
use crate::nn::{
    self, ModelFile, Regressor, TargetScaling, TrainConfig, MODEL_SCHEMA_VERSION,
};
use crate::simulator::{frame_seed, make_surface, render_frame, render_reference, FrameParams, SensorConfig, SurfaceSpec};

pub const MIN_TRAINING_SAMPLES: usize = 1000;
const MODEL_KIND: &str = "gradient_regressor";
const HEAD: &str = "gradient";

/// One labelled pixel. Colours are background-subtracted and mapped to
/// [0, 1] (0.5 = no change); `x`, `y` are normalised sensing coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub x: f64,
    pub y: f64,
    pub gx: f64,
    pub gy: f64,
}

impl CalibrationSample {
    fn features(&self) -> [f64; 5] {
        [self.r, self.g, self.b, self.x, self.y]
    }
}

/// Press protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPlan {
    /// Grid rows (along y) and columns (along x).
    pub rows: usize,
    pub cols: usize,
    pub ball_radius_mm: f64,
    pub ball_depth_mm: f64,
    /// Random subset of contact pixels kept per press; `None` keeps all.
    pub max_samples_per_press: Option<usize>,
    /// Width of the untouched ring around each contact that supplies zero-slope samples.
    pub flat_ring_mm: f64,
    pub flat_samples_per_press: usize,
}

impl Default for CalibrationPlan {
    fn default() -> Self {
        Self {
            rows: 13,
            cols: 11,
            ball_radius_mm: 4.0,
            ball_depth_mm: 0.8,
            max_samples_per_press: Some(200),
            flat_ring_mm: 1.5,
            flat_samples_per_press: 50,
        }
    }
}

impl CalibrationPlan {
    pub fn contact_radius_mm(&self) -> f64 {
        let r = self.ball_radius_mm;
        (r * r - (r - self.ball_depth_mm).powi(2)).sqrt()
    }

    /// Ball centres in sensing-region mm, row-major.
    pub fn locations(&self, cfg: &SensorConfig) -> Result<Vec<[f64; 2]>> {
        let (w, h) = cfg.sensing_px();
        let (w_mm, h_mm) = ((w - 1) as f64 * cfg.pixel_pitch, (h - 1) as f64 * cfg.pixel_pitch);
        let margin = self.contact_radius_mm() + cfg.pixel_pitch;
        grid_locations(self.rows, self.cols, w_mm, h_mm, margin)
    }
}

/// Evenly spaced points inset by `margin` from each edge.
pub fn grid_locations(rows: usize, cols: usize, w_mm: f64, h_mm: f64, margin: f64) -> Result<Vec<[f64; 2]>> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("grid needs at least one row and column"));
    }
    if 2.0 * margin > w_mm || 2.0 * margin > h_mm {
        return Err(Error::OutOfBounds {
            x: margin,
            y: margin,
            width: w_mm as usize,
            height: h_mm as usize,
        });
    }
    let coord = |k: usize, n: usize, span: f64| {
        if n == 1 {
            span / 2.0
        } else {
            margin + k as f64 * (span - 2.0 * margin) / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push([coord(c, cols, w_mm), coord(r, rows, h_mm)]);
        }
    }
    Ok(out)
}

/// Background-subtracted model inputs for one pixel.
#[inline]
pub(crate) fn pixel_features(frame: &TactileFrame, bg: &TactileFrame, x: usize, y: usize, sw: usize, sh: usize) -> [f64; 5] {
    let s = frame.sensing();
    let p = frame.pixel(s.x + x, s.y + y);
    let q = bg.pixel(s.x + x, s.y + y);
    let d = |c: usize| ((p[c] as f64 - q[c] as f64) / 255.0 + 1.0) / 2.0;
    [
        d(0),
        d(1),
        d(2),
        x as f64 / (sw - 1).max(1) as f64,
        y as f64 / (sh - 1).max(1) as f64,
    ]
}

/// Renders the no-contact reference frame for a sensor.
pub fn render_background(cfg: &SensorConfig, seed: u64) -> Result<TactileFrame> {
    render_reference(cfg, &FrameParams::default(), seed)
}

/// Renders one ball press per grid node and labels contact pixels analytically.
pub fn generate_calibration_set(
    cfg: &SensorConfig,
    plan: &CalibrationPlan,
    seed: u64,
) -> Result<Vec<CalibrationSample>> {
    cfg.validate()?;
    if !(plan.ball_radius_mm > 0.0 && plan.ball_depth_mm > 0.0 && plan.ball_depth_mm <= plan.ball_radius_mm) {
        return Err(Error::invalid("ball radius and depth must satisfy 0 < depth <= radius"));
    }
    let (sw, sh) = cfg.sensing_px();
    let background = render_background(cfg, frame_seed(seed, u64::MAX - 2))?;
    let contact = plan.contact_radius_mm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();

    for (k, center) in plan.locations(cfg)?.into_iter().enumerate() {
        let spec = SurfaceSpec::SpherePress {
            width_mm: cfg.sensing_width_mm,
            height_mm: cfg.sensing_height_mm,
            center_mm: center,
            radius_mm: plan.ball_radius_mm,
            depth_mm: plan.ball_depth_mm,
        };
        let patch = make_surface(&spec, cfg.pixel_pitch)?;
        let frame = render_frame(
            &patch,
            cfg,
            &FrameParams { frame_index: k, ..FrameParams::default() },
            frame_seed(seed, k as u64),
        )?;

        // Contact pixels carry the cap slope. A ring just outside the rim is
        // flat; without it small slopes are barely represented.
        let (ring_in, ring_out) = (contact + 2.0 * cfg.pixel_pitch, contact + 2.0 * cfg.pixel_pitch + plan.flat_ring_mm);
        let (mut press, mut flat) = (Vec::new(), Vec::new());
        for y in 0..sh {
            for x in 0..sw {
                let (xm, ym) = (x as f64 * cfg.pixel_pitch, y as f64 * cfg.pixel_pitch);
                let d = (xm - center[0]).hypot(ym - center[1]);
                // Pixels straddling the rim shade with a blend of cap and flat
                // slopes, so their analytic label would be wrong.
                let bucket = if d < contact - 1.5 * cfg.pixel_pitch {
                    &mut press
                } else if d >= ring_in && d < ring_out {
                    &mut flat
                } else {
                    continue;
                };
                let [gx, gy] = spec.analytic_gradient(xm, ym).expect("sphere has analytic slope");
                let f = pixel_features(&frame, &background, x, y, sw, sh);
                bucket.push((d, CalibrationSample { r: f[0], g: f[1], b: f[2], x: f[3], y: f[4], gx, gy }));
            }
        }
        // Contact pixels are drawn uniformly in radius rather than area so the
        // shallow slopes near the apex are not swamped by the rim.
        let pitch = cfg.pixel_pitch;
        let mut keep = |v: Vec<(f64, CalibrationSample)>, max: Option<usize>, radial: bool| match max {
            Some(max) if v.len() > max => {
                let mut idx = if radial {
                    sample_weighted(&mut rng, v.len(), |i| 1.0 / v[i].0.max(pitch), max)
                        .expect("weights are positive and finite")
                        .into_vec()
                } else {
                    sample(&mut rng, v.len(), max).into_vec()
                };
                idx.sort_unstable();
                samples.extend(idx.into_iter().map(|i| v[i].1));
            }
            _ => samples.extend(v.into_iter().map(|p| p.1)),
        };
        keep(press, plan.max_samples_per_press, true);
        keep(flat, Some(plan.flat_samples_per_press), false);
    }
    Ok(samples)
}

/// Trained RGBXY -> (gx, gy) model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRegressor {
    pub model: Regressor,
    pub pixel_pitch: f64,
}

#[derive(Serialize, Deserialize)]
struct GradientModelFile {
    #[serde(flatten)]
    file: ModelFile,
    pixel_pitch_mm: f64,
}

impl GradientRegressor {
    pub fn validation_mse(&self) -> f64 {
        self.model.metadata.val_mse
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GradientModelFile {
            file: ModelFile {
                schema_version: MODEL_SCHEMA_VERSION,
                kind: MODEL_KIND.into(),
                heads: vec![self.model.to_record(HEAD)],
            },
            pixel_pitch_mm: self.pixel_pitch,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: GradientModelFile = serde_json::from_str(text)?;
        f.file.check(MODEL_KIND)?;
        let model = f.file.head(HEAD)?;
        if model.net.input_dim() != 5 || model.net.output_dim() != 2 {
            return Err(Error::Format("gradient model must map 5 inputs to 2 outputs".into()));
        }
        Ok(Self { model, pixel_pitch: f.pixel_pitch_mm })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_text(path, &(self.to_json()? + "\n"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Fits the gradient regressor on a seeded 60:20:20 split.
pub fn train_gradient_regressor(
    samples: &[CalibrationSample],
    train: &TrainConfig,
    pixel_pitch: f64,
    seed: u64,
) -> Result<GradientRegressor> {
    if samples.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} calibration samples, need at least {MIN_TRAINING_SAMPLES}",
            samples.len()
        )));
    }
    let x = Array2::from_shape_fn((samples.len(), 5), |(i, j)| samples[i].features()[j]);
    let y = Array2::from_shape_fn((samples.len(), 2), |(i, j)| if j == 0 { samples[i].gx } else { samples[i].gy });
    let model = nn::train_regressor(x.view(), y.view(), train, TargetScaling::Standardize, seed)?;
    log::info!(
        "gradient regressor: {} samples, final loss {:.3e}, val MSE {:.3e}",
        samples.len(),
        model.metadata.final_loss,
        model.metadata.val_mse
    );
    Ok(GradientRegressor { model, pixel_pitch })
}

/// Per-pixel gradients over a full frame; band and saturated pixels are masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedGradients {
    pub field: GradientField,
    pub mask: Mask,
    sensing: crate::frame::Rect,
}

impl PredictedGradients {
    /// Gradients and validity restricted to the sensing region.
    pub fn sensing_region(&self) -> Result<(GradientField, Mask)> {
        let s = self.sensing;
        let w = self.field.width();
        let mut g = Vec::with_capacity(s.width * s.height);
        let mut m = Vec::with_capacity(s.width * s.height);
        for y in s.y..s.y + s.height {
            for x in s.x..s.x + s.width {
                g.push(self.field.data()[y * w + x]);
                m.push(self.mask.get(x, y));
            }
        }
        Ok((
            GradientField::new(s.width, s.height, self.field.pixel_pitch(), g)?,
            Mask::new(s.width, s.height, m)?,
        ))
    }
}

const PREDICT_CHUNK: usize = 4096;

pub fn predict_gradient_field(
    model: &GradientRegressor,
    frame: &TactileFrame,
    background: &TactileFrame,
) -> Result<PredictedGradients> {
    if frame.dims() != background.dims() {
        return Err(Error::DimensionMismatch {
            expected: background.dims(),
            actual: frame.dims(),
        });
    }
    if frame.sensing() != background.sensing() {
        return Err(Error::invalid("frame and background use different sensing regions"));
    }
    let (fw, fh) = frame.dims();
    let s = frame.sensing();
    let (sw, sh) = (s.width, s.height);
    let n = sw * sh;

    let mut preds = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + PREDICT_CHUNK).min(n);
        let x = Array2::from_shape_fn((end - start, 5), |(i, j)| {
            let p = start + i;
            pixel_features(frame, background, p % sw, p / sw, sw, sh)[j]
        });
        let y = model.model.predict(x.view());
        preds.extend(y.rows().into_iter().map(|r| [r[0], r[1]]));
        start = end;
    }

    let mut data = vec![[0.0; 2]; fw * fh];
    let mut mask = Mask::from_fn(fw, fh, |_, _| false);
    for y in 0..sh {
        for x in 0..sw {
            let (gx, gy) = (x + s.x, y + s.y);
            let g = preds[y * sw + x];
            let finite = g[0].is_finite() && g[1].is_finite();
            data[gy * fw + gx] = if finite { g } else { [0.0, 0.0] };
            let saturated = frame.pixel(gx, gy).contains(&255);
            mask.set(gx, gy, finite && !saturated);
        }
    }
    Ok(PredictedGradients {
        field: GradientField::new(fw, fh, model.pixel_pitch, data)?,
        mask,
        sensing: s,
    })
}
