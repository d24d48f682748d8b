//! Spline features of the marker bands and the roll / pitch / force regressors.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::detect::MarkerObservation;
use crate::error::{Error, Result};
use crate::frame::Band;
use crate::io;
use crate::nn::{self, ModelFile, Regressor, TargetScaling, TrainConfig, MODEL_SCHEMA_VERSION};
use crate::simulator::{frame_seed, SensorConfig};

pub const SAMPLES_PER_BAND: usize = 10;
pub const FEATURE_DIM: usize = 2 * SAMPLES_PER_BAND;

/// Natural cubic spline through points with strictly increasing x.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::invalid("spline x and y differ in length"));
        }
        if n < 4 {
            return Err(Error::InsufficientData(format!("cubic spline needs 4 points, got {n}")));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spline abscissae must increase strictly"));
        }
        // Tridiagonal system for interior second derivatives (Thomas algorithm).
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let f = h[i] / diag[i - 1];
            diag[i] -= f * h[i];
            rhs[i] -= f * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        for i in (0..k).rev() {
            let upper = if i + 1 < k { h[i + 1] * m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper) / diag[i];
        }
        Ok(Self { x: x.to_vec(), y: y.to_vec(), m })
    }

    /// Evaluates the spline; outside the knots the end cubic is extended.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - t) / h, (t - x0) / h);
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Fixed sample abscissae: 10 points from 5% to 95% of the frame width.
pub fn feature_abscissae(frame_width: usize) -> [f64; SAMPLES_PER_BAND] {
    let (lo, hi) = (0.05 * frame_width as f64, 0.95 * frame_width as f64);
    std::array::from_fn(|k| lo + k as f64 * (hi - lo) / (SAMPLES_PER_BAND - 1) as f64)
}

/// Spline y-values at the fixed abscissae, left band then right band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactFeatures(pub [f64; FEATURE_DIM]);

pub fn extract_contact_features(left: &MarkerObservation, right: &MarkerObservation, frame_width: usize) -> Result<ContactFeatures> {
    if left.band != Band::Left || right.band != Band::Right {
        return Err(Error::invalid("features need a left and a right observation"));
    }
    let xs = feature_abscissae(frame_width);
    let mut out = [0.0; FEATURE_DIM];
    for (b, obs) in [left, right].into_iter().enumerate() {
        let x: Vec<f64> = obs.centers.iter().map(|c| c[0]).collect();
        let y: Vec<f64> = obs.centers.iter().map(|c| c[1]).collect();
        let s = CubicSpline::natural(&x, &y)?;
        for (k, &t) in xs.iter().enumerate() {
            out[b * SAMPLES_PER_BAND + k] = s.eval(t);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite contact feature"));
    }
    Ok(ContactFeatures(out))
}

/// Coefficients of the additive band-deflection model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeflectionParams {
    /// px per N, same on both bands.
    pub alpha: f64,
    /// px per degree of roll at the band ends, opposite sign per band.
    pub beta: f64,
    /// px per degree of pitch, opposite sign per band.
    pub gamma: f64,
    /// Constant quadratic sag at the band ends, px.
    pub sag_px: f64,
}

impl Default for DeflectionParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.4,
            gamma: 3.0,
            sag_px: 2.0,
        }
    }
}

pub const ROLL_RANGE: (f64, f64) = (-10.0, 10.0);
pub const PITCH_RANGE: (f64, f64) = (-3.0, 3.0);
pub const FORCE_RANGE: (f64, f64) = (0.0, 60.0);

/// Contact state in degrees and newtons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactState {
    pub roll: f64,
    pub pitch: f64,
    pub force: f64,
}

impl ContactState {
    pub fn validate(&self) -> Result<()> {
        let inside = |v: f64, (lo, hi): (f64, f64)| v.is_finite() && v >= lo && v <= hi;
        if !inside(self.roll, ROLL_RANGE) || !inside(self.pitch, PITCH_RANGE) || !inside(self.force, FORCE_RANGE) {
            return Err(Error::invalid(format!(
                "contact state {self:?} outside roll ±10°, pitch ±3°, force 0..60 N"
            )));
        }
        Ok(())
    }
}

/// Undeflected band row plus the model terms at image column `x`.
pub fn deflection_profile(cfg: &SensorConfig, params: &DeflectionParams, band: Band, state: &ContactState, x: f64) -> f64 {
    let (w, _) = cfg.sensing_px();
    let xc = (w as f64 - 1.0) / 2.0;
    let u = (x - xc) / xc;
    let s = band.sign();
    cfg.band_center_y(band)
        + params.sag_px * u * u
        + params.alpha * state.force
        + params.beta * state.roll * s * u
        + params.gamma * state.pitch * s
}

/// Marker observations for a contact state with a marker phase and noise drawn from `seed`.
pub fn synthesize_deflection(
    state: &ContactState,
    cfg: &SensorConfig,
    params: &DeflectionParams,
    noise_sigma_px: f64,
    seed: u64,
) -> Result<[MarkerObservation; 2]> {
    state.validate()?;
    if !(noise_sigma_px >= 0.0 && noise_sigma_px.is_finite()) {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma_px).expect("checked sigma");
    let (lo, hi) = cfg.marker_x_range();
    let block = cfg.marker_spec.block_length();
    Ok(Band::BOTH.map(|band| {
        let phase = rng.gen_range(0.0..block);
        let centers = cfg
            .marker_spec
            .centers_in(phase, lo, hi)
            .into_iter()
            .map(|x| {
                let dy = if noise_sigma_px > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                [x, deflection_profile(cfg, params, band, state, x) + dy]
            })
            .collect();
        MarkerObservation { band, frame_index: 0, centers }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSample {
    pub features: ContactFeatures,
    pub state: ContactState,
}

/// Acquisition grid: pitch and roll steps, repetitions per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactGrid {
    pub pitch_step: f64,
    pub roll_step: f64,
    pub repetitions: usize,
}

impl Default for ContactGrid {
    fn default() -> Self {
        Self {
            pitch_step: 0.5,
            roll_step: 1.0,
            repetitions: 35,
        }
    }
}

fn steps((lo, hi): (f64, f64), step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

impl ContactGrid {
    pub fn pitches(&self) -> Vec<f64> {
        steps(PITCH_RANGE, self.pitch_step)
    }

    pub fn rolls(&self) -> Vec<f64> {
        steps(ROLL_RANGE, self.roll_step)
    }

    pub fn len(&self) -> usize {
        self.pitches().len() * self.rolls().len() * self.repetitions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Synthetic acquisition: every (pitch, roll) cell repeated with a uniform random force.
pub fn generate_contact_dataset(
    cfg: &SensorConfig,
    params: &DeflectionParams,
    grid: &ContactGrid,
    noise_sigma_px: f64,
    seed: u64,
) -> Result<Vec<ContactSample>> {
    if !(grid.pitch_step > 0.0 && grid.roll_step > 0.0) || grid.repetitions == 0 {
        return Err(Error::invalid("contact grid needs positive steps and repetitions"));
    }
    let (w, _) = cfg.sensing_px();
    let mut states = Vec::with_capacity(grid.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &pitch in &grid.pitches() {
        for &roll in &grid.rolls() {
            for _ in 0..grid.repetitions {
                let force = rng.gen_range(FORCE_RANGE.0..=FORCE_RANGE.1);
                states.push(ContactState { roll, pitch, force });
            }
        }
    }
    use rayon::prelude::*;
    states
        .par_iter()
        .enumerate()
        .map(|(i, state)| {
            let [l, r] = synthesize_deflection(state, cfg, params, noise_sigma_px, frame_seed(seed, i as u64))?;
            Ok(ContactSample {
                features: extract_contact_features(&l, &r, w)?,
                state: *state,
            })
        })
        .collect()
}

const MODEL_KIND: &str = "contact_model";

/// Angle head (roll, pitch) and force head, each on the 20 spline features.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactModel {
    pub angles: Regressor,
    pub force: Regressor,
}

pub fn default_contact_train_config() -> TrainConfig {
    TrainConfig {
        hidden: vec![512, 256, 128],
        ..TrainConfig::default()
    }
}

fn feature_matrix(samples: &[ContactSample]) -> Array2<f64> {
    Array2::from_shape_fn((samples.len(), FEATURE_DIM), |(i, j)| samples[i].features.0[j])
}

pub fn train_contact_model(samples: &[ContactSample], train: &TrainConfig, seed: u64) -> Result<ContactModel> {
    if samples.len() < 10 {
        return Err(Error::InsufficientData(format!("{} contact samples", samples.len())));
    }
    let x = feature_matrix(samples);
    let ya = Array2::from_shape_fn((samples.len(), 2), |(i, j)| {
        if j == 0 {
            samples[i].state.roll
        } else {
            samples[i].state.pitch
        }
    });
    let yf = Array2::from_shape_fn((samples.len(), 1), |(i, _)| samples[i].state.force);
    let angles = nn::train_regressor(x.view(), ya.view(), train, TargetScaling::Standardize, seed)?;
    let force = nn::train_regressor(x.view(), yf.view(), train, TargetScaling::Standardize, seed)?;
    Ok(ContactModel { angles, force })
}

pub fn predict_contact(model: &ContactModel, features: &ContactFeatures) -> ContactState {
    let a = model.angles.predict_one(&features.0);
    let f = model.force.predict_one(&features.0);
    ContactState {
        roll: a[0],
        pitch: a[1],
        force: f[0],
    }
}

/// Mean absolute errors on one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactMetrics {
    pub samples: usize,
    pub roll_mae: f64,
    pub pitch_mae: f64,
    pub force_mae: f64,
}

pub fn contact_metrics(model: &ContactModel, samples: &[ContactSample]) -> ContactMetrics {
    let n = samples.len().max(1) as f64;
    let x = feature_matrix(samples);
    let a = model.angles.predict(x.view());
    let f = model.force.predict(x.view());
    let (mut r, mut p, mut fo) = (0.0, 0.0, 0.0);
    for (i, s) in samples.iter().enumerate() {
        r += (a[[i, 0]] - s.state.roll).abs();
        p += (a[[i, 1]] - s.state.pitch).abs();
        fo += (f[[i, 0]] - s.state.force).abs();
    }
    ContactMetrics {
        samples: samples.len(),
        roll_mae: r / n,
        pitch_mae: p / n,
        force_mae: fo / n,
    }
}

/// Metrics on the held-out test split the model was trained with.
pub fn test_split_metrics(model: &ContactModel, samples: &[ContactSample], seed: u64) -> ContactMetrics {
    let (_, _, test) = nn::split_indices(samples.len(), seed);
    let subset: Vec<ContactSample> = test.into_iter().map(|i| samples[i]).collect();
    contact_metrics(model, &subset)
}

impl ContactModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            kind: MODEL_KIND.into(),
            heads: vec![self.angles.to_record("angles"), self.force.to_record("force")],
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        f.check(MODEL_KIND)?;
        let (angles, force) = (f.head("angles")?, f.head("force")?);
        if angles.net.input_dim() != FEATURE_DIM || force.net.input_dim() != FEATURE_DIM {
            return Err(Error::Format(format!("contact heads must take {FEATURE_DIM} inputs")));
        }
        if angles.net.output_dim() != 2 || force.net.output_dim() != 1 {
            return Err(Error::Format("contact heads must output (roll, pitch) and force".into()));
        }
        Ok(Self { angles, force })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_text(path, &(self.to_json()? + "\n"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(band: Band, pts: &[[f64; 2]]) -> MarkerObservation {
        MarkerObservation { band, frame_index: 0, centers: pts.to_vec() }
    }

    fn line(a: f64, b: f64) -> Vec<[f64; 2]> {
        [4.0, 12.0, 21.0, 32.0, 46.0, 56.0, 69.0, 77.0, 86.0, 97.0, 111.0, 121.0, 134.0, 142.0, 151.0, 162.0, 176.0, 186.0, 199.0, 207.0, 216.0, 227.0, 235.0]
            .iter()
            .map(|&x| [x, a * x + b])
            .collect()
    }

    #[test]
    fn spline_reproduces_constant_and_line() {
        let f = extract_contact_features(&obs(Band::Left, &line(0.0, 19.5)), &obs(Band::Right, &line(0.013, 200.0)), 240).unwrap();
        let xs = feature_abscissae(240);
        for k in 0..10 {
            assert_eq!(f.0[k], 19.5);
            assert!((f.0[10 + k] - (0.013 * xs[k] + 200.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn spline_tracks_parabola() {
        let pts: Vec<[f64; 2]> = line(0.0, 0.0).iter().map(|p| [p[0], 19.5 + 2.0 * ((p[0] - 119.5) / 119.5).powi(2)]).collect();
        let s = CubicSpline::natural(&pts.iter().map(|p| p[0]).collect::<Vec<_>>(), &pts.iter().map(|p| p[1]).collect::<Vec<_>>()).unwrap();
        for t in feature_abscissae(240) {
            let truth = 19.5 + 2.0 * ((t - 119.5) / 119.5).powi(2);
            assert!((s.eval(t) - truth).abs() < 0.05);
        }
    }

    #[test]
    fn spline_interpolates_knots() {
        let x = [0.0, 1.0, 2.5, 4.0, 7.0];
        let y = [1.0, -2.0, 0.5, 3.0, 0.0];
        let s = CubicSpline::natural(&x, &y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((s.eval(*a) - b).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_markers_for_spline() {
        let pts = [[1.0, 2.0], [5.0, 2.0], [9.0, 2.0]];
        assert!(matches!(
            extract_contact_features(&obs(Band::Left, &pts), &obs(Band::Right, &line(0.0, 1.0)), 240),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn zero_state_is_baseline() {
        let cfg = SensorConfig::default();
        let p = DeflectionParams::default();
        let zero = ContactState { roll: 0.0, pitch: 0.0, force: 0.0 };
        let [l, r] = synthesize_deflection(&zero, &cfg, &p, 0.0, 3).unwrap();
        for (o, band) in [(l, Band::Left), (r, Band::Right)] {
            for c in &o.centers {
                let u = (c[0] - 119.5) / 119.5;
                assert_eq!(c[1], cfg.band_center_y(band) + p.sag_px * u * u);
            }
        }
    }

    #[test]
    fn roll_tilts_bands_oppositely() {
        let cfg = SensorConfig::default();
        let p = DeflectionParams::default();
        let s = ContactState { roll: 10.0, pitch: 0.0, force: 0.0 };
        let z = ContactState { roll: 0.0, ..s };
        let xc = 119.5;
        let tilt = |band| {
            (deflection_profile(&cfg, &p, band, &s, 2.0 * xc) - deflection_profile(&cfg, &p, band, &s, xc))
                - (deflection_profile(&cfg, &p, band, &z, 2.0 * xc) - deflection_profile(&cfg, &p, band, &z, xc))
        };
        assert!((tilt(Band::Left) - tilt(Band::Right) - 2.0 * p.beta * 10.0).abs() < 1e-12);
    }

    #[test]
    fn force_offsets_both_bands_uniformly() {
        let cfg = SensorConfig::default();
        let p = DeflectionParams::default();
        let f = ContactState { roll: 0.0, pitch: 0.0, force: 60.0 };
        let z = ContactState { force: 0.0, ..f };
        for band in Band::BOTH {
            for x in [5.0, 80.0, 200.0] {
                let d = deflection_profile(&cfg, &p, band, &f, x) - deflection_profile(&cfg, &p, band, &z, x);
                assert!((d - p.alpha * 60.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let cfg = SensorConfig::default();
        let s = ContactState { roll: 11.0, pitch: 0.0, force: 0.0 };
        assert!(synthesize_deflection(&s, &cfg, &DeflectionParams::default(), 0.0, 0).is_err());
    }

    #[test]
    fn grid_matches_acquisition_protocol() {
        let g = ContactGrid::default();
        assert_eq!(g.pitches().len(), 13);
        assert_eq!(g.rolls().len(), 21);
        assert_eq!(g.len(), 9555);
    }

    #[test]
    fn features_shift_with_markers() {
        let cfg = SensorConfig::default();
        let s = ContactState { roll: 3.0, pitch: -1.0, force: 20.0 };
        let [l, r] = synthesize_deflection(&s, &cfg, &DeflectionParams::default(), 0.2, 9).unwrap();
        let a = extract_contact_features(&l, &r, 240).unwrap();
        let shift = |o: &MarkerObservation| MarkerObservation { centers: o.centers.iter().map(|c| [c[0], c[1] + 1.75]).collect(), ..o.clone() };
        let b = extract_contact_features(&shift(&l), &shift(&r), 240).unwrap();
        for k in 0..FEATURE_DIM {
            assert!((b.0[k] - a.0[k] - 1.75).abs() < 1e-9);
        }
    }
}
