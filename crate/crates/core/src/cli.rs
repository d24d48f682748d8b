//! Command-line front end: run configuration, flag overrides and the five subcommands.
//!
//! Seed precedence is `--seed`, then the config file, then `BELTSCAN_SEED`,
//! then 0. The resolved config is echoed on stdout so it can be saved and
//! replayed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::calibration::{generate_calibration_set, train_gradient_regressor, CalibrationPlan, GradientRegressor};
use crate::error::{Error, Result};
use crate::evaluation::report::{write_accuracy_grid, write_drift_report, write_icp_report, write_speed_sweep};
use crate::evaluation::{
    accuracy_grid, defect_compare, flat_noise_floor, mosaic_offset, run_drift_scan, spearman, speed_sweep,
    truth_normals, DefectScenario, DriftScenario, GradientSource, IcpReport, DEFAULT_SPEEDS,
};
use crate::grid::{mean_dot_product, Mask, Pose2D};
use crate::io::{read_json, write_json};
use crate::markers::{
    encode_frames, generate_contact_dataset, test_split_metrics, train_contact_model, ContactGrid, ContactModel,
    DeflectionParams, DetectorConfig,
};
use crate::nn::TrainConfig;
use crate::reconstruction::{reconstruct_scan, ReconstructionConfig};
use crate::scandir::{read_scan_dir, read_surface, write_encoder, write_reconstruction, write_scan_dir, ScanManifest};
use crate::simulator::{make_surface, simulate_scan, DefectProfile, ScanTrajectory, SensorConfig, SurfaceSpec};

pub const SEED_ENV: &str = "BELTSCAN_SEED";

/// Published hardware drift figures, printed for context only.
const HARDWARE_DRIFT_MM: f64 = 0.333;
const HARDWARE_DRIFT_DEG: f64 = 0.351;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub surface: Option<SurfaceSpec>,
    pub speed_mm_s: f64,
    pub fps: f64,
    pub frames: usize,
    pub jitter_sigma_px: f64,
    /// Margin between the swept area and the surface edge.
    pub border_mm: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            surface: None,
            speed_mm_s: 10.0,
            fps: 10.0,
            frames: 20,
            jitter_sigma_px: 0.0,
            border_mm: 2.0,
        }
    }
}

impl SimulateConfig {
    pub fn travel_mm(&self) -> f64 {
        self.frames.saturating_sub(1) as f64 * self.speed_mm_s / self.fps
    }

    /// Surface size that contains the whole sweep plus the border.
    pub fn scene_mm(&self, cfg: &SensorConfig) -> (f64, f64) {
        (
            cfg.sensing_width_mm + self.travel_mm() + 2.0 * self.border_mm,
            cfg.sensing_height_mm + 2.0 * self.border_mm,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrateConfig {
    pub plan: CalibrationPlan,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    pub grid: ContactGrid,
    pub deflection: DeflectionParams,
    pub noise_sigma_px: f64,
    pub train: TrainConfig,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            grid: ContactGrid::default(),
            deflection: DeflectionParams::default(),
            noise_sigma_px: 0.2,
            train: crate::markers::default_contact_train_config(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// The grid protocol renders without sensor noise.
    pub grid_zero_noise: bool,
    pub speeds_mm_s: Vec<f64>,
    pub sweep_fps: f64,
    pub sweep_travel_mm: f64,
    pub drift: DriftScenario,
    pub defect: DefectScenario,
    pub defects: Vec<DefectProfile>,
    pub noise_floor_seeds: Vec<u64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            grid_rows: 13,
            grid_cols: 11,
            grid_zero_noise: true,
            speeds_mm_s: DEFAULT_SPEEDS.to_vec(),
            sweep_fps: 10.0,
            sweep_travel_mm: 12.0,
            drift: DriftScenario::default(),
            defect: DefectScenario::default(),
            defects: vec![
                DefectProfile::GaussianPit { depth_mm: 0.3, sigma_mm: 1.0 },
                DefectProfile::StepEdge { height_mm: 0.1 },
                DefectProfile::Scratch { depth_mm: 0.2, width_sigma_mm: 0.4, length_mm: 6.0, angle_deg: 90.0 },
            ],
            noise_floor_seeds: vec![10, 11, 12],
        }
    }
}

/// Everything a run depends on. Unset fields take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub sensor: SensorConfig,
    pub simulate: SimulateConfig,
    pub calibrate: CalibrateConfig,
    pub reconstruct: ReconstructionConfig,
    pub contact: ContactConfig,
    pub evaluate: EvaluateConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Seed after flag, config and environment fallbacks.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let seed = match flag.or(self.seed) {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
                Err(_) => 0,
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SurfaceKind {
    Flat,
    Sphere,
    Hex,
    Sinusoid,
    Pcb,
    Pit,
    Step,
    Scratch,
}

/// Surface of the requested kind with its feature centred in the scene.
pub fn scene_surface(kind: SurfaceKind, cfg: &SensorConfig, sim: &SimulateConfig, seed: u64) -> SurfaceSpec {
    let (width_mm, height_mm) = sim.scene_mm(cfg);
    let center_mm = [width_mm / 2.0, height_mm / 2.0];
    let defect = |profile| SurfaceSpec::Defect { width_mm, height_mm, center_mm, profile };
    match kind {
        SurfaceKind::Flat => SurfaceSpec::Flat { width_mm, height_mm },
        SurfaceKind::Sphere => SurfaceSpec::SpherePress { width_mm, height_mm, center_mm, radius_mm: 4.0, depth_mm: 0.8 },
        SurfaceKind::Hex => SurfaceSpec::hex_indenter(width_mm, height_mm, center_mm),
        SurfaceKind::Sinusoid => SurfaceSpec::Sinusoid { width_mm, height_mm, amplitude_mm: 0.1, period_mm: 5.0 },
        SurfaceKind::Pcb => SurfaceSpec::PcbLike {
            width_mm,
            height_mm,
            seed,
            control_points_mm: Vec::new(),
            control_radius_mm: 1.0,
        },
        SurfaceKind::Pit => defect(DefectProfile::GaussianPit { depth_mm: 0.3, sigma_mm: 1.0 }),
        SurfaceKind::Step => defect(DefectProfile::StepEdge { height_mm: 0.1 }),
        SurfaceKind::Scratch => defect(DefectProfile::Scratch {
            depth_mm: 0.2,
            width_sigma_mm: 0.4,
            length_mm: 6.0,
            angle_deg: 90.0,
        }),
    }
}

#[derive(Debug, Parser)]
#[command(name = "beltscan", version, about = "Belt tactile scanner simulator and reconstruction pipeline")]
pub struct Cli {
    /// JSON run config; flags override its fields. Print the defaults with `print-config`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random draw (falls back to the config, then BELTSCAN_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Also write the resolved config to this file.
    #[arg(long, global = true)]
    pub save_config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scan of a synthetic surface into a scan directory.
    Simulate(SimulateArgs),
    /// Simulate ball presses and train the gradient regressor.
    Calibrate(CalibrateArgs),
    /// Reconstruct global normals and height from a scan directory.
    Reconstruct(ReconstructArgs),
    /// Marker-band tools: belt encoder and contact model.
    #[command(subcommand)]
    Markers(MarkersCommand),
    /// Run an evaluation protocol against simulator ground truth.
    Evaluate(EvaluateArgs),
    /// Print the fully defaulted config as JSON and exit.
    PrintConfig,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Surface to scan, centred in a scene sized to the sweep [required unless the config sets one].
    #[arg(long, value_enum)]
    pub surface: Option<SurfaceKind>,
    /// Scan speed in mm/s [default 10].
    #[arg(long)]
    pub speed: Option<f64>,
    /// Frame rate in Hz [default 10].
    #[arg(long)]
    pub fps: Option<f64>,
    /// Number of frames [default 20].
    #[arg(long)]
    pub frames: Option<usize>,
    /// Per-frame lateral jitter in px, 0 for robot mode [default 0].
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Sensor noise in 8-bit counts [default 1].
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value = "scan")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Training epochs [default 200].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Press grid rows [default 13].
    #[arg(long)]
    pub rows: Option<usize>,
    /// Press grid columns [default 11].
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long, default_value = "gradient_model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub scan: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Register frames by optical flow alone.
    #[arg(long)]
    pub no_marker_prior: bool,
    /// Also write preview.png.
    #[arg(long)]
    pub preview: bool,
    #[arg(long, default_value = "reconstruction")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum MarkersCommand {
    /// Belt displacement per frame from the marker bands of a scan directory.
    Encoder {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long, default_value = "markers")]
        out: PathBuf,
    },
    /// Train (or load) the contact model on synthetic deflections and report test-split errors.
    Contact {
        /// Existing contact model; trained and saved to the output directory when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Repetitions per (pitch, roll) cell [default 35].
        #[arg(long)]
        repetitions: Option<usize>,
        /// Marker position noise in px [default 0.2].
        #[arg(long)]
        noise: Option<f64>,
        /// Training epochs [default 200].
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value = "markers")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Grid,
    Sweep,
    Drift,
    Icp,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub protocol: Protocol,
    /// Gradient model from `calibrate`.
    #[arg(long, required_unless_present = "oracle")]
    pub model: Option<PathBuf>,
    /// Use ground-truth normals instead of a model.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value = "evaluation")]
    pub out: PathBuf,
}

/// What the binary should report on failure.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing arguments; shown with usage.
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

fn echo(config: &RunConfig, seed: u64) -> Result<()> {
    println!("seed: {seed}");
    println!("config: {}", serde_json::to_string(config)?);
    Ok(())
}

fn load_model(path: &Path) -> Result<GradientRegressor> {
    GradientRegressor::load(path)
}

pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = config.resolve_seed(cli.seed)?;

    match cli.command {
        Command::PrintConfig => {
            println!("{}", serde_json::to_string_pretty(&config).map_err(Error::from)?);
            return Ok(());
        }
        Command::Simulate(a) => {
            let sim = &mut config.simulate;
            if let Some(v) = a.speed {
                sim.speed_mm_s = v;
            }
            if let Some(v) = a.fps {
                sim.fps = v;
            }
            if let Some(v) = a.frames {
                sim.frames = v;
            }
            if let Some(v) = a.jitter {
                sim.jitter_sigma_px = v;
            }
            if let Some(v) = a.noise {
                config.sensor.noise_sigma = v;
            }
            if let Some(kind) = a.surface {
                config.simulate.surface = Some(scene_surface(kind, &config.sensor, &config.simulate, seed));
            }
            if config.simulate.surface.is_none() {
                return Err(CliError::Usage("simulate needs a surface: pass --surface <KIND> or set simulate.surface in the config".into()));
            }
            finish_config(&cli.save_config, &config, seed)?;
            cmd_simulate(&config, seed, &a.out)?;
        }
        Command::Calibrate(a) => {
            let c = &mut config.calibrate;
            if let Some(v) = a.epochs {
                c.train.epochs = v;
            }
            if let Some(v) = a.rows {
                c.plan.rows = v;
            }
            if let Some(v) = a.cols {
                c.plan.cols = v;
            }
            finish_config(&cli.save_config, &config, seed)?;
            cmd_calibrate(&config, seed, &a.out)?;
        }
        Command::Reconstruct(a) => {
            if a.no_marker_prior {
                config.reconstruct.use_marker_prior = false;
            }
            finish_config(&cli.save_config, &config, seed)?;
            cmd_reconstruct(&config, &a.scan, &a.model, a.preview, &a.out)?;
        }
        Command::Markers(MarkersCommand::Encoder { scan, out }) => {
            finish_config(&cli.save_config, &config, seed)?;
            cmd_encoder(&config, &scan, &out)?;
        }
        Command::Markers(MarkersCommand::Contact { model, repetitions, noise, epochs, out }) => {
            let c = &mut config.contact;
            if let Some(v) = repetitions {
                c.grid.repetitions = v;
            }
            if let Some(v) = noise {
                c.noise_sigma_px = v;
            }
            if let Some(v) = epochs {
                c.train.epochs = v;
            }
            finish_config(&cli.save_config, &config, seed)?;
            cmd_contact(&config, seed, model.as_deref(), &out)?;
        }
        Command::Evaluate(a) => {
            finish_config(&cli.save_config, &config, seed)?;
            let model = match (&a.model, a.oracle) {
                (_, true) => None,
                (Some(p), false) => Some(load_model(p)?),
                (None, false) => return Err(CliError::Usage("evaluate needs --model or --oracle".into())),
            };
            let source = model.as_ref().map_or(GradientSource::Oracle, GradientSource::Model);
            cmd_evaluate(&config, seed, a.protocol, source, &a.out)?;
        }
    }
    Ok(())
}

fn finish_config(save: &Option<PathBuf>, config: &RunConfig, seed: u64) -> Result<()> {
    echo(config, seed)?;
    if let Some(p) = save {
        write_json(p, config)?;
    }
    Ok(())
}

pub fn cmd_simulate(config: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let cfg = &config.sensor;
    let sim = &config.simulate;
    let spec = sim.surface.as_ref().ok_or_else(|| Error::invalid("no surface configured"))?;
    let surface = make_surface(spec, cfg.pixel_pitch)?;
    let b = sim.border_mm / cfg.pixel_pitch;
    let traj = ScanTrajectory::linear(
        sim.frames,
        sim.speed_mm_s,
        sim.fps,
        cfg.pixel_pitch,
        sim.jitter_sigma_px,
        Pose2D::new(b, b),
        seed,
    )?;
    let scan = simulate_scan(&surface, &traj, cfg, seed)?;
    let manifest = ScanManifest {
        pixel_pitch_mm: cfg.pixel_pitch,
        fps: sim.fps,
        speed_mm_s: sim.speed_mm_s,
        seed,
        frame_count: scan.frames.len(),
        marker_spec: cfg.marker_spec.clone(),
        sensor: cfg.clone(),
        surface: Some(spec.clone()),
        trajectory: traj,
    };
    write_scan_dir(out, &scan, &manifest, Some(&surface))?;
    println!("wrote {} frames to {}", scan.frames.len(), out.display());
    Ok(())
}

pub fn cmd_calibrate(config: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let cfg = &config.sensor;
    let c = &config.calibrate;
    let samples = generate_calibration_set(cfg, &c.plan, seed)?;
    let model = train_gradient_regressor(&samples, &c.train, cfg.pixel_pitch, seed)?;
    model.save(out)?;
    println!("calibration samples: {}", samples.len());
    println!("validation mse: {:.6e}", model.validation_mse());
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_reconstruct(config: &RunConfig, scan_dir: &Path, model: &Path, preview: bool, out: &Path) -> Result<()> {
    let scan = read_scan_dir(scan_dir)?;
    let model = load_model(model)?;
    let detector = DetectorConfig::for_radius(scan.manifest.marker_spec.dot_radius_px);
    let rec = reconstruct_scan(&scan.frames, &scan.background, &model, &detector, &config.reconstruct)?;
    write_reconstruction(out, &rec, preview)?;
    let (w, h) = rec.normals.dims();
    println!("mosaic: {w}x{h} px from {} kept frames", rec.poses.len());

    // Score against the truth when the scan carries it.
    let traj = &scan.manifest.trajectory;
    if let (Some(spec), Ok(surface)) = (&scan.manifest.surface, read_surface(scan_dir)) {
        let truth = truth_normals(spec, &surface, mosaic_offset(traj.origin_px, &rec), w, h)?;
        let accuracy = mean_dot_product(&rec.normals, &truth, &rec.mask)?;
        println!("accuracy (covered pixels): {accuracy:.5}");
        let relief = Mask::from_fn(w, h, |x, y| rec.mask.get(x, y) && truth.get(x, y)[2] > -1.0 + 1e-9);
        if relief.count() > 0 {
            println!("accuracy (relief pixels): {:.5}", mean_dot_product(&rec.normals, &truth, &relief)?);
        }
    }
    if let Some(last) = rec.poses.last() {
        if let Some(t) = traj.poses.get(last.frame_index) {
            println!("final pose error: {:.4} px", (last.pose.tx - t.tx).hypot(last.pose.ty - t.ty));
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_encoder(config: &RunConfig, scan_dir: &Path, out: &Path) -> Result<()> {
    let scan = read_scan_dir(scan_dir)?;
    let detector = DetectorConfig::for_radius(scan.manifest.marker_spec.dot_radius_px);
    let steps = encode_frames(&scan.frames, &detector, &config.reconstruct.matching);
    write_encoder(out, &steps)?;
    let ambiguous = steps.iter().filter(|s| s.ambiguous).count();
    if let (Some(last), Some(t)) = (steps.last(), scan.manifest.trajectory.poses.get(steps.len().saturating_sub(1))) {
        println!("cumulative displacement: {:.4} px (truth {:.4} px)", last.cumulative_px, t.tx);
    }
    println!("ambiguous steps: {ambiguous}");
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_contact(config: &RunConfig, seed: u64, model: Option<&Path>, out: &Path) -> Result<()> {
    let c = &config.contact;
    let samples = generate_contact_dataset(&config.sensor, &c.deflection, &c.grid, c.noise_sigma_px, seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })?;
    let model = match model {
        Some(p) => ContactModel::load(p)?,
        None => {
            let m = train_contact_model(&samples, &c.train, seed)?;
            m.save(&out.join("contact_model.json"))?;
            m
        }
    };
    let metrics = test_split_metrics(&model, &samples, seed);
    write_json(&out.join("contact_metrics.json"), &metrics)?;
    println!("contact samples: {}", samples.len());
    println!(
        "test MAE: roll {:.4} deg, pitch {:.4} deg, force {:.4} N",
        metrics.roll_mae, metrics.pitch_mae, metrics.force_mae
    );
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_evaluate(config: &RunConfig, seed: u64, protocol: Protocol, source: GradientSource, out: &Path) -> Result<()> {
    let e = &config.evaluate;
    let cfg = &config.sensor;
    let rc = &config.reconstruct;
    std::fs::create_dir_all(out).map_err(|err| Error::Io { path: out.to_path_buf(), source: err })?;
    match protocol {
        Protocol::Grid => {
            let mut c = cfg.clone();
            if e.grid_zero_noise {
                c.noise_sigma = 0.0;
            }
            let g = accuracy_grid(&c, source, e.grid_rows, e.grid_cols, seed)?;
            write_accuracy_grid(out, &g)?;
            println!("grid {}x{}: mean {:.5}, min {:.5}", g.rows, g.cols, g.mean(), g.min());
        }
        Protocol::Sweep => {
            let pts = speed_sweep(cfg, source, &e.speeds_mm_s, e.sweep_fps, e.sweep_travel_mm, rc, seed)?;
            write_speed_sweep(out, &pts)?;
            for p in &pts {
                println!("speed {:>5.1} mm/s: accuracy {:.5}", p.speed_mm_s, p.accuracy);
            }
            let sp: Vec<f64> = pts.iter().map(|p| p.speed_mm_s).collect();
            let ac: Vec<f64> = pts.iter().map(|p| p.accuracy).collect();
            if let Some(rho) = spearman(&sp, &ac) {
                println!("spearman(speed, accuracy): {rho:.4}");
            }
        }
        Protocol::Drift => {
            let r = run_drift_scan(cfg, &e.drift, source, rc, seed)?;
            write_drift_report(out, &r.report)?;
            println!(
                "drift: distance MAE {:.4} mm, angle MAE {:.4} deg (hardware reference {HARDWARE_DRIFT_MM} mm, {HARDWARE_DRIFT_DEG} deg)",
                r.report.distance_mae_mm, r.report.angle_mae_deg
            );
            println!("stitched accuracy {:.5}, final pose error {:.4} px", r.accuracy, r.final_pose_error_px);
        }
        Protocol::Icp => {
            let noise_floor_mm = flat_noise_floor(cfg, &e.defect, source, rc, &e.noise_floor_seeds)?;
            let mut defects = vec![defect_compare(cfg, &e.defect, None, source, rc, seed)?];
            for p in &e.defects {
                defects.push(defect_compare(cfg, &e.defect, Some(p), source, rc, seed)?);
            }
            for d in &defects {
                let name = match &d.profile {
                    None => "flat",
                    Some(DefectProfile::GaussianPit { .. }) => "gaussian pit",
                    Some(DefectProfile::StepEdge { .. }) => "step edge",
                    Some(DefectProfile::Scratch { .. }) => "scratch",
                };
                println!(
                    "{name}: depth {:.4} / {:.4} mm, rmse {:.5} mm",
                    d.measured_depth_mm, d.true_depth_mm, d.rmse_mm
                );
            }
            println!("noise floor: {noise_floor_mm:.5} mm");
            write_icp_report(out, &IcpReport { noise_floor_mm, defects })?;
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
