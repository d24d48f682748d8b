//! On-disk scan directories: frames as PNG plus JSON metadata and GBF1 truth.
//!
//! ```text
//! scan.json             ScanManifest
//! poses.json            ground-truth poses (px, relative to frame 0)
//! background.png        no-contact reference frame
//! frame_000000.png ...  one 8-bit RGB image per frame
//! surface.gbf1          ground-truth height of the whole surface
//! surface_normals.gbf1  its normals
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Band, TactileFrame};
use crate::gbf::Grid;
use crate::grid::{gradient_of, normal_from_gradients, HeightField, Pose2D};
use crate::io::{read_json, read_png_rgb, write_json, write_png_rgb, write_text};
use crate::markers::EncoderStep;
use crate::reconstruction::Reconstruction;
use crate::simulator::{MarkerSpec, ScanOutput, ScanTrajectory, SensorConfig, SurfaceSpec};

pub const MANIFEST: &str = "scan.json";
pub const POSES: &str = "poses.json";
pub const BACKGROUND: &str = "background.png";
pub const SURFACE: &str = "surface.gbf1";
pub const SURFACE_NORMALS: &str = "surface_normals.gbf1";

pub fn frame_file(k: usize) -> String {
    format!("frame_{k:06}.png")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanManifest {
    pub pixel_pitch_mm: f64,
    pub fps: f64,
    pub speed_mm_s: f64,
    pub seed: u64,
    pub frame_count: usize,
    pub marker_spec: MarkerSpec,
    /// Full optics, including the light directions.
    pub sensor: SensorConfig,
    pub surface: Option<SurfaceSpec>,
    pub trajectory: ScanTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame_index: usize,
    pub tx_px: f64,
    pub ty_px: f64,
}

/// Frames and metadata read back from a scan directory.
#[derive(Debug, Clone)]
pub struct LoadedScan {
    pub manifest: ScanManifest,
    pub frames: Vec<TactileFrame>,
    pub background: TactileFrame,
}

impl LoadedScan {
    pub fn truth_poses(&self) -> Vec<Pose2D> {
        self.manifest.trajectory.poses.clone()
    }
}

fn frame_png(path: &Path, f: &TactileFrame) -> Result<()> {
    write_png_rgb(path, f.width(), f.height(), f.rgb())
}

fn read_frame(path: &Path, cfg: &SensorConfig) -> Result<TactileFrame> {
    let (w, h, rgb) = read_png_rgb(path)?;
    let expected = cfg.frame_px();
    if (w, h) != expected {
        return Err(Error::DimensionMismatch { expected, actual: (w, h) });
    }
    TactileFrame::new(w, h, rgb, cfg.sensing_rect(), cfg.band_rect(Band::Left), cfg.band_rect(Band::Right))
}

/// Writes a simulated scan; `surface` adds the ground-truth grids.
pub fn write_scan_dir(dir: &Path, scan: &ScanOutput, manifest: &ScanManifest, surface: Option<&HeightField>) -> Result<()> {
    if manifest.frame_count != scan.frames.len() {
        return Err(Error::invalid("manifest frame count does not match the scan"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, f) in scan.frames.iter().enumerate() {
        frame_png(&dir.join(frame_file(k)), f)?;
    }
    frame_png(&dir.join(BACKGROUND), &scan.background)?;
    let poses: Vec<PoseRecord> = scan
        .poses
        .iter()
        .enumerate()
        .map(|(k, p)| PoseRecord { frame_index: k, tx_px: p.tx, ty_px: p.ty })
        .collect();
    write_json(&dir.join(POSES), &poses)?;
    if let Some(h) = surface {
        Grid::Height(h.clone()).save(dir.join(SURFACE))?;
        Grid::Normal(normal_from_gradients(&gradient_of(h)?)?).save(dir.join(SURFACE_NORMALS))?;
    }
    // Manifest last: its presence marks a complete directory.
    write_json(&dir.join(MANIFEST), manifest)
}

pub fn read_scan_dir(dir: &Path) -> Result<LoadedScan> {
    let manifest: ScanManifest = read_json(&dir.join(MANIFEST))?;
    manifest.sensor.validate()?;
    let cfg = &manifest.sensor;
    let frames = (0..manifest.frame_count)
        .map(|k| {
            let fps = manifest.fps;
            read_frame(&dir.join(frame_file(k)), cfg).map(|f| f.with_index(k, k as f64 / fps))
        })
        .collect::<Result<Vec<_>>>()?;
    let background = read_frame(&dir.join(BACKGROUND), cfg)?;
    Ok(LoadedScan { manifest, frames, background })
}

pub fn read_surface(dir: &Path) -> Result<HeightField> {
    Grid::load(dir.join(SURFACE))?.into_height()
}

/// Paths of every file a scan directory holds, in a fixed order.
pub fn scan_files(dir: &Path, frame_count: usize, with_surface: bool) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = (0..frame_count).map(|k| dir.join(frame_file(k))).collect();
    v.extend([BACKGROUND, POSES, MANIFEST].map(|f| dir.join(f)));
    if with_surface {
        v.extend([SURFACE, SURFACE_NORMALS].map(|f| dir.join(f)));
    }
    v
}

pub const GLOBAL_NORMALS: &str = "global_normals.gbf1";
pub const GLOBAL_HEIGHT: &str = "global_height.gbf1";
pub const POSES_CSV: &str = "poses.csv";
pub const PREVIEW: &str = "preview.png";
pub const ENCODER_CSV: &str = "encoder.csv";

pub fn poses_csv(rec: &Reconstruction) -> String {
    let mut s = String::from("frame_index,tx_px,ty_px,confidence\n");
    for p in &rec.poses {
        writeln!(s, "{},{:.6},{:.6},{:.6}", p.frame_index, p.pose.tx, p.pose.ty, p.confidence).expect("write to string");
    }
    s
}

pub fn encoder_csv(steps: &[EncoderStep]) -> String {
    let mut s = String::from("frame_index,displacement_px,cumulative_px,ambiguity_flag\n");
    for e in steps {
        writeln!(s, "{},{:.6},{:.6},{}", e.frame_index, e.displacement_px, e.cumulative_px, u8::from(e.ambiguous)).expect("write to string");
    }
    s
}

pub fn write_encoder(dir: &Path, steps: &[EncoderStep]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(ENCODER_CSV), &encoder_csv(steps))
}

/// Normals as colour, `(n + 1) / 2` per channel.
pub fn normal_preview(rec: &Reconstruction) -> (usize, usize, Vec<u8>) {
    let (w, h) = rec.normals.dims();
    let rgb = rec
        .normals
        .data()
        .iter()
        .flat_map(|n| n.map(|c| ((c + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8))
        .collect();
    (w, h, rgb)
}

/// Writes mosaic grids, poses, the encoder log when present and optionally a preview.
pub fn write_reconstruction(dir: &Path, rec: &Reconstruction, preview: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Grid::Normal(rec.normals.clone()).save(dir.join(GLOBAL_NORMALS))?;
    Grid::Height(rec.height.clone()).save(dir.join(GLOBAL_HEIGHT))?;
    write_text(&dir.join(POSES_CSV), &poses_csv(rec))?;
    if let Some(e) = &rec.encoder {
        write_encoder(dir, e)?;
    }
    if preview {
        let (w, h, rgb) = normal_preview(rec);
        write_png_rgb(&dir.join(PREVIEW), w, h, &rgb)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{make_surface, simulate_scan};

    #[test]
    fn round_trip() {
        let cfg = SensorConfig::default();
        let spec = SurfaceSpec::Sinusoid { width_mm: 70.0, height_mm: 42.0, amplitude_mm: 0.2, period_mm: 5.0 };
        let surface = make_surface(&spec, cfg.pixel_pitch).unwrap();
        let traj = ScanTrajectory::linear(3, 10.0, 10.0, cfg.pixel_pitch, 0.0, Pose2D::new(2.0, 2.0), 0).unwrap();
        let scan = simulate_scan(&surface, &traj, &cfg, 4).unwrap();
        let manifest = ScanManifest {
            pixel_pitch_mm: cfg.pixel_pitch,
            fps: 10.0,
            speed_mm_s: 10.0,
            seed: 4,
            frame_count: 3,
            marker_spec: cfg.marker_spec.clone(),
            sensor: cfg.clone(),
            surface: Some(spec),
            trajectory: traj,
        };
        let dir = tempfile::tempdir().unwrap();
        write_scan_dir(dir.path(), &scan, &manifest, Some(&surface)).unwrap();
        for f in scan_files(dir.path(), 3, true) {
            assert!(f.is_file(), "{}", f.display());
        }
        let back = read_scan_dir(dir.path()).unwrap();
        assert_eq!(back.manifest, manifest);
        assert_eq!(back.background.rgb(), scan.background.rgb());
        for (a, b) in back.frames.iter().zip(&scan.frames) {
            assert_eq!(a.rgb(), b.rgb());
            assert_eq!(a.frame_index, b.frame_index);
        }
        let h = read_surface(dir.path()).unwrap();
        assert_eq!(h.dims(), surface.dims());
        let poses: Vec<PoseRecord> = read_json(&dir.path().join(POSES)).unwrap();
        assert_eq!(poses[2].tx_px, 8.0);
    }

    #[test]
    fn encoder_rows() {
        let steps = [
            EncoderStep { frame_index: 0, displacement_px: 0.0, cumulative_px: 0.0, ambiguous: false },
            EncoderStep { frame_index: 1, displacement_px: 4.25, cumulative_px: 4.25, ambiguous: true },
        ];
        let csv = encoder_csv(&steps);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "frame_index,displacement_px,cumulative_px,ambiguity_flag");
        assert_eq!(lines[2], "1,4.250000,4.250000,1");
    }
}
