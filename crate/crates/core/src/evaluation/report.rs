//! CSV, JSON and PNG writers for evaluation results.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AccuracyGrid, DefectReport, DriftReport, SweepPoint};
use crate::error::Result;
use crate::io::{write_json, write_png_rgb, write_text};

pub fn accuracy_grid_csv(g: &AccuracyGrid) -> String {
    let mut s = String::from("row,col,x_mm,y_mm,accuracy\n");
    for r in 0..g.rows {
        for c in 0..g.cols {
            let k = r * g.cols + c;
            let [x, y] = g.locations_mm[k];
            writeln!(s, "{r},{c},{x:.4},{y:.4},{:.6}", g.values[k]).expect("write to string");
        }
    }
    s
}

/// Blue (low) through white to red (high).
fn heat(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let (a, b, u) = if t < 0.5 {
        ([49.0, 54.0, 149.0], [247.0, 247.0, 247.0], t * 2.0)
    } else {
        ([247.0, 247.0, 247.0], [165.0, 0.0, 38.0], t * 2.0 - 1.0)
    };
    std::array::from_fn(|i| (a[i] + (b[i] - a[i]) * u).round() as u8)
}

/// Heatmap with `cell` pixels per grid node, scaled between the grid min and max.
pub fn accuracy_heatmap(g: &AccuracyGrid, cell: usize) -> (usize, usize, Vec<u8>) {
    let (lo, hi) = (g.min(), g.values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (g.cols * cell, g.rows * cell);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            rgb.extend(heat((g.get(y / cell, x / cell) - lo) / span));
        }
    }
    (w, h, rgb)
}

pub fn write_accuracy_grid(dir: &Path, g: &AccuracyGrid) -> Result<()> {
    write_text(&dir.join("accuracy_grid.csv"), &accuracy_grid_csv(g))?;
    let (w, h, rgb) = accuracy_heatmap(g, 24);
    write_png_rgb(&dir.join("accuracy_grid.png"), w, h, &rgb)
}

pub fn speed_sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("speed_mm_s,frames,accuracy\n");
    for p in points {
        writeln!(s, "{},{},{:.6}", p.speed_mm_s, p.frames, p.accuracy).expect("write to string");
    }
    s
}

pub fn write_speed_sweep(dir: &Path, points: &[SweepPoint]) -> Result<()> {
    write_text(&dir.join("speed_sweep.csv"), &speed_sweep_csv(points))
}

/// One row per control-point pair followed by a `mae` row.
pub fn drift_report_csv(r: &DriftReport) -> String {
    let mut s = String::from("row,i,j,true_length_mm,measured_length_mm,distance_error_mm,angle_error_deg\n");
    for g in &r.segments {
        writeln!(
            s,
            "segment,{},{},{:.6},{:.6},{:.6},{:.6}",
            g.i, g.j, g.true_length_mm, g.measured_length_mm, g.distance_error_mm, g.angle_error_deg
        )
        .expect("write to string");
    }
    writeln!(s, "mae,,,,,{:.6},{:.6}", r.distance_mae_mm, r.angle_mae_deg).expect("write to string");
    s
}

pub fn write_drift_report(dir: &Path, r: &DriftReport) -> Result<()> {
    write_text(&dir.join("drift_report.csv"), &drift_report_csv(r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpReport {
    pub noise_floor_mm: f64,
    pub defects: Vec<DefectReport>,
}

pub fn write_icp_report(dir: &Path, r: &IcpReport) -> Result<()> {
    write_json(&dir.join("icp_report.json"), r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::drift_metrics;

    fn grid() -> AccuracyGrid {
        AccuracyGrid {
            rows: 2,
            cols: 3,
            indenter: "hex_pyramid".into(),
            locations_mm: (0..6).map(|k| [k as f64, 1.0]).collect(),
            values: vec![0.9, 0.95, 1.0, 0.97, 0.99, 0.98],
        }
    }

    #[test]
    fn grid_csv_has_one_line_per_cell() {
        let s = accuracy_grid_csv(&grid());
        assert_eq!(s.lines().count(), 7);
        assert!(s.lines().nth(3).unwrap().starts_with("0,2,2.0000,1.0000,1.000000"));
    }

    #[test]
    fn heatmap_extremes() {
        let (w, h, rgb) = accuracy_heatmap(&grid(), 4);
        assert_eq!((w, h, rgb.len()), (12, 8, 12 * 8 * 3));
        assert_eq!(&rgb[..3], &heat(0.0));
        let k = 8 * 3; // row 0, column 8
        assert_eq!(&rgb[k..k + 3], &heat(1.0));
    }

    #[test]
    fn files_written() {
        let dir = tempfile::tempdir().unwrap();
        write_accuracy_grid(dir.path(), &grid()).unwrap();
        let pts = [SweepPoint { speed_mm_s: 5.0, frames: 25, accuracy: 0.98 }];
        write_speed_sweep(dir.path(), &pts).unwrap();
        let d = drift_metrics(&[[0.0, 0.0], [1.0, 0.0]], &[[0.0, 0.0], [1.0, 0.1]]).unwrap();
        write_drift_report(dir.path(), &d).unwrap();
        write_icp_report(dir.path(), &IcpReport { noise_floor_mm: 0.01, defects: vec![] }).unwrap();
        for f in ["accuracy_grid.csv", "accuracy_grid.png", "speed_sweep.csv", "drift_report.csv", "icp_report.json"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let csv = std::fs::read_to_string(dir.path().join("drift_report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }
}
