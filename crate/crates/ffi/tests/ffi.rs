use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use beltscan::calibration::{generate_calibration_set, train_gradient_regressor, CalibrationPlan};
use beltscan::nn::TrainConfig;
use beltscan::scandir::{write_scan_dir, ScanManifest};
use beltscan::simulator::{make_surface, simulate_scan, ScanTrajectory, SensorConfig, SurfaceSpec};
use beltscan::Pose2D;
use beltscan_ffi::*;

fn last_error() -> String {
    let p = bs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(bs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        let mut scan = ptr::null_mut();
        assert_eq!(bs_scan_load(ptr::null(), &mut scan), BsStatus::NullPointer);
        assert!(last_error().contains("dir"));
        assert_eq!(bs_reconstruct(ptr::null(), ptr::null(), true, &mut ptr::null_mut()), BsStatus::NullPointer);
        assert_eq!(bs_scan_frame_count(ptr::null()), 0);
        bs_scan_free(ptr::null_mut());
        bs_reconstruction_free(ptr::null_mut());
        bs_gradient_model_free(ptr::null_mut());
    }
}

#[test]
fn missing_files_map_to_io() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = ptr::null_mut();
    let path = cstr(&dir.path().join("absent.json"));
    assert_eq!(unsafe { bs_gradient_model_load(path.as_ptr(), &mut model) }, BsStatus::Io);
    assert!(model.is_null());
}

#[test]
fn poisson_recovers_plane() {
    let (w, h, p) = (20usize, 10usize, 0.5);
    let gx = vec![0.2; w * h];
    let gy = vec![-0.1; w * h];
    let mut out = vec![0.0; w * h];
    let s = unsafe { bs_poisson_integrate(gx.as_ptr(), gy.as_ptr(), w, h, p, out.as_mut_ptr()) };
    assert_eq!(s, BsStatus::Ok);
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    for y in 0..h {
        for x in 0..w {
            let t = 0.2 * (x as f64 - cx) * p - 0.1 * (y as f64 - cy) * p;
            assert!((out[y * w + x] - t).abs() < 1e-9);
        }
    }
    let s = unsafe { bs_poisson_integrate(gx.as_ptr(), gy.as_ptr(), w, h, p, ptr::null_mut()) };
    assert_eq!(s, BsStatus::NullPointer);
}

#[test]
fn icp_recovers_translation() {
    let src: Vec<f64> = (0..60)
        .flat_map(|i| {
            let (x, y) = ((i % 10) as f64, (i / 10) as f64);
            [x, y, 0.3 * (x * 0.7).sin() + 0.2 * (y * 0.9).cos()]
        })
        .collect();
    let tgt: Vec<f64> = src.chunks(3).flat_map(|c| [c[0] + 0.2, c[1] - 0.1, c[2] + 0.05]).collect();
    let mut t = BsRigidTransform::default();
    let mut residual = f64::NAN;
    let s = unsafe { bs_icp_align(src.as_ptr(), 60, tgt.as_ptr(), 60, 50, 1e-9, &mut t, &mut residual) };
    assert_eq!(s, BsStatus::Ok);
    assert!(residual < 1e-6, "{residual}");
    for (a, b) in t.translation.iter().zip([0.2, -0.1, 0.05]) {
        assert!((a - b).abs() < 1e-6);
    }
    let s = unsafe { bs_icp_align(src.as_ptr(), 2, tgt.as_ptr(), 2, 50, 1e-9, &mut t, ptr::null_mut()) };
    assert_eq!(s, BsStatus::Degenerate);
}

#[test]
fn marker_matching_and_aliasing() {
    let pattern = [0.0, 8.0, 17.0, 28.0, 42.0, 52.0, 65.0, 73.0, 82.0];
    let moved: Vec<f64> = pattern.iter().map(|x| x - 11.0).filter(|&x| x >= 0.0).collect();
    let mut d = 0.0;
    let s = unsafe { bs_marker_displacement(pattern.as_ptr(), pattern.len(), moved.as_ptr(), moved.len(), &mut d) };
    assert_eq!(s, BsStatus::Ok);
    assert!((d - 11.0).abs() < 1e-9, "{d}");

    let even: Vec<f64> = (0..8).map(|k| 10.0 * k as f64).collect();
    let shifted: Vec<f64> = even.iter().map(|x| x + 5.0).collect();
    let s = unsafe { bs_marker_displacement(even.as_ptr(), even.len(), shifted.as_ptr(), shifted.len(), &mut d) };
    assert_eq!(s, BsStatus::AmbiguousMatch);
    assert!(last_error().contains("ambiguous"));
}

/// Small scan and quickly trained model on disk.
fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = SensorConfig::default();
    let plan = CalibrationPlan { rows: 5, cols: 5, ..CalibrationPlan::default() };
    let samples = generate_calibration_set(&cfg, &plan, 3).unwrap();
    let train = TrainConfig { epochs: 30, ..TrainConfig::default() };
    let model = train_gradient_regressor(&samples, &train, cfg.pixel_pitch, 3).unwrap();
    let model_path = dir.join("model.json");
    model.save(&model_path).unwrap();

    let spec = SurfaceSpec::Sinusoid { width_mm: 70.0, height_mm: 44.0, amplitude_mm: 0.1, period_mm: 5.0 };
    let surface = make_surface(&spec, cfg.pixel_pitch).unwrap();
    let traj = ScanTrajectory::linear(4, 10.0, 10.0, cfg.pixel_pitch, 0.0, Pose2D::new(8.0, 8.0), 0).unwrap();
    let scan = simulate_scan(&surface, &traj, &cfg, 5).unwrap();
    let manifest = ScanManifest {
        pixel_pitch_mm: cfg.pixel_pitch,
        fps: 10.0,
        speed_mm_s: 10.0,
        seed: 5,
        frame_count: 4,
        marker_spec: cfg.marker_spec.clone(),
        sensor: cfg.clone(),
        surface: Some(spec),
        trajectory: traj,
    };
    let scan_dir = dir.join("scan");
    write_scan_dir(&scan_dir, &scan, &manifest, Some(&surface)).unwrap();
    (scan_dir, model_path)
}

#[test]
fn reconstruct_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let (scan_dir, model_path) = fixture(dir.path());
    unsafe {
        let mut scan = ptr::null_mut();
        assert_eq!(bs_scan_load(cstr(&scan_dir).as_ptr(), &mut scan), BsStatus::Ok);
        assert_eq!(bs_scan_frame_count(scan), 4);
        let mut model = ptr::null_mut();
        assert_eq!(bs_gradient_model_load(cstr(&model_path).as_ptr(), &mut model), BsStatus::Ok);
        let mut rec = ptr::null_mut();
        assert_eq!(bs_reconstruct(scan, model, true, &mut rec), BsStatus::Ok);

        let (mut w, mut h) = (0usize, 0usize);
        assert_eq!(bs_reconstruction_dims(rec, &mut w, &mut h), BsStatus::Ok);
        assert!((160..=162).contains(&h), "{h}");
        assert!(w > 240);
        let mut height = vec![0.0; w * h];
        assert_eq!(bs_reconstruction_height(rec, height.as_mut_ptr(), height.len()), BsStatus::Ok);
        assert!(height.iter().all(|v| v.is_finite()));
        let mut normals = vec![0.0; 3 * w * h];
        assert_eq!(bs_reconstruction_normals(rec, normals.as_mut_ptr(), normals.len()), BsStatus::Ok);
        for n in normals.chunks(3) {
            assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-9);
        }
        assert_eq!(bs_reconstruction_height(rec, height.as_mut_ptr(), 1), BsStatus::DimensionMismatch);

        let n = bs_reconstruction_pose_count(rec);
        assert!(n >= 2);
        let mut poses = vec![BsPose::default(); n];
        assert_eq!(bs_reconstruction_poses(rec, poses.as_mut_ptr(), n), BsStatus::Ok);
        assert_eq!(poses[0].frame_index, 0);
        assert!(poses.windows(2).all(|p| p[1].tx_px > p[0].tx_px));

        let out = dir.path().join("rec");
        assert_eq!(bs_reconstruction_save(rec, cstr(&out).as_ptr(), true), BsStatus::Ok);
        for f in ["global_normals.gbf1", "global_height.gbf1", "poses.csv", "encoder.csv", "preview.png"] {
            assert!(out.join(f).is_file(), "{f}");
        }
        let mut kind = 0u32;
        assert_eq!(bs_gbf_kind(cstr(&out.join("global_height.gbf1")).as_ptr(), &mut kind), BsStatus::Ok);
        assert_eq!(kind, 1);

        bs_reconstruction_free(rec);
        bs_gradient_model_free(model);
        bs_scan_free(scan);
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("beltscan.h").is_file());
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libbeltscan_ffi.a");
    assert!(lib.is_file(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests").join("smoke.c"))
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stdout));
}
