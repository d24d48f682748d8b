use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{normal_from_slope, HeightField, Mask, NormalMap};

/// Local defect shapes for inspection-style surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DefectProfile {
    /// Rotationally symmetric Gaussian pit.
    GaussianPit { depth_mm: f64, sigma_mm: f64 },
    /// Elongated Gaussian groove along `angle_deg`.
    Scratch {
        depth_mm: f64,
        width_sigma_mm: f64,
        length_mm: f64,
        angle_deg: f64,
    },
    /// Sharp raised step; the surface is `height_mm` for `x >= center.x`.
    StepEdge { height_mm: f64 },
}

/// Parametric ground-truth surfaces. Sizes and positions are in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceSpec {
    Flat {
        width_mm: f64,
        height_mm: f64,
    },
    /// Spherical cap left by a ball of `radius_mm` pressed `depth_mm` deep.
    SpherePress {
        width_mm: f64,
        height_mm: f64,
        center_mm: [f64; 2],
        radius_mm: f64,
        depth_mm: f64,
    },
    /// Hexagonal pyramid with flats perpendicular to the x axis.
    HexPyramid {
        width_mm: f64,
        height_mm: f64,
        center_mm: [f64; 2],
        across_flats_mm: f64,
        slope_deg: f64,
    },
    Sinusoid {
        width_mm: f64,
        height_mm: f64,
        amplitude_mm: f64,
        period_mm: f64,
    },
    /// Seeded board with raised pads, via holes and optional hemispherical
    /// control bumps.
    PcbLike {
        width_mm: f64,
        height_mm: f64,
        seed: u64,
        #[serde(default)]
        control_points_mm: Vec<[f64; 2]>,
        #[serde(default = "default_bump_radius")]
        control_radius_mm: f64,
    },
    Defect {
        width_mm: f64,
        height_mm: f64,
        center_mm: [f64; 2],
        profile: DefectProfile,
    },
}

fn default_bump_radius() -> f64 {
    1.0
}

/// Soft pad-edge width.
const PAD_EDGE_MM: f64 = 0.5;

#[derive(Debug, Clone)]
struct Pad {
    cx: f64,
    cy: f64,
    hw: f64,
    hh: f64,
    height: f64,
}

#[derive(Debug, Clone)]
struct Via {
    cx: f64,
    cy: f64,
    radius: f64,
    depth: f64,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn pcb_layout(width_mm: f64, height_mm: f64, seed: u64) -> (Vec<Pad>, Vec<Via>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = 5.0;
    let (nx, ny) = ((width_mm / cell).ceil() as usize, (height_mm / cell).ceil() as usize);
    let mut pads = Vec::new();
    let mut vias = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (x0, y0) = (i as f64 * cell, j as f64 * cell);
            if rng.gen_bool(0.7) {
                let hw = rng.gen_range(0.5..1.6);
                let hh = rng.gen_range(0.5..1.6);
                pads.push(Pad {
                    cx: x0 + rng.gen_range(hw + 0.3..cell - hw - 0.3).max(hw),
                    cy: y0 + rng.gen_range(hh + 0.3..cell - hh - 0.3).max(hh),
                    hw,
                    hh,
                    height: rng.gen_range(0.1..0.3),
                });
            }
            if rng.gen_bool(0.35) {
                vias.push(Via {
                    cx: x0 + rng.gen_range(0.5..cell - 0.5),
                    cy: y0 + rng.gen_range(0.5..cell - 0.5),
                    radius: rng.gen_range(0.3..0.6),
                    depth: 0.1,
                });
            }
        }
    }
    (pads, vias)
}

fn hex_axes() -> [[f64; 2]; 6] {
    let mut axes = [[0.0; 2]; 6];
    for (i, a) in axes.iter_mut().enumerate() {
        let t = i as f64 * PI / 3.0;
        *a = [t.cos(), t.sin()];
    }
    axes
}

/// Index of the face containing `(dx, dy)` and its hexagonal distance.
fn hex_face(dx: f64, dy: f64) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, u) in hex_axes().iter().enumerate() {
        let p = dx * u[0] + dy * u[1];
        if p > best.1 {
            best = (i, p);
        }
    }
    best
}

impl SurfaceSpec {
    pub fn size_mm(&self) -> (f64, f64) {
        match *self {
            SurfaceSpec::Flat { width_mm, height_mm }
            | SurfaceSpec::SpherePress { width_mm, height_mm, .. }
            | SurfaceSpec::HexPyramid { width_mm, height_mm, .. }
            | SurfaceSpec::Sinusoid { width_mm, height_mm, .. }
            | SurfaceSpec::PcbLike { width_mm, height_mm, .. }
            | SurfaceSpec::Defect { width_mm, height_mm, .. } => (width_mm, height_mm),
        }
    }

    /// Default hex indenter: 6 mm across flats with 30 degree faces.
    pub fn hex_indenter(width_mm: f64, height_mm: f64, center_mm: [f64; 2]) -> Self {
        SurfaceSpec::HexPyramid {
            width_mm,
            height_mm,
            center_mm,
            across_flats_mm: 6.0,
            slope_deg: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.size_mm();
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::invalid("surface size must be positive"));
        }
        match *self {
            SurfaceSpec::SpherePress { radius_mm, depth_mm, .. } => {
                if !(radius_mm > 0.0) {
                    return Err(Error::invalid("sphere radius must be positive"));
                }
                if !(depth_mm > 0.0 && depth_mm <= radius_mm) {
                    return Err(Error::invalid("sphere depth must lie in (0, radius]"));
                }
            }
            SurfaceSpec::HexPyramid { across_flats_mm, slope_deg, .. } => {
                if !(across_flats_mm > 0.0) || !(slope_deg > 0.0 && slope_deg < 90.0) {
                    return Err(Error::invalid("hex pyramid needs positive size and slope in (0, 90)"));
                }
            }
            SurfaceSpec::Sinusoid { period_mm, .. } => {
                if !(period_mm > 0.0) {
                    return Err(Error::invalid("sinusoid period must be positive"));
                }
            }
            SurfaceSpec::PcbLike { control_radius_mm, .. } => {
                if !(control_radius_mm > 0.0) {
                    return Err(Error::invalid("control bump radius must be positive"));
                }
            }
            SurfaceSpec::Defect { ref profile, .. } => match *profile {
                DefectProfile::GaussianPit { depth_mm, sigma_mm } => {
                    if !(depth_mm > 0.0 && sigma_mm > 0.0) {
                        return Err(Error::invalid("pit depth and width must be positive"));
                    }
                }
                DefectProfile::Scratch { depth_mm, width_sigma_mm, length_mm, .. } => {
                    if !(depth_mm > 0.0 && width_sigma_mm > 0.0 && length_mm > 0.0) {
                        return Err(Error::invalid("scratch dimensions must be positive"));
                    }
                }
                DefectProfile::StepEdge { height_mm } => {
                    if !(height_mm != 0.0 && height_mm.is_finite()) {
                        return Err(Error::invalid("step height must be non-zero"));
                    }
                }
            },
            SurfaceSpec::Flat { .. } => {}
        }
        Ok(())
    }

    /// Closed-form slope where one exists (sphere cap, hex pyramid, sinusoid).
    pub fn analytic_gradient(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        match *self {
            SurfaceSpec::Flat { .. } => Some([0.0, 0.0]),
            SurfaceSpec::SpherePress { center_mm, radius_mm, depth_mm, .. } => {
                let (dx, dy) = (x - center_mm[0], y - center_mm[1]);
                let d2 = dx * dx + dy * dy;
                let contact = radius_mm * radius_mm - (radius_mm - depth_mm).powi(2);
                if d2 >= contact {
                    return Some([0.0, 0.0]);
                }
                let z = (radius_mm * radius_mm - d2).sqrt();
                Some([-dx / z, -dy / z])
            }
            SurfaceSpec::HexPyramid { center_mm, across_flats_mm, slope_deg, .. } => {
                let (face, dist) = hex_face(x - center_mm[0], y - center_mm[1]);
                if dist >= across_flats_mm / 2.0 {
                    return Some([0.0, 0.0]);
                }
                let t = slope_deg.to_radians().tan();
                let u = hex_axes()[face];
                Some([-t * u[0], -t * u[1]])
            }
            SurfaceSpec::Sinusoid { amplitude_mm, period_mm, .. } => {
                let k = 2.0 * PI / period_mm;
                Some([
                    amplitude_mm * k * (k * x).cos() * (k * y).sin(),
                    amplitude_mm * k * (k * x).sin() * (k * y).cos(),
                ])
            }
            _ => None,
        }
    }

    /// Analytic contact/indentation footprint, if the kind has one.
    pub fn footprint_contains(&self, x: f64, y: f64) -> Option<bool> {
        match *self {
            SurfaceSpec::SpherePress { center_mm, radius_mm, depth_mm, .. } => {
                let d2 = (x - center_mm[0]).powi(2) + (y - center_mm[1]).powi(2);
                Some(d2 < radius_mm * radius_mm - (radius_mm - depth_mm).powi(2))
            }
            SurfaceSpec::HexPyramid { center_mm, across_flats_mm, .. } => {
                Some(hex_face(x - center_mm[0], y - center_mm[1]).1 < across_flats_mm / 2.0)
            }
            _ => None,
        }
    }

    fn height_fn(&self) -> Box<dyn Fn(f64, f64) -> f64 + '_> {
        match *self {
            SurfaceSpec::Flat { .. } => Box::new(|_, _| 0.0),
            SurfaceSpec::SpherePress { center_mm, radius_mm, depth_mm, .. } => Box::new(move |x, y| {
                let d2 = (x - center_mm[0]).powi(2) + (y - center_mm[1]).powi(2);
                if d2 >= radius_mm * radius_mm {
                    return 0.0;
                }
                ((radius_mm * radius_mm - d2).sqrt() - (radius_mm - depth_mm)).max(0.0)
            }),
            SurfaceSpec::HexPyramid { center_mm, across_flats_mm, slope_deg, .. } => {
                let t = slope_deg.to_radians().tan();
                Box::new(move |x, y| {
                    let (_, dist) = hex_face(x - center_mm[0], y - center_mm[1]);
                    ((across_flats_mm / 2.0 - dist) * t).max(0.0)
                })
            }
            SurfaceSpec::Sinusoid { amplitude_mm, period_mm, .. } => {
                let k = 2.0 * PI / period_mm;
                Box::new(move |x, y| amplitude_mm * (k * x).sin() * (k * y).sin())
            }
            SurfaceSpec::PcbLike { width_mm, height_mm, seed, ref control_points_mm, control_radius_mm } => {
                let (pads, vias) = pcb_layout(width_mm, height_mm, seed);
                let bumps = control_points_mm.clone();
                Box::new(move |x, y| {
                    let mut h: f64 = 0.0;
                    for p in &pads {
                        if (x - p.cx).abs() > p.hw + PAD_EDGE_MM || (y - p.cy).abs() > p.hh + PAD_EDGE_MM {
                            continue;
                        }
                        let inside = (p.hw - (x - p.cx).abs()).min(p.hh - (y - p.cy).abs());
                        h = h.max(p.height * smoothstep(inside / PAD_EDGE_MM + 0.5));
                    }
                    for v in &vias {
                        let d = ((x - v.cx).powi(2) + (y - v.cy).powi(2)).sqrt();
                        if d < v.radius + PAD_EDGE_MM {
                            h -= v.depth * smoothstep((v.radius - d) / PAD_EDGE_MM + 0.5);
                        }
                    }
                    for b in &bumps {
                        let d2 = (x - b[0]).powi(2) + (y - b[1]).powi(2);
                        let r2 = control_radius_mm * control_radius_mm;
                        if d2 < r2 {
                            h = h.max((r2 - d2).sqrt());
                        }
                    }
                    h
                })
            }
            SurfaceSpec::Defect { center_mm, ref profile, .. } => {
                let profile = profile.clone();
                Box::new(move |x, y| {
                    let (dx, dy) = (x - center_mm[0], y - center_mm[1]);
                    match profile {
                        DefectProfile::GaussianPit { depth_mm, sigma_mm } => {
                            -depth_mm * (-(dx * dx + dy * dy) / (2.0 * sigma_mm * sigma_mm)).exp()
                        }
                        DefectProfile::Scratch { depth_mm, width_sigma_mm, length_mm, angle_deg } => {
                            let (s, c) = angle_deg.to_radians().sin_cos();
                            let along = dx * c + dy * s;
                            let across = -dx * s + dy * c;
                            let taper = smoothstep((length_mm / 2.0 - along.abs()) / (2.0 * width_sigma_mm) + 0.5);
                            -depth_mm * taper * (-(across * across) / (2.0 * width_sigma_mm * width_sigma_mm)).exp()
                        }
                        DefectProfile::StepEdge { height_mm } => {
                            if dx >= 0.0 {
                                height_mm
                            } else {
                                0.0
                            }
                        }
                    }
                })
            }
        }
    }

    /// Exact height at a point in mm.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        (self.height_fn())(x, y)
    }

    /// Analytic normals sampled on a grid whose pixel `(i, j)` sits at
    /// `origin_mm + (i, j) * pitch`.
    pub fn analytic_normals(
        &self,
        width: usize,
        height: usize,
        pixel_pitch: f64,
        origin_mm: [f64; 2],
    ) -> Option<NormalMap> {
        self.analytic_gradient(origin_mm[0], origin_mm[1])?;
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                let x = origin_mm[0] + i as f64 * pixel_pitch;
                let y = origin_mm[1] + j as f64 * pixel_pitch;
                let [gx, gy] = self.analytic_gradient(x, y)?;
                data.push(normal_from_slope(gx, gy));
            }
        }
        NormalMap::new(width, height, pixel_pitch, data).ok()
    }

    /// Analytic footprint mask on the same grid convention as [`Self::analytic_normals`].
    pub fn footprint_mask(
        &self,
        width: usize,
        height: usize,
        pixel_pitch: f64,
        origin_mm: [f64; 2],
    ) -> Option<Mask> {
        self.footprint_contains(origin_mm[0], origin_mm[1])?;
        Some(Mask::from_fn(width, height, |i, j| {
            self.footprint_contains(
                origin_mm[0] + i as f64 * pixel_pitch,
                origin_mm[1] + j as f64 * pixel_pitch,
            )
            .unwrap_or(false)
        }))
    }
}

/// Samples a surface onto a grid with the given pixel pitch.
pub fn make_surface(spec: &SurfaceSpec, pixel_pitch: f64) -> Result<HeightField> {
    spec.validate()?;
    if !(pixel_pitch > 0.0) {
        return Err(Error::invalid("pixel pitch must be positive"));
    }
    let (w_mm, h_mm) = spec.size_mm();
    let w = (w_mm / pixel_pitch).round() as usize;
    let h = (h_mm / pixel_pitch).round() as usize;
    let f = spec.height_fn();
    HeightField::from_fn(w, h, pixel_pitch, f)
}
