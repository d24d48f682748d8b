//! Point-to-point ICP with brute-force correspondences and an SVD rigid fit.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: [0.0; 3],
    };

    fn from_parts(r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        Self {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
            translation: [t[0], t[1], t[2]],
        }
    }

    fn parts(&self) -> (Matrix3<f64>, Vector3<f64>) {
        (
            Matrix3::from_fn(|i, j| self.rotation[i][j]),
            Vector3::from_column_slice(&self.translation),
        )
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let (r, t) = self.parts();
        let q = r * Vector3::from_column_slice(&p) + t;
        [q[0], q[1], q[2]]
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let (r1, t1) = self.parts();
        let (r2, t2) = other.parts();
        Self::from_parts(&(r1 * r2), &(r1 * t2 + t1))
    }

    pub fn inverse(&self) -> RigidTransform {
        let (r, t) = self.parts();
        let rt = r.transpose();
        Self::from_parts(&rt, &(-(rt * t)))
    }

    /// Rotation angle in degrees.
    pub fn angle_deg(&self) -> f64 {
        let (r, _) = self.parts();
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// Rotation about `axis` (normalised internally) by `deg`, then translation.
    pub fn from_axis_angle(axis: [f64; 3], deg: f64, translation: [f64; 3]) -> Self {
        let a = nalgebra::Unit::new_normalize(Vector3::from_column_slice(&axis));
        let r = nalgebra::Rotation3::from_axis_angle(&a, deg.to_radians());
        Self::from_parts(r.matrix(), &Vector3::from_column_slice(&translation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    /// Maps source points onto the target.
    pub transform: RigidTransform,
    /// RMS correspondence distance before each iteration's update, plus the final value.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl IcpResult {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }
}

fn centroid(p: &[Vector3<f64>]) -> Vector3<f64> {
    p.iter().fold(Vector3::zeros(), |a, v| a + v) / p.len() as f64
}

fn check_cloud(p: &[[f64; 3]], name: &str) -> Result<Vec<Vector3<f64>>> {
    if p.len() < 3 {
        return Err(Error::Degenerate(format!("{name} cloud has fewer than 3 points")));
    }
    if p.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} cloud has non-finite points")));
    }
    let v: Vec<Vector3<f64>> = p.iter().map(|q| Vector3::from_column_slice(q)).collect();
    let c = centroid(&v);
    let cov = v.iter().fold(Matrix3::zeros(), |a, q| a + (q - c) * (q - c).transpose());
    let sv = cov.svd(false, false).singular_values;
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    if s[0] <= 0.0 || s[1] <= 1e-12 * s[0] {
        return Err(Error::Degenerate(format!("{name} cloud is collinear")));
    }
    Ok(v)
}

/// Least-squares rigid transform taking `a[i]` onto `b[i]`.
fn kabsch(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let (ca, cb) = (centroid(a), centroid(b));
    let h = a.iter().zip(b).fold(Matrix3::zeros(), |acc, (p, q)| acc + (p - ca) * (q - cb).transpose());
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut d = Matrix3::identity();
    if (vt.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = vt.transpose() * d * u.transpose();
    (r, cb - r * ca)
}

fn nearest(points: &[Vector3<f64>], target: &[Vector3<f64>]) -> (Vec<usize>, f64) {
    let found: Vec<(usize, f64)> = points
        .par_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, q) in target.iter().enumerate() {
                let d = (p - q).norm_squared();
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect();
    let rms = (found.iter().map(|f| f.1).sum::<f64>() / found.len() as f64).sqrt();
    (found.into_iter().map(|f| f.0).collect(), rms)
}

/// Aligns `source` to `target`, starting from a centroid match.
pub fn icp_align(source: &[[f64; 3]], target: &[[f64; 3]], max_iter: usize, tol: f64) -> Result<IcpResult> {
    let src = check_cloud(source, "source")?;
    let tgt = check_cloud(target, "target")?;
    let mut r = Matrix3::identity();
    let mut t = centroid(&tgt) - centroid(&src);
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        let moved: Vec<Vector3<f64>> = src.iter().map(|p| r * p + t).collect();
        let (idx, rms) = nearest(&moved, &tgt);
        if residuals.last().is_some_and(|&prev: &f64| prev - rms < tol) {
            residuals.push(rms);
            converged = true;
            break;
        }
        residuals.push(rms);
        iterations += 1;
        let matched: Vec<Vector3<f64>> = idx.iter().map(|&j| tgt[j]).collect();
        let (r_new, t_new) = kabsch(&src, &matched);
        r = r_new;
        t = t_new;
    }
    if !converged {
        let moved: Vec<Vector3<f64>> = src.iter().map(|p| r * p + t).collect();
        residuals.push(nearest(&moved, &tgt).1);
    }
    Ok(IcpResult {
        transform: RigidTransform::from_parts(&r, &t),
        residuals,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (x, y): (f64, f64) = (rng.gen_range(-20.0..20.0), rng.gen_range(-15.0..15.0));
                [x, y, 2.0 * (x / 6.0).sin() * (y / 5.0).cos()]
            })
            .collect()
    }

    #[test]
    fn identity_on_same_cloud() {
        let c = cloud(400, 1);
        let r = icp_align(&c, &c, 50, 1e-6).unwrap();
        assert!(r.final_residual() < 1e-12);
        assert!(r.transform.angle_deg() < 1e-6);
        assert!(r.transform.translation.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn recovers_known_motion() {
        let src = cloud(800, 2);
        let truth = RigidTransform::from_axis_angle([0.2, -0.1, 1.0], 5.0, [1.0, 2.0, 0.5]);
        let tgt: Vec<_> = src.iter().map(|&p| truth.apply(p)).collect();
        let r = icp_align(&src, &tgt, 50, 1e-9).unwrap();
        let err = r.transform.compose(&truth.inverse());
        assert!(err.angle_deg() < 1e-3, "{}", err.angle_deg());
        assert!(err.translation.iter().all(|v| v.abs() < 1e-3), "{:?}", err.translation);
        for w in r.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let line: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
        assert!(matches!(icp_align(&line, &line, 10, 1e-6), Err(Error::Degenerate(_))));
        assert!(matches!(icp_align(&line[..2], &line, 10, 1e-6), Err(Error::Degenerate(_))));
    }
}
