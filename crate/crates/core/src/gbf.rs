//! "GBF1" binary grid files.
//!
//! Layout (all little-endian):
//!
//! | bytes | field                                         |
//! |-------|-----------------------------------------------|
//! | 4     | magic `GBF1`                                  |
//! | 1     | kind: 0 height, 1 gradient, 2 normal, 3 mask  |
//! | 4     | width (u32)                                   |
//! | 4     | height (u32)                                  |
//! | 4     | pixel pitch in mm (f32)                       |
//! | ...   | row-major payload, channels interleaved       |
//!
//! Height, gradient and normal payloads are f32 with 1, 2 and 3 channels;
//! mask payloads are one u8 (0 or 1) per pixel.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GradientField, HeightField, Mask, NormalMap};

pub const MAGIC: &[u8; 4] = b"GBF1";
const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum GridKind {
    Height = 0,
    Gradient = 1,
    Normal = 2,
    Mask = 3,
}

impl GridKind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => GridKind::Height,
            1 => GridKind::Gradient,
            2 => GridKind::Normal,
            3 => GridKind::Mask,
            other => return Err(Error::Format(format!("unknown GBF1 kind {other}"))),
        })
    }

    fn channels(self) -> usize {
        match self {
            GridKind::Height | GridKind::Mask => 1,
            GridKind::Gradient => 2,
            GridKind::Normal => 3,
        }
    }
}

/// Any grid that can be stored in a GBF1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Height(HeightField),
    Gradient(GradientField),
    Normal(NormalMap),
    Mask { mask: Mask, pixel_pitch: f64 },
}

impl Grid {
    pub fn kind(&self) -> GridKind {
        match self {
            Grid::Height(_) => GridKind::Height,
            Grid::Gradient(_) => GridKind::Gradient,
            Grid::Normal(_) => GridKind::Normal,
            Grid::Mask { .. } => GridKind::Mask,
        }
    }

    fn header(&self) -> (usize, usize, f64) {
        match self {
            Grid::Height(g) => (g.width(), g.height(), g.pixel_pitch()),
            Grid::Gradient(g) => (g.width(), g.height(), g.pixel_pitch()),
            Grid::Normal(g) => (g.width(), g.height(), g.pixel_pitch()),
            Grid::Mask { mask, pixel_pitch } => (mask.width(), mask.height(), *pixel_pitch),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (w, h, pitch) = self.header();
        let kind = self.kind();
        let mut out = Vec::with_capacity(HEADER_LEN + w * h * kind.channels() * 4);
        out.extend_from_slice(MAGIC);
        out.push(kind as u8);
        out.extend_from_slice(&(w as u32).to_le_bytes());
        out.extend_from_slice(&(h as u32).to_le_bytes());
        out.extend_from_slice(&(pitch as f32).to_le_bytes());
        let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
        match self {
            Grid::Height(g) => g.data().iter().for_each(|&v| put(v)),
            Grid::Gradient(g) => g.data().iter().flatten().for_each(|&v| put(v)),
            Grid::Normal(g) => g.data().iter().flatten().for_each(|&v| put(v)),
            Grid::Mask { mask, .. } => out.extend(mask.data().iter().map(|&b| b as u8)),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Grid> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing GBF1 header".into()));
        }
        let kind = GridKind::from_u8(bytes[4])?;
        let w = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let pitch = f32::from_le_bytes(bytes[13..17].try_into().unwrap()) as f64;
        let payload = &bytes[HEADER_LEN..];
        let n = w
            .checked_mul(h)
            .ok_or_else(|| Error::Format("grid dimensions overflow".into()))?;
        let elem = if kind == GridKind::Mask { 1 } else { 4 };
        let expected = n * kind.channels() * elem;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "payload is {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let floats = || {
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        };
        Ok(match kind {
            GridKind::Height => Grid::Height(HeightField::new(w, h, pitch, floats().collect())?),
            GridKind::Gradient => {
                let v: Vec<f64> = floats().collect();
                let data = v.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
                Grid::Gradient(GradientField::new(w, h, pitch, data)?)
            }
            GridKind::Normal => {
                let v: Vec<f64> = floats().collect();
                let data = v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
                Grid::Normal(NormalMap::new(w, h, pitch, data)?)
            }
            GridKind::Mask => {
                if payload.iter().any(|&b| b > 1) {
                    return Err(Error::Format("mask payload must be 0 or 1".into()));
                }
                Grid::Mask {
                    mask: Mask::new(w, h, payload.iter().map(|&b| b == 1).collect())?,
                    pixel_pitch: pitch,
                }
            }
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(mut r: impl Read) -> Result<Grid> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::Format(format!("read failed: {e}")))?;
        Grid::from_bytes(&buf)
    }

    /// Writes through a sibling temp file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Grid> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Grid::from_bytes(&bytes)
    }

    pub fn into_height(self) -> Result<HeightField> {
        match self {
            Grid::Height(h) => Ok(h),
            other => Err(Error::Format(format!("expected height grid, got {:?}", other.kind()))),
        }
    }

    pub fn into_normal(self) -> Result<NormalMap> {
        match self {
            Grid::Normal(n) => Ok(n),
            other => Err(Error::Format(format!("expected normal grid, got {:?}", other.kind()))),
        }
    }

    pub fn into_gradient(self) -> Result<GradientField> {
        match self {
            Grid::Gradient(g) => Ok(g),
            other => Err(Error::Format(format!("expected gradient grid, got {:?}", other.kind()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let h = HeightField::new(2, 1, 0.25, vec![1.5, -2.0]).unwrap();
        let bytes = Grid::Height(h).to_bytes();
        let mut expected = b"GBF1".to_vec();
        expected.push(0);
        expected.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&0.25f32.to_le_bytes());
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn mask_payload_is_bytes() {
        let mask = Mask::new(3, 1, vec![true, false, true]).unwrap();
        let bytes = Grid::Mask { mask: mask.clone(), pixel_pitch: 0.5 }.to_bytes();
        assert_eq!(bytes[4], 3);
        assert_eq!(&bytes[17..], &[1, 0, 1]);
        match Grid::from_bytes(&bytes).unwrap() {
            Grid::Mask { mask: m, pixel_pitch } => {
                assert_eq!(m, mask);
                assert_eq!(pixel_pitch, 0.5);
            }
            other => panic!("wrong kind {:?}", other.kind()),
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Grid::from_bytes(b"GBF0").is_err());
        let mut bytes = Grid::Height(HeightField::zeros(2, 2, 1.0).unwrap()).to_bytes();
        bytes.pop();
        assert!(matches!(Grid::from_bytes(&bytes), Err(Error::Format(_))));
        bytes.push(0);
        bytes[4] = 9;
        assert!(Grid::from_bytes(&bytes).is_err());
    }

    proptest::proptest! {
        // f32-representable payloads survive a write/read cycle exactly.
        #[test]
        fn gradient_round_trip(vals in proptest::collection::vec(-100.0f32..100.0, 12)) {
            let data = vals.chunks(2).map(|c| [c[0] as f64, c[1] as f64]).collect();
            let g = Grid::Gradient(GradientField::new(3, 2, 0.125, data).unwrap());
            proptest::prop_assert_eq!(Grid::from_bytes(&g.to_bytes()).unwrap(), g);
        }
    }
}
