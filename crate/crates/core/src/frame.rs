use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.x + self.width <= width && self.y + self.height <= height
    }
}

/// Which belt edge a marker band belongs to. The left band is imaged at the
/// top of the frame and is lit red; the right band sits at the bottom and is
/// lit blue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Left,
    Right,
}

impl Band {
    pub const BOTH: [Band; 2] = [Band::Left, Band::Right];

    /// +1 for the left band, -1 for the right band.
    pub fn sign(self) -> f64 {
        match self {
            Band::Left => 1.0,
            Band::Right => -1.0,
        }
    }

    /// RGB channel the band's markers are detected in.
    pub fn channel(self) -> usize {
        match self {
            Band::Left => 0,
            Band::Right => 2,
        }
    }
}

/// One 8-bit RGB tactile image plus its band layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileFrame {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
    pub frame_index: usize,
    pub timestamp: f64,
    sensing: Rect,
    left_band: Rect,
    right_band: Rect,
}

impl TactileFrame {
    pub fn new(
        width: usize,
        height: usize,
        rgb: Vec<u8>,
        sensing: Rect,
        left_band: Rect,
        right_band: Rect,
    ) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "rgb buffer holds {} bytes, expected {}",
                rgb.len(),
                width * height * 3
            )));
        }
        for (name, r) in [("sensing", sensing), ("left band", left_band), ("right band", right_band)] {
            if !r.fits_in(width, height) {
                return Err(Error::invalid(format!("{name} region {r:?} exceeds the image")));
            }
        }
        if left_band.intersects(&sensing) || right_band.intersects(&sensing) {
            return Err(Error::invalid("marker bands overlap the sensing region"));
        }
        Ok(Self {
            width,
            height,
            rgb,
            frame_index: 0,
            timestamp: 0.0,
            sensing,
            left_band,
            right_band,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }
    pub fn sensing(&self) -> Rect {
        self.sensing
    }
    pub fn band(&self, band: Band) -> Rect {
        match band {
            Band::Left => self.left_band,
            Band::Right => self.right_band,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// One channel of a rectangle as floats in [0, 1], row-major.
    pub fn channel_crop(&self, rect: Rect, channel: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(rect.width * rect.height);
        for y in rect.y..rect.y + rect.height {
            for x in rect.x..rect.x + rect.width {
                out.push(self.rgb[(y * self.width + x) * 3 + channel] as f64 / 255.0);
            }
        }
        out
    }

    pub fn with_index(mut self, frame_index: usize, timestamp: f64) -> Self {
        self.frame_index = frame_index;
        self.timestamp = timestamp;
        self
    }

    pub fn with_rgb(&self, rgb: Vec<u8>) -> Result<Self> {
        let mut f = TactileFrame::new(
            self.width,
            self.height,
            rgb,
            self.sensing,
            self.left_band,
            self.right_band,
        )?;
        f.frame_index = self.frame_index;
        f.timestamp = self.timestamp;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_layout_validated() {
        let sensing = Rect::new(0, 2, 4, 4);
        let ok = TactileFrame::new(4, 8, vec![0; 96], sensing, Rect::new(0, 0, 4, 2), Rect::new(0, 6, 4, 2));
        assert!(ok.is_ok());
        let overlap = TactileFrame::new(4, 8, vec![0; 96], sensing, Rect::new(0, 0, 4, 3), Rect::new(0, 6, 4, 2));
        assert!(overlap.is_err());
        let outside = TactileFrame::new(4, 8, vec![0; 96], sensing, Rect::new(0, 0, 4, 2), Rect::new(0, 7, 4, 2));
        assert!(outside.is_err());
    }
}
