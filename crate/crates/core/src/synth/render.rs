//! Flat-shaded two-cube table scenes, written as binary PPM.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grammar::Verb;
use super::pattern::{Pattern, Side};
use super::trajectory::{manip_progress, reach_progress};
use super::Viewpoint;
use crate::error::{Error, Result};

pub const BACKGROUND: [u8; 3] = [90, 80, 70];
pub const EFFECTOR: [u8; 3] = [245, 245, 245];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSize {
    pub height: usize,
    pub width: usize,
}

impl Default for FrameSize {
    fn default() -> Self {
        FrameSize { height: 60, width: 80 }
    }
}

impl FrameSize {
    pub const DESK: FrameSize = FrameSize { height: 60, width: 80 };
    pub const FULL: FrameSize = FrameSize { height: 120, width: 160 };

    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 || self.height % 4 != 0 || self.width % 4 != 0 {
            return Err(Error::Config(format!(
                "frame size {}x{} must be at least 8x8 and divisible by 4",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// Cube edge length in pixels.
    pub fn cube(&self) -> f64 {
        self.height as f64 / 5.0
    }

    /// How far the target cube travels during a manipulation.
    pub fn travel(&self) -> f64 {
        self.height as f64 / 6.0
    }

    pub fn effector_radius(&self) -> f64 {
        (self.height as f64 / 20.0).max(2.0)
    }
}

/// 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn filled(size: FrameSize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(size.height * size.width * 3).collect();
        Image {
            height: size.height,
            width: size.width,
            data,
        }
    }

    pub fn size(&self) -> FrameSize {
        FrameSize {
            height: self.height,
            width: self.width,
        }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn put(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// One channel scaled to `[0, 1]`.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).map(|&v| v as f64 / 255.0).collect()
    }

    fn fill_rect(&mut self, cx: f64, cy: f64, half: f64, rgb: [u8; 3]) {
        for y in 0..self.height {
            let py = y as f64 + 0.5;
            if (py - cy).abs() > half {
                continue;
            }
            for x in 0..self.width {
                if (x as f64 + 0.5 - cx).abs() <= half {
                    self.put(y, x, rgb);
                }
            }
        }
    }

    fn fill_disc(&mut self, cx: f64, cy: f64, r: f64, rgb: [u8; 3]) {
        for y in 0..self.height {
            for x in 0..self.width {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    self.put(y, x, rgb);
                }
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn from_ppm(bytes: &[u8]) -> std::result::Result<Self, String> {
        // header: magic, width, height, maxval, each separated by whitespace
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated PPM header".into());
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(format!("expected binary 8-bit PPM, got {} / {}", fields[0], fields[3]));
        }
        let width: usize = fields[1].parse().map_err(|_| "bad width")?;
        let height: usize = fields[2].parse().map_err(|_| "bad height")?;
        let data = bytes.get(pos..).unwrap_or_default().to_vec();
        if data.len() != width * height * 3 {
            return Err(format!("expected {} pixel bytes, found {}", width * height * 3, data.len()));
        }
        Ok(Image { height, width, data })
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Image::from_ppm(&bytes).map_err(|m| Error::format(path, m))
    }
}

/// Cube centre at rest.
fn cube_home(size: FrameSize, side: Side) -> (f64, f64) {
    let x = match side {
        Side::Left => 0.3,
        Side::Right => 0.7,
    };
    (x * size.width as f64, 0.5 * size.height as f64)
}

/// Direction the target cube moves in, in image coordinates (y down).
fn cube_direction(p: &Pattern, view: Viewpoint) -> (f64, f64) {
    let away = match view {
        Viewpoint::Own => -1.0,
        Viewpoint::Opposite => 1.0,
    };
    match p.meaning.verb {
        Verb::Push => (0.0, away),
        Verb::Pull => (0.0, -away),
        Verb::Slide => (p.side.sign(), 0.0),
    }
}

/// Where the effector starts: bottom edge for the robot, top edge for the
/// opposite agent, mirrored left to right.
pub fn effector_home(size: FrameSize, view: Viewpoint) -> (f64, f64) {
    let r = size.effector_radius();
    let x = 0.45 * size.width as f64;
    match view {
        Viewpoint::Own => (x, size.height as f64 + 0.5 * r),
        Viewpoint::Opposite => (mirror_x(size, x), -0.5 * r),
    }
}

pub fn mirror_x(size: FrameSize, x: f64) -> f64 {
    size.width as f64 - x
}

/// Target cube centre at normalised time `τ`.
pub fn target_centre(p: &Pattern, tau: f64, view: Viewpoint, size: FrameSize) -> (f64, f64) {
    let (hx, hy) = cube_home(size, p.side);
    let (dx, dy) = cube_direction(p, view);
    let d = manip_progress(tau) * size.travel();
    (hx + dx * d, hy + dy * d)
}

/// Effector centre at `τ`: it reaches the contact point on the side opposite
/// the motion direction, then travels with the cube.
pub fn effector_centre(p: &Pattern, tau: f64, view: Viewpoint, size: FrameSize) -> (f64, f64) {
    let (dx, dy) = cube_direction(p, view);
    let gap = size.cube() / 2.0 + size.effector_radius();
    let (cx, cy) = target_centre(p, tau, view, size);
    let contact = (cx - dx * gap, cy - dy * gap);
    let (hx, hy) = effector_home(size, view);
    let s = reach_progress(tau);
    (hx + (contact.0 - hx) * s, hy + (contact.1 - hy) * s)
}

/// Renders the scene at normalised time `τ`.
pub fn render_frame(p: &Pattern, tau: f64, view: Viewpoint, size: FrameSize) -> Image {
    let mut img = Image::filled(size, BACKGROUND);
    let half = size.cube() / 2.0;
    let other = match p.side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    };
    let (ox, oy) = cube_home(size, other);
    img.fill_rect(ox, oy, half, p.distractor_colour().rgb());
    let (tx, ty) = target_centre(p, tau, view, size);
    img.fill_rect(tx, ty, half, p.target().rgb());
    let (ex, ey) = effector_centre(p, tau, view, size);
    img.fill_disc(ex, ey, size.effector_radius(), EFFECTOR);
    img
}
