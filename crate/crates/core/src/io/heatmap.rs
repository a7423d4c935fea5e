//! Binary PGM (P5) and PPM (P6) heatmaps.
//!
//! Valid cells are scaled linearly between the field's minimum and maximum.
//! Masked cells are drawn black; in grayscale, valid cells use the levels
//! `GRAY_FLOOR..=255` so they never collide with masked ones. The header
//! comments record the colormap and the source extremes.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAY_FLOOR: u8 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    Gray,
    /// Dark-blue to yellow ramp interpolated through nine viridis-like stops.
    Ramp,
}

impl Colormap {
    pub fn name(self) -> &'static str {
        match self {
            Colormap::Gray => "gray",
            Colormap::Ramp => "ramp",
        }
    }
}

impl FromStr for Colormap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gray" | "grey" | "grayscale" => Ok(Colormap::Gray),
            "ramp" | "viridis" => Ok(Colormap::Ramp),
            other => Err(Error::InvalidParameter(format!("unknown colormap `{other}` (gray, ramp)"))),
        }
    }
}

const RAMP: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 45, 123],
    [59, 82, 139],
    [44, 114, 142],
    [33, 145, 140],
    [40, 174, 128],
    [94, 201, 98],
    [173, 220, 48],
    [253, 231, 37],
];

fn ramp(t: f64) -> [u8; 3] {
    let x = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for k in 0..3 {
        let a = RAMP[i][k] as f64;
        let b = RAMP[i + 1][k] as f64;
        out[k] = (a + (b - a) * f).round() as u8;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapImage {
    pub width: usize,
    pub height: usize,
    /// 1 byte per pixel for gray, 3 for ramp; row-major from the top row.
    pub pixels: Vec<u8>,
    pub colormap: Colormap,
    /// Extremes of the valid source values, `None` if nothing is valid.
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub comments: Vec<String>,
}

impl HeatmapImage {
    pub fn channels(&self) -> usize {
        match self.colormap {
            Colormap::Gray => 1,
            Colormap::Ramp => 3,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let n = self.channels();
        let i = (y * self.width + x) * n;
        &self.pixels[i..i + n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = String::new();
        head.push_str(match self.colormap {
            Colormap::Gray => "P5\n",
            Colormap::Ramp => "P6\n",
        });
        let fmt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x}"));
        let _ = writeln!(head, "# colormap={}", self.colormap.name());
        let _ = writeln!(head, "# min={}", fmt(self.min));
        let _ = writeln!(head, "# max={}", fmt(self.max));
        for c in &self.comments {
            let _ = writeln!(head, "# {}", c.replace('\n', " "));
        }
        let _ = write!(head, "{} {}\n255\n", self.width, self.height);
        let mut bytes = head.into_bytes();
        bytes.extend_from_slice(&self.pixels);
        bytes
    }

    /// Parses images written by [`to_bytes`](Self::to_bytes).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut line = || -> Result<String> {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Parse("truncated image header".into()))?;
            let s = String::from_utf8_lossy(&bytes[pos..pos + end]).into_owned();
            pos += end + 1;
            Ok(s)
        };
        let colormap = match line()?.as_str() {
            "P5" => Colormap::Gray,
            "P6" => Colormap::Ramp,
            other => return Err(Error::Parse(format!("unsupported image magic `{other}`"))),
        };
        let mut comments = Vec::new();
        let mut min = None;
        let mut max = None;
        let dims = loop {
            let l = line()?;
            match l.strip_prefix("# ") {
                Some(c) => {
                    let parse = |v: &str| v.parse::<f64>().ok();
                    if let Some(v) = c.strip_prefix("min=") {
                        min = parse(v);
                    } else if let Some(v) = c.strip_prefix("max=") {
                        max = parse(v);
                    } else if !c.starts_with("colormap=") {
                        comments.push(c.to_string());
                    }
                }
                None => break l,
            }
        };
        let mut it = dims.split_whitespace().map(|x| x.parse::<usize>());
        let (Some(Ok(width)), Some(Ok(height))) = (it.next(), it.next()) else {
            return Err(Error::Parse(format!("bad image dimensions `{dims}`")));
        };
        if line()? != "255" {
            return Err(Error::Parse("only 8-bit images are supported".into()));
        }
        let channels = if colormap == Colormap::Gray { 1 } else { 3 };
        let pixels = bytes[pos..].to_vec();
        if pixels.len() != width * height * channels {
            return Err(Error::Parse(format!("{} pixel bytes for a {width}×{height} image", pixels.len())));
        }
        Ok(HeatmapImage { width, height, pixels, colormap, min, max, comments })
    }
}

/// Renders a row-major `rows × cols` field, each cell as an
/// `upscale × upscale` block.
pub fn render_heatmap(
    values: &[f64],
    valid: &[bool],
    rows: usize,
    cols: usize,
    colormap: Colormap,
    upscale: usize,
    comments: Vec<String>,
) -> Result<HeatmapImage> {
    if values.len() != rows * cols || valid.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "{} values and {} flags for a {rows}×{cols} field",
            values.len(),
            valid.len()
        )));
    }
    if upscale == 0 {
        return Err(Error::InvalidParameter("upscale factor must be at least 1".into()));
    }
    let finite = |i: usize| valid[i] && values[i].is_finite();
    let (min, max) = (0..values.len()).filter(|&i| finite(i)).fold((None, None), |(lo, hi): (Option<f64>, Option<f64>), i| {
        let v = values[i];
        (Some(lo.map_or(v, |l| l.min(v))), Some(hi.map_or(v, |h| h.max(v))))
    });
    let scale = |v: f64| -> f64 {
        match (min, max) {
            (Some(lo), Some(hi)) if hi > lo => (v - lo) / (hi - lo),
            _ => 0.0,
        }
    };
    let channels = if colormap == Colormap::Gray { 1 } else { 3 };
    let (width, height) = (cols * upscale, rows * upscale);
    let mut pixels = Vec::with_capacity(width * height * channels);
    for y in 0..height {
        for x in 0..width {
            let i = (y / upscale) * cols + x / upscale;
            match (colormap, finite(i)) {
                (Colormap::Gray, false) => pixels.push(0),
                (Colormap::Gray, true) => {
                    let span = f64::from(255 - GRAY_FLOOR);
                    pixels.push(GRAY_FLOOR + (scale(values[i]) * span).round() as u8);
                }
                (Colormap::Ramp, false) => pixels.extend_from_slice(&[0, 0, 0]),
                (Colormap::Ramp, true) => pixels.extend_from_slice(&ramp(scale(values[i]))),
            }
        }
    }
    Ok(HeatmapImage { width, height, pixels, colormap, min, max, comments })
}
