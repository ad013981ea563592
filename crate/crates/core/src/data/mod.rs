//! Frames, color conversion, depth labels and the procedural toy dataset.

pub mod color;
pub mod depth;
pub mod manifest;
pub mod toy;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::spectral::Plane;

pub use color::{hsv_image, hsv_to_rgb, luma, resize_bilinear, rgb_to_hsv};
pub use depth::{make_live_depth_label, make_spoof_depth_label, DepthLabel, DepthParams};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use toy::{generate_toy_dataset, ToyConfig, ToyDataset, ToySample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Live,
    Spoof,
}

impl Label {
    /// Class index used by the classifier: live = 0, spoof = 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::Live => 0,
            Label::Spoof => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Live => "live",
            Label::Spoof => "spoof",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(Label::Live),
            "spoof" => Ok(Label::Spoof),
            other => Err(Error::data(format!("unknown label {other:?}"))),
        }
    }
}

/// RGB image with planar `[3][H][W]` storage, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * height * width {
            return Err(Error::shape(format!(
                "RGB image {height}x{width} given {} values",
                data.len()
            )));
        }
        Ok(RgbImage {
            height,
            width,
            data,
        })
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel(&self, c: usize) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.plane(c).iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn from_planes(planes: &[Plane]) -> Result<Self> {
        if planes.len() != 3 {
            return Err(Error::shape(format!(
                "expected 3 planes, got {}",
                planes.len()
            )));
        }
        let (h, w) = (planes[0].height, planes[0].width);
        if planes.iter().any(|p| p.height != h || p.width != w) {
            return Err(Error::shape("RGB planes differ in extent"));
        }
        let data = planes
            .iter()
            .flat_map(|p| p.data.iter().map(|&v| v as f32))
            .collect();
        RgbImage::new(h, w, data)
    }

    /// Pixel `(r, g, b)` at row `y`, column `x`.
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let n = self.height * self.width;
        let i = y * self.width + x;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }
}

/// Consecutive frames of one clip with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub id: String,
    pub label: Label,
    pub frames: Vec<RgbImage>,
}

impl FrameSequence {
    pub fn new(id: impl Into<String>, label: Label, frames: Vec<RgbImage>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::data("a frame sequence needs at least one frame"));
        };
        let (h, w) = (first.height, first.width);
        if frames.iter().any(|f| f.height != h || f.width != w) {
            return Err(Error::shape("frames of one sequence must share extents"));
        }
        Ok(FrameSequence {
            id: id.into(),
            label,
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(height, width)` shared by all frames.
    pub fn extent(&self) -> (usize, usize) {
        (self.frames[0].height, self.frames[0].width)
    }
}
