//! Shared containers: images, focal stacks, focus and depth maps.
//!
//! Everything here is immutable once constructed and validated, so the same
//! values can be shared freely between worker threads.

use crate::error::{Error, Result};

/// Rec. 709 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.2126, 0.7152, 0.0722];

/// Row-major image with 1 (luma) or 3 (RGB) interleaved channels, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("images need 1 or 3 channels, got {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be non-zero"));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Builds an image by evaluating `f(x, y, c)`; values are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Interleaved samples of scanline `y`.
    pub fn row(&self, y: usize) -> &[f32] {
        let stride = self.width * self.channels;
        &self.data[y * stride..(y + 1) * stride]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Single-channel intensity image; identity for luma input.
    pub fn to_luma(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| {
                let l = LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2];
                l.clamp(0.0, 1.0)
            })
            .collect();
        Image { width: self.width, height: self.height, channels: 1, data }
    }
}

/// Non-negative per-pixel values, e.g. gradient magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid("scalar field length does not match its dimensions"));
        }
        Ok(Self { width, height, data })
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Capture metadata of one focal-stack image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptureMeta {
    /// Camera focus unit, resolved to meters through a calibration model.
    pub focus_param: Option<f64>,
    pub focus_distance_m: Option<f64>,
    pub focal_length_m: f64,
}

impl CaptureMeta {
    pub fn with_distance(focus_distance_m: f64, focal_length_m: f64) -> Self {
        Self { focus_param: None, focus_distance_m: Some(focus_distance_m), focal_length_m }
    }

    pub fn with_param(focus_param: f64, focal_length_m: f64) -> Self {
        Self { focus_param: Some(focus_param), focus_distance_m: None, focal_length_m }
    }

    pub fn validate(&self) -> Result<()> {
        if self.focus_param.is_none() && self.focus_distance_m.is_none() {
            return Err(Error::invalid("capture metadata needs a focus parameter or a focus distance"));
        }
        if !(self.focal_length_m.is_finite() && self.focal_length_m > 0.0) {
            return Err(Error::invalid(format!("focal length {} m must be positive", self.focal_length_m)));
        }
        if let Some(d) = self.focus_distance_m {
            if !(d.is_finite() && d > self.focal_length_m) {
                return Err(Error::invalid(format!(
                    "focus distance {d} m must exceed the focal length {} m",
                    self.focal_length_m
                )));
            }
        }
        if let Some(p) = self.focus_param {
            if !p.is_finite() {
                return Err(Error::invalid("focus parameter must be finite"));
            }
        }
        Ok(())
    }
}

/// Co-registered images of one scene, each focused at a different distance.
#[derive(Debug, Clone)]
pub struct FocalStack {
    images: Vec<Image>,
    meta: Vec<CaptureMeta>,
}

impl FocalStack {
    pub fn new(images: Vec<Image>, meta: Vec<CaptureMeta>) -> Result<Self> {
        let first = images.first().ok_or_else(|| Error::invalid("focal stack is empty"))?;
        if images.len() != meta.len() {
            return Err(Error::invalid(format!(
                "{} images but {} metadata entries",
                images.len(),
                meta.len()
            )));
        }
        if let Some((i, _)) = images.iter().enumerate().find(|(_, img)| !img.same_shape(first)) {
            return Err(Error::invalid(format!("image {} differs in size or channel count", i + 1)));
        }
        for (i, m) in meta.iter().enumerate() {
            m.validate()
                .map_err(|e| Error::invalid(format!("image {}: {e}", i + 1)))?;
        }
        if images.len() > u16::MAX as usize {
            return Err(Error::invalid("too many images in the stack"));
        }
        Ok(Self { images, meta })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn meta(&self) -> &[CaptureMeta] {
        &self.meta
    }

    /// Image for 1-based `label`.
    pub fn image(&self, label: u16) -> &Image {
        &self.images[label as usize - 1]
    }

    pub fn width(&self) -> usize {
        self.images[0].width()
    }

    pub fn height(&self) -> usize {
        self.images[0].height()
    }

    pub fn channels(&self) -> usize {
        self.images[0].channels()
    }
}

/// Per-pixel index (1-based) of the stack image in which that pixel is in focus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FocusMap {
    width: usize,
    height: usize,
    num_labels: usize,
    labels: Vec<u16>,
}

impl FocusMap {
    pub fn new(width: usize, height: usize, num_labels: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::invalid("focus map length does not match its dimensions"));
        }
        if num_labels == 0 || num_labels > u16::MAX as usize {
            return Err(Error::invalid(format!("unsupported label count {num_labels}")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l == 0 || l as usize > num_labels) {
            return Err(Error::invalid(format!("label {bad} outside [1, {num_labels}]")));
        }
        Ok(Self { width, height, num_labels, labels })
    }

    pub fn constant(width: usize, height: usize, num_labels: usize, label: u16) -> Result<Self> {
        Self::new(width, height, num_labels, vec![label; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u16] {
        &self.labels[y * self.width..(y + 1) * self.width]
    }
}

/// Metric depth per pixel, quantized to one calibrated distance per focus label.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    label_depths: Vec<f64>,
    depth_m: Vec<f64>,
}

impl DepthMap {
    /// Expands per-label distances (index `label - 1`) over the focus map.
    pub fn from_labels(fm: &FocusMap, label_depths: Vec<f64>) -> Result<Self> {
        if label_depths.len() != fm.num_labels() {
            return Err(Error::invalid(format!(
                "{} label depths for {} labels",
                label_depths.len(),
                fm.num_labels()
            )));
        }
        if let Some(bad) = label_depths.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::invalid(format!("depth {bad} m must be positive and finite")));
        }
        let depth_m = fm.labels().iter().map(|&l| label_depths[l as usize - 1]).collect();
        Ok(Self { width: fm.width(), height: fm.height(), label_depths, depth_m })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn label_depths(&self) -> &[f64] {
        &self.label_depths
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth_m
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.depth_m[y * self.width + x]
    }
}
