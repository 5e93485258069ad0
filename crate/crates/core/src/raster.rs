//! Multi-channel pixel maps with per-pixel coverage.
//!
//! Values are stored row-major with interleaved channels: the value of
//! channel `c` at pixel `(x, y)` lives at `(y * width + x) * channels + c`.

use crate::error::{mismatch, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
    coverage: Vec<bool>,
}

/// Per-pixel noise map (`n` in the SDS update).
pub type NoiseMap2D = ChannelMap;
/// Per-pixel score estimate produced from a denoiser residual.
pub type GradientMap = ChannelMap;
/// Rendered or target image.
pub type Image = ChannelMap;

impl ChannelMap {
    /// All-zero map with no covered pixels.
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            values: vec![0.0; width * height * channels],
            coverage: vec![false; width * height],
        }
    }

    /// Fully covered map from raw interleaved values.
    pub fn from_values(
        width: usize,
        height: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = width * height * channels;
        if values.len() != expected {
            return Err(mismatch(
                format!("{expected} values"),
                format!("{} values", values.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
            coverage: vec![true; width * height],
        })
    }

    pub fn with_coverage(mut self, coverage: Vec<bool>) -> Result<Self> {
        if coverage.len() != self.width * self.height {
            return Err(mismatch(
                format!("{} coverage flags", self.width * self.height),
                format!("{}", coverage.len()),
            ));
        }
        self.coverage = coverage;
        Ok(self)
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

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn coverage(&self) -> &[bool] {
        &self.coverage
    }

    pub fn coverage_mut(&mut self) -> &mut [bool] {
        &mut self.coverage
    }

    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|&&c| c).count()
    }

    pub fn is_fully_covered(&self) -> bool {
        self.coverage.iter().all(|&c| c)
    }

    /// Channel values of the pixel with linear index `idx`.
    pub fn at(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.values[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        self.at(y * self.width + x)
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let idx = y * self.width + x;
        self.at_mut(idx)
    }

    pub fn same_shape(&self, other: &ChannelMap) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    pub fn check_same_shape(&self, other: &ChannelMap) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(mismatch(self.shape_string(), other.shape_string()))
        }
    }

    /// Elementwise map over values; coverage is kept.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ChannelMap {
        ChannelMap {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// `self + scale * other`, coverage from `self`.
    pub fn add_scaled(&self, other: &ChannelMap, scale: f64) -> Result<ChannelMap> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(ChannelMap {
            values,
            ..self.clone()
        })
    }

    pub fn max_abs_diff(&self, other: &ChannelMap) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Half-open pixel rectangle `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x: 0,
            y: 0,
            width,
            height,
        }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.width > 0 && self.height > 0 && self.x + self.width <= width && self.y + self.height <= height
    }

    /// Whether the pixel with row-major index `idx` in an image `image_width`
    /// pixels wide lies inside.
    pub fn contains_index(&self, idx: usize, image_width: usize) -> bool {
        let (px, py) = (idx % image_width, idx / image_width);
        px >= self.x && px < self.x + self.width && py >= self.y && py < self.y + self.height
    }

    pub fn indices(&self, image_width: usize) -> impl Iterator<Item = usize> + '_ {
        (self.y..self.y + self.height)
            .flat_map(move |y| (self.x..self.x + self.width).map(move |x| y * image_width + x))
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}
