//! Core value types shared by every stage: feature grids, depth maps, masks
//! and drag pairs.
//!
//! Coordinates follow image conventions: `x` indexes columns, `y` indexes
//! rows, the origin is the top-left cell and cell `(x, y)` has its center at
//! the integer position `(x, y)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

/// Checks the [`FeatureGrid`] invariants on raw parts.
pub fn validate_grid(
    height: usize,
    width: usize,
    channels: usize,
    data: &[f64],
) -> Result<(), GridError> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(GridError::DimensionMismatch(format!(
            "dimensions must be positive, got {height}x{width}x{channels}"
        )));
    }
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| GridError::DimensionMismatch("element count overflows".into()))?;
    if data.len() != expected {
        return Err(GridError::DimensionMismatch(format!(
            "{height}x{width}x{channels} needs {expected} values, got {}",
            data.len()
        )));
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(GridError::NonFiniteValue { index });
    }
    Ok(())
}

/// A `height x width` grid of `channels`-dimensional feature vectors stored
/// row-major in `(y, x, channel)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, GridError> {
        validate_grid(height, width, channels, &data)?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self, GridError> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Feature vector of cell `(x, y)`.
    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn cell_at(&self, index: usize) -> &[f64] {
        let start = index * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Builds a grid of the same shape from new data, re-checking finiteness.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self, GridError> {
        Self::new(self.height, self.width, self.channels, data)
    }

    pub fn same_dims(&self, other: &FeatureGrid) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Elementwise `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &FeatureGrid, b: f64) -> Result<Self, GridError> {
        if !self.same_dims(other) {
            return Err(GridError::DimensionMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        self.with_data(data)
    }

    pub fn scale(&self, a: f64) -> Result<Self, GridError> {
        self.with_data(self.data.iter().map(|v| a * v).collect())
    }

    /// Largest absolute elementwise difference; `None` when dimensions differ.
    pub fn max_abs_diff(&self, other: &FeatureGrid) -> Option<f64> {
        if !self.same_dims(other) {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// Per-cell scalar depth, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, GridError> {
        validate_grid(height, width, 1, &values)?;
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self, GridError> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Depth of the cell containing the real position `(x, y)`, clamped to
    /// the grid.
    pub fn at_nearest(&self, x: f64, y: f64) -> f64 {
        let cx = (x.round().max(0.0) as usize).min(self.width - 1);
        let cy = (y.round().max(0.0) as usize).min(self.height - 1);
        self.at(cx, cy)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn into_grid(self) -> FeatureGrid {
        FeatureGrid {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.values,
        }
    }
}

/// Binary selection over grid cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, GridError> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(GridError::DimensionMismatch(format!(
                "mask {height}x{width} with {} bits",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn full(height: usize, width: usize) -> Result<Self, GridError> {
        Self::new(height, width, vec![true; height * width])
    }

    pub fn from_cells(
        height: usize,
        width: usize,
        cells: &[(usize, usize)],
    ) -> Result<Self, GridError> {
        let mut bits = vec![false; height * width];
        for &(x, y) in cells {
            if x >= width || y >= height {
                return Err(GridError::DimensionMismatch(format!(
                    "cell ({x}, {y}) outside {height}x{width} mask"
                )));
            }
            bits[y * width + x] = true;
        }
        Self::new(height, width, bits)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Masked cells as `(x, y)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % width, i / width))
    }
}

/// A single drag gesture from `handle` to `target`, in grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragPair {
    pub handle: [f64; 2],
    pub target: [f64; 2],
}

impl DragPair {
    pub fn new(handle: [f64; 2], target: [f64; 2]) -> Self {
        Self { handle, target }
    }

    pub fn is_null(&self) -> bool {
        self.handle == self.target
    }

    /// Integer cell nearest to the handle, if it lies on the grid.
    pub fn handle_cell(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let [x, y] = self.handle;
        let (cx, cy) = (x.round(), y.round());
        (cx >= 0.0 && cy >= 0.0 && (cx as usize) < width && (cy as usize) < height)
            .then_some((cx as usize, cy as usize))
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<(), GridError> {
        let [x, y] = self.handle;
        let finite = self.handle.iter().chain(&self.target).all(|v| v.is_finite());
        if !finite || x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
            return Err(GridError::DimensionMismatch(format!(
                "handle ({x}, {y}) outside [0, {width}) x [0, {height})"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_grid_validates() {
        assert!(validate_grid(2, 2, 1, &[1.0, 2.0, 3.0, 4.0]).is_ok());
    }

    #[test]
    fn short_data_is_a_dimension_mismatch() {
        assert!(matches!(
            validate_grid(2, 2, 1, &[1.0, 2.0, 3.0]),
            Err(GridError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn nan_is_rejected() {
        assert_eq!(
            validate_grid(1, 1, 1, &[f64::NAN]),
            Err(GridError::NonFiniteValue { index: 0 })
        );
        assert!(FeatureGrid::new(1, 2, 1, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(validate_grid(0, 2, 1, &[]).is_err());
    }

    #[test]
    fn mask_cells_are_row_major() {
        let m = Mask::from_cells(3, 3, &[(2, 0), (0, 1), (1, 0)]).unwrap();
        assert_eq!(m.cells().collect::<Vec<_>>(), vec![(1, 0), (2, 0), (0, 1)]);
        assert_eq!(m.count(), 3);
    }

    #[test]
    fn handle_cell_rounds_and_bounds() {
        let p = DragPair::new([2.4, 3.6], [0.0, 0.0]);
        assert_eq!(p.handle_cell(5, 5), Some((2, 4)));
        assert_eq!(p.handle_cell(4, 5), None);
        assert!(DragPair::new([5.0, 0.0], [0.0, 0.0]).check_bounds(5, 5).is_err());
    }
}
