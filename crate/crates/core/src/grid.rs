//! Binary grid masks (ground truth) and probability matrices (network heads).

use ndarray::Array2;

use crate::error::{Error, Result};

/// An `n` x `n` binary mask over a square frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMask {
    cells: Array2<u8>,
}

impl GridMask {
    pub fn zeros(n: usize) -> Self {
        Self {
            cells: Array2::zeros((n, n)),
        }
    }

    pub fn from_cells(cells: Array2<u8>) -> Result<Self> {
        if cells.nrows() != cells.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "grid mask must be square, got {}x{}",
                cells.nrows(),
                cells.ncols()
            )));
        }
        if cells.iter().any(|&v| v > 1) {
            return Err(Error::InvalidConfig(
                "grid mask cells must be 0 or 1".into(),
            ));
        }
        Ok(Self { cells })
    }

    pub fn order(&self) -> usize {
        self.cells.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value <= 1);
        self.cells[(row, col)] = value;
    }

    pub fn cells(&self) -> &Array2<u8> {
        &self.cells
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().filter(|&&v| v == 1).count()
    }

    /// Row-major `(row, col)` coordinates of all set cells.
    pub fn ones(&self) -> Vec<(usize, usize)> {
        self.cells
            .indexed_iter()
            .filter(|(_, &v)| v == 1)
            .map(|((r, c), _)| (r, c))
            .collect()
    }

    /// A center mask must mark exactly one cell.
    pub fn is_single_cell(&self) -> bool {
        self.count_ones() == 1
    }

    /// Mask cells as reals, for metric computations.
    pub fn to_f64(&self) -> Array2<f64> {
        self.cells.mapv(f64::from)
    }
}

/// An `n` x `n` matrix of probabilities summing to one (a softmax head).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    cells: Array2<f64>,
}

impl ProbMatrix {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    /// Validating constructor: entries in the open interval `(0, 1)` and a
    /// total within `SUM_TOLERANCE` of one.
    pub fn new(cells: Array2<f64>) -> Result<Self> {
        if cells.nrows() != cells.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "probability matrix must be square, got {}x{}",
                cells.nrows(),
                cells.ncols()
            )));
        }
        if cells
            .iter()
            .any(|v| !v.is_finite() || *v <= 0.0 || *v >= 1.0)
        {
            return Err(Error::InvalidConfig(
                "probability entries must lie strictly inside (0, 1)".into(),
            ));
        }
        let sum: f64 = cells.sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "probability matrix sums to {sum}, expected 1"
            )));
        }
        Ok(Self { cells })
    }

    /// Wraps externally sourced values (golden fixtures, metric inputs)
    /// without enforcing the distribution invariants.
    pub fn from_cells_unchecked(cells: Array2<f64>) -> Self {
        assert_eq!(cells.nrows(), cells.ncols(), "matrix must be square");
        Self { cells }
    }

    pub fn order(&self) -> usize {
        self.cells.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[(row, col)]
    }

    pub fn cells(&self) -> &Array2<f64> {
        &self.cells
    }

    pub fn sum(&self) -> f64 {
        self.cells.sum()
    }

    pub fn max(&self) -> f64 {
        self.cells.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
