//! Discretized time-frequency supports and the overlap label.

use serde::{Deserialize, Serialize};

use crate::{Result, SignalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Radar absent or disjoint from every commercial signal.
    H0 = 0,
    /// Radar support intersects a commercial signal's support.
    H1 = 1,
}

impl Label {
    pub fn class(self) -> usize {
        self as usize
    }

    pub fn from_class(c: usize) -> Option<Self> {
        match c {
            0 => Some(Label::H0),
            1 => Some(Label::H1),
            _ => None,
        }
    }
}

/// Boolean `[height, width]` grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl SupportMask {
    pub fn new(height: usize, width: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != height * width {
            return Err(SignalError::Config(format!(
                "{} cells do not fill a {height}x{width} mask",
                cells.len()
            )));
        }
        Ok(Self { height, width, cells })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, cells: vec![false; height * width] }
    }

    /// Cells whose power is within `threshold_db` of the grid's own peak.
    /// An all-zero grid yields an empty mask.
    pub fn from_power(power: &[f64], height: usize, width: usize, threshold_db: f64) -> Result<Self> {
        let peak = power.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Self::new(height, width, vec![false; power.len()]);
        }
        let cut = peak * 10f64.powf(-threshold_db / 10.0);
        Self::new(height, width, power.iter().map(|&p| p >= cut).collect())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    /// Columns holding at least one true cell.
    pub fn occupied_columns(&self) -> Vec<bool> {
        let mut cols = vec![false; self.width];
        for r in 0..self.height {
            for (c, col) in cols.iter_mut().enumerate() {
                *col |= self.get(r, c);
            }
        }
        cols
    }

    pub fn union(&self, other: &SupportMask) -> Result<SupportMask> {
        check_shapes(self, other)?;
        let cells = self.cells.iter().zip(&other.cells).map(|(a, b)| *a || *b).collect();
        Ok(SupportMask { height: self.height, width: self.width, cells })
    }
}

fn check_shapes(a: &SupportMask, b: &SupportMask) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(SignalError::MaskShape(a.shape(), b.shape()));
    }
    Ok(())
}

/// H1 iff some cell is set in both masks.
pub fn label_overlap(radar_support: &SupportMask, comm_support: &SupportMask) -> Result<Label> {
    check_shapes(radar_support, comm_support)?;
    let hit = radar_support.cells.iter().zip(&comm_support.cells).any(|(a, b)| *a && *b);
    Ok(if hit { Label::H1 } else { Label::H0 })
}
