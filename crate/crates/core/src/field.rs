//! Cell-centered scalar fields on a radial grid.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// Values of one scalar unknown at the cells of a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RadialField(Vec<f64>);

impl RadialField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    /// Samples `f` at the cell centers of `grid`.
    pub fn from_fn(grid: &RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self(grid.centers().iter().map(|&r| f(r)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn check_on(&self, grid: &RadialGrid) -> Result<()> {
        if self.len() != grid.cells() {
            return Err(Error::DimensionMismatch {
                expected: grid.cells(),
                found: self.len(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    /// `a * self + b * other`, cell by cell.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// Largest pointwise difference `max_i |self_i - other_i|`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
    }
}

impl Index<usize> for RadialField {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for RadialField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for RadialField {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Values at the `N + 1` cell faces `r = 0, h, ..., R`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField(Vec<f64>);

impl FaceField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Index<usize> for FaceField {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
