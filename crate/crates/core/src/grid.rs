//! Cell-centered radial mesh on `(0, R)` for the ball `B(0, R)` in `R^n`,
//! with the quadrature used for every integral over the ball.
//!
//! Cell `i` covers the shell `r_{i-1/2} < r < r_{i+1/2}` with `r_{i+1/2} = (i + 1) h`.
//! The cell measure is the exact shell volume, which is also the finite-volume
//! measure used by the operators, so discrete mass balances telescope exactly.
//! No unknown sits at `r = 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RadialField;

pub const MIN_CELLS: usize = 8;

/// Geometry of the radial mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub radius: f64,
    pub dim: usize,
    pub cells: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            radius: 1.0,
            dim: 3,
            cells: 256,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.radius, self.dim, self.cells)
    }
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    radius: f64,
    dim: usize,
    h: f64,
    sphere: f64,
    centers: Vec<f64>,
    faces: Vec<f64>,
    weights: Vec<f64>,
    face_areas: Vec<f64>,
}

/// Surface measure of the unit sphere in `R^n`, `2 pi^{n/2} / Gamma(n/2)`.
pub fn unit_sphere_measure(dim: usize) -> f64 {
    let half = dim as f64 / 2.0;
    // Gamma(n/2) by the recurrence from Gamma(1) = 1 or Gamma(1/2) = sqrt(pi).
    let (mut gamma, mut x) = if dim.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    while x < half {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(half) / gamma
}

impl RadialGrid {
    pub fn new(radius: f64, dim: usize, cells: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "radius must be positive, got {radius}"
            )));
        }
        if dim < 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        if cells < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells, got {cells}"
            )));
        }
        let h = radius / cells as f64;
        let sphere = unit_sphere_measure(dim);
        let n = dim as i32;
        let faces: Vec<f64> = (0..=cells).map(|i| i as f64 * h).collect();
        let centers: Vec<f64> = (0..cells).map(|i| (i as f64 + 0.5) * h).collect();
        let weights = faces
            .windows(2)
            .map(|f| sphere * (f[1].powi(n) - f[0].powi(n)) / dim as f64)
            .collect();
        let face_areas = faces.iter().map(|r| sphere * r.powi(n - 1)).collect();
        Ok(Self {
            radius,
            dim,
            h,
            sphere,
            centers,
            faces,
            weights,
            face_areas,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.centers.len()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// `omega_{n-1}`, the surface measure of the unit sphere.
    pub fn sphere_measure(&self) -> f64 {
        self.sphere
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    /// Cell measures (shell volumes); these are the quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `omega_{n-1} r_f^{n-1}` at each of the `N + 1` faces.
    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    /// Exact `|B(0, R)| = omega_{n-1} R^n / n`.
    pub fn ball_volume(&self) -> f64 {
        self.sphere * self.radius.powi(self.dim as i32) / self.dim as f64
    }

    pub fn zeros(&self) -> RadialField {
        RadialField::zeros(self.cells())
    }

    pub fn constant(&self, value: f64) -> RadialField {
        RadialField::constant(self.cells(), value)
    }

    /// `sum_i f_i w_i`, the quadrature of `f` over the ball.
    pub fn integrate(&self, f: &RadialField) -> Result<f64> {
        f.check_on(self)?;
        Ok(self.weighted_sum(f.values()))
    }

    pub(crate) fn weighted_sum(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    /// `sum_f a_f h g_f` over the interior faces: quadrature of a face quantity.
    pub(crate) fn face_sum(&self, values: &[f64]) -> f64 {
        let n = self.cells();
        (1..n)
            .map(|f| self.face_areas[f] * self.h * values[f])
            .sum()
    }

    /// Squared `L^2` norm of the discrete radial gradient.
    pub fn gradient_energy(&self, f: &RadialField) -> Result<f64> {
        self.gradient_energy_inner(f, f)
    }

    /// `int f' g'` with face differences and the face quadrature.
    pub fn gradient_energy_inner(&self, f: &RadialField, g: &RadialField) -> Result<f64> {
        f.check_on(self)?;
        g.check_on(self)?;
        let (a, b) = (f.values(), g.values());
        let h = self.h;
        Ok((1..self.cells())
            .map(|k| self.face_areas[k] * (a[k] - a[k - 1]) * (b[k] - b[k - 1]) / h)
            .sum())
    }

    /// `W^{1,2}` inner product `int f g + int f' g'` in the grid's quadrature.
    pub fn inner_w12(&self, f: &RadialField, g: &RadialField) -> Result<f64> {
        let grad = self.gradient_energy_inner(f, g)?;
        let mass: f64 = f
            .iter()
            .zip(g.iter())
            .zip(&self.weights)
            .map(|((x, y), w)| x * y * w)
            .sum();
        Ok(mass + grad)
    }

    /// `||f||_{W^{1,2}} = sqrt(int f^2 + int |f'|^2)`; face differences for `f'`,
    /// zero slope at `r = 0` and `r = R`.
    pub fn norm_w12(&self, f: &RadialField) -> Result<f64> {
        Ok(self.inner_w12(f, f)?.max(0.0).sqrt())
    }

    /// `||f||_{L^p} = (int |f|^p)^{1/p}`.
    pub fn norm_lp(&self, f: &RadialField, p: f64) -> Result<f64> {
        f.check_on(self)?;
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidArgument(format!("L^p exponent {p} < 1")));
        }
        let s: f64 = f
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v.abs().powf(p) * w)
            .sum();
        Ok(s.powf(1.0 / p))
    }

    /// Mean value `int f / |B|`.
    pub fn mean(&self, f: &RadialField) -> Result<f64> {
        Ok(self.integrate(f)? / self.ball_volume())
    }
}
