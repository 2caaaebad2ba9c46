//! Radial differential operators in conservative flux form with homogeneous
//! Neumann conditions at `r = R` and the symmetry condition at `r = 0`.
//!
//! Every operator is written as `(a_{i+1/2} F_{i+1/2} - a_{i-1/2} F_{i-1/2}) / w_i`
//! with the two boundary fluxes set to zero, so `sum_i w_i (op f)_i = 0` for
//! any input.

use crate::error::{Error, Result};
use crate::field::{FaceField, RadialField};
use crate::grid::RadialGrid;

/// Divergence of face fluxes: `(a_{k+1} F_{k+1} - a_k F_k) / w_k`.
/// `flux[f]` is the flux through face `f`; the boundary entries are ignored.
pub(crate) fn flux_divergence(grid: &RadialGrid, flux: &[f64]) -> RadialField {
    let n = grid.cells();
    let a = grid.face_areas();
    let w = grid.weights();
    let out = (0..n)
        .map(|k| {
            let right = if k + 1 < n {
                a[k + 1] * flux[k + 1]
            } else {
                0.0
            };
            let left = if k > 0 { a[k] * flux[k] } else { 0.0 };
            (right - left) / w[k]
        })
        .collect::<Vec<_>>();
    RadialField::new(out)
}

/// Discrete `Delta f = r^{1-n} (r^{n-1} f')'`.
pub fn laplacian(grid: &RadialGrid, f: &RadialField) -> Result<RadialField> {
    let grad = radial_gradient(grid, f)?;
    Ok(flux_divergence(grid, grad.values()))
}

/// Face differences `(f_k - f_{k-1}) / h` at the `N + 1` faces, zero at
/// `r = 0` and `r = R`.
pub fn radial_gradient(grid: &RadialGrid, f: &RadialField) -> Result<FaceField> {
    f.check_on(grid)?;
    let n = grid.cells();
    let h = grid.spacing();
    let v = f.values();
    let mut g = vec![0.0; n + 1];
    for k in 1..n {
        g[k] = (v[k] - v[k - 1]) / h;
    }
    Ok(FaceField::new(g))
}

/// Upwind discretization of `div(u grad s)`.
///
/// The face velocity is `q = (s_k - s_{k-1}) / h` and the face density is taken
/// from the donor cell: `u_{k-1}` when `q >= 0`, otherwise `u_k`. With the
/// minus sign in `u_t = ... - div(u grad s)` this transports `u` up the
/// gradient of `s`.
pub fn chemo_div(grid: &RadialGrid, u: &RadialField, s: &RadialField) -> Result<RadialField> {
    u.check_on(grid)?;
    let q = radial_gradient(grid, s)?;
    let uv = u.values();
    let n = grid.cells();
    let mut flux = vec![0.0; n + 1];
    for k in 1..n {
        let donor = if q[k] >= 0.0 { uv[k - 1] } else { uv[k] };
        flux[k] = q[k] * donor;
    }
    Ok(flux_divergence(grid, &flux))
}

/// Largest `dt` for which the explicit upwind update `u - dt * chemo_div(u, s)`
/// keeps every cell nonnegative: `min_i w_i / (outflow rate of cell i)`.
/// Returns `f64::INFINITY` when the drift vanishes.
pub fn advective_dt_limit(grid: &RadialGrid, s: &RadialField) -> Result<f64> {
    let q = radial_gradient(grid, s)?;
    let a = grid.face_areas();
    let w = grid.weights();
    let n = grid.cells();
    let mut limit = f64::INFINITY;
    for k in 0..n {
        let out_right = if k + 1 < n {
            a[k + 1] * q[k + 1].max(0.0)
        } else {
            0.0
        };
        let out_left = if k > 0 { a[k] * (-q[k]).max(0.0) } else { 0.0 };
        let rate = out_right + out_left;
        if rate > 0.0 {
            limit = limit.min(w[k] / rate);
        }
    }
    Ok(limit)
}

/// Solves `(I - dt Delta_h + dt * decay I) x = rhs` by a direct tridiagonal solve.
pub fn implicit_helmholtz_solve(
    grid: &RadialGrid,
    rhs: &RadialField,
    dt: f64,
    decay: f64,
) -> Result<RadialField> {
    rhs.check_on(grid)?;
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    if !decay.is_finite() || dt * decay < -1.0 {
        return Err(Error::InvalidArgument(format!(
            "dt * decay = {} makes the Helmholtz operator singular",
            dt * decay
        )));
    }
    let n = grid.cells();
    let h = grid.spacing();
    let a = grid.face_areas();
    let w = grid.weights();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for k in 0..n {
        let left = if k > 0 { dt * a[k] / (h * w[k]) } else { 0.0 };
        let right = if k + 1 < n {
            dt * a[k + 1] / (h * w[k])
        } else {
            0.0
        };
        lower[k] = -left;
        upper[k] = -right;
        diag[k] = 1.0 + dt * decay + left + right;
    }
    let mut x = rhs.clone().into_vec();
    solve_tridiagonal(&lower, &diag, &upper, &mut x)?;
    Ok(RadialField::new(x))
}

/// Thomas algorithm for `A x = d` with `A` tridiagonal.
///
/// `lower[i]` multiplies `x[i-1]` and `upper[i]` multiplies `x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored. The solution overwrites `rhs`.
/// No pivoting: intended for diagonally dominant systems.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
) -> Result<()> {
    let n = rhs.len();
    if lower.len() != n || diag.len() != n || upper.len() != n {
        return Err(Error::InvalidArgument(
            "tridiagonal bands must match the right-hand side length".into(),
        ));
    }
    if n == 0 {
        return Ok(());
    }
    let mut c = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 {
        return Err(Error::InvalidArgument(
            "zero pivot in tridiagonal solve".into(),
        ));
    }
    c[0] = upper[0] / pivot;
    rhs[0] /= pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot == 0.0 {
            return Err(Error::InvalidArgument(
                "zero pivot in tridiagonal solve".into(),
            ));
        }
        c[i] = upper[i] / pivot;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}
