//! Radial initial data, membership in the blow-up class, and a constructive
//! search that moves given data into the class by a small perturbation.
//!
//! The class `C(m, A, K)` holds triples `(u_0, v_0, w_0)` with `u_0 > 0` and
//! `z_0 = χ v_0 - ξ w_0 > 0`, `∫u_0 = m`, `||z_0||_{W^{1,2}} <= A` and
//! `G(u_0, v_0, w_0) <= -K`.

use serde::{Deserialize, Serialize};

use crate::dynamics::Params;
use crate::energy::energy_g;
use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::operators::implicit_helmholtz_solve;

/// Relative tolerance on the mass condition.
pub const MASS_TOL: f64 = 1e-8;
/// Bump floor relative to its peak, keeps the density strictly positive.
pub const BUMP_FLOOR: f64 = 1e-6;
/// Minimum number of cells inside one standard deviation of a bump.
pub const MIN_BUMP_CELLS: usize = 4;

/// `C exp(-r²/(2σ²)) + 1e-6 C` with `C` chosen so that the integral is `mass`.
pub fn make_bump(grid: &RadialGrid, mass: f64, sigma: f64) -> Result<RadialField> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mass must be > 0, got {mass}"
        )));
    }
    let cells = grid.centers().iter().take_while(|&&r| r < sigma).count();
    if cells < MIN_BUMP_CELLS {
        return Err(Error::UnresolvedBump { sigma, cells });
    }
    let shape = RadialField::from_fn(grid, |r| {
        (-r * r / (2.0 * sigma * sigma)).exp() + BUMP_FLOOR
    });
    let scale = mass / grid.integrate(&shape)?;
    Ok(shape.scaled(scale))
}

/// Thresholds `(m, A, K)` of the blow-up class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub mass: f64,
    pub a_bound: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub mass: f64,
    pub a_norm: f64,
    /// Absent when `u_0` is not strictly positive.
    pub g_value: Option<f64>,
    pub positivity_u: bool,
    pub positivity_z: bool,
    pub thresholds: ClassThresholds,
    pub satisfies: bool,
}

impl MembershipReport {
    pub fn mass_ok(&self) -> bool {
        let m = self.thresholds.mass;
        (self.mass - m).abs() <= MASS_TOL * m.abs()
    }

    pub fn norm_ok(&self) -> bool {
        self.a_norm <= self.thresholds.a_bound
    }

    pub fn energy_ok(&self) -> bool {
        self.g_value.is_some_and(|g| g <= -self.thresholds.k)
    }
}

/// Evaluates every membership criterion separately; never fails on a criterion,
/// only on fields that do not live on `grid`.
pub fn check_membership(
    grid: &RadialGrid,
    u0: &RadialField,
    v0: &RadialField,
    w0: &RadialField,
    p: &Params,
    thresholds: ClassThresholds,
) -> Result<MembershipReport> {
    u0.check_on(grid)?;
    v0.check_on(grid)?;
    w0.check_on(grid)?;
    let z0 = p.combine(v0, w0);
    let positivity_u = u0.iter().all(|&x| x > 0.0 && x.is_finite());
    let positivity_z = z0.iter().all(|&x| x > 0.0 && x.is_finite());
    let g_value = energy_g(grid, u0, v0, w0, p).ok().filter(|g| g.is_finite());
    let mut report = MembershipReport {
        mass: grid.integrate(u0)?,
        a_norm: grid.norm_w12(&z0)?,
        g_value,
        positivity_u,
        positivity_z,
        thresholds,
        satisfies: false,
    };
    report.satisfies = report.mass_ok()
        && report.norm_ok()
        && report.energy_ok()
        && report.positivity_u
        && report.positivity_z;
    Ok(report)
}

/// Largest admissible `L^p` exponent (exclusive) for dimension `n`: `2n/(n+2)`.
pub fn lp_exponent_bound(dim: usize) -> f64 {
    2.0 * dim as f64 / (dim as f64 + 2.0)
}

/// Tuning of [`drive_to_class`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveOptions {
    /// Exponent of the `L^p` distance on `u_0`; must lie in `(1, 2n/(n+2))`.
    pub lp_exponent: f64,
    /// Also add a positive profile to `v_0` that couples to the concentrated density.
    pub sharpen_v: bool,
    /// First bump width; defaults to `R / 4`.
    pub sigma_start: Option<f64>,
    /// Ratio between successive widths of the ladder.
    pub ladder_ratio: f64,
    /// Upper limit on the mixing weight of the bump.
    pub lambda_max: f64,
    /// Share of the distance budget spent on `u_0` when `sharpen_v` is set.
    pub u_share: f64,
}

impl Default for DriveOptions {
    fn default() -> Self {
        Self {
            lp_exponent: 1.1,
            sharpen_v: true,
            sigma_start: None,
            ladder_ratio: std::f64::consts::FRAC_1_SQRT_2,
            lambda_max: 0.5,
            u_share: 0.5,
        }
    }
}

impl DriveOptions {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let upper = lp_exponent_bound(dim);
        if !(self.lp_exponent > 1.0 && self.lp_exponent < upper) {
            return Err(Error::InvalidArgument(format!(
                "L^p exponent {} must lie in (1, {upper})",
                self.lp_exponent
            )));
        }
        if !(self.ladder_ratio > 0.0 && self.ladder_ratio < 1.0) {
            return Err(Error::InvalidArgument(
                "ladder_ratio must lie in (0, 1)".into(),
            ));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max <= 1.0) {
            return Err(Error::InvalidArgument(
                "lambda_max must lie in (0, 1]".into(),
            ));
        }
        if !(self.u_share > 0.0 && self.u_share < 1.0) {
            return Err(Error::InvalidArgument("u_share must lie in (0, 1)".into()));
        }
        if let Some(s) = self.sigma_start {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument("sigma_start must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// One rung of the width ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveAttempt {
    pub sigma: f64,
    pub lambda: f64,
    pub v_amplitude: f64,
    pub g_value: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveOutcome {
    pub u0: RadialField,
    pub v0: RadialField,
    pub w0: RadialField,
    /// Width of the successful bump; `None` when the input was already in the class.
    pub sigma: Option<f64>,
    pub distance: f64,
    pub report: MembershipReport,
    pub attempts: Vec<DriveAttempt>,
}

/// Distance `||Δu||_{L^p} + ||Δv||_{W^{1,2}} + ||Δw||_{W^{1,2}}` between two triples.
pub fn data_distance(
    grid: &RadialGrid,
    a: (&RadialField, &RadialField, &RadialField),
    b: (&RadialField, &RadialField, &RadialField),
    lp_exponent: f64,
) -> Result<f64> {
    Ok(grid.norm_lp(&a.0.lincomb(1.0, b.0, -1.0), lp_exponent)?
        + grid.norm_w12(&a.1.lincomb(1.0, b.1, -1.0))?
        + grid.norm_w12(&a.2.lincomb(1.0, b.2, -1.0))?)
}

/// Perturbs `(u0, v0, w0)` by less than `eps` into the class `C(m, A, K)`.
///
/// The density is mixed with a mass-`m` Gaussian bump, `u' = (1-λ) u_0 + λ b_σ`,
/// over a descending ladder of widths `σ`. `λ` is the largest weight (capped by
/// `lambda_max`) whose `L^p` displacement fits the budget. When `sharpen_v` is
/// set, `v_0` gains `(t/χ) φ` with `(I - Δ_h) φ = u'`, the profile that
/// maximizes `∫u'φ` per unit `W^{1,2}` norm; `t` is limited by the remaining
/// budget, by `||z'|| <= A` and by the minimizer of `G` along `φ`. `w_0` is not
/// changed. Each candidate is re-validated with [`check_membership`].
#[allow(clippy::too_many_arguments)]
pub fn drive_to_class(
    grid: &RadialGrid,
    u0: &RadialField,
    v0: &RadialField,
    w0: &RadialField,
    p: &Params,
    thresholds: ClassThresholds,
    eps: f64,
    opts: &DriveOptions,
) -> Result<DriveOutcome> {
    p.check_attractive()?;
    opts.validate(grid.dim())?;
    let base = check_membership(grid, u0, v0, w0, p, thresholds)?;
    if base.satisfies {
        return Ok(DriveOutcome {
            u0: u0.clone(),
            v0: v0.clone(),
            w0: w0.clone(),
            sigma: None,
            distance: 0.0,
            report: base,
            attempts: Vec::new(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps = {eps} admits no perturbation and the data is not in the class"
        )));
    }
    if !base.positivity_u || !base.positivity_z {
        return Err(Error::InvalidArgument(
            "u0 and chi*v0 - xi*w0 must be positive".into(),
        ));
    }
    let m = thresholds.mass;
    if !(m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target mass must be > 0, got {m}"
        )));
    }

    let q = opts.lp_exponent;
    let u_base = u0.scaled(m / base.mass);
    let mass_cost = grid.norm_lp(&u_base.lincomb(1.0, u0, -1.0), q)?;
    let budget = eps * (1.0 - 1e-3);
    let (budget_u, budget_v) = if opts.sharpen_v {
        (
            opts.u_share * budget - mass_cost,
            (1.0 - opts.u_share) * budget,
        )
    } else {
        (budget - mass_cost, 0.0)
    };

    let kappa = p.coupling();
    let z0 = p.combine(v0, w0);
    let z_norm2 = grid.inner_w12(&z0, &z0)?;
    let a2 = thresholds.a_bound * thresholds.a_bound;

    let mut attempts = Vec::new();
    let mut sigma = opts.sigma_start.unwrap_or(grid.radius() / 4.0);
    if budget_u > 0.0 {
        loop {
            let bump = match make_bump(grid, m, sigma) {
                Ok(b) => b,
                Err(Error::UnresolvedBump { .. }) => break,
                Err(e) => return Err(e),
            };
            let spread = grid.norm_lp(&bump.lincomb(1.0, &u_base, -1.0), q)?;
            let lambda = if spread > 0.0 {
                opts.lambda_max.min(budget_u / spread)
            } else {
                opts.lambda_max
            };
            let u_new = u_base.lincomb(1.0 - lambda, &bump, lambda);

            let mut t = 0.0;
            let mut v_new = v0.clone();
            if opts.sharpen_v && budget_v > 0.0 {
                let phi = implicit_helmholtz_solve(grid, &u_new, 1.0, 0.0)?;
                let phi_norm2 = grid.inner_w12(&phi, &phi)?;
                let z_phi = grid.inner_w12(&z0, &phi)?;
                // G(t) = G(0) + slope t + curvature t^2
                let curvature =
                    0.5 * (grid.gradient_energy(&phi)? + p.beta * weighted_dot(grid, &phi, &phi));
                let slope = grid.gradient_energy_inner(&z0, &phi)?
                    + p.beta * weighted_dot(grid, &z0, &phi)
                    - kappa * weighted_dot(grid, &u_new, &phi);
                let t_opt = if slope < 0.0 {
                    -slope / (2.0 * curvature)
                } else {
                    0.0
                };
                let t_eps = budget_v * p.chi / phi_norm2.sqrt();
                let disc = z_phi * z_phi - phi_norm2 * (z_norm2 - a2);
                let t_a = if disc >= 0.0 {
                    (1.0 - 1e-9) * (-z_phi + disc.sqrt()) / phi_norm2
                } else {
                    0.0
                };
                t = t_opt.min(t_eps).min(t_a).max(0.0);
                v_new = v0.lincomb(1.0, &phi, t / p.chi);
            }

            let distance = data_distance(grid, (&u_new, &v_new, w0), (u0, v0, w0), q)?;
            let report = check_membership(grid, &u_new, &v_new, w0, p, thresholds)?;
            attempts.push(DriveAttempt {
                sigma,
                lambda,
                v_amplitude: t,
                g_value: report.g_value.unwrap_or(f64::NAN),
                distance,
            });
            if report.satisfies && distance < eps {
                return Ok(DriveOutcome {
                    u0: u_new,
                    v0: v_new,
                    w0: w0.clone(),
                    sigma: Some(sigma),
                    distance,
                    report,
                    attempts,
                });
            }
            sigma *= opts.ladder_ratio;
        }
    }

    let best = attempts
        .iter()
        .filter(|a| a.g_value.is_finite())
        .min_by(|a, b| a.g_value.total_cmp(&b.g_value));
    Err(Error::ResolutionExhausted {
        best_sigma: best.map_or(f64::NAN, |a| a.sigma),
        best_g: best.map_or(base.g_value.unwrap_or(f64::NAN), |a| a.g_value),
    })
}

fn weighted_dot(grid: &RadialGrid, a: &RadialField, b: &RadialField) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(grid.weights())
        .map(|((x, y), w)| x * y * w)
        .sum()
}
