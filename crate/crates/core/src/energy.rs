//! Energy functional, dissipation rate and the energy inequality along
//! discrete trajectories.
//!
//! With `κ = χα - ξγ` and decay `β`, the reduced system carries
//!
//! ```text
//! F(u, z) = ½∫|∇z|² + (β/2)∫z² - κ∫uz + κ∫u ln u
//! D(u, z) = ∫z_t² + κ∫u |∇ln u - ∇z|²,   z_t = Δz - βz + κu
//! ```
//!
//! and `dF/dt <= -D`. For unit rates these are the usual Keller-Segel
//! functionals with coefficient `χ - ξ`. The three-component energy `G` is `F`
//! evaluated at `z = χv - ξw`, through the same code path.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Observer, Params, SolverState, StepInfo};
use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::operators::{flux_divergence, laplacian};

/// Densities at or below this are treated as zero in `u ln u`.
pub const XLOGX_FLOOR: f64 = 1e-300;

/// `x ln x` with the continuous extension `0 ln 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x <= XLOGX_FLOOR {
        0.0
    } else {
        x * x.ln()
    }
}

fn require_positive(u: &RadialField) -> Result<()> {
    match u.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        Some((cell, &value)) => Err(Error::NonPositiveDensity { cell, value }),
        None => Ok(()),
    }
}

/// `F(u, z)` for the reduced system.
pub fn energy_f(grid: &RadialGrid, u: &RadialField, z: &RadialField, p: &Params) -> Result<f64> {
    u.check_on(grid)?;
    z.check_on(grid)?;
    require_positive(u)?;
    let kappa = p.coupling();
    let grad = grid.gradient_energy(z)?;
    let w = grid.weights();
    let (mut zz, mut uz, mut ulnu) = (0.0, 0.0, 0.0);
    for ((&ui, &zi), &wi) in u.iter().zip(z.iter()).zip(w) {
        zz += wi * zi * zi;
        uz += wi * ui * zi;
        ulnu += wi * xlogx(ui);
    }
    Ok(0.5 * grad + 0.5 * p.beta * zz - kappa * uz + kappa * ulnu)
}

/// `G(u_0, v_0, w_0) = F(u_0, χ v_0 - ξ w_0)`.
pub fn energy_g(
    grid: &RadialGrid,
    u0: &RadialField,
    v0: &RadialField,
    w0: &RadialField,
    p: &Params,
) -> Result<f64> {
    v0.check_on(grid)?;
    w0.check_on(grid)?;
    energy_f(grid, u0, &p.combine(v0, w0), p)
}

/// `z_t` from the right-hand side, `Δ_h z - β z + κ u`.
pub fn signal_rate(
    grid: &RadialGrid,
    u: &RadialField,
    z: &RadialField,
    p: &Params,
) -> Result<RadialField> {
    u.check_on(grid)?;
    let lap = laplacian(grid, z)?;
    let kappa = p.coupling();
    Ok(RadialField::new(
        lap.iter()
            .zip(z.iter())
            .zip(u.iter())
            .map(|((l, zi), ui)| l - p.beta * zi + kappa * ui)
            .collect(),
    ))
}

/// Harmonic mean of the two cell densities adjacent to each interior face.
fn face_densities(u: &RadialField) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n + 1];
    for k in 1..n {
        let (a, b) = (u[k - 1], u[k]);
        out[k] = 2.0 * a * b / (a + b);
    }
    out
}

/// Face differences of the chemical potential `ln u - z`.
fn potential_gradient(grid: &RadialGrid, u: &RadialField, z: &RadialField) -> Vec<f64> {
    let n = grid.cells();
    let h = grid.spacing();
    let mut out = vec![0.0; n + 1];
    for k in 1..n {
        out[k] = ((u[k] / u[k - 1]).ln() - (z[k] - z[k - 1])) / h;
    }
    out
}

/// `∫ u |∇ln u - ∇z|²` with harmonic-mean face densities.
pub fn entropy_dissipation(grid: &RadialGrid, u: &RadialField, z: &RadialField) -> Result<f64> {
    u.check_on(grid)?;
    z.check_on(grid)?;
    require_positive(u)?;
    let faces = face_densities(u);
    let grad = potential_gradient(grid, u, z);
    let integrand: Vec<f64> = faces.iter().zip(&grad).map(|(f, g)| f * g * g).collect();
    Ok(grid.face_sum(&integrand))
}

/// `∇·(u ∇(ln u - z))` assembled from the same face fluxes as
/// [`entropy_dissipation`]; with it, `Σ w_i u_t,i (ln u_i - z_i)` equals minus
/// the dissipation sum exactly.
pub fn gradient_flow_rate(
    grid: &RadialGrid,
    u: &RadialField,
    z: &RadialField,
) -> Result<RadialField> {
    u.check_on(grid)?;
    z.check_on(grid)?;
    require_positive(u)?;
    let faces = face_densities(u);
    let grad = potential_gradient(grid, u, z);
    let flux: Vec<f64> = faces.iter().zip(&grad).map(|(f, g)| f * g).collect();
    Ok(flux_divergence(grid, &flux))
}

/// `D(u, z) = ∫ z_t² + κ ∫ u |∇ln u - ∇z|²`.
pub fn dissipation_d(
    grid: &RadialGrid,
    u: &RadialField,
    z: &RadialField,
    p: &Params,
) -> Result<f64> {
    let zt = signal_rate(grid, u, z, p)?;
    let zt2: f64 = zt.iter().zip(grid.weights()).map(|(v, w)| v * v * w).sum();
    Ok(zt2 + p.coupling() * entropy_dissipation(grid, u, z)?)
}

/// One row of the energy ledger. `dt` is the step that produced the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    #[serde(rename = "F")]
    pub energy: f64,
    #[serde(rename = "D")]
    pub dissipation: f64,
    pub mass: f64,
    pub u_max: f64,
    pub dt: f64,
}

/// Observer that appends an [`EnergyRecord`] for every accepted state.
///
/// States whose density is not strictly positive get `NaN` energy and
/// dissipation instead of aborting the run.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    params: Params,
    pub records: Vec<EnergyRecord>,
}

impl EnergyLedger {
    pub fn new(params: Params) -> Self {
        Self {
            params,
            records: Vec::new(),
        }
    }

    pub fn into_records(self) -> Vec<EnergyRecord> {
        self.records
    }
}

impl<S: SolverState> Observer<S> for EnergyLedger {
    fn observe(&mut self, grid: &RadialGrid, state: &S, info: &StepInfo) -> Result<()> {
        let u = state.density();
        let z = state.signal(&self.params);
        let (energy, dissipation) = match (
            energy_f(grid, u, &z, &self.params),
            dissipation_d(grid, u, &z, &self.params),
        ) {
            (Ok(f), Ok(d)) => (f, d),
            (Err(Error::NonPositiveDensity { .. }), _)
            | (_, Err(Error::NonPositiveDensity { .. })) => (f64::NAN, f64::NAN),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        self.records.push(EnergyRecord {
            t: info.t,
            energy,
            dissipation,
            mass: info.mass,
            u_max: info.u_max,
            dt: info.dt,
        });
        Ok(())
    }
}

/// Per-step residuals `r_k = (F_{k+1} - F_k) / dt_k + D_k` of the energy
/// inequality. For a first-order splitting the positive part is expected to
/// vanish linearly in `dt`; a single run can only be compared against a
/// tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub violation_fraction: f64,
    pub tolerance: f64,
    pub passes: bool,
}

pub fn check_energy_inequality(
    ledger: &[EnergyRecord],
    tolerance: f64,
) -> Result<InequalityReport> {
    if ledger.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "energy ledger needs at least 2 records, got {}",
            ledger.len()
        )));
    }
    let residuals: Vec<f64> = ledger
        .windows(2)
        .map(|pair| (pair[1].energy - pair[0].energy) / pair[1].dt + pair[0].dissipation)
        .collect();
    let max_residual = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let violations = residuals.iter().filter(|&&r| !(r <= tolerance)).count();
    Ok(InequalityReport {
        violation_fraction: violations as f64 / residuals.len() as f64,
        passes: violations == 0,
        max_residual,
        residuals,
        tolerance,
    })
}

/// `1e-4 |F_0| / (t_last - t_0)`, the default admissible residual scale.
pub fn default_tolerance(ledger: &[EnergyRecord]) -> f64 {
    match (ledger.first(), ledger.last()) {
        (Some(first), Some(last)) if last.t > first.t => {
            1e-4 * first.energy.abs() / (last.t - first.t)
        }
        _ => 0.0,
    }
}
