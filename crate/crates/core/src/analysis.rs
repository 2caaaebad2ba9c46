//! Blow-up classification and the superlinear growth bound for `y = -F`.
//!
//! Along a blowing-up trajectory `y' >= c₂ y^{1/θ}` with `θ = (n+2)/(n+4)`, so
//!
//! ```text
//! y(t) >= y₀ (1 - ((1-θ)/θ) c₂ y₀^{(1-θ)/θ} t)^{-θ/(1-θ)}
//! ```
//!
//! and `y` cannot stay finite past `T* = θ / ((1-θ) c₂ y₀^{(1-θ)/θ})`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{FullState, Params, ReducedState, TerminationReason, Trajectory};
use crate::energy::EnergyRecord;
use crate::error::{Error, Result};

/// Growth of `||u||_inf` over its initial value required for a blow-up verdict.
pub const BLOWUP_GROWTH: f64 = 100.0;
/// Qualifying growth steps needed by [`fit_c2`].
pub const MIN_FIT_STEPS: usize = 5;

pub fn theta_of(dim: usize) -> f64 {
    (dim as f64 + 2.0) / (dim as f64 + 4.0)
}

fn check_bound_args(y0: f64, c2: f64, theta: f64) -> Result<()> {
    if !(y0 > 0.0 && y0.is_finite()) {
        return Err(Error::InvalidArgument(format!("y0 must be > 0, got {y0}")));
    }
    if !(c2 > 0.0 && c2.is_finite()) {
        return Err(Error::InvalidArgument(format!("c2 must be > 0, got {c2}")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in (0, 1), got {theta}"
        )));
    }
    Ok(())
}

/// `T*`, where the lower bound escapes to infinity.
pub fn blowup_time_bound(y0: f64, c2: f64, theta: f64) -> Result<f64> {
    check_bound_args(y0, c2, theta)?;
    let e = (1.0 - theta) / theta;
    Ok(1.0 / (e * c2 * y0.powf(e)))
}

/// Lower bound on `y(t)`; `+∞` at and after `T*`.
pub fn ode_lower_bound(y0: f64, c2: f64, theta: f64, t: f64) -> Result<f64> {
    check_bound_args(y0, c2, theta)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let t_star = blowup_time_bound(y0, c2, theta)?;
    if t >= t_star {
        return Ok(f64::INFINITY);
    }
    let e = (1.0 - theta) / theta;
    Ok(y0 * (1.0 - t / t_star).powf(-1.0 / e))
}

/// Smallest ratio `((y_{k+1} - y_k) / dt) / y_k^{1/θ}` over steps where
/// `y = -F` is positive and growing; the leading stretch with `F >= 0` is
/// skipped. Fails with fewer than [`MIN_FIT_STEPS`] qualifying steps.
pub fn fit_c2(ledger: &[EnergyRecord], theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in (0, 1), got {theta}"
        )));
    }
    let start = ledger
        .iter()
        .position(|r| r.energy < 0.0)
        .ok_or_else(|| Error::InsufficientData("energy never becomes negative".into()))?;
    let ratios: Vec<f64> = ledger[start..]
        .windows(2)
        .filter_map(|pair| {
            let (y0, y1) = (-pair[0].energy, -pair[1].energy);
            let dt = pair[1].dt;
            (y0 > 0.0 && y1 > y0 && dt > 0.0 && y1.is_finite())
                .then(|| (y1 - y0) / dt / y0.powf(1.0 / theta))
        })
        .collect();
    if ratios.len() < MIN_FIT_STEPS {
        return Err(Error::InsufficientData(format!(
            "{} growth steps, need {MIN_FIT_STEPS}",
            ratios.len()
        )));
    }
    Ok(ratios.into_iter().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    BlewUp,
    Completed,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub verdict: Verdict,
    pub termination: TerminationReason,
    pub t_last: f64,
    /// `max ||u||_inf / ||u_0||_inf` over the run.
    pub growth: f64,
    pub u_max_history: Vec<f64>,
    pub dt_history: Vec<f64>,
    pub theta: f64,
    pub c2_fit: Option<f64>,
    pub t_star_estimate: Option<f64>,
}

impl BlowupReport {
    /// Last accepted step over the largest accepted step.
    pub fn dt_collapse_ratio(&self) -> Option<f64> {
        let steps = self.dt_history.iter().skip(1);
        let largest = steps.clone().copied().fold(0.0, f64::max);
        let last = *self.dt_history.last()?;
        (largest > 0.0 && self.dt_history.len() > 1).then(|| last / largest)
    }
}

/// Verdict for a finished run.
///
/// `BlewUp` needs termination by the sup-norm cap or step collapse together with
/// `||u||_inf` growth of at least [`BLOWUP_GROWTH`]; `Completed` needs `t_end`
/// reached with a finite sup norm; anything else is `Inconclusive`.
pub fn classify<S>(traj: &Trajectory<S>, ledger: &[EnergyRecord], dim: usize) -> BlowupReport {
    let theta = theta_of(dim);
    let u_max_history: Vec<f64> = traj.steps.iter().map(|s| s.u_max).collect();
    let dt_history: Vec<f64> = traj.steps.iter().map(|s| s.dt).collect();
    let u0 = traj.initial().u_max;
    let peak = u_max_history.iter().copied().fold(0.0, f64::max);
    let growth = if u0 > 0.0 { peak / u0 } else { f64::NAN };
    let last = traj.last();

    let verdict = match traj.termination {
        TerminationReason::SupNormCap { .. } | TerminationReason::DtCollapse { .. }
            if u0 > 0.0 && growth >= BLOWUP_GROWTH =>
        {
            Verdict::BlewUp
        }
        TerminationReason::Completed if last.u_max.is_finite() => Verdict::Completed,
        _ => Verdict::Inconclusive,
    };

    let c2_fit = fit_c2(ledger, theta).ok();
    let y0 = ledger.first().map(|r| -r.energy);
    let t_star_estimate = match (c2_fit, y0) {
        (Some(c2), Some(y0)) if y0 > 0.0 => blowup_time_bound(y0, c2, theta).ok(),
        _ => None,
    };

    BlowupReport {
        verdict,
        termination: traj.termination,
        t_last: last.t,
        growth,
        u_max_history,
        dt_history,
        theta,
        c2_fit,
        t_star_estimate,
    }
}

/// Per-step discrepancy between lockstep full and reduced runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub t: Vec<f64>,
    /// `||(χ v - ξ w) - z||_inf`
    pub e_z: Vec<f64>,
    /// `||u_full - u_reduced||_inf`
    pub e_u: Vec<f64>,
}

impl ErrorSeries {
    pub fn max_e_z(&self) -> f64 {
        self.e_z.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_e_u(&self) -> f64 {
        self.e_u.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares recorded states of a full and a reduced run taken with the same
/// step sequence.
pub fn reduction_equivalence(
    full: &[FullState],
    reduced: &[ReducedState],
    p: &Params,
) -> Result<ErrorSeries> {
    if full.len() != reduced.len() {
        return Err(Error::LockstepMismatch(format!(
            "{} full states vs {} reduced states",
            full.len(),
            reduced.len()
        )));
    }
    let mut series = ErrorSeries {
        t: Vec::with_capacity(full.len()),
        e_z: Vec::with_capacity(full.len()),
        e_u: Vec::with_capacity(full.len()),
    };
    for (k, (f, r)) in full.iter().zip(reduced).enumerate() {
        if (f.t - r.t).abs() > 1e-12 * f.t.abs().max(1.0) {
            return Err(Error::LockstepMismatch(format!(
                "step {k}: t = {} vs {}",
                f.t, r.t
            )));
        }
        if f.u.len() != r.u.len() {
            return Err(Error::LockstepMismatch(format!(
                "step {k}: grid sizes differ"
            )));
        }
        series.t.push(f.t);
        series.e_z.push(p.combine(&f.v, &f.w).max_abs_diff(&r.z));
        series.e_u.push(f.u.max_abs_diff(&r.u));
    }
    Ok(series)
}

/// `log(e_i / e_{i+1}) / log(ratio)` for successive refinements by `ratio`.
pub fn observed_orders(errors: &[f64], ratio: f64) -> Vec<f64> {
    errors
        .windows(2)
        .map(|e| (e[0] / e[1]).ln() / ratio.ln())
        .collect()
}
