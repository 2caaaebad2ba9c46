//! Time integration of the attraction-repulsion system
//!
//! ```text
//! u_t = Δu - χ ∇·(u ∇v) + ξ ∇·(u ∇w)
//! v_t = Δv - β v + α u
//! w_t = Δw - δ w + γ u
//! ```
//!
//! and of its two-component reduction in `z = χ v - ξ w` (valid when `β = δ`):
//!
//! ```text
//! u_t = Δu - ∇·(u ∇z)
//! z_t = Δz - β z + (χα - ξγ) u
//! ```
//!
//! Each step is an IMEX splitting: the chemical fields are advanced by a
//! backward-Euler Helmholtz solve with `u` lagged, then `u` is transported by
//! an explicit upwind step in the net potential `χ v - ξ w` (or `z`) and
//! diffused implicitly.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::operators::{advective_dt_limit, chemo_div, implicit_helmholtz_solve};

/// Relative floor below which a negative density counts as positivity loss.
pub const POSITIVITY_TOL: f64 = 1e-12;
/// Number of consecutive clean steps before the step size grows.
pub const GROW_AFTER: usize = 10;
pub const GROW_FACTOR: f64 = 1.2;

fn one() -> f64 {
    1.0
}

/// Model coefficients. The rates default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub chi: f64,
    pub xi: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub delta: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self::new(2.0, 1.0)
    }
}

impl Params {
    /// Unit rates: the original three-component system.
    pub fn new(chi: f64, xi: f64) -> Self {
        Self {
            chi,
            xi,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
        }
    }

    pub fn with_rates(mut self, alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self.gamma = gamma;
        self.delta = delta;
        self
    }

    /// Sensitivities must be nonnegative, rates strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("chi", self.chi), ("xi", self.xi)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Source coefficient of the reduced signal, `χα - ξγ`.
    pub fn coupling(&self) -> f64 {
        self.chi * self.alpha - self.xi * self.gamma
    }

    pub fn is_reducible(&self) -> bool {
        self.beta == self.delta
    }

    /// The reduction needs a common decay rate `β = δ`.
    pub fn check_reducible(&self) -> Result<()> {
        self.validate()?;
        if !self.is_reducible() {
            return Err(Error::InvalidParams(format!(
                "beta = {} differs from delta = {}; the system does not reduce",
                self.beta, self.delta
            )));
        }
        Ok(())
    }

    /// Blow-up class routines need `χα - ξγ > 0` on top of reducibility.
    pub fn check_attractive(&self) -> Result<()> {
        self.check_reducible()?;
        if self.coupling() <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "chi*alpha - xi*gamma = {} must be positive",
                self.coupling()
            )));
        }
        Ok(())
    }

    /// `χ v - ξ w`.
    pub fn combine(&self, v: &RadialField, w: &RadialField) -> RadialField {
        v.lincomb(self.chi, w, -self.xi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub u: RadialField,
    pub v: RadialField,
    pub w: RadialField,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub u: RadialField,
    pub z: RadialField,
    pub t: f64,
}

impl FullState {
    pub fn new(u: RadialField, v: RadialField, w: RadialField) -> Self {
        Self { u, v, w, t: 0.0 }
    }

    /// The matching reduced state `(u, χ v - ξ w)`.
    pub fn reduce(&self, p: &Params) -> ReducedState {
        ReducedState {
            u: self.u.clone(),
            z: p.combine(&self.v, &self.w),
            t: self.t,
        }
    }
}

impl ReducedState {
    pub fn new(u: RadialField, z: RadialField) -> Self {
        Self { u, z, t: 0.0 }
    }
}

/// Behavior shared by the full and reduced systems so one integrator drives both.
pub trait SolverState: Clone {
    fn time(&self) -> f64;

    fn set_time(&mut self, t: f64);

    fn density(&self) -> &RadialField;

    /// Net chemotactic potential `s` in `u_t = Δu - ∇·(u ∇s)`; equals `z` for
    /// the reduced system and `χ v - ξ w` for the full one.
    fn signal(&self, p: &Params) -> Cow<'_, RadialField>;

    fn advance(&self, grid: &RadialGrid, p: &Params, dt: f64) -> Result<Self>;

    /// Checks lengths, finiteness and `u >= 0`.
    fn validate(&self, grid: &RadialGrid) -> Result<()>;
}

fn validate_fields(
    grid: &RadialGrid,
    t: f64,
    u: &RadialField,
    others: &[&RadialField],
) -> Result<()> {
    u.check_on(grid)?;
    for f in others {
        f.check_on(grid)?;
    }
    if !u.is_finite() || others.iter().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    if let Some((cell, &value)) = u.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "initial density is negative at cell {cell} ({value:e})"
        )));
    }
    Ok(())
}

impl SolverState for FullState {
    fn time(&self) -> f64 {
        self.t
    }

    fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    fn density(&self) -> &RadialField {
        &self.u
    }

    fn signal(&self, p: &Params) -> Cow<'_, RadialField> {
        Cow::Owned(p.combine(&self.v, &self.w))
    }

    fn advance(&self, grid: &RadialGrid, p: &Params, dt: f64) -> Result<Self> {
        step_full(grid, self, p, dt)
    }

    fn validate(&self, grid: &RadialGrid) -> Result<()> {
        validate_fields(grid, self.t, &self.u, &[&self.v, &self.w])
    }
}

impl SolverState for ReducedState {
    fn time(&self) -> f64 {
        self.t
    }

    fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    fn density(&self) -> &RadialField {
        &self.u
    }

    fn signal(&self, _p: &Params) -> Cow<'_, RadialField> {
        Cow::Borrowed(&self.z)
    }

    fn advance(&self, grid: &RadialGrid, p: &Params, dt: f64) -> Result<Self> {
        step_reduced(grid, self, p, dt)
    }

    fn validate(&self, grid: &RadialGrid) -> Result<()> {
        validate_fields(grid, self.t, &self.u, &[&self.z])
    }
}

/// Explicit upwind transport in `signal` followed by implicit diffusion.
fn transport_density(
    grid: &RadialGrid,
    u: &RadialField,
    signal: &RadialField,
    dt: f64,
    t_new: f64,
) -> Result<RadialField> {
    let limit = advective_dt_limit(grid, signal)?;
    if dt > limit {
        return Err(Error::CflExceeded { dt, limit });
    }
    let div = chemo_div(grid, u, signal)?;
    let advected = u.lincomb(1.0, &div, -dt);
    let next = implicit_helmholtz_solve(grid, &advected, dt, 0.0)?;
    if !next.is_finite() {
        return Err(Error::NonFinite { t: t_new });
    }
    let min_u = next.min();
    if min_u < -POSITIVITY_TOL * next.sup_norm() {
        return Err(Error::PositivityLoss { t: t_new, min_u });
    }
    Ok(next)
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step must be > 0, got {dt}"
        )));
    }
    Ok(())
}

/// One IMEX step of the three-component system.
pub fn step_full(grid: &RadialGrid, s: &FullState, p: &Params, dt: f64) -> Result<FullState> {
    check_dt(dt)?;
    let t_new = s.t + dt;
    let v = implicit_helmholtz_solve(grid, &s.v.lincomb(1.0, &s.u, dt * p.alpha), dt, p.beta)?;
    let w = implicit_helmholtz_solve(grid, &s.w.lincomb(1.0, &s.u, dt * p.gamma), dt, p.delta)?;
    if !v.is_finite() || !w.is_finite() {
        return Err(Error::NonFinite { t: t_new });
    }
    let signal = p.combine(&v, &w);
    let u = transport_density(grid, &s.u, &signal, dt, t_new)?;
    Ok(FullState { u, v, w, t: t_new })
}

/// One IMEX step of the reduced system; requires `β = δ`.
pub fn step_reduced(
    grid: &RadialGrid,
    s: &ReducedState,
    p: &Params,
    dt: f64,
) -> Result<ReducedState> {
    check_dt(dt)?;
    p.check_reducible()?;
    let t_new = s.t + dt;
    let z = implicit_helmholtz_solve(grid, &s.z.lincomb(1.0, &s.u, dt * p.coupling()), dt, p.beta)?;
    if !z.is_finite() {
        return Err(Error::NonFinite { t: t_new });
    }
    let u = transport_density(grid, &s.u, &z, dt, t_new)?;
    Ok(ReducedState { u, z, t: t_new })
}

fn default_cap_factor() -> f64 {
    1e6
}

/// Step-size policy and stopping rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Safety factor applied to the advective positivity limit.
    pub cfl: f64,
    pub t_end: f64,
    /// Absolute sup-norm threshold; when absent, `cap_factor * ||u_0||_inf`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_max_cap: Option<f64>,
    pub cap_factor: f64,
    /// `false` runs uniform steps (lockstep comparisons).
    pub adaptive: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt_init: 1e-4,
            dt_min: 1e-10,
            dt_max: 1e-2,
            cfl: 0.5,
            t_end: 1.0,
            u_max_cap: None,
            cap_factor: default_cap_factor(),
            adaptive: true,
            max_steps: None,
        }
    }
}

impl StepControl {
    /// Uniform steps of (about) `dt` up to `t_end`.
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        Self {
            dt_init: dt,
            dt_min: dt,
            dt_max: dt,
            cfl: 1.0,
            t_end,
            adaptive: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if !self.dt_max.is_finite() {
            return bad("dt_max must be finite".into());
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be > 0, got {}", self.t_end));
        }
        if let Some(cap) = self.u_max_cap {
            if !(cap > 0.0) {
                return bad(format!("u_max_cap must be > 0, got {cap}"));
            }
        }
        if !(self.cap_factor > 1.0) {
            return bad(format!("cap_factor must exceed 1, got {}", self.cap_factor));
        }
        Ok(())
    }

    /// Sup-norm threshold for a run starting from `||u_0||_inf = u0_max`.
    pub fn sup_norm_cap(&self, u0_max: f64) -> f64 {
        self.u_max_cap.unwrap_or(self.cap_factor * u0_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminationReason {
    /// Reached `t_end`.
    Completed,
    /// `||u||_inf` reached the cap.
    SupNormCap {
        u_max: f64,
        cap: f64,
    },
    /// The admissible step fell below `dt_min`.
    DtCollapse {
        dt: f64,
    },
    NonFinite {
        t: f64,
    },
    /// Hit `max_steps` before `t_end`.
    StepLimit,
}

/// Summary of one accepted state. `dt` is the step that produced it (0 for the
/// initial state).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub u_max: f64,
}

/// Receives every accepted state, including the initial one.
pub trait Observer<S> {
    fn observe(&mut self, grid: &RadialGrid, state: &S, info: &StepInfo) -> Result<()>;
}

/// Keeps a clone of every accepted state.
#[derive(Debug, Clone)]
pub struct StateRecorder<S> {
    pub states: Vec<S>,
}

impl<S> Default for StateRecorder<S> {
    fn default() -> Self {
        Self { states: Vec::new() }
    }
}

impl<S: Clone> Observer<S> for StateRecorder<S> {
    fn observe(&mut self, _grid: &RadialGrid, state: &S, _info: &StepInfo) -> Result<()> {
        self.states.push(state.clone());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub steps: Vec<StepInfo>,
    pub final_state: S,
    pub termination: TerminationReason,
    pub t_end: f64,
}

impl<S> Trajectory<S> {
    pub fn initial(&self) -> &StepInfo {
        &self.steps[0]
    }

    pub fn last(&self) -> &StepInfo {
        self.steps
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn relative_mass_drift(&self) -> f64 {
        let m0 = self.initial().mass;
        let drift = self
            .steps
            .iter()
            .fold(0.0_f64, |acc, s| acc.max((s.mass - m0).abs()));
        if m0 == 0.0 {
            drift
        } else {
            drift / m0.abs()
        }
    }
}

fn step_info(grid: &RadialGrid, u: &RadialField, t: f64, dt: f64) -> StepInfo {
    StepInfo {
        t,
        dt,
        mass: grid.weighted_sum(u.values()),
        u_max: u.sup_norm(),
    }
}

/// Advances `s0` to `ctl.t_end` or until a termination rule fires.
///
/// Adaptive mode keeps a target step that grows by [`GROW_FACTOR`] after
/// [`GROW_AFTER`] clean steps and halves on positivity loss; the step actually
/// taken never exceeds `cfl` times the advective limit. When the admissible
/// step drops below `dt_min` the run ends with [`TerminationReason::DtCollapse`].
/// Fixed mode takes uniform steps `(t_end - t_0) / ceil((t_end - t_0) / dt_init)`.
pub fn integrate<S: SolverState>(
    grid: &RadialGrid,
    s0: S,
    p: &Params,
    ctl: &StepControl,
    observers: &mut [&mut dyn Observer<S>],
) -> Result<Trajectory<S>> {
    p.validate()?;
    ctl.validate()?;
    s0.validate(grid)?;

    let first = step_info(grid, s0.density(), s0.time(), 0.0);
    let cap = ctl.sup_norm_cap(first.u_max);
    for obs in observers.iter_mut() {
        obs.observe(grid, &s0, &first)?;
    }
    let mut steps = vec![first];
    let mut state = s0;
    let t_end = ctl.t_end;

    let fixed_dt = if ctl.adaptive {
        None
    } else {
        let span = t_end - state.time();
        let count = (span / ctl.dt_init - 1e-9).ceil().max(1.0);
        Some(span / count)
    };

    let mut target = ctl.dt_init;
    let mut clean = 0usize;
    let mut accepted = 0usize;
    let termination = loop {
        let t = state.time();
        let remaining = t_end - t;
        if remaining <= 1e-12 * t_end.max(1.0) {
            break TerminationReason::Completed;
        }
        if ctl.max_steps.is_some_and(|m| accepted >= m) {
            break TerminationReason::StepLimit;
        }

        let dt = match fixed_dt {
            Some(dt) => dt.min(remaining),
            None => {
                let limit = ctl.cfl * advective_dt_limit(grid, &state.signal(p))?;
                let dt = target.min(ctl.dt_max).min(limit);
                if dt < ctl.dt_min {
                    break TerminationReason::DtCollapse { dt };
                }
                if dt >= remaining * (1.0 - 1e-12) {
                    remaining
                } else {
                    dt
                }
            }
        };

        match state.advance(grid, p, dt) {
            Ok(mut next) => {
                if dt == remaining {
                    // land exactly on t_end rather than one ulp short
                    next.set_time(t_end);
                }
                let info = step_info(grid, next.density(), next.time(), dt);
                for obs in observers.iter_mut() {
                    obs.observe(grid, &next, &info)?;
                }
                steps.push(info);
                state = next;
                accepted += 1;
                if fixed_dt.is_none() {
                    clean += 1;
                    if clean >= GROW_AFTER {
                        target = (target * GROW_FACTOR).min(ctl.dt_max);
                        clean = 0;
                    }
                }
                if info.u_max > 0.0 && info.u_max >= cap {
                    break TerminationReason::SupNormCap {
                        u_max: info.u_max,
                        cap,
                    };
                }
            }
            Err(Error::NonFinite { t }) => break TerminationReason::NonFinite { t },
            Err(Error::CflExceeded { limit, .. }) if fixed_dt.is_none() => {
                clean = 0;
                target = ctl.cfl * limit;
                if target < ctl.dt_min {
                    break TerminationReason::DtCollapse { dt: target };
                }
            }
            Err(Error::PositivityLoss { .. }) if fixed_dt.is_none() => {
                clean = 0;
                target = dt / 2.0;
                if target < ctl.dt_min {
                    break TerminationReason::DtCollapse { dt: target };
                }
            }
            Err(Error::CflExceeded { .. } | Error::PositivityLoss { .. }) => {
                break TerminationReason::DtCollapse { dt };
            }
            Err(e) => return Err(e),
        }
    };

    Ok(Trajectory {
        steps,
        final_state: state,
        termination,
        t_end,
    })
}
