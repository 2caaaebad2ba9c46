//! Subcommand implementations. Each returns its scientific outcome; the binary
//! maps it to an exit code.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chemoblow_core::analysis::{classify, observed_orders, reduction_equivalence};
use chemoblow_core::dynamics::{step_full, step_reduced};
use chemoblow_core::energy::energy_g;
use chemoblow_core::initial_data::{check_membership, drive_to_class, make_bump, DriveAttempt};
use chemoblow_core::{
    integrate, BlowupReport, DriveOptions, EnergyLedger, FullState, MembershipReport, Params,
    RadialField, RadialGrid, ReducedState, SolverState, Verdict,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{InitialData, Mode, RunConfig};
use crate::io::{
    columns_csv, ledger_csv, snapshot_csv, version_stamp, write_atomic, write_json,
    write_snapshots, SnapshotColumns, SnapshotRecorder,
};

pub const EXIT_COMPLETED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_BLEW_UP: i32 = 2;

/// Largest lockstep discrepancy treated as round-off, relative to `max(1, ||z||_inf)`.
pub const ROUNDOFF_AGREEMENT: f64 = 1e-12;
/// Smallest observed order accepted by the refinement study.
pub const MIN_ORDER: f64 = 0.9;

pub fn exit_code(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Completed => EXIT_COMPLETED,
        Verdict::BlewUp => EXIT_BLEW_UP,
        Verdict::Inconclusive => EXIT_FAILURE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriveSummary {
    pub sigma: Option<f64>,
    pub distance: f64,
    pub attempts: Vec<DriveAttempt>,
}

/// Initial data ready to integrate.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: RadialGrid,
    pub state: FullState,
    pub membership: Option<MembershipReport>,
    pub drive: Option<DriveSummary>,
}

fn initial_fields(
    cfg: &RunConfig,
    grid: &RadialGrid,
) -> Result<(RadialField, RadialField, RadialField)> {
    let radius = grid.radius();
    Ok(match &cfg.initial {
        InitialData::Constant { u, v, w, ripple } => (
            RadialField::from_fn(grid, |r| {
                u * (1.0 + ripple * (std::f64::consts::PI * r / radius).cos())
            }),
            grid.constant(*v),
            grid.constant(*w),
        ),
        InitialData::Bump { mass, sigma, v, w } => (
            make_bump(grid, *mass, *sigma)?,
            grid.constant(*v),
            grid.constant(*w),
        ),
        InitialData::File { path } => crate::io::read_initial_csv(path, grid)?,
    })
}

fn drive_options(cfg: &RunConfig) -> Result<DriveOptions> {
    let th = cfg
        .thresholds
        .ok_or_else(|| anyhow!("a [thresholds] table is required"))?;
    Ok(DriveOptions {
        lp_exponent: th.p,
        ..cfg.drive.unwrap_or_default()
    })
}

/// Builds the grid and initial state, drives it into the class when a
/// `[drive]` table is present, and checks membership when thresholds are set.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let grid = cfg.grid.build()?;
    let (mut u, mut v, mut w) = initial_fields(cfg, &grid)?;
    let mut drive = None;
    if cfg.drive.is_some() {
        let th = cfg.thresholds.expect("validated: drive needs thresholds");
        let out = drive_to_class(
            &grid,
            &u,
            &v,
            &w,
            &cfg.params,
            th.class(),
            th.eps,
            &drive_options(cfg)?,
        )?;
        info!(
            "drive: sigma = {:?}, distance = {:.6e}, G = {:?}",
            out.sigma, out.distance, out.report.g_value
        );
        drive = Some(DriveSummary {
            sigma: out.sigma,
            distance: out.distance,
            attempts: out.attempts,
        });
        (u, v, w) = (out.u0, out.v0, out.w0);
    }
    let membership = match cfg.thresholds {
        Some(th) => Some(check_membership(
            &grid,
            &u,
            &v,
            &w,
            &cfg.params,
            th.class(),
        )?),
        None => None,
    };
    Ok(Prepared {
        grid,
        state: FullState::new(u, v, w),
        membership,
        drive,
    })
}

#[derive(Serialize)]
struct RunReport<'a> {
    version: String,
    config: &'a RunConfig,
    steps: usize,
    relative_mass_drift: f64,
    blowup: &'a BlowupReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    membership: Option<&'a MembershipReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drive: Option<&'a DriveSummary>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: BlowupReport,
    pub relative_mass_drift: f64,
    pub exit_code: i32,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn simulate<S>(cfg: &RunConfig, prepared: &Prepared, s0: S) -> Result<RunOutcome>
where
    S: SolverState + SnapshotColumns,
{
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let grid = &prepared.grid;
    let mut ledger = EnergyLedger::new(cfg.params);
    let mut snaps = SnapshotRecorder::new(cfg.snapshot_every);
    let traj = integrate(
        grid,
        s0,
        &cfg.params,
        &cfg.control,
        &mut [&mut ledger, &mut snaps],
    )?;
    let report = classify(&traj, &ledger.records, grid.dim());
    info!(
        "run: {:?} after {} steps at t = {}, growth {:.3e}",
        report.verdict,
        traj.steps.len() - 1,
        report.t_last,
        report.growth
    );

    let last = snaps.steps_seen() - 1;
    let mut states = std::mem::take(&mut snaps.states);
    if states.last().map(|(k, _)| *k) != Some(last) {
        states.push((last, traj.final_state.clone()));
    }
    write_atomic(&dir.join("ledger.csv"), &ledger_csv(&ledger.records)?)?;
    write_snapshots(dir, grid, &states)?;
    let drift = traj.relative_mass_drift();
    write_json(
        &dir.join("report.json"),
        &RunReport {
            version: version_stamp(),
            config: cfg,
            steps: traj.steps.len() - 1,
            relative_mass_drift: drift,
            blowup: &report,
            membership: prepared.membership.as_ref(),
            drive: prepared.drive.as_ref(),
        },
    )?;
    Ok(RunOutcome {
        exit_code: exit_code(report.verdict),
        report,
        relative_mass_drift: drift,
    })
}

/// Integrates the configured system and writes `ledger.csv`, `snapshots/`
/// and `report.json` into the output directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    if cfg.mode == Mode::Compare {
        bail!("mode = \"compare\" runs through the compare command");
    }
    let prepared = prepare(cfg)?;
    match cfg.mode {
        Mode::Reduced => {
            let s0 = prepared.state.reduce(&cfg.params);
            simulate::<ReducedState>(cfg, &prepared, s0)
        }
        _ => simulate::<FullState>(cfg, &prepared, prepared.state.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementRow {
    pub dt: f64,
    pub steps: usize,
    pub max_e_z: f64,
    pub max_e_u: f64,
    /// Observed order against the previous row.
    pub order_z: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub rows: Vec<RefinementRow>,
    /// Every discrepancy is within round-off of the signal scale.
    pub roundoff_agreement: bool,
    pub passed: bool,
}

/// Per-step errors of one lockstep pair of runs with uniform step close to `dt`.
fn lockstep(
    grid: &RadialGrid,
    full0: &FullState,
    p: &Params,
    dt: f64,
    t_end: f64,
) -> Result<(f64, Vec<[f64; 3]>, f64)> {
    let span = t_end - full0.t;
    let steps = (span / dt).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let mut full = full0.clone();
    let mut red = full0.reduce(p);
    let mut rows = Vec::with_capacity(steps + 1);
    let mut scale = red.z.sup_norm();
    for k in 0..=steps {
        let e = reduction_equivalence(std::slice::from_ref(&full), std::slice::from_ref(&red), p)?;
        rows.push([full.t, e.e_z[0], e.e_u[0]]);
        if k == steps {
            break;
        }
        let t = full0.t + (k + 1) as f64 * h;
        full = step_full(grid, &full, p, h)
            .with_context(|| format!("full system step {} (dt = {h})", k + 1))?;
        red = step_reduced(grid, &red, p, h)
            .with_context(|| format!("reduced system step {} (dt = {h})", k + 1))?;
        full.t = t;
        red.t = t;
        scale = scale.max(red.z.sup_norm());
    }
    Ok((h, rows, scale))
}

/// Runs the full and reduced systems in lockstep at `dt`, `dt/2` and `dt/4`
/// and writes `equivalence.csv` (coarsest run) and `refinement.csv`.
///
/// Passes when the observed order of `max ||(χv - ξw) - z||_inf` is at least
/// [`MIN_ORDER`], or when every discrepancy is already at round-off level, in
/// which case no order can be measured.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareOutcome> {
    cfg.validate()?;
    cfg.params.check_reducible()?;
    let prepared = prepare(cfg)?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let dt0 = cfg.control.dt_init;
    let mut rows: Vec<RefinementRow> = Vec::new();
    let mut roundoff = true;
    for level in 0..3 {
        let dt = dt0 / f64::from(1u32 << level);
        let (h, series, scale) = lockstep(
            &prepared.grid,
            &prepared.state,
            &cfg.params,
            dt,
            cfg.control.t_end,
        )?;
        if level == 0 {
            let cols: Vec<Vec<f64>> = (0..3)
                .map(|c| series.iter().map(|r| r[c]).collect())
                .collect();
            let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            write_atomic(
                &dir.join("equivalence.csv"),
                &columns_csv(&["t", "e_z", "e_u"], &refs)?,
            )?;
        }
        let max_e_z = series.iter().map(|r| r[1]).fold(0.0, f64::max);
        let max_e_u = series.iter().map(|r| r[2]).fold(0.0, f64::max);
        roundoff &= max_e_z <= ROUNDOFF_AGREEMENT * scale.max(1.0);
        let order_z = rows
            .last()
            .map(|prev| observed_orders(&[prev.max_e_z, max_e_z], 2.0)[0]);
        rows.push(RefinementRow {
            dt: h,
            steps: series.len() - 1,
            max_e_z,
            max_e_u,
            order_z,
        });
    }
    let mut refinement = csv::Writer::from_writer(Vec::new());
    refinement.write_record(["dt", "steps", "max_e_z", "max_e_u", "order_z"])?;
    for r in &rows {
        refinement.write_record([
            r.dt.to_string(),
            r.steps.to_string(),
            r.max_e_z.to_string(),
            r.max_e_u.to_string(),
            r.order_z.map(|o| o.to_string()).unwrap_or_default(),
        ])?;
    }
    write_atomic(&dir.join("refinement.csv"), &refinement.into_inner()?)?;
    let ordered = rows
        .iter()
        .filter_map(|r| r.order_z)
        .all(|o| o >= MIN_ORDER);
    let passed = roundoff || ordered;
    if roundoff {
        info!("compare: discrepancies at round-off level, order not measurable");
    }
    Ok(CompareOutcome {
        rows,
        roundoff_agreement: roundoff,
        passed,
    })
}

/// Membership of the prepared initial data (after driving, when configured).
pub fn cmd_membership(cfg: &RunConfig) -> Result<MembershipReport> {
    cfg.validate()?;
    if cfg.thresholds.is_none() {
        bail!("membership needs a [thresholds] table");
    }
    Ok(prepare(cfg)?.membership.expect("thresholds are set"))
}

#[derive(Serialize)]
struct DriveReport<'a> {
    version: String,
    config: &'a RunConfig,
    drive: &'a DriveSummary,
    membership: &'a MembershipReport,
}

/// Drives the configured data into the class and writes `initial.csv`
/// (loadable with `initial.kind = "file"`) and `drive.json`.
pub fn cmd_drive(cfg: &RunConfig) -> Result<(DriveSummary, MembershipReport)> {
    cfg.validate()?;
    let th = cfg
        .thresholds
        .ok_or_else(|| anyhow!("drive needs a [thresholds] table"))?;
    let grid = cfg.grid.build()?;
    let (u, v, w) = initial_fields(cfg, &grid)?;
    let out = drive_to_class(
        &grid,
        &u,
        &v,
        &w,
        &cfg.params,
        th.class(),
        th.eps,
        &drive_options(cfg)?,
    )?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let state = FullState::new(out.u0, out.v0, out.w0);
    write_atomic(&dir.join("initial.csv"), &snapshot_csv(&grid, &state)?)?;
    let summary = DriveSummary {
        sigma: out.sigma,
        distance: out.distance,
        attempts: out.attempts,
    };
    write_json(
        &dir.join("drive.json"),
        &DriveReport {
            version: version_stamp(),
            config: cfg,
            drive: &summary,
            membership: &out.report,
        },
    )?;
    Ok((summary, out.report))
}

/// One row of `phase.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRow {
    pub chi: f64,
    pub xi: f64,
    pub sigma: Option<f64>,
    pub mass: Option<f64>,
    /// `ok`, `invalid` (rejected by validation) or `failed` (error during the run).
    pub status: String,
    /// Empty for invalid rows; failed runs are `Inconclusive`.
    pub verdict: String,
    pub t_last: Option<f64>,
    pub g0: Option<f64>,
    pub c2_fit: Option<f64>,
    pub note: String,
}

pub const PHASE_HEADER: [&str; 10] = [
    "chi", "xi", "sigma", "mass", "status", "verdict", "t_last", "g0", "c2_fit", "note",
];

/// Cartesian product of the sweep axes in `chi, xi, sigma, mass` order.
pub fn sweep_points(cfg: &RunConfig) -> Vec<(f64, f64, Option<f64>, Option<f64>)> {
    let axes = cfg.sweep.clone().unwrap_or_default();
    let or_base = |axis: Option<Vec<f64>>, base: f64| axis.unwrap_or_else(|| vec![base]);
    let opt = |axis: Option<Vec<f64>>| match axis {
        Some(values) => values.into_iter().map(Some).collect(),
        None => vec![None],
    };
    let chis = or_base(axes.chi, cfg.params.chi);
    let xis = or_base(axes.xi, cfg.params.xi);
    let sigmas: Vec<Option<f64>> = opt(axes.sigma);
    let masses: Vec<Option<f64>> = opt(axes.mass);
    let mut points = Vec::new();
    for &chi in &chis {
        for &xi in &xis {
            for &sigma in &sigmas {
                for &mass in &masses {
                    points.push((chi, xi, sigma, mass));
                }
            }
        }
    }
    points
}

fn sweep_config(
    base: &RunConfig,
    chi: f64,
    xi: f64,
    sigma: Option<f64>,
    mass: Option<f64>,
) -> Result<RunConfig> {
    let mut cfg = base.clone();
    cfg.sweep = None;
    cfg.params.chi = chi;
    cfg.params.xi = xi;
    let volume = cfg.grid.build()?.ball_volume();
    match &mut cfg.initial {
        InitialData::Bump {
            mass: m, sigma: s, ..
        } => {
            if let Some(x) = sigma {
                *s = x;
            }
            if let Some(x) = mass {
                *m = x;
            }
        }
        InitialData::Constant { u, .. } => {
            if let Some(x) = mass {
                *u = x / volume;
            }
        }
        InitialData::File { .. } => {}
    }
    if let (Some(x), Some(th)) = (mass, cfg.thresholds.as_mut()) {
        th.mass = x;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep_one(base: &RunConfig, point: (f64, f64, Option<f64>, Option<f64>)) -> PhaseRow {
    let (chi, xi, sigma, mass) = point;
    let mut row = PhaseRow {
        chi,
        xi,
        sigma,
        mass,
        status: "ok".into(),
        verdict: format!("{:?}", Verdict::Inconclusive),
        t_last: None,
        g0: None,
        c2_fit: None,
        note: String::new(),
    };
    let cfg = match sweep_config(base, chi, xi, sigma, mass) {
        Ok(cfg) => cfg,
        Err(e) => {
            row.status = "invalid".into();
            row.verdict.clear();
            row.note = format!("{e:#}");
            return row;
        }
    };
    let result = (|| -> Result<BlowupReport> {
        let prepared = prepare(&cfg)?;
        let s = &prepared.state;
        row.g0 = energy_g(&prepared.grid, &s.u, &s.v, &s.w, &cfg.params).ok();
        let mut ledger = EnergyLedger::new(cfg.params);
        let grid = &prepared.grid;
        let report = if cfg.mode == Mode::Reduced {
            let traj = integrate(
                grid,
                s.reduce(&cfg.params),
                &cfg.params,
                &cfg.control,
                &mut [&mut ledger],
            )?;
            classify(&traj, &ledger.records, grid.dim())
        } else {
            let traj = integrate(
                grid,
                s.clone(),
                &cfg.params,
                &cfg.control,
                &mut [&mut ledger],
            )?;
            classify(&traj, &ledger.records, grid.dim())
        };
        Ok(report)
    })();
    match result {
        Ok(report) => {
            row.verdict = format!("{:?}", report.verdict);
            row.t_last = Some(report.t_last);
            row.c2_fit = report.c2_fit;
        }
        Err(e) => {
            warn!("sweep point chi = {chi}, xi = {xi}: {e:#}");
            row.status = "failed".into();
            row.note = format!("{e:#}");
        }
    }
    row
}

pub fn phase_csv(rows: &[PhaseRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(PHASE_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner()?)
}

/// Runs every sweep point on a pool of `workers` threads (0 picks the
/// default) and writes `phase.csv` in point order.
pub fn cmd_sweep(cfg: &RunConfig, workers: usize) -> Result<Vec<PhaseRow>> {
    if cfg.mode == Mode::Compare {
        bail!("sweeps run in full or reduced mode");
    }
    let points = sweep_points(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    info!(
        "sweep: {} points on {} workers",
        points.len(),
        pool.current_num_threads()
    );
    let rows: Vec<PhaseRow> =
        pool.install(|| points.par_iter().map(|&pt| sweep_one(cfg, pt)).collect());
    create_dir(&cfg.output_dir)?;
    write_atomic(&cfg.output_dir.join("phase.csv"), &phase_csv(&rows)?)?;
    Ok(rows)
}
