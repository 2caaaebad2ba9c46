//! Acceptance criteria 1-9. Run with `--nocapture` to see one PASS/FAIL line
//! per criterion.

use std::f64::consts::PI;

use chemoblow::commands::{cmd_compare, cmd_run};
use chemoblow::{Mode, RunConfig};
use chemoblow_core::analysis::{
    blowup_time_bound, fit_c2, ode_lower_bound, reduction_equivalence, theta_of,
};
use chemoblow_core::energy::{check_energy_inequality, dissipation_d, energy_f, energy_g};
use chemoblow_core::initial_data::{check_membership, drive_to_class};
use chemoblow_core::operators::{chemo_div, laplacian};
use chemoblow_core::{
    integrate, ClassThresholds, DriveOptions, EnergyLedger, EnergyRecord, FullState, Params,
    RadialField, RadialGrid, ReducedState, StateRecorder, StepControl, TerminationReason, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn log2_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect()
}

fn subcritical_data(g: &RadialGrid) -> FullState {
    FullState::new(
        RadialField::from_fn(g, |r| 1.0 + 0.5 * (PI * r).cos()),
        RadialField::from_fn(g, |r| 1.0 + 0.3 * (PI * r).cos()),
        g.constant(0.5),
    )
}

fn random_positive(g: &RadialGrid, rng: &mut ChaCha8Rng) -> RadialField {
    RadialField::new((0..g.cells()).map(|_| rng.gen_range(1e-3..10.0)).collect())
}

fn conservation() -> Check {
    let g = RadialGrid::new(1.0, 3, 256).unwrap();
    let p = Params::new(2.0, 1.0);
    let ctl = StepControl {
        t_end: 1.0,
        ..Default::default()
    };
    let traj = integrate(&g, subcritical_data(&g), &p, &ctl, &mut []).map_err(|e| e.to_string())?;
    let drift = traj.relative_mass_drift();
    ensure(
        traj.termination == TerminationReason::Completed && drift <= 1e-10,
        format!(
            "{:?} at t = {}, relative mass drift {drift:.3e} (limit 1e-10)",
            traj.termination,
            traj.last().t
        ),
    )
}

fn operator_convergence() -> Check {
    let k = PI;
    let lap_err: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let g = RadialGrid::new(1.0, 3, n).unwrap();
            let f = RadialField::from_fn(&g, |r| (k * r).cos());
            let exact =
                RadialField::from_fn(&g, |r| -k * k * (k * r).cos() - 2.0 * k * (k * r).sin() / r);
            laplacian(&g, &f).unwrap().max_abs_diff(&exact)
        })
        .collect();
    let div_err: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let g = RadialGrid::new(1.0, 3, n).unwrap();
            let u = RadialField::from_fn(&g, |r| 1.0 + r * r);
            let s = RadialField::from_fn(&g, |r| (PI * r).cos());
            let exact = RadialField::from_fn(&g, |r| {
                let (sp, spp) = (-PI * (PI * r).sin(), -PI * PI * (PI * r).cos());
                2.0 * r * sp + (1.0 + r * r) * (spp + 2.0 * sp / r)
            });
            chemo_div(&g, &u, &s).unwrap().max_abs_diff(&exact)
        })
        .collect();
    let (lo, co) = (log2_orders(&lap_err), log2_orders(&div_err));
    ensure(
        lo.iter().all(|&o| o >= 1.9) && co.iter().all(|&o| o >= 0.9),
        format!("laplacian orders {lo:.3?} (>= 1.9), chemo_div orders {co:.3?} (>= 0.9)"),
    )
}

fn reduction_equivalence_check() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::preset("subcritical3d").unwrap();
    cfg.mode = Mode::Compare;
    cfg.grid.cells = 128;
    cfg.control.dt_init = 1e-3;
    cfg.control.t_end = 0.1;
    cfg.output_dir = dir.path().to_path_buf();
    let outcome = cmd_compare(&cfg).map_err(|e| format!("{e:#}"))?;
    let errs: Vec<String> = outcome
        .rows
        .iter()
        .map(|r| format!("{:.3e}", r.max_e_z))
        .collect();
    let orders: Vec<f64> = outcome.rows.iter().filter_map(|r| r.order_z).collect();

    // symmetric case v0 = w0
    let g = RadialGrid::new(1.0, 3, 128).unwrap();
    let p = Params::new(2.0, 1.0);
    let v = RadialField::from_fn(&g, |r| 1.0 + 0.4 * (PI * r).cos());
    let full0 = FullState::new(
        RadialField::from_fn(&g, |r| 2.0 + (PI * r).cos()),
        v.clone(),
        v,
    );
    let ctl = StepControl::fixed(1e-3, 0.1);
    let mut fr = StateRecorder::<FullState>::default();
    let mut rr = StateRecorder::<ReducedState>::default();
    integrate(&g, full0.clone(), &p, &ctl, &mut [&mut fr]).map_err(|e| e.to_string())?;
    integrate(&g, full0.reduce(&p), &p, &ctl, &mut [&mut rr]).map_err(|e| e.to_string())?;
    let sym = reduction_equivalence(&fr.states, &rr.states, &p)
        .map_err(|e| e.to_string())?
        .max_e_z();

    let how = if outcome.roundoff_agreement {
        "agreement at round-off on every level, so no order is measurable".to_string()
    } else {
        format!("orders {orders:.3?} (>= 0.9)")
    };
    ensure(
        outcome.passed && sym <= 1e-12,
        format!("max e_z over dt = 1e-3, 5e-4, 2.5e-4: {errs:?}, {how}; symmetric case max e_z {sym:.3e} (<= 1e-12)"),
    )
}

fn energy_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g = RadialGrid::new(1.0, 3, 128).unwrap();
    let p = Params::new(2.0, 1.0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (u, v, w) = (
            random_positive(&g, &mut rng),
            random_positive(&g, &mut rng),
            random_positive(&g, &mut rng),
        );
        let gv = energy_g(&g, &u, &v, &w, &p).map_err(|e| e.to_string())?;
        let fv = energy_f(&g, &u, &p.combine(&v, &w), &p).map_err(|e| e.to_string())?;
        worst = worst.max((gv - fv).abs() / gv.abs().max(fv.abs()));
    }
    ensure(
        worst <= 1e-14,
        format!("max relative |G - F| over 100 triples {worst:.3e} (<= 1e-14)"),
    )
}

fn residual_at(dt: f64) -> f64 {
    let g = RadialGrid::new(1.0, 3, 64).unwrap();
    let p = Params::new(2.0, 1.0);
    let mut ledger = EnergyLedger::new(p);
    integrate(
        &g,
        subcritical_data(&g),
        &p,
        &StepControl::fixed(dt, 0.5),
        &mut [&mut ledger],
    )
    .unwrap();
    check_energy_inequality(&ledger.records, 0.0)
        .unwrap()
        .max_residual
}

fn dissipation_structure() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g = RadialGrid::new(1.0, 3, 128).unwrap();
    let p = Params::new(2.0, 1.0);
    let mut min_d = f64::INFINITY;
    for _ in 0..100 {
        let u = random_positive(&g, &mut rng);
        let z = p.combine(
            &random_positive(&g, &mut rng),
            &random_positive(&g, &mut rng).scaled(0.1),
        );
        min_d = min_d.min(dissipation_d(&g, &u, &z, &p).map_err(|e| e.to_string())?);
    }

    let c = 1.5;
    let steady = FullState::new(g.constant(c), g.constant(c), g.constant(c));
    let d_steady = dissipation_d(&g, &steady.u, &p.combine(&steady.v, &steady.w), &p).unwrap();
    let dt = 1e-3;
    let mut ledger = EnergyLedger::new(p);
    integrate(
        &g,
        steady,
        &p,
        &StepControl::fixed(dt, 0.1),
        &mut [&mut ledger],
    )
    .map_err(|e| e.to_string())?;
    let f0 = ledger.records[0].energy.abs();
    let steady_res = check_energy_inequality(&ledger.records, 0.0)
        .unwrap()
        .residuals
        .iter()
        .fold(0.0f64, |a, r| a.max(r.abs()));
    let steady_ok = d_steady.abs() <= 1e-14 && steady_res <= 1e-12 * f0 / dt;

    let residuals: Vec<f64> = [1.25e-3, 6.25e-4, 3.125e-4]
        .iter()
        .map(|&dt| residual_at(dt))
        .collect();
    let orders = log2_orders(&residuals);
    ensure(
        min_d >= 0.0 && steady_ok && orders.iter().all(|&o| o >= 0.9),
        format!(
            "min D over 100 states {min_d:.3e}; steady D {d_steady:.1e}, max |r_k| {steady_res:.1e}; \
             max r_k under halving {residuals:.4?}, orders {orders:.3?} (>= 0.9)"
        ),
    )
}

fn ode_bound() -> Check {
    let theta = theta_of(3);
    let (y0, c2) = (1.0, 0.3);
    let t_star = blowup_time_bound(y0, c2, theta).unwrap();
    let mut worst = 0.0f64;
    for frac in [0.01, 0.25, 0.5, 0.75, 0.99] {
        let t = frac * t_star;
        let h = 1e-4 * (t_star - t).min(t);
        let y = |s| ode_lower_bound(y0, c2, theta, s).unwrap();
        let fd = (y(t + h) - y(t - h)) / (2.0 * h);
        let rhs = c2 * y(t).powf(1.0 / theta);
        worst = worst.max((fd - rhs).abs() / rhs);
    }
    let dt = 1e-3;
    let ledger: Vec<EnergyRecord> = (0..=4000)
        .map(|k| {
            let t = k as f64 * dt;
            EnergyRecord {
                t,
                energy: -ode_lower_bound(y0, c2, theta, t).unwrap(),
                dissipation: 0.0,
                mass: 1.0,
                u_max: 1.0,
                dt: if k == 0 { 0.0 } else { dt },
            }
        })
        .collect();
    let fit = fit_c2(&ledger, theta).map_err(|e| e.to_string())?;
    let fit_err = (fit - c2).abs() / c2;
    ensure(
        worst <= 1e-6 && theta == 5.0 / 7.0 && fit_err <= 0.02,
        format!("finite-difference residual {worst:.2e} (<= 1e-6), theta(3) = {theta}, fitted c2 = {fit:.5} ({:.2}% off)", 100.0 * fit_err),
    )
}

fn blowup_demonstration() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::preset("supercritical3d").unwrap();
    cfg.output_dir = dir.path().join("super");
    let sup = cmd_run(&cfg).map_err(|e| format!("{e:#}"))?.report;
    let ratio = sup.dt_collapse_ratio().unwrap_or(1.0);
    let t_star = sup.t_star_estimate.unwrap_or(f64::NAN);

    let mut sub_cfg = RunConfig::preset("subcritical3d").unwrap();
    sub_cfg.grid.cells = cfg.grid.cells;
    sub_cfg.control.t_end = cfg.control.t_end;
    sub_cfg.output_dir = dir.path().join("sub");
    let sub = cmd_run(&sub_cfg).map_err(|e| format!("{e:#}"))?.report;

    ensure(
        sup.verdict == Verdict::BlewUp
            && sup.growth >= 100.0
            && ratio <= 1e-2
            && sup.t_last < cfg.control.t_end
            && t_star >= sup.t_last
            && sub.verdict == Verdict::Completed,
        format!(
            "N = {}: {:?} via {:?} at t = {:.5}, growth {:.3e}, last/largest dt {ratio:.2e}, T* estimate {t_star:.3}; \
             subcritical run {:?} at t = {}",
            cfg.grid.cells, sup.verdict, sup.termination, sup.t_last, sup.growth, sub.verdict, sub.t_last
        ),
    )
}

fn membership_checker() -> Check {
    let g = RadialGrid::new(1.0, 3, 512).unwrap();
    let p = Params::new(2.0, 1.0);
    let m = 60.0;
    let th = ClassThresholds {
        mass: m,
        a_bound: 100.0,
        k: 10.0,
    };
    let base_u = g.constant(m / g.ball_volume());
    let one = g.constant(1.0);
    let out = drive_to_class(
        &g,
        &base_u,
        &one,
        &one,
        &p,
        th,
        60.0,
        &DriveOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let (u, v, w) = (out.u0, out.v0, out.w0);
    let check = |u: &RadialField, v: &RadialField, w: &RadialField, th| {
        check_membership(&g, u, v, w, &p, th).unwrap()
    };
    let base = check(&u, &v, &w, th);
    if !base.satisfies {
        return Err(format!("driven data rejected on re-check: {base:?}"));
    }

    let mut failures = Vec::new();
    let bad_mass = u.scaled(1.001);
    failures.push((
        "mass",
        check(
            &bad_mass,
            &v,
            &w,
            ClassThresholds {
                k: -1e9,
                a_bound: 1e9,
                ..th
            },
        ),
    ));
    failures.push((
        "norm",
        check(
            &u,
            &v,
            &w,
            ClassThresholds {
                a_bound: 0.5 * base.a_norm,
                k: -1e9,
                ..th
            },
        ),
    ));
    failures.push((
        "energy",
        check(
            &u,
            &v,
            &w,
            ClassThresholds {
                k: -base.g_value.unwrap() + 1.0,
                a_bound: 1e9,
                ..th
            },
        ),
    ));
    let mut hole = u.clone();
    let last = g.cells() - 1;
    hole[0] += hole[last] * g.weights()[last] / g.weights()[0];
    hole[last] = 0.0;
    failures.push((
        "positivity of u",
        check(
            &hole,
            &v,
            &w,
            ClassThresholds {
                k: -1e9,
                a_bound: 1e9,
                ..th
            },
        ),
    ));
    let mut strong_w = w.clone();
    strong_w[last] = 3.0 * v[last];
    failures.push((
        "positivity of z",
        check(
            &u,
            &v,
            &strong_w,
            ClassThresholds {
                k: -1e9,
                a_bound: 1e9,
                ..th
            },
        ),
    ));
    let wrongly_accepted: Vec<&str> = failures
        .iter()
        .filter(|(_, r)| r.satisfies)
        .map(|(n, _)| *n)
        .collect();
    let targeted = [
        !failures[0].1.mass_ok(),
        !failures[1].1.norm_ok(),
        !failures[2].1.energy_ok(),
        !failures[3].1.positivity_u,
        !failures[4].1.positivity_z,
    ];

    ensure(
        wrongly_accepted.is_empty() && targeted.iter().all(|&t| t),
        format!(
            "driven data (G = {:.3}) re-checked as a member; 5 single-criterion violations, wrongly accepted: {wrongly_accepted:?}",
            base.g_value.unwrap()
        ),
    )
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut ledgers = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = RunConfig::preset("subcritical3d").unwrap();
        cfg.output_dir = dir.path().join(name);
        cmd_run(&cfg).map_err(|e| format!("{e:#}"))?;
        ledgers.push(std::fs::read(cfg.output_dir.join("ledger.csv")).map_err(|e| e.to_string())?);
    }
    ensure(
        ledgers[0] == ledgers[1] && !ledgers[0].is_empty(),
        format!(
            "two runs of the same config, ledger.csv {} bytes, identical = {}",
            ledgers[0].len(),
            ledgers[0] == ledgers[1]
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        ("mass conservation", conservation),
        ("operator convergence", operator_convergence),
        ("reduction equivalence", reduction_equivalence_check),
        ("energy identity", energy_identity),
        ("dissipation structure", dissipation_structure),
        ("ODE bound", ode_bound),
        ("blow-up demonstration", blowup_demonstration),
        ("membership checker", membership_checker),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {} FAIL {name}: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
