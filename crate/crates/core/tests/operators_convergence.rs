mod common;

use chemoblow_core::operators::{
    advective_dt_limit, chemo_div, implicit_helmholtz_solve, laplacian, radial_gradient,
};
use chemoblow_core::{RadialField, RadialGrid};
use common::{orders, rng, rough_positive, smooth_positive};
use proptest::prelude::*;
use std::f64::consts::PI;

fn weighted_dot(g: &RadialGrid, a: &RadialField, b: &RadialField) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(g.weights())
        .map(|((x, y), w)| x * y * w)
        .sum()
}

#[test]
fn laplacian_is_second_order_on_cosine() {
    let radius = 1.7;
    let k = PI / radius;
    for dim in [2, 3, 4] {
        let nm1 = dim as f64 - 1.0;
        let errors: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let g = RadialGrid::new(radius, dim, n).unwrap();
                let f = RadialField::from_fn(&g, |r| (k * r).cos());
                let exact = RadialField::from_fn(&g, |r| {
                    -k * k * (k * r).cos() - nm1 * k * (k * r).sin() / r
                });
                laplacian(&g, &f).unwrap().max_abs_diff(&exact)
            })
            .collect();
        for order in orders(&errors) {
            assert!(order >= 1.9, "n = {dim}: errors {errors:?}");
        }
    }
}

#[test]
fn chemo_div_is_first_order_on_smooth_data() {
    // ∇·(u ∇s) = u' s' + u (s'' + (n-1) s' / r) with u = 1 + r², s = cos(πr)
    let dim = 3;
    let u_of = |r: f64| 1.0 + r * r;
    let exact_of = |r: f64| {
        let (sp, spp) = (-PI * (PI * r).sin(), -PI * PI * (PI * r).cos());
        2.0 * r * sp + u_of(r) * (spp + 2.0 * sp / r)
    };
    let errors: Vec<f64> = [64, 128, 256, 512]
        .iter()
        .map(|&n| {
            let g = RadialGrid::new(1.0, dim, n).unwrap();
            let u = RadialField::from_fn(&g, u_of);
            let s = RadialField::from_fn(&g, |r| (PI * r).cos());
            chemo_div(&g, &u, &s)
                .unwrap()
                .max_abs_diff(&RadialField::from_fn(&g, exact_of))
        })
        .collect();
    for order in orders(&errors) {
        assert!(order >= 0.9, "errors {errors:?}");
    }
}

#[test]
fn laplacian_and_chemo_div_conserve_mass() {
    let mut r = rng(7);
    for dim in 2..=4 {
        let g = RadialGrid::new(1.0, dim, 40).unwrap();
        let u = rough_positive(&g, &mut r, 0.1, 3.0);
        let s = smooth_positive(&g, &mut r, 0.0);
        let scale = g.integrate(&u.map(f64::abs)).unwrap() * 40.0 * 40.0;
        assert!(g.integrate(&laplacian(&g, &u).unwrap()).unwrap().abs() <= 1e-12 * scale);
        assert!(g.integrate(&chemo_div(&g, &u, &s).unwrap()).unwrap().abs() <= 1e-12 * scale);
    }
}

#[test]
fn gradient_vanishes_on_boundary_faces() {
    let g = RadialGrid::new(1.0, 3, 20).unwrap();
    let grad = radial_gradient(&g, &RadialField::from_fn(&g, |r| r * r * r)).unwrap();
    assert_eq!(grad.len(), 21);
    assert_eq!(grad[0], 0.0);
    assert_eq!(grad[20], 0.0);
    assert!(grad.values()[1..20].iter().all(|&q| q > 0.0));
}

#[test]
fn upwind_step_at_the_limit_stays_nonnegative() {
    let mut r = rng(11);
    let g = RadialGrid::new(1.0, 3, 64).unwrap();
    for _ in 0..20 {
        let u = rough_positive(&g, &mut r, 0.0, 2.0);
        let s = rough_positive(&g, &mut r, 0.0, 5.0);
        let dt = advective_dt_limit(&g, &s).unwrap();
        assert!(dt.is_finite() && dt > 0.0);
        let next = u.lincomb(1.0, &chemo_div(&g, &u, &s).unwrap(), -dt);
        assert!(next.min() >= -1e-12 * u.max(), "min {}", next.min());
    }
}

#[test]
fn no_drift_means_no_limit() {
    let g = RadialGrid::new(1.0, 3, 16).unwrap();
    assert_eq!(
        advective_dt_limit(&g, &g.constant(4.0)).unwrap(),
        f64::INFINITY
    );
}

proptest! {
    #[test]
    fn laplacian_is_self_adjoint(seed in any::<u64>(), dim in 2usize..5, cells in 8usize..60) {
        let mut r = rng(seed);
        let g = RadialGrid::new(1.0, dim, cells).unwrap();
        let f = rough_positive(&g, &mut r, -1.0, 1.0);
        let h = rough_positive(&g, &mut r, -1.0, 1.0);
        let lhs = weighted_dot(&g, &laplacian(&g, &f).unwrap(), &h);
        let rhs = weighted_dot(&g, &f, &laplacian(&g, &h).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
        // -Δ_h is positive semidefinite
        prop_assert!(weighted_dot(&g, &laplacian(&g, &f).unwrap(), &f) <= 1e-10);
    }

    #[test]
    fn helmholtz_solve_has_small_residual(seed in any::<u64>(), dt in 1e-6f64..1.0, decay in 0.0f64..3.0) {
        let mut r = rng(seed);
        let g = RadialGrid::new(1.0, 3, 48).unwrap();
        let rhs = rough_positive(&g, &mut r, -2.0, 2.0);
        let x = implicit_helmholtz_solve(&g, &rhs, dt, decay).unwrap();
        let back = x.lincomb(1.0 + dt * decay, &laplacian(&g, &x).unwrap(), -dt);
        prop_assert!(back.max_abs_diff(&rhs) <= 1e-10 * rhs.sup_norm().max(1.0));
    }

    #[test]
    fn helmholtz_solve_preserves_positivity(seed in any::<u64>(), dt in 1e-6f64..1.0) {
        let mut r = rng(seed);
        let g = RadialGrid::new(1.0, 3, 32).unwrap();
        let rhs = rough_positive(&g, &mut r, 0.0, 1.0);
        prop_assert!(implicit_helmholtz_solve(&g, &rhs, dt, 1.0).unwrap().min() >= 0.0);
    }
}
