//! Randomized structural properties of the flow, the quantizer, and the
//! transport kernels. Seeds are fixed so failures replay exactly.

use kvh_core::characteristics::{integrate, IntegrateOptions};
use kvh_core::eigen::{
    action_of_energy, energy_of_action, eval_config_space, hamilton_principal_w, quantize,
    ActionAngleChart, Branch, Scheme,
};
use kvh_core::propagators::{
    gaussian_blob, propagate, uniform_axis, PhaseSpaceGrid, PropagateOptions, PropagatorKind,
};
use kvh_core::systems::{catalog, FieldFn, HamiltonianField, SeparableWell};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn wells() -> Vec<(&'static str, SeparableWell)> {
    vec![
        ("ho", catalog("ho", &[], 1.0).unwrap()),
        ("quartic", catalog("quartic", &[], 1.0).unwrap()),
    ]
}

#[test]
fn action_energy_round_trip_on_random_tori() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE01);
    for (name, well) in wells() {
        for _ in 0..25 {
            let j = rng.gen_range(0.05..8.0);
            let (e, omega) = energy_of_action(&well, j).unwrap();
            assert!(omega > 0.0);
            let j_back = action_of_energy(&well, e).unwrap();
            assert!(
                (j_back - j).abs() < 1e-9 * j.max(1.0),
                "{name}: J {j} -> E {e} -> J {j_back}"
            );
        }
    }
}

#[test]
fn harmonic_levels_are_evenly_spaced() {
    let hbar = 0.7;
    let well = catalog(
        "ho",
        &[("m".to_string(), 1.3), ("omega".to_string(), 2.1)],
        hbar,
    )
    .unwrap();
    let mut prev = None;
    for n in 0..=20 {
        let eig = quantize(&well, Scheme::Ebk, n).unwrap();
        if let Some(e_prev) = prev {
            let gap: f64 = eig.chart.e - e_prev;
            assert!((gap - hbar * 2.1).abs() < 1e-8, "gap at n={n}: {gap}");
        }
        prev = Some(eig.chart.e);
    }
}

#[test]
fn principal_functions_partition_the_half_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE02);
    for (name, well) in wells() {
        for _ in 0..20 {
            let j = rng.gen_range(0.2..6.0);
            let chart = ActionAngleChart::from_action(&well, j).unwrap();
            let span = chart.xi_plus - chart.xi_minus;
            let x = chart.xi_minus + span * rng.gen_range(0.02..0.98);
            let w_minus = hamilton_principal_w(&chart, x, Branch::Minus).unwrap();
            let w_plus = hamilton_principal_w(&chart, x, Branch::Plus).unwrap();
            let target = PI * j;
            assert!(
                (w_minus + w_plus - target).abs() < 1e-9 * (1.0 + target),
                "{name}: W-(x) + W+(x) = {} vs pi J = {target}",
                w_minus + w_plus
            );
        }
    }
}

#[test]
fn tangent_maps_stay_symplectic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE03);
    let opts = IntegrateOptions::default();
    for (name, well) in wells() {
        let field = well.field();
        for _ in 0..10 {
            let z0: (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if z0.0.abs() + z0.1.abs() < 0.2 {
                continue;
            }
            let t1 = rng.gen_range(0.5..7.0);
            let traj = integrate(&field, z0, 0.0, t1, &opts).unwrap();
            for pt in &traj.points {
                assert!(
                    (pt.det_tangent() - 1.0).abs() < 1e-8,
                    "{name}: det M = {} at t = {}",
                    pt.det_tangent(),
                    pt.t
                );
            }
        }
    }
}

#[test]
fn backward_integration_inverts_the_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE04);
    let opts = IntegrateOptions::default();
    for (name, well) in wells() {
        let field = well.field();
        for _ in 0..8 {
            let z0 = (rng.gen_range(-1.8..1.8), rng.gen_range(-1.8..1.8));
            let t1 = rng.gen_range(0.3..5.0);
            let fwd = integrate(&field, z0, 0.0, t1, &opts).unwrap();
            let end = fwd.points.last().unwrap();
            let back = integrate(&field, (end.x, end.p), t1, 0.0, &opts).unwrap();
            let home = back.points.last().unwrap();
            assert!(
                (home.x - z0.0).abs() < 1e-7 && (home.p - z0.1).abs() < 1e-7,
                "{name}: returned to ({}, {})",
                home.x,
                home.p
            );
            assert!(
                (home.action + end.action).abs() < 1e-8 * (1.0 + end.action.abs()),
                "{name}: actions do not cancel: {} vs {}",
                home.action,
                end.action
            );
            // the tangent maps must invert each other
            let m = end.tangent;
            let w = home.tangent;
            let prod = [
                [w[0][0] * m[0][0] + w[0][1] * m[1][0], w[0][0] * m[0][1] + w[0][1] * m[1][1]],
                [w[1][0] * m[0][0] + w[1][1] * m[1][0], w[1][0] * m[0][1] + w[1][1] * m[1][1]],
            ];
            for r in 0..2 {
                for c in 0..2 {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!(
                        (prod[r][c] - want).abs() < 1e-6,
                        "{name}: M_back M_fwd [{r}][{c}] = {}",
                        prod[r][c]
                    );
                }
            }
        }
    }
}

#[test]
fn momentum_reversal_reverses_the_flow() {
    // H(x, -p) = H(x, p) for kinetic-plus-potential wells, so reflecting the
    // momentum and flowing forward retraces the orbit
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE05);
    let opts = IntegrateOptions::default();
    for (name, well) in wells() {
        let field = well.field();
        for _ in 0..8 {
            let z0 = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let dt = rng.gen_range(0.3..4.0);
            let fwd = integrate(&field, z0, 0.0, dt, &opts).unwrap();
            let end = fwd.points.last().unwrap();
            let reflected = integrate(&field, (end.x, -end.p), 0.0, dt, &opts).unwrap();
            let home = reflected.points.last().unwrap();
            assert!(
                (home.x - z0.0).abs() < 1e-7 && (home.p + z0.1).abs() < 1e-7,
                "{name}: reversal landed at ({}, {})",
                home.x,
                home.p
            );
        }
    }
}

#[test]
fn flow_segments_compose() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE06);
    let opts = IntegrateOptions::default();
    for (name, well) in wells() {
        let field = well.field();
        for _ in 0..6 {
            let z0 = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let t1 = rng.gen_range(0.3..2.0);
            let t2 = t1 + rng.gen_range(0.3..2.0);
            let leg1 = integrate(&field, z0, 0.0, t1, &opts).unwrap();
            let mid = *leg1.points.last().unwrap();
            let leg2 = integrate(&field, (mid.x, mid.p), t1, t2, &opts).unwrap();
            let end2 = leg2.points.last().unwrap();
            let direct = integrate(&field, z0, 0.0, t2, &opts).unwrap();
            let end = direct.points.last().unwrap();
            assert!(
                (end2.x - end.x).abs() < 1e-8 && (end2.p - end.p).abs() < 1e-8,
                "{name}: composed endpoint drifts from the direct one"
            );
            assert!(
                (mid.action + end2.action - end.action).abs()
                    < 1e-8 * (1.0 + end.action.abs()),
                "{name}: actions do not add"
            );
            let a = mid.tangent;
            let b = end2.tangent;
            let m = end.tangent;
            for r in 0..2 {
                for c in 0..2 {
                    let comp = b[r][0] * a[0][c] + b[r][1] * a[1][c];
                    assert!(
                        (comp - m[r][c]).abs() < 1e-7 * (1.0 + m[r][c].abs()),
                        "{name}: tangents do not compose at [{r}][{c}]"
                    );
                }
            }
        }
    }
}

#[test]
fn reflection_parity_of_eigenfunctions() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE07);
    for (name, well) in wells() {
        for scheme in [Scheme::Ebk, Scheme::BohrSommerfeld] {
            for _ in 0..10 {
                let n = rng.gen_range(0..8usize);
                if n == 0 && scheme == Scheme::BohrSommerfeld {
                    continue; // degenerate torus has no waveform
                }
                let eig = quantize(&well, scheme, n).unwrap();
                let x = rng.gen_range(0.01..well.domain.1 * 0.45);
                let right = eval_config_space(&eig, x).unwrap();
                let left = eval_config_space(&eig, -x).unwrap();
                if right.in_window || !right.value.norm().is_finite() {
                    continue;
                }
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let scale = right.value.norm().max(1e-12);
                assert!(
                    (left.value - sign * right.value).norm() < 1e-9 * scale,
                    "{name} n={n} {scheme:?}: phi(-x) != (-1)^n phi(x) at x={x}"
                );
            }
        }
    }
}

fn random_quadratic_field(rng: &mut ChaCha8Rng) -> HamiltonianField {
    let a: f64 = rng.gen_range(0.4..1.2);
    let b: f64 = rng.gen_range(0.4..1.2);
    let c = rng.gen_range(-0.3..0.3) * (a * b).sqrt();
    let d = rng.gen_range(-0.3..0.3);
    let e = rng.gen_range(-0.3..0.3);
    let h: FieldFn = {
        let (a, b, c, d, e) = (a, b, c, d, e);
        std::sync::Arc::new(move |_t: f64, x: f64, p: Complex64| {
            p * p * (0.5 * a) + Complex64::new(0.5 * b * x * x + d * x, 0.0) + p * (c * x + e)
        })
    };
    let dh_dx: FieldFn = std::sync::Arc::new(move |_t: f64, x: f64, p: Complex64| {
        p * c + Complex64::new(b * x + d, 0.0)
    });
    let dh_dp: FieldFn = std::sync::Arc::new(move |_t: f64, x: f64, p: Complex64| {
        p * a + Complex64::new(c * x + e, 0.0)
    });
    HamiltonianField::new(h, dh_dx, dh_dp, 1.0, false)
}

#[test]
fn kvn_amplitude_squares_to_the_lve_density() {
    // linear flows keep Gaussians Gaussian, so the interpolation error is
    // the only separation between |KvN psi|^2 and the LVE-evolved |psi|^2
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE08);
    for _ in 0..3 {
        let field = random_quadratic_field(&mut rng);
        let xs = uniform_axis(-5.0, 5.0, 65);
        let ps = uniform_axis(-5.0, 5.0, 65);
        let sigma = rng.gen_range(0.5..0.7);
        let center = (rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
        let blob = gaussian_blob(xs.clone(), ps.clone(), center, (sigma, sigma), 0.0, 1.0)
            .unwrap();
        let density_values: Vec<Complex64> = blob
            .values
            .iter()
            .map(|v| Complex64::new(v.norm_sqr(), 0.0))
            .collect();
        let density =
            PhaseSpaceGrid::new(xs.clone(), ps.clone(), density_values, 0.0, 1.0).unwrap();
        let opts = PropagateOptions::default();
        let t1 = 0.45;
        let kvn = propagate(&field, &blob, t1, PropagatorKind::Kvn, &opts).unwrap();
        let lve = propagate(&field, &density, t1, PropagatorKind::Lve, &opts).unwrap();
        let peak = lve.values.iter().map(|v| v.re).fold(0.0f64, f64::max);
        let mut worst = 0.0f64;
        for (k, v) in kvn.values.iter().enumerate() {
            worst = worst.max((v.norm_sqr() - lve.values[k].re).abs());
        }
        assert!(worst < 2e-3 * peak, "|KvN|^2 vs LVE density: {worst:e} (peak {peak:e})");
    }
}

#[test]
fn transport_norm_is_steady_off_the_full_period() {
    // phase-space unitarity of the KvH kernel is not tied to period
    // commensurability; the envelope here is interpolation error only
    let well = catalog("ho", &[], 1.0).unwrap();
    let field = well.field();
    let blob = gaussian_blob(
        uniform_axis(-6.0, 6.0, 129),
        uniform_axis(-6.0, 6.0, 129),
        (1.2, 0.0),
        (0.5, 0.5),
        0.0,
        1.0,
    )
    .unwrap();
    let opts = PropagateOptions::default();
    let n0 = blob.l2_norm();
    for t1 in [1.9, 4.4, 11.0] {
        let out = propagate(&field, &blob, t1, PropagatorKind::KvhPhaseSpace, &opts).unwrap();
        let drift = (out.l2_norm() - n0).abs() / n0;
        assert!(drift < 5e-4, "norm drift {drift:e} at t = {t1}");
    }
}
