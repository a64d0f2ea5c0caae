use std::sync::Arc;

use levy_rds::flows::{
    cocycle_check, integrate_ito, integrate_ito_backward, integrate_rde, integrate_variational, Affine, FnField,
    ItoCocycle, RdeFn, Side, SystemSpec,
};
use levy_rds::levy_paths::{sample_path, JumpLaw, LevyTriplet, TimeGrid, TwoSidedPath};
use levy_rds::linalg::{matrix, vector};
use levy_rds::{Driver, Error, Matrix, Vector};
use proptest::prelude::*;

fn scalar(f: fn(f64) -> f64, df: fn(f64) -> f64) -> levy_rds::flows::Field {
    Arc::new(FnField::scalar(f, df))
}

fn jump_triplet() -> LevyTriplet {
    LevyTriplet::gaussian(matrix(1, 1, &[0.5]))
        .with_drift(vector(&[0.2]))
        .with_jumps(2.0, JumpLaw::UniformBall { radius: 0.4 })
}

#[test]
fn zero_system_stays_put() {
    let p = sample_path(&jump_triplet(), (-1.0, 2.0), 0.01, 1).unwrap();
    let g = TimeGrid::new(&p, 0.0, 1.0, 0.01).unwrap();
    let r = integrate_ito(&SystemSpec::zero(1, 1), &p, &vector(&[0.7]), &g).unwrap();
    assert!(r.states.iter().all(|x| x[0] == 0.7));
}

#[test]
fn additive_noise_reproduces_the_path() {
    let p = sample_path(&jump_triplet(), (-1.0, 2.0), 0.001, 4).unwrap();
    let g = TimeGrid::new(&p, 0.0, 2.0, 0.001).unwrap();
    let sys = SystemSpec::new(Arc::new(Affine::zero(1)), vec![Arc::new(Affine::constant(vector(&[1.0])))]).unwrap();
    let r = integrate_ito(&sys, &p, &vector(&[0.3]), &g).unwrap();
    for (t, x) in g.nodes().iter().zip(&r.states) {
        assert!((x[0] - 0.3 - p.evaluate(*t).unwrap()[0]).abs() < 1e-12);
    }
}

#[test]
fn single_jump_multiplies_by_one_plus_u() {
    let tr = LevyTriplet::zero(1).with_jumps(1.0, JumpLaw::UniformBall { radius: 1.0 });
    let p = TwoSidedPath::with_jumps(&tr, (-1.0, 1.0), 0.01, 0, vec![(0.37, vector(&[0.25]))]).unwrap();
    let g = TimeGrid::new(&p, 0.0, 1.0, 0.01).unwrap();
    let sys = SystemSpec::linear(Matrix::zeros(1, 1), vec![Matrix::identity(1, 1)]).unwrap();
    let r = integrate_ito(&sys, &p, &vector(&[2.0]), &g).unwrap();
    assert_eq!(r.state_at(0.37).unwrap()[0], 2.5);
    assert_eq!(r.state_at(0.36).unwrap()[0], 2.0);
    assert_eq!(r.last()[0], 2.5);
}

#[test]
fn backward_run_inverts_forward_run() {
    let p = sample_path(&jump_triplet(), (-2.0, 2.0), 0.01, 9).unwrap();
    let g = TimeGrid::new(&p, -1.5, 0.0, 0.01).unwrap();
    let sys = SystemSpec::new(
        scalar(|x| x - x * x * x / 3.0, |x| 1.0 - x * x),
        vec![scalar(|x| 0.5 * x.sin(), |x| 0.5 * x.cos())],
    )
    .unwrap();
    let fwd = integrate_ito(&sys, &p, &vector(&[0.4]), &g).unwrap();
    let back = integrate_ito_backward(&sys, &p, fwd.last(), &g).unwrap();
    for (a, b) in fwd.states.iter().zip(&back.states) {
        assert!((a - b).amax() < 1e-10);
    }
}

#[test]
fn blow_up_is_reported_with_last_finite_time() {
    let p = sample_path(&LevyTriplet::zero(1), (0.0, 3.0), 0.001, 0).unwrap();
    let g = TimeGrid::new(&p, 0.0, 3.0, 0.001).unwrap();
    let sys = SystemSpec::new(scalar(|x| x * x, |x| 2.0 * x), vec![scalar(|_| 0.0, |_| 0.0)]).unwrap();
    match integrate_ito(&sys, &p, &vector(&[1.0]), &g) {
        Err(Error::Divergence { t, last_finite_t }) => {
            assert!(t > 0.9 && t < 1.1, "blew up at {t}");
            assert!(last_finite_t < t);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn rde_zero_field_and_linear_growth() {
    let g = TimeGrid::uniform(0.0, 1.0, 0.01).unwrap();
    let zero = RdeFn(2, |_t: f64, _s: Side, _y: &[f64], o: &mut [f64]| o.fill(0.0));
    let r = integrate_rde(&zero, &vector(&[1.0, -2.0]), &g).unwrap();
    assert_eq!(r.last(), &vector(&[1.0, -2.0]));
    let lambda = -1.7;
    let mut errs = vec![];
    for step in [0.02, 0.01] {
        let g = TimeGrid::uniform(0.0, 1.0, step).unwrap();
        let lin = RdeFn(1, move |_t: f64, _s: Side, y: &[f64], o: &mut [f64]| o[0] = lambda * y[0]);
        let r = integrate_rde(&lin, &vector(&[1.5]), &g).unwrap();
        errs.push((r.last()[0] - 1.5 * lambda.exp()).abs());
    }
    assert!(errs[0] < 1e-3);
    let order = (errs[0] / errs[1]).log2();
    assert!(order > 1.9, "order {order}");
}

#[test]
fn rde_piecewise_constant_forcing_has_a_clean_kink() {
    // g = 1 before 0.5, −2 after; y(t) = t for t ≤ 0.5, 0.5 − 2(t − 0.5) after.
    let g = TimeGrid::uniform(0.0, 1.0, 0.1).unwrap();
    let f = RdeFn(1, |t: f64, side: Side, _y: &[f64], o: &mut [f64]| {
        let after = t > 0.5 + 1e-12 || (t > 0.5 - 1e-12 && side == Side::Right);
        o[0] = if after { -2.0 } else { 1.0 };
    });
    let r = integrate_rde(&f, &vector(&[0.0]), &g).unwrap();
    for (t, y) in g.nodes().iter().zip(&r.states) {
        let want = if *t <= 0.5 { *t } else { 0.5 - 2.0 * (t - 0.5) };
        assert!((y[0] - want).abs() < 1e-12, "t = {t}");
    }
    let peak = r.states.iter().map(|y| y[0]).fold(f64::MIN, f64::max);
    assert!(peak <= 0.5 + 1e-12);
}

#[test]
fn jacobian_is_identity_without_coefficients_and_x_over_x0_when_linear() {
    let p = sample_path(&jump_triplet(), (-1.0, 1.0), 0.01, 3).unwrap();
    let g = TimeGrid::new(&p, 0.0, 1.0, 0.01).unwrap();
    let r = integrate_variational(&SystemSpec::zero(2, 1), &p, &vector(&[1.0, 2.0]), &g).unwrap();
    assert!(r.jacobians.unwrap().iter().all(|j| *j == Matrix::identity(2, 2)));
    let lin = SystemSpec::linear(Matrix::zeros(1, 1), vec![Matrix::identity(1, 1)]).unwrap();
    let x0 = 1.3;
    let r = integrate_variational(&lin, &p, &vector(&[x0]), &g).unwrap();
    for (x, j) in r.states.iter().zip(r.jacobians.as_ref().unwrap()) {
        assert!((j[(0, 0)] - x[0] / x0).abs() < 1e-12);
    }
    let table = r.to_table();
    assert_eq!(table.header, ["t", "x_1", "J_11"]);
}

#[test]
fn jacobian_matches_finite_differences_of_the_flow() {
    let tr = LevyTriplet::gaussian(matrix(2, 2, &[0.4, 0.0, 0.1, 0.3]))
        .with_jumps(1.5, JumpLaw::TruncatedGaussian { std: 0.3, bound: 0.5 });
    let p = sample_path(&tr, (-1.0, 1.0), 0.001, 12).unwrap();
    let step = 0.001;
    let g = TimeGrid::new(&p, 0.0, 1.0, step).unwrap();
    let drift = FnField::new(2, |x, o| {
        o[0] = x[1] - x[0].powi(3) / 3.0;
        o[1] = -x[0] + 0.5 * x[1].sin();
    })
    .with_jacobian(|x, o| {
        o.copy_from_slice(&[-x[0] * x[0], 1.0, -1.0, 0.5 * x[1].cos()]);
    });
    let s1 = FnField::new(2, |x, o| {
        o[0] = 0.3 * x[1];
        o[1] = 0.2 * x[0].cos();
    })
    .with_jacobian(|x, o| o.copy_from_slice(&[0.0, 0.3, -0.2 * x[0].sin(), 0.0]));
    let sys = SystemSpec::new(
        Arc::new(drift),
        vec![Arc::new(s1), Arc::new(Affine::linear(matrix(2, 2, &[0.1, 0.0, 0.0, -0.1])))],
    )
    .unwrap();
    assert!(sys.jacobian_self_test(&[vector(&[0.3, -0.2]), vector(&[1.5, 2.0])]) < 1e-6);
    let x0 = vector(&[0.5, -0.4]);
    let r = integrate_variational(&sys, &p, &x0, &g).unwrap();
    let j = r.jacobians.as_ref().unwrap().last().unwrap().clone();
    let h = 1e-5;
    let tol = (10.0 * step).max(1e3 * h * h);
    for c in 0..2 {
        let mut xp = x0.clone();
        xp[c] += h;
        let mut xm = x0.clone();
        xm[c] -= h;
        let fp = integrate_ito(&sys, &p, &xp, &g).unwrap().last().clone();
        let fm = integrate_ito(&sys, &p, &xm, &g).unwrap().last().clone();
        let fd = (fp - fm) / (2.0 * h);
        let col = j.column(c).into_owned();
        let rel = (&col - &fd).norm() / col.norm().max(1e-12);
        assert!(rel <= tol, "column {c}: {rel}");
    }
}

#[test]
fn cocycle_residuals() {
    let p = sample_path(&jump_triplet(), (-1.0, 2.0), 0.001, 5).unwrap();
    let nonlinear =
        SystemSpec::new(scalar(|x| -x * x * x, |x| -3.0 * x * x), vec![scalar(|x| 0.5 * x, |_| 0.5)]).unwrap();
    let coc = ItoCocycle(&nonlinear);
    assert_eq!(cocycle_check(&coc, &p, &vector(&[1.0]), 0.5, 0.0, 0.001).unwrap(), 0.0);
    let r = cocycle_check(&coc, &p, &vector(&[1.0]), 0.5, 0.5, 0.001).unwrap();
    assert!(r < 5e-2, "residual {r}");

    let det = sample_path(&LevyTriplet::drift_only(vector(&[1.0])), (-1.0, 2.0), 0.001, 0).unwrap();
    let r = cocycle_check(&coc, &det, &vector(&[2.0]), 0.5, 0.7, 0.001).unwrap();
    assert!(r < 1e-12, "drift-only residual {r}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flow_starts_at_the_initial_condition(seed in 0u64..500, x in -3.0f64..3.0) {
        let p = sample_path(&jump_triplet(), (-1.0, 1.0), 0.01, seed).unwrap();
        let g = TimeGrid::new(&p, 0.0, 1.0, 0.01).unwrap();
        let sys = SystemSpec::new(scalar(|x| -x, |_| -1.0), vec![scalar(|x| x.cos(), |x| -x.sin())]).unwrap();
        let r = integrate_ito(&sys, &p, &vector(&[x]), &g).unwrap();
        prop_assert_eq!(r.states[0][0], x);
        prop_assert_eq!(r.state_at(0.0).unwrap()[0], x);
    }

    #[test]
    fn additive_system_tracks_path_on_any_window(seed in 0u64..500, a in -1.0f64..0.0) {
        let p = sample_path(&jump_triplet(), (-1.0, 1.0), 0.01, seed).unwrap();
        let g = TimeGrid::new(&p, a, 1.0, 0.01).unwrap();
        let sys = SystemSpec::new(Arc::new(Affine::zero(1)), vec![Arc::new(Affine::constant(vector(&[1.0])))]).unwrap();
        let r = integrate_ito(&sys, &p, &Vector::zeros(1), &g).unwrap();
        let want = p.evaluate(1.0).unwrap()[0] - p.evaluate(a).unwrap()[0];
        prop_assert!((r.last()[0] - want).abs() < 1e-12);
    }
}

#[test]
fn views_and_paths_drive_identically() {
    let p = sample_path(&jump_triplet(), (-1.0, 1.0), 0.01, 77).unwrap();
    let g = TimeGrid::new(&p, -0.5, 0.5, 0.01).unwrap();
    let sys = SystemSpec::new(scalar(|x| -x, |_| -1.0), vec![scalar(|x| 0.3 * x, |_| 0.3)]).unwrap();
    let a = integrate_ito(&sys, &p, &vector(&[1.0]), &g).unwrap();
    let v = p.view();
    let c = integrate_ito(&sys, &v, &vector(&[1.0]), &g).unwrap();
    assert_eq!(a.states, c.states);
    assert_eq!(v.horizon(), p.horizon());
}
