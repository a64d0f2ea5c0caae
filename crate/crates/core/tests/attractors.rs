use std::sync::Arc;

use levy_rds::attractors::*;
use levy_rds::flows::{integrate_rde, Affine, Cocycle, FlowResult, ItoCocycle, RdeFn, Side, SystemSpec};
use levy_rds::levy_paths::{sample_path, JumpLaw, LevyTriplet, TimeGrid, TwoSidedPath};
use levy_rds::linalg::{matrix, vector};
use levy_rds::marcus::{build_marcus_cohomology, ou_path, FlowMap, MarcusCocycle};
use levy_rds::{Driver, Error, Result, Vector};
use proptest::prelude::*;

fn quiet_path(d: usize) -> TwoSidedPath {
    sample_path(&LevyTriplet::zero(d), (-30.0, 5.0), 0.01, 1).unwrap()
}

/// Heun flow of an autonomous field, ignoring the driver.
struct Autonomous<F>(usize, F);

impl<F: Fn(&[f64], &mut [f64]) + Sync> Cocycle for Autonomous<F> {
    fn run(&self, _driver: &dyn Driver, x0: &Vector, grid: &TimeGrid) -> Result<FlowResult> {
        integrate_rde(&RdeFn(self.0, |_t: f64, _s: Side, y: &[f64], o: &mut [f64]| (self.1)(y, o)), x0, grid)
    }
}

#[allow(clippy::type_complexity)]
fn contracting(d: usize) -> Pointwise<Autonomous<impl Fn(&[f64], &mut [f64]) + Sync>> {
    Pointwise(Autonomous(d, |y: &[f64], o: &mut [f64]| {
        for (oi, yi) in o.iter_mut().zip(y) {
            *oi = -yi;
        }
    }))
}

fn settings(radius: f64, n: usize, schedule: Vec<f64>) -> PullbackSettings {
    PullbackSettings { ball_radius: radius, n_points: n, schedule, tol: 1e-2, step: 0.01 }
}

fn identity_certificate() -> LyapunovCertificate {
    LyapunovCertificate {
        v: Arc::new(|y: &Vector| y.norm_squared()),
        grad_v: Arc::new(|y: &Vector| y * 2.0),
        alpha: 2.0,
        kappa: None,
        k1: Arc::new(|z: &[f64]| z.iter().map(|v| v * v).sum::<f64>().sqrt()),
        k2: Arc::new(|z: &[f64]| z.iter().map(|v| v * v).sum::<f64>().sqrt()),
        l_field: Arc::new(|_z: &[f64], y: &Vector| Ok(Vector::zeros(y.len()))),
        eta: 1.0,
    }
}

fn duffing(p: DuffingParams) -> DuffingSystem {
    duffing_van_der_pol_system(p).unwrap()
}

#[test]
fn semi_hausdorff_small_sets() {
    let a = vec![vector(&[0.0, 0.0])];
    let b = vec![vector(&[3.0, 4.0])];
    assert_eq!(semi_hausdorff(&a, &a).unwrap(), 0.0);
    assert_eq!(semi_hausdorff(&a, &b).unwrap(), 5.0);
    let big = vec![vector(&[0.0, 0.0]), vector(&[3.0, 4.0])];
    assert_eq!(semi_hausdorff(&a, &big).unwrap(), 0.0);
    assert_eq!(semi_hausdorff(&big, &a).unwrap(), 5.0);
    assert!(matches!(semi_hausdorff(&[], &a), Err(Error::Parameter(_))));
    assert!(matches!(semi_hausdorff(&a, &[]), Err(Error::Parameter(_))));
}

fn cloud_strategy() -> impl Strategy<Value = Vec<Vector>> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..8)
        .prop_map(|v| v.into_iter().map(|(x, y)| vector(&[x, y])).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semi_hausdorff_triangle(a in cloud_strategy(), b in cloud_strategy(), c in cloud_strategy()) {
        prop_assert_eq!(semi_hausdorff(&a, &a).unwrap(), 0.0);
        let ac = semi_hausdorff(&a, &c).unwrap();
        let ab = semi_hausdorff(&a, &b).unwrap();
        let bc = semi_hausdorff(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        // brute force over all pairs
        let brute = a.iter().map(|x| c.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
        prop_assert_eq!(ac, brute);
    }
}

#[test]
fn ball_points_are_deterministic_and_inside() {
    let a = ball_points(2, 1.5, 100).unwrap();
    assert_eq!(a.len(), 100);
    assert!(a.iter().all(|x| x.norm() <= 1.5));
    assert_eq!(a, ball_points(2, 1.5, 100).unwrap());
    // coverage: every quadrant of the disk is hit
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
        assert!(a.iter().any(|x| x[0] * sx > 0.5 && x[1] * sy > 0.5));
    }
}

#[test]
fn pullback_at_zero_time_is_identity() {
    let path = quiet_path(1);
    let cloud = ball_points(1, 2.0, 16).unwrap();
    let r = pullback_cloud(&contracting(1), &path, &cloud, 0.0, 0.01).unwrap();
    assert_eq!(r.points, cloud);
    assert_eq!(r.dropped, 0);
}

#[test]
fn linear_contraction_scales_cloud() {
    let path = quiet_path(2);
    let cloud = ball_points(2, 2.0, 32).unwrap();
    let t = 3.0;
    let r = pullback_cloud(&contracting(2), &path, &cloud, t, 0.01).unwrap();
    for (x, y) in cloud.iter().zip(&r.points) {
        assert!((y - x * f64::exp(-t)).amax() < 2e-5);
    }
}

#[test]
fn bistable_line_settles_on_equilibria() {
    let path = quiet_path(1);
    let flow = Pointwise(Autonomous(1, |y: &[f64], o: &mut [f64]| o[0] = y[0] - y[0].powi(3)));
    let cloud = ball_points(1, 2.0, 40).unwrap();
    let r = pullback_cloud(&flow, &path, &cloud, 20.0, 0.01).unwrap();
    assert!(diameter(&r.points) <= 1.0 + 1e-6);
    for x in &r.points {
        let v = x[0];
        assert!((v.abs() - 1.0).abs() < 1e-6 || v.abs() < 1e-6, "point {v}");
    }
}

#[test]
fn diverging_points_are_dropped() {
    let path = quiet_path(1);
    let flow = Pointwise(Autonomous(1, |y: &[f64], o: &mut [f64]| o[0] = y[0] * y[0]));
    let cloud = vec![vector(&[-1.0]), vector(&[50.0])];
    let r = pullback_cloud(&flow, &path, &cloud, 1.0, 0.01).unwrap();
    assert_eq!(r.dropped, 1);
    assert_eq!(r.points.len(), 1);
}

#[test]
fn estimate_collapses_under_contraction() {
    let path = quiet_path(2);
    let s = settings(2.0, 64, vec![2.0, 4.0, 8.0, 12.0]);
    let run = estimate_attractor(&contracting(2), &path, 2, &s).unwrap();
    assert!(diameter(run.final_cloud()) <= f64::exp(-12.0) * 2.0 * 1.0001);
    assert!(run.converged);
    assert_eq!(run.converged_at, Some(12.0));
    assert!(run.successive_hausdorff.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(run.summary_table().header, vec!["t_pullback", "diameter", "hausdorff_step"]);
    assert_eq!(run.clouds_table().rows.len(), 4 * 64);
}

#[test]
fn zero_field_converges_at_first_step() {
    let path = quiet_path(2);
    let flow = Pointwise(Autonomous(2, |_y: &[f64], o: &mut [f64]| o.fill(0.0)));
    let s = settings(1.0, 20, vec![1.0, 2.0]);
    let run = estimate_attractor(&flow, &path, 2, &s).unwrap();
    assert_eq!(run.converged_at, Some(1.0));
    assert_eq!(run.final_cloud(), ball_points(2, 1.0, 20).unwrap().as_slice());
}

#[test]
fn bad_schedule_is_rejected() {
    let path = quiet_path(1);
    let s = settings(1.0, 4, vec![2.0, 1.0]);
    assert!(matches!(estimate_attractor(&contracting(1), &path, 1, &s), Err(Error::Parameter(_))));
}

#[test]
fn noise_free_duffing_has_bounded_attractor() {
    let ds = duffing(DuffingParams::new(1.0, 1.0, 0.0, 0.0));
    let path = quiet_path(2);
    let s = settings(2.0, 64, vec![5.0, 10.0, 20.0]);
    let run = estimate_attractor(&Pointwise(MarcusCocycle(&ds.system)), &path, 2, &s).unwrap();
    assert_eq!(run.dropped, 0);
    let d = diameter(run.final_cloud());
    assert!(d > 1.0 && d < 4.0, "diameter {d}");
}

#[test]
fn invariance_of_trivial_attractor() {
    let path = quiet_path(1);
    let s = settings(1.0, 8, vec![5.0, 10.0]);
    let zero = vec![vector(&[0.0])];
    let r = invariance_check(&contracting(1), &path, &zero, 1.0, &s).unwrap();
    assert!(r.residual < 1e-12);
    assert_eq!(invariance_check(&contracting(1), &path, &zero, 0.0, &s).unwrap().residual, 0.0);
}

#[test]
fn invariance_of_stationary_linear_sde() {
    // dX = -X dt + dL has a random point attractor; pullback estimates at ω and θ_1ω agree
    let triplet = LevyTriplet::gaussian(matrix(1, 1, &[0.5])).with_jumps(1.0, JumpLaw::UniformBall { radius: 0.5 });
    let path = sample_path(&triplet, (-30.0, 5.0), 0.01, 11).unwrap();
    let sys = SystemSpec::new(
        Arc::new(Affine::linear(matrix(1, 1, &[-1.0]))),
        vec![Arc::new(Affine::constant(vector(&[1.0])))],
    )
    .unwrap();
    let flow = Pointwise(ItoCocycle(&sys));
    let s = settings(2.0, 16, vec![5.0, 10.0, 20.0]);
    let run = estimate_attractor(&flow, &path, 1, &s).unwrap();
    assert!(run.converged);
    let r = invariance_check(&flow, &path, run.final_cloud(), 1.0, &s).unwrap();
    assert!(r.residual <= s.tol, "residual {}", r.residual);
}

#[test]
fn lyapunov_scan_of_quadratic() {
    let cert = identity_certificate();
    let drift = Affine::linear(matrix(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
    let scan = verify_lyapunov(&cert, &drift, 1.0, 10.0, 5, 16).unwrap();
    assert!((scan.alpha_hat - 2.0).abs() < 1e-12);
    assert!(scan.alpha_pass());
    assert_eq!(scan.eta_hat, None);
}

#[test]
fn vanishing_v_is_a_certificate_error() {
    let mut cert = identity_certificate();
    cert.v = Arc::new(|y: &Vector| y.norm_squared() - 4.0);
    let drift = Affine::linear(matrix(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
    assert!(matches!(verify_lyapunov(&cert, &drift, 1.0, 2.0, 2, 4), Err(Error::Certificate(_))));
}

#[test]
fn duffing_lyapunov_scan() {
    let ds = duffing(DuffingParams::new(1.0, 1.0, 0.5, 0.5));
    let drift = ds.system.drift.as_ref();
    let scan = verify_lyapunov(&ds.certificate, drift, 6.0, 50.0, 10, 64).unwrap();
    assert!(scan.eta_pass(), "eta {:?}", scan.eta_hat);
    assert!(scan.alpha_pass(), "alpha {}", scan.alpha_hat);
    // at |y| = 5 the drift still pushes V up near y = (1.8, 4.66)
    let inner = verify_lyapunov(&ds.certificate, drift, 5.0, 50.0, 10, 256).unwrap();
    assert!(inner.eta_hat.unwrap() < 0.0);
    let y = vector(&[1.8, (25.0f64 - 1.8 * 1.8).sqrt()]);
    assert!((ds.certificate.grad_v)(&y).dot(&drift.value(&y)) > 0.0);
    // milder anti-damping is dissipative from radius 5 on
    let mild = duffing(DuffingParams::new(1.0, 0.5, 0.5, 0.5));
    assert!(verify_lyapunov(&mild.certificate, mild.system.drift.as_ref(), 5.0, 50.0, 10, 64).unwrap().eta_pass());
}

#[test]
fn duffing_gradient_matches_v() {
    let ds = duffing(DuffingParams::new(1.0, 1.0, 0.5, 0.5));
    let c = &ds.certificate;
    for y in [vector(&[0.3, -1.2]), vector(&[2.0, 1.0]), vector(&[-4.0, 7.5])] {
        let g = (c.grad_v)(&y);
        for i in 0..2 {
            let h = 1e-5;
            let mut yp = y.clone();
            yp[i] += h;
            let mut ym = y.clone();
            ym[i] -= h;
            let fd = ((c.v)(&yp) - (c.v)(&ym)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0));
        }
    }
}

#[test]
fn duffing_polynomial_matches_display() {
    let check = duffing_polynomial_check();
    assert!(check.gradient_matches);
    assert!(check.matches(), "mismatches {:?}", check.mismatches());
    let c = check.expanded.coefficient([6, 0, 0, 0]);
    assert_eq!(c, num_rational::Rational64::new(-7, 18));
    // no y1^3 y2 term survives the expansion
    assert_eq!(check.expanded.coefficient([3, 1, 0, 0]), num_rational::Rational64::from_integer(0));
}

#[test]
fn duffing_closed_forms() {
    let p = DuffingParams::new(0.7, 0.0, 0.4, 0.9);
    let ds = duffing(p);
    let a = ds.system.drift.value(&vector(&[1.0, 0.0]));
    assert!((a - vector(&[-1.0 / 3.0, 0.7 - 1.0])).amax() < 1e-15);
    let map = &ds.system.map;
    let y = vector(&[1.3, -0.4]);
    for z in [[0.2, -0.5], [1.5, 0.3], [-0.8, 2.0]] {
        let phi = map.phi(&z, &y).unwrap();
        let expect = vector(&[y[0], p.sigma1 * y[0] * z[0] + y[1] + p.sigma2 * z[1]]);
        assert!((phi - expect).amax() < 1e-13);
        let j = map.jacobian(&z, &y).unwrap();
        assert!((j - matrix(2, 2, &[1.0, 0.0, p.sigma1 * z[0], 1.0])).amax() < 1e-13);
        let l = (ds.certificate.l_field)(&z, &y).unwrap();
        assert!((l - duffing_l_closed_form(&p, &z, &y)).amax() < 1e-13);
    }
}

#[test]
fn duffing_change_of_variables() {
    let p = DuffingParams::new(1.2, -0.6, 0.3, 0.3);
    let ds = duffing(p);
    let original = |x: &Vector| vector(&[x[1], p.gamma1 * x[0] + p.gamma2 * x[1] - x[0].powi(3) - x[0] * x[0] * x[1]]);
    for x in [vector(&[0.5, -1.0]), vector(&[-1.7, 0.2]), vector(&[2.2, 3.1])] {
        let y = duffing_to_transformed(p.gamma2, &x);
        assert!((duffing_to_original(p.gamma2, &y) - &x).amax() < 1e-14);
        // chain rule: ẏ = DT(x) ẋ
        let dt = matrix(2, 2, &[1.0, 0.0, -p.gamma2 + x[0] * x[0], 1.0]);
        let lhs = ds.system.drift.value(&y);
        assert!((lhs - dt * original(&x)).amax() < 1e-12);
    }
}

#[test]
fn duffing_c2_difference_matches_decomposition() {
    let p = DuffingParams::new(1.0, 1.0, 0.5, 0.5);
    let ds = duffing(p);
    let map = &ds.system.map;
    let drift = ds.system.drift.as_ref();
    for y in [vector(&[0.3, -1.2]), vector(&[5.0, 1.0]), vector(&[-3.0, 8.0])] {
        for z in [[0.1, -0.3], [1.0, 2.0], [-2.0, 0.5]] {
            let (h, j) = map.phi_with_jacobian(&z, &y, true).unwrap();
            let pulled = j.unwrap().lu().solve(&drift.value(&h)).unwrap();
            let diff = drift.value(&y) - pulled;
            let closed = duffing_c2_decomposition(&p, &z, &y);
            assert!((diff - &closed).amax() < 1e-10 * closed.amax().max(1.0));
        }
    }
}

#[test]
fn duffing_c1_c2_scan() {
    let ds = duffing(DuffingParams::new(1.0, 1.0, 0.5, 0.5));
    let zs = z_grid(2, &[1e-3, 1e-2, 0.1, 1.0, 10.0], 16);
    let r = verify_c1_c2(
        &ds.certificate,
        ds.system.drift.as_ref(),
        &ds.system.map,
        &[5.0, 10.0, 20.0, 50.0],
        64,
        &zs,
        &[1.0, 0.1, 0.01, 0.001],
    )
    .unwrap();
    assert!(r.c1_decreasing(), "c1 {:?}", r.c1_sup);
    assert!(r.c2_at_last() <= 1.0 + 1e-6, "c2 {:?}", r.c2_sup);
    assert!(r.k2_vanishes(), "k2 {:?}", r.k2_values);
}

#[test]
fn zero_noise_gives_zero_c1() {
    let ds = duffing(DuffingParams::new(1.0, 1.0, 0.0, 0.0));
    let mut cert = ds.certificate.clone();
    cert.k2 = Arc::new(|z: &[f64]| z.iter().map(|v| v.abs()).sum());
    let zs = z_grid(2, &[0.1, 1.0], 8);
    let r = verify_c1_c2(&cert, ds.system.drift.as_ref(), &ds.system.map, &[5.0, 10.0], 16, &zs, &[1.0, 0.1]).unwrap();
    assert!(r.c1_sup.iter().all(|&c| c == 0.0));
    // ā(y) − (∂Φ)⁻¹ā(Φ) vanishes when Φ is the identity
    assert!(r.c2_sup.iter().all(|&c| c == 0.0));
}

#[test]
fn zero_k1_is_rejected() {
    let ds = duffing(DuffingParams::new(1.0, 1.0, 0.5, 0.5));
    let zs = vec![vec![0.0, 0.0]];
    let r = verify_c1_c2(&ds.certificate, ds.system.drift.as_ref(), &ds.system.map, &[5.0], 8, &zs, &[1.0]);
    assert!(matches!(r, Err(Error::Parameter(_))));
}

#[test]
fn temperedness_on_synthetic_series() {
    let ts: Vec<f64> = (0..20).map(|k| k as f64).collect();
    let flat = vec![3.0; 20];
    let r = temperedness_check(&ts, &flat, &[0.01, 0.1, 1.0]).unwrap();
    assert!(r.pass());
    assert!(r.slope.abs() < 1e-12);
    let grow: Vec<f64> = ts.iter().map(|t| f64::exp(t / 2.0)).collect();
    let r = temperedness_check(&ts, &grow, &[0.1, 1.0]).unwrap();
    assert_eq!(r.passes, vec![false, true]);
    assert!((r.slope - 0.5).abs() < 1e-12);
    assert!(temperedness_check(&ts[..5], &flat[..5], &[1.0]).is_err());
}

fn ex1_cohomology(path: &TwoSidedPath, lo: f64) -> levy_rds::marcus::MarcusCohomology {
    let map = FlowMap::linear(vec![matrix(1, 1, &[1.0])]).unwrap();
    let grid = TimeGrid::new(path, lo, 0.0, 0.01).unwrap();
    let ou = ou_path(path, 1.0, &grid, 20.0).unwrap();
    build_marcus_cohomology(&map, &ou).unwrap()
}

#[test]
fn cohomology_image_is_tempered() {
    let triplet = LevyTriplet::gaussian(matrix(1, 1, &[1.0])).with_jumps(1.0, JumpLaw::UniformBall { radius: 1.0 });
    let path = sample_path(&triplet, (-45.0, 2.0), 0.01, 5).unwrap();
    let coh = ex1_cohomology(&path, -20.0);
    let cloud = ball_points(1, 1.0, 16).unwrap();
    let (ts, ds) = cohomology_image_diameters(&coh, &cloud).unwrap();
    assert!(ts.len() >= 10);
    assert!(temperedness_check(&ts, &ds, &[0.1, 1.0]).unwrap().pass());
}

#[test]
fn mapping_through_cohomology() {
    let triplet = LevyTriplet::gaussian(matrix(1, 1, &[1.0]));
    let path = sample_path(&triplet, (-25.0, 2.0), 0.01, 9).unwrap();
    let coh = ex1_cohomology(&path, -1.0);
    let k0 = coh.ou.grid.index_of(0.0).unwrap();
    let z0 = coh.ou.value(k0)[0];
    let cloud = vec![vector(&[0.5]), vector(&[-1.0]), vector(&[2.0])];
    let b = map_attractor_through_cohomology(&coh, &cloud).unwrap();
    for (x, y) in cloud.iter().zip(&b) {
        assert!((y[0] - x[0] * z0.exp()).abs() < 1e-13);
    }
    // Lipschitz bound: e^{Z_0} is the Lipschitz constant of x ↦ x e^{Z_0}
    let other = vec![vector(&[0.4]), vector(&[1.9])];
    let mapped_other = map_attractor_through_cohomology(&coh, &other).unwrap();
    let lhs = semi_hausdorff(&b, &mapped_other).unwrap();
    let rhs = z0.exp() * semi_hausdorff(&cloud, &other).unwrap();
    assert!(lhs <= rhs * (1.0 + 1e-12));

    let id = FlowMap::linear(vec![matrix(1, 1, &[0.0])]).unwrap();
    let coh_id = build_marcus_cohomology(&id, &coh.ou).unwrap();
    assert_eq!(map_attractor_through_cohomology(&coh_id, &cloud).unwrap(), cloud);
}

#[test]
fn sphere_directions_are_unit() {
    for d in 1..=4 {
        let dirs = sphere_directions(d, 12);
        assert!(!dirs.is_empty());
        assert!(dirs.iter().all(|e| (e.norm() - 1.0).abs() < 1e-12));
    }
    assert_eq!(z_grid(2, &[0.5, 2.0], 8).len(), 16);
}

#[test]
fn fnfield_drift_matches_duffing_jacobian() {
    let ds = duffing(DuffingParams::new(0.3, 1.4, 0.5, 0.5));
    let sys = SystemSpec::new(ds.system.drift.clone(), vec![]).unwrap();
    assert!(sys.jacobian_self_test(&[vector(&[0.4, -2.0]), vector(&[-1.5, 0.7])]) < 1e-8);
}
