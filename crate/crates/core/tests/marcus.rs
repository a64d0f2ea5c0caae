use std::sync::Arc;

use levy_rds::flows::{Affine, Field, FnField, Side};
use levy_rds::levy_paths::{sample_path, JumpLaw, LevyTriplet, TimeGrid, TwoSidedPath};
use levy_rds::linalg::{matrix, vector};
use levy_rds::marcus::{
    build_marcus_cohomology, integrate_marcus, lie_bracket_check, marcus_stationarity_defect, ou_integral_form,
    ou_path, ou_sde_form_defect, ou_shift_defect, transformed_drift_marcus, verify_conjugacy_marcus, FlowMap,
    MarcusSystem,
};
use levy_rds::{Error, Matrix, Vector};
use proptest::prelude::*;

fn cubic() -> Field {
    Arc::new(FnField::scalar(|x| -x * x * x, |x| -3.0 * x * x))
}

fn ex1() -> MarcusSystem {
    MarcusSystem::new(cubic(), FlowMap::linear(vec![matrix(1, 1, &[1.0])]).unwrap()).unwrap()
}

fn commuting_pair() -> (Matrix, Matrix, Vector, Vector) {
    // polynomials in one matrix commute; offsets chosen with S1 b2 = S2 b1
    let a = matrix(2, 2, &[0.3, -0.4, 0.2, 0.1]);
    let s1 = &a * 0.5;
    let s2 = &a * &a * 0.7 - &a * 0.2;
    let b1 = vector(&[0.3, -0.2]);
    let b2 = s1.clone().try_inverse().unwrap() * &s2 * &b1;
    (s1, s2, b1, b2)
}

fn jump_drift() -> LevyTriplet {
    LevyTriplet::drift_only(vector(&[0.5])).with_jumps(2.0, JumpLaw::UniformBall { radius: 0.5 })
}

#[test]
fn phi_is_identity_at_zero_and_exponential_for_linear_noise() {
    let map = FlowMap::linear(vec![matrix(1, 1, &[1.0])]).unwrap();
    let x = vector(&[1.7]);
    assert_eq!(map.phi(&[0.0], &x).unwrap(), x);
    for z in [-1.3, 0.2, 2.5] {
        assert!((map.phi(&[z], &x).unwrap()[0] - 1.7 * f64::exp(z)).abs() < 1e-13);
    }
}

#[test]
fn numeric_flow_matches_closed_form() {
    let (s1, s2, b1, b2) = commuting_pair();
    let closed = FlowMap::affine(vec![s1.clone(), s2.clone()], vec![b1.clone(), b2.clone()]).unwrap();
    let fields: Vec<Field> = vec![Arc::new(Affine::new(s1, b1)), Arc::new(Affine::new(s2, b2))];
    let numeric = FlowMap::numeric(fields).unwrap().with_substeps(32);
    let x = vector(&[0.4, -1.1]);
    for z in [[0.3, -0.2], [1.0, 0.5], [-0.7, 0.9]] {
        let a = closed.phi(&z, &x).unwrap();
        let b = numeric.phi(&z, &x).unwrap();
        assert!((a - b).amax() <= 1e-8);
        let ja = closed.jacobian(&z, &x).unwrap();
        let jb = numeric.jacobian(&z, &x).unwrap();
        assert!((ja - jb).amax() <= 1e-8);
    }
}

#[test]
fn closed_form_flow_composes_and_inverts() {
    let (s1, s2, b1, b2) = commuting_pair();
    let map = FlowMap::affine(vec![s1, s2], vec![b1, b2]).unwrap();
    let x = vector(&[0.2, 0.9]);
    let (z, w) = ([0.4, -0.3], [-0.1, 0.8]);
    let sum = [z[0] + w[0], z[1] + w[1]];
    let composed = map.phi(&z, &map.phi(&w, &x).unwrap()).unwrap();
    assert!((map.phi(&sum, &x).unwrap() - composed).amax() < 1e-13);
    let y = map.phi(&z, &x).unwrap();
    assert!((map.inverse(&z, &y).unwrap() - x).amax() < 1e-13);
}

#[test]
fn pseudo_inverse_form_agrees_only_for_one_invertible_field() {
    let one = FlowMap::affine(vec![matrix(1, 1, &[0.8])], vec![vector(&[0.5])]).unwrap();
    let x = vector(&[0.3]);
    assert!((one.phi(&[1.2], &x).unwrap() - one.phi_pseudo_inverse_form(&[1.2], &x).unwrap()).amax() < 1e-13);
    let (s1, s2, b1, b2) = commuting_pair();
    let two = FlowMap::affine(vec![s1, s2], vec![b1, b2]).unwrap();
    let x = vector(&[0.1, 0.2]);
    let z = [0.6, 0.4];
    let gap = (two.phi(&z, &x).unwrap() - two.phi_pseudo_inverse_form(&z, &x).unwrap()).amax();
    assert!(gap > 1e-3, "{gap}");
}

#[test]
fn non_commuting_noise_is_rejected() {
    let rot = matrix(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let shear = matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    assert!(matches!(FlowMap::linear(vec![rot.clone(), shear.clone()]), Err(Error::Hypothesis(_))));
    let fields: Vec<Field> = vec![Arc::new(Affine::linear(rot)), Arc::new(Affine::linear(shear))];
    let pts = [vector(&[1.0, 0.5]), vector(&[-0.3, 2.0])];
    assert!(lie_bracket_check(&fields, &pts) > 0.1);
    assert!(MarcusSystem::new(Arc::new(Affine::zero(2)), FlowMap::numeric(fields.clone()).unwrap()).is_err());
    assert_eq!(lie_bracket_check(&fields[..1], &pts), 0.0);
    let (s1, s2, _, _) = commuting_pair();
    let pair: Vec<Field> = vec![Arc::new(Affine::linear(s1)), Arc::new(Affine::linear(s2))];
    assert!(lie_bracket_check(&pair, &pts) < 1e-14);
}

#[test]
fn ou_on_drift_only_path_tends_to_b_over_mu() {
    let p = sample_path(&LevyTriplet::drift_only(vector(&[0.6])), (-20.0, 1.0), 0.01, 0).unwrap();
    let grid = TimeGrid::new(&p, 0.0, 1.0, 0.01).unwrap();
    let ou = ou_path(&p, 2.0, &grid, 15.0).unwrap();
    for z in ou.values() {
        assert!((z[0] - 0.3).abs() < 0.3 * (-30.0f64).exp() * 10.0);
    }
}

#[test]
fn ou_recursion_matches_integral_form() {
    let tr = LevyTriplet::gaussian(matrix(1, 1, &[0.8]))
        .with_drift(vector(&[0.2]))
        .with_jumps(1.5, JumpLaw::UniformBall { radius: 0.6 });
    let p = sample_path(&tr, (-12.0, 3.0), 0.01, 3).unwrap();
    let grid = TimeGrid::new(&p, -2.0, 3.0, 0.01).unwrap();
    let ou = ou_path(&p, 1.0, &grid, 10.0).unwrap();
    let integral = ou_integral_form(&p, 1.0, &grid, 10.0).unwrap();
    for (a, b) in ou.values().iter().zip(&integral) {
        assert!((a - b).amax() <= 1e-10);
    }
    assert!(ou_sde_form_defect(&p, &ou).unwrap() < 0.02);
    let table = ou.to_table();
    assert_eq!(table.header, ["t", "Z_1"]);
}

#[test]
fn ou_sde_form_defect_is_second_order_without_brownian_part() {
    let p = sample_path(&jump_drift(), (-12.0, 1.0), 0.001, 2).unwrap();
    let mut d = Vec::new();
    for h in [0.01, 0.005] {
        let grid = TimeGrid::new(&p, 0.0, 1.0, h).unwrap();
        d.push(ou_sde_form_defect(&p, &ou_path(&p, 1.0, &grid, 10.0).unwrap()).unwrap());
    }
    assert!(d[1] < 0.3 * d[0], "{d:?}");
}

#[test]
fn ou_shift_identity_holds() {
    let tr = LevyTriplet::gaussian(matrix(1, 1, &[0.5])).with_jumps(1.0, JumpLaw::UniformBall { radius: 0.5 });
    let p = sample_path(&tr, (-25.0, 3.0), 0.01, 5).unwrap();
    for s in [0.5, 1.0, 2.0] {
        let d = ou_shift_defect(&p, 1.0, s, 1.0, 0.01, 20.0).unwrap();
        assert!(d < 1e-8, "s = {s}: {d}");
    }
}

#[test]
fn marcus_chain_rule_on_jump_drift_path() {
    let p = sample_path(&jump_drift(), (0.0, 1.0), 1e-3, 7).unwrap();
    let grid = TimeGrid::new(&p, 0.0, 1.0, 1e-3).unwrap();
    let sys =
        MarcusSystem::new(Arc::new(Affine::zero(1)), FlowMap::linear(vec![matrix(1, 1, &[1.0])]).unwrap()).unwrap();
    let r = integrate_marcus(&sys, &p, &vector(&[1.3]), &grid).unwrap();
    assert!(r.meta.jumps > 0);
    for (t, x) in grid.nodes().iter().zip(&r.states) {
        let exact = 1.3 * p.evaluate(*t).unwrap()[0].exp();
        assert!((x[0] - exact).abs() <= 1e-3 * exact);
    }
}

#[test]
fn marcus_jump_is_exponential_not_linear() {
    let tr = LevyTriplet::zero(1);
    let p = TwoSidedPath::with_jumps(&tr, (-1.0, 1.0), 0.01, 0, vec![(0.5, vector(&[0.4])), (-0.5, vector(&[0.3]))])
        .unwrap();
    let sys =
        MarcusSystem::new(Arc::new(Affine::zero(1)), FlowMap::linear(vec![matrix(1, 1, &[1.0])]).unwrap()).unwrap();
    let grid = TimeGrid::new(&p, -1.0, 1.0, 0.01).unwrap();
    let r = integrate_marcus(&sys, &p, &vector(&[2.0]), &grid).unwrap();
    assert!((r.last()[0] - 2.0 * 0.7f64.exp()).abs() < 1e-13);
    assert!((r.last()[0] - 2.0 * 1.4 * 1.3).abs() > 0.1);
    let zero =
        MarcusSystem::new(Arc::new(Affine::zero(1)), FlowMap::linear(vec![matrix(1, 1, &[0.0])]).unwrap()).unwrap();
    let r = integrate_marcus(&zero, &p, &vector(&[2.0]), &grid).unwrap();
    assert!(r.states.iter().all(|x| x[0] == 2.0));
}

#[test]
fn stratonovich_correction_gives_the_exponential() {
    let tr = LevyTriplet::gaussian(matrix(1, 1, &[0.6]));
    let p = sample_path(&tr, (0.0, 1.0), 1e-4, 9).unwrap();
    let grid = TimeGrid::new(&p, 0.0, 1.0, 1e-4).unwrap();
    let r = integrate_marcus(&ex1_linear(), &p, &vector(&[1.0]), &grid).unwrap();
    let exact = p.evaluate(1.0).unwrap()[0].exp();
    assert!((r.last()[0] - exact).abs() < 0.02 * exact);
}

fn ex1_linear() -> MarcusSystem {
    MarcusSystem::new(Arc::new(Affine::zero(1)), FlowMap::linear(vec![matrix(1, 1, &[1.0])]).unwrap()).unwrap()
}

#[test]
fn cohomology_is_phi_of_z() {
    let p = sample_path(&jump_drift(), (-12.0, 1.0), 0.01, 4).unwrap();
    let grid = TimeGrid::new(&p, 0.0, 1.0, 0.01).unwrap();
    let ou = ou_path(&p, 1.0, &grid, 10.0).unwrap();
    let coh = build_marcus_cohomology(&ex1().map, &ou).unwrap();
    let x = vector(&[0.8]);
    for k in (0..grid.len()).step_by(10) {
        let z = ou.value(k)[0];
        assert!((coh.h_at(k, &x).unwrap()[0] - 0.8 * z.exp()).abs() < 1e-13);
        assert!((coh.jacobian(k, Side::Right, &x).unwrap()[(0, 0)] - ou.at(k, Side::Right)[0].exp()).abs() < 1e-13);
    }
    let flat = sample_path(&LevyTriplet::zero(1), (-12.0, 1.0), 0.01, 0).unwrap();
    let ou0 = ou_path(&flat, 1.0, &grid, 10.0).unwrap();
    let id = build_marcus_cohomology(&ex1().map, &ou0).unwrap();
    assert_eq!(id.h_at(5, &x).unwrap(), x);
}

#[test]
fn marcus_cohomology_is_stationary() {
    let p = sample_path(&jump_drift(), (-25.0, 3.0), 0.01, 6).unwrap();
    let pts = [vector(&[-1.0]), vector(&[0.5])];
    let d = marcus_stationarity_defect(&ex1().map, &p, &pts, 1.0, 1.0, 1.0, 0.01, 20.0).unwrap();
    assert!(d < 1e-7, "{d}");
}

#[test]
fn transformed_drift_matches_the_examples() {
    let sys = ex1();
    let mu = 1.5;
    let y = vector(&[0.7]);
    assert!((transformed_drift_marcus(&sys.map, &sys, mu, &[0.0], &y).unwrap()[0] + 0.343).abs() < 1e-14);
    let z = 0.4;
    let e = f64::exp(z);
    let expect = (1.0 / e) * (-(0.7 * e).powi(3) + mu * 0.7 * e * z);
    assert!((transformed_drift_marcus(&sys.map, &sys, mu, &[z], &y).unwrap()[0] - expect).abs() < 1e-13);

    let (s, b) = (matrix(1, 1, &[0.8]), vector(&[0.5]));
    let affine = MarcusSystem::new(cubic(), FlowMap::affine(vec![s], vec![b]).unwrap()).unwrap();
    let h = affine.map.phi(&[z], &y).unwrap()[0];
    let expect = (-0.8 * z).exp() * (-h * h * h + mu * 0.8 * h * z + mu * 0.5 * z);
    assert!((transformed_drift_marcus(&affine.map, &affine, mu, &[z], &y).unwrap()[0] - expect).abs() < 1e-13);
}

#[test]
fn marcus_conjugacy_residual_converges() {
    let tr = LevyTriplet::gaussian(matrix(1, 1, &[0.4]))
        .with_drift(vector(&[0.1]))
        .with_jumps(1.0, JumpLaw::UniformBall { radius: 0.4 });
    let p = sample_path(&tr, (-21.0, 1.0), 1e-3, 8).unwrap();
    let sys = ex1();
    let mut res = Vec::new();
    for h in [4e-3, 2e-3, 1e-3] {
        let grid = TimeGrid::new(&p, 0.0, 1.0, h).unwrap();
        let r = verify_conjugacy_marcus(&sys, &p, &vector(&[0.8]), &grid, 1.0, 20.0).unwrap();
        assert!(r.residual[0] < 1e-14);
        res.push(r.max_residual());
    }
    let rate = (res[0] / res[2]).log2() / 2.0;
    assert!(rate >= 0.4, "{res:?}");
}

proptest! {
    #[test]
    fn phi_zero_is_identity(x in -5.0f64..5.0, y in -5.0f64..5.0) {
        let (s1, s2, b1, b2) = commuting_pair();
        let map = FlowMap::affine(vec![s1, s2], vec![b1, b2]).unwrap();
        let v = vector(&[x, y]);
        prop_assert_eq!(map.phi(&[0.0, 0.0], &v).unwrap(), v);
    }

    #[test]
    fn scalar_marcus_jump_composes(u in -1.0f64..1.0, w in -1.0f64..1.0) {
        let map = FlowMap::linear(vec![matrix(1, 1, &[1.0])]).unwrap();
        let x = vector(&[1.0]);
        let a = map.phi(&[u], &map.phi(&[w], &x).unwrap()).unwrap();
        prop_assert!((a[0] - (u + w).exp()).abs() < 1e-12);
    }
}
