//! Both sides of the interchange identity behind `dH_t = Γ_t dt + σ_i(H_t) dL^i_t`:
//!
//! `e^{−t}∫_s^t e^r σ_i(h_r^{x,t}) dL^i_r − ∫_s^t σ_i(h_r^{x,r}) dL^i_r
//!   = ∫_s^t ∫_s^u e^{r−u} [∂σ_i(h_r^{x,u}) D(r,u) − σ_i(h_r^{x,u})] dL^i_r du`.
//!
//! The inner integral on the right is `I(u) = D(u,u) − D(s,u)`, read off the recursion with
//! `τ = u` at every node. Between nodes `I` is carried forward with exact exponential weights, so
//! the only quadrature error is the freezing of `τ` inside a cell, which is `O(Δt)`.

use super::recursion::{Recursion, State};
use super::{window_grid, CohomologyOptions};
use crate::error::{Error, Result};
use crate::flows::SystemSpec;
use crate::levy_paths::{CellTable, Driver};
use crate::linalg::Vector;

#[derive(Clone, Debug, PartialEq)]
pub struct FubiniReport {
    pub lhs: Vector,
    pub rhs: Vector,
    pub residual: f64,
    pub cells: usize,
}

struct NodeStates {
    at_s: State,
    left: State,
    right: State,
}

fn noise_terms(sys: &SystemSpec, st: &State) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = sys.dim();
    let mut sig = Vec::with_capacity(sys.noise_count());
    let mut grad = Vec::with_capacity(sys.noise_count());
    let mut jac = vec![0.0; d * d];
    for field in &sys.noise {
        let mut v = vec![0.0; d];
        field.eval(&st.h, &mut v);
        field.jacobian(&st.h, &mut jac);
        let g: Vec<f64> = (0..d).map(|i| (0..d).map(|j| jac[i * d + j] * st.d[j]).sum::<f64>() - v[i]).collect();
        sig.push(v);
        grad.push(g);
    }
    (sig, grad)
}

fn add_scaled(acc: &mut Vector, v: &[f64], w: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += w * b;
    }
}

/// Evaluates both sides on the nodes of `[s, t]` of a window grid of base `step` starting at
/// `−T_h`. `s` and `t` must be grid times of that window.
pub fn check_fubini_formula<D: Driver + ?Sized>(
    sys: &SystemSpec,
    driver: &D,
    x: &Vector,
    s: f64,
    t: f64,
    step: f64,
    opts: &CohomologyOptions,
) -> Result<FubiniReport> {
    sys.check_driver_dim(driver.dim())?;
    if !(s < t) {
        return Err(Error::Parameter(format!("need s < t, got s = {s}, t = {t}")));
    }
    let window = window_grid(driver, t, step, opts.tail_horizon, &[s, t])?;
    let table = CellTable::new(driver, &window)?;
    let si = window.index_of(s).ok_or_else(|| Error::Parameter(format!("s = {s} is not a node")))?;
    let ti = window.len() - 1;
    let d = sys.dim();

    let states: Vec<NodeStates> = (si..=ti)
        .map(|k| {
            let tau = window.nodes()[k];
            let mut rec = Recursion::new(sys, &table, true);
            let mut at_s = None;
            let mut last = None;
            rec.run(x.as_slice(), tau, k, true, |i, l, r| {
                if i == si {
                    at_s = Some(r.clone());
                }
                if i == k {
                    last = Some((l.clone(), r.clone()));
                }
            });
            let (left, right) = last.expect("final node reported");
            NodeStates { at_s: at_s.expect("s precedes the final node"), left, right }
        })
        .collect();

    let last = &states[ti - si];
    let mut lhs = Vector::from_column_slice(&last.right.h) - Vector::from_column_slice(&last.at_s.h);
    let mut rhs = Vector::zeros(d);
    let mut cont = vec![0.0; table.dim()];
    for k in si..ti {
        let here = &states[k - si];
        let next = &states[k + 1 - si];
        let (sig, g) = noise_terms(sys, &here.right);
        let (sig_next, _) = noise_terms(sys, &next.left);
        table.continuous_into(k, &mut cont);
        for (i, c) in cont.iter().enumerate() {
            add_scaled(&mut lhs, &sig[i], -c);
        }
        let mut jumps: Vec<&[f64]> =
            table.jumps(k).iter().filter(|j| !j.at_start).map(|j| table.jump_size(j)).collect();
        if k + 1 < ti {
            jumps.extend(table.jumps(k + 1).iter().filter(|j| j.at_start).map(|j| table.jump_size(j)));
        }
        for u in jumps {
            for (i, ui) in u.iter().enumerate() {
                add_scaled(&mut lhs, &sig_next[i], -ui);
            }
        }

        let dt = table.dt(k);
        let decay = -(-dt).exp_m1();
        let inner = dt - decay;
        for r in 0..d {
            rhs[r] += decay * (here.right.d[r] - here.at_s.d[r]);
        }
        let (drift, gauss) = (table.drift(k), table.gaussian(k));
        for i in 0..sys.noise_count() {
            let w = (drift[i] + gauss[i]) * inner / dt;
            add_scaled(&mut rhs, &g[i], w);
        }
    }
    let residual = (&lhs - &rhs).amax();
    Ok(FubiniReport { lhs, rhs, residual, cells: ti - si })
}
