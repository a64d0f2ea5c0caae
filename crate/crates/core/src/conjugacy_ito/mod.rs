//! Cohomology `H_t`, `Γ_t` turning an Itô SDE driven by a two-sided Lévy path into a random
//! differential equation, plus numerical checks of the identities it satisfies.

mod fubini;
mod lattice;
mod recursion;
mod ventzell;

pub use fubini::{check_fubini_formula, FubiniReport};
pub use lattice::{AnchorLattice, Stencil};
pub use ventzell::{
    ito_ventzell_residual, ventzell_ensemble, ExponentialBrownianField, IdentityField, ItoProcess, JumpShiftField,
    NoiseState, QuadraticField, RandomField, VentzellEnsemble, VentzellOptions, VentzellReport,
};

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flows::{integrate_ito, integrate_rde, FlowResult, RdeField, Side, SystemSpec};
use crate::levy_paths::{CellTable, Driver, TimeGrid};
use crate::linalg::{Matrix, Vector};
use crate::table::{numbered, Table};
use recursion::{Recursion, State};

/// Default tolerance of the fixed-point and Newton iterations.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-8;

/// `max(20, −log tol)`.
pub fn default_tail_horizon(newton_tol: f64) -> f64 {
    20f64.max(-newton_tol.ln())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CohomologyOptions {
    pub tail_horizon: f64,
    pub newton_tol: f64,
    pub max_sweeps: usize,
    /// Step of the `[−T_h, t]` window; the field grid's step when unset.
    pub quadrature_step: Option<f64>,
}

impl Default for CohomologyOptions {
    fn default() -> Self {
        Self {
            tail_horizon: default_tail_horizon(DEFAULT_NEWTON_TOL),
            newton_tol: DEFAULT_NEWTON_TOL,
            max_sweeps: 50,
            quadrature_step: None,
        }
    }
}

impl CohomologyOptions {
    pub fn with_tail(tail_horizon: f64) -> Self {
        Self { tail_horizon, ..Self::default() }
    }

    pub fn with_quadrature_step(mut self, step: f64) -> Self {
        self.quadrature_step = Some(step);
        self
    }
}

/// `h_s^{x,τ}` at the nodes of its window, with one-sided limits.
#[derive(Clone, Debug)]
pub struct HTrajectory {
    pub x: Vector,
    pub tau: f64,
    pub nodes: Vec<f64>,
    pub left: Vec<Vector>,
    pub right: Vec<Vector>,
    pub sweeps: usize,
    pub residual: f64,
}

/// Value at a node under the path's side convention: right limit for `t > 0`, left otherwise.
pub fn convention_side(t: f64) -> Side {
    if t > 0.0 {
        Side::Right
    } else {
        Side::Left
    }
}

impl HTrajectory {
    pub fn value(&self, k: usize) -> &Vector {
        match convention_side(self.nodes[k]) {
            Side::Right => &self.right[k],
            Side::Left => &self.left[k],
        }
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        self.nodes.iter().position(|s| (s - t).abs() <= tol)
    }
}

fn window_grid<D: Driver + ?Sized>(driver: &D, t_end: f64, step: f64, tail: f64, extra: &[f64]) -> Result<TimeGrid> {
    let (lo, _) = driver.horizon();
    if -tail < lo - 1e-7 * driver.base_step() {
        return Err(Error::Range { t: -tail, lo, hi: driver.horizon().1 });
    }
    Ok(TimeGrid::new(driver, -tail, t_end, step)?.merged(extra))
}

/// Window grid `[−T_h, t_end]` used by [`solve_h`] and [`build_cohomology`].
pub fn cohomology_window<D: Driver + ?Sized>(driver: &D, t_end: f64, step: f64, tail: f64) -> Result<TimeGrid> {
    window_grid(driver, t_end, step, tail, &[])
}

/// Solves the truncated integral equation for `h^{x,τ}` on `window` (which must start at
/// `−T_h`). Sweeps are Gauss–Seidel ordered, so the first sweep is already the fixed point of
/// the discretized equation and the second confirms it.
pub fn solve_h<D: Driver + ?Sized>(
    sys: &SystemSpec,
    driver: &D,
    x: &Vector,
    tau: f64,
    window: &TimeGrid,
    opts: &CohomologyOptions,
) -> Result<HTrajectory> {
    sys.check_driver_dim(driver.dim())?;
    let table = CellTable::new(driver, window)?;
    let n = table.len();
    let d = sys.dim();
    let mut prev: Option<Vec<Vector>> = None;
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    let mut left = vec![Vector::zeros(d); n + 1];
    let mut right = vec![Vector::zeros(d); n + 1];
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut rec = Recursion::new(sys, &table, false);
        rec.run(x.as_slice(), tau, n, true, |k, l, r| {
            left[k] = Vector::from_column_slice(&l.h);
            right[k] = Vector::from_column_slice(&r.h);
        });
        if let Some(p) = &prev {
            residual = p.iter().zip(&right).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        }
        for (k, v) in left.iter().chain(&right).enumerate() {
            crate::flows::check_state(v.as_slice(), table.nodes()[k % (n + 1)], table.nodes()[0])?;
        }
        if residual < opts.newton_tol {
            break;
        }
        prev = Some(right.clone());
    }
    if residual >= opts.newton_tol {
        return Err(Error::Iteration { sweeps, residual });
    }
    Ok(HTrajectory { x: x.clone(), tau, nodes: table.nodes().to_vec(), left, right, sweeps, residual })
}

/// `D(·,τ) = ∂h^{x,τ}/∂τ` along a solved trajectory, by forward substitution of its linear
/// equation. Returns `(left, right)` limits at the window nodes.
pub fn solve_d<D: Driver + ?Sized>(
    sys: &SystemSpec,
    driver: &D,
    h: &HTrajectory,
) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let window = TimeGrid::from_nodes(h.nodes.clone())?;
    let table = CellTable::new(driver, &window)?;
    for i in 0..table.len() {
        let js = table.jumps(i);
        if js.iter().filter(|j| j.at_start).count() > 1 || js.iter().filter(|j| !j.at_start).count() > 1 {
            return Err(Error::Parameter("solve_d needs a jump-adapted window".into()));
        }
    }
    let l: Vec<Vec<f64>> = h.left.iter().map(|v| v.as_slice().to_vec()).collect();
    let r: Vec<Vec<f64>> = h.right.iter().map(|v| v.as_slice().to_vec()).collect();
    let mut rec = Recursion::new(sys, &table, true);
    let (ls, rs) = rec.replay(h.x.as_slice(), h.tau, &l, &r);
    let conv = |v: Vec<State>| v.into_iter().map(|s| Vector::from_vec(s.d)).collect();
    Ok((conv(ls), conv(rs)))
}

/// `H_t(ω,x)`, `Γ_t(ω,x)` and `∂H_t/∂x` sampled on grid nodes × anchor lattice, both one-sided
/// limits at every node.
#[derive(Debug)]
pub struct CohomologyField {
    dim: usize,
    grid: TimeGrid,
    lattice: AnchorLattice,
    tail_horizon: f64,
    newton_tol: f64,
    // [node][side][anchor][·]
    h: Vec<f64>,
    gamma: Vec<f64>,
    jac: Vec<f64>,
    singular: Vec<(f64, usize)>,
    extrapolations: AtomicUsize,
}

/// Interpolated `(H, Γ, ∂H/∂x)` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub h: Vector,
    pub gamma: Vector,
    pub dh_dx: Matrix,
    pub extrapolated: bool,
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

impl CohomologyField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn lattice(&self) -> &AnchorLattice {
        &self.lattice
    }

    pub fn tail_horizon(&self) -> f64 {
        self.tail_horizon
    }

    pub fn newton_tol(&self) -> f64 {
        self.newton_tol
    }

    /// `(t, anchor)` pairs where `|det ∂H/∂x|` fell below the singularity threshold.
    pub fn singular_samples(&self) -> &[(f64, usize)] {
        &self.singular
    }

    /// Number of evaluations so far that extrapolated beyond the anchor hull.
    pub fn extrapolations(&self) -> usize {
        self.extrapolations.load(Ordering::Relaxed)
    }

    pub fn node_index(&self, t: f64) -> Option<usize> {
        self.grid.index_of(t)
    }

    fn offset(&self, node: usize, side: Side, anchor: usize, width: usize) -> usize {
        ((node * 2 + side_index(side)) * self.lattice.len() + anchor) * width
    }

    /// Raw anchor value of `H`.
    pub fn anchor_h(&self, node: usize, side: Side, anchor: usize) -> Vector {
        let o = self.offset(node, side, anchor, self.dim);
        Vector::from_column_slice(&self.h[o..o + self.dim])
    }

    pub fn anchor_gamma(&self, node: usize, side: Side, anchor: usize) -> Vector {
        let o = self.offset(node, side, anchor, self.dim);
        Vector::from_column_slice(&self.gamma[o..o + self.dim])
    }

    pub fn anchor_jacobian(&self, node: usize, side: Side, anchor: usize) -> Matrix {
        let d = self.dim;
        let o = self.offset(node, side, anchor, d * d);
        Matrix::from_row_slice(d, d, &self.jac[o..o + d * d])
    }

    /// Multilinear interpolation of all three quantities at `y`.
    pub fn sample(&self, node: usize, side: Side, y: &[f64]) -> FieldSample {
        let d = self.dim;
        let st = self.lattice.stencil(y);
        if st.extrapolated {
            self.extrapolations.fetch_add(1, Ordering::Relaxed);
        }
        let mut h = Vector::zeros(d);
        let mut g = Vector::zeros(d);
        let mut j = vec![0.0; d * d];
        for &(a, w) in &st.corners {
            if w == 0.0 {
                continue;
            }
            let o = self.offset(node, side, a, d);
            for k in 0..d {
                h[k] += w * self.h[o + k];
                g[k] += w * self.gamma[o + k];
            }
            let oj = self.offset(node, side, a, d * d);
            for k in 0..d * d {
                j[k] += w * self.jac[oj + k];
            }
        }
        FieldSample { h, gamma: g, dh_dx: Matrix::from_row_slice(d, d, &j), extrapolated: st.extrapolated }
    }

    /// `H_t(x)` under the side convention of node `t`.
    pub fn h_at(&self, node: usize, y: &[f64]) -> Vector {
        self.sample(node, convention_side(self.nodes()[node]), y).h
    }

    /// Solves `H(node, side, x) = y` by Newton's method with the stored Jacobian, starting from
    /// `y`; in one dimension a bisection on an expanding bracket takes over if Newton stalls.
    pub fn invert(&self, node: usize, side: Side, y: &Vector) -> Result<Vector> {
        let tol = self.newton_tol;
        let mut x = y.clone();
        for _ in 0..100 {
            let s = self.sample(node, side, x.as_slice());
            let r = &s.h - y;
            if r.amax() < tol {
                return Ok(x);
            }
            match s.dh_dx.lu().solve(&r) {
                Some(dx) if dx.iter().all(|v| v.is_finite()) => x -= dx,
                _ => break,
            }
        }
        if self.dim == 1 {
            let f = |v: f64| self.sample(node, side, &[v]).h[0] - y[0];
            let mut lo = y[0] - 1.0;
            let mut hi = y[0] + 1.0;
            let mut tries = 0;
            while f(lo) * f(hi) > 0.0 && tries < 60 {
                let w = hi - lo;
                lo -= w;
                hi += w;
                tries += 1;
            }
            if f(lo) * f(hi) <= 0.0 {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if f(m).abs() < tol {
                        return Ok(Vector::from_element(1, m));
                    }
                    if f(a) * f(m) <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
            }
        }
        Err(Error::Inversion(format!("H at node {node} could not be inverted at {y:?}")))
    }

    /// Columns `t, x_anchor_id, H_1..H_d, Gamma_1..Gamma_d` (side-convention values).
    pub fn to_table(&self) -> Table {
        let d = self.dim;
        let mut header = vec!["t".to_string(), "x_anchor_id".to_string()];
        header.extend(numbered("H", d));
        header.extend(numbered("Gamma", d));
        let mut table = Table::new(header);
        for (k, &t) in self.nodes().iter().enumerate() {
            let side = convention_side(t);
            for a in 0..self.lattice.len() {
                let mut row = vec![t, a as f64];
                row.extend(self.anchor_h(k, side, a).iter());
                row.extend(self.anchor_gamma(k, side, a).iter());
                table.push(row);
            }
        }
        table
    }
}

/// Builds the field on the nodes of `field_grid` for every anchor: one recursion with `τ = t`
/// per (node, anchor), over the window `[−T_h, t]`.
pub fn build_cohomology<D: Driver + ?Sized>(
    sys: &SystemSpec,
    driver: &D,
    lattice: &AnchorLattice,
    field_grid: &TimeGrid,
    opts: &CohomologyOptions,
) -> Result<CohomologyField> {
    sys.check_driver_dim(driver.dim())?;
    let d = sys.dim();
    if lattice.dim() != d {
        return Err(Error::Parameter(format!("anchor lattice has dimension {}, expected {d}", lattice.dim())));
    }
    let step = opts.quadrature_step.unwrap_or(field_grid.step());
    let window = window_grid(driver, field_grid.end(), step, opts.tail_horizon, field_grid.nodes())?;
    let table = CellTable::new(driver, &window)?;
    let positions: Vec<usize> = field_grid
        .nodes()
        .iter()
        .map(|&t| window.index_of(t).ok_or_else(|| Error::Parameter(format!("node {t} missing from window"))))
        .collect::<Result<_>>()?;
    let na = lattice.len();
    let anchors = lattice.points();
    let jobs: Vec<(usize, usize)> = (0..positions.len()).flat_map(|k| (0..na).map(move |a| (k, a))).collect();
    let samples: Vec<(State, State)> = jobs
        .par_iter()
        .map(|&(k, a)| {
            let mut rec = Recursion::new(sys, &table, true);
            let tau = field_grid.nodes()[k];
            let mut out = None;
            rec.run(anchors[a].as_slice(), tau, positions[k], false, |_, l, r| out = Some((l.clone(), r.clone())));
            out.expect("recursion reports its final node")
        })
        .collect();
    let nn = positions.len();
    let mut h = vec![0.0; nn * 2 * na * d];
    let mut gamma = vec![0.0; nn * 2 * na * d];
    let mut jac = vec![0.0; nn * 2 * na * d * d];
    let mut singular = Vec::new();
    for (&(k, a), (l, r)) in jobs.iter().zip(&samples) {
        for (side, st) in [(0, l), (1, r)] {
            crate::flows::check_state(&st.h, field_grid.nodes()[k], field_grid.nodes()[k])?;
            let o = ((k * 2 + side) * na + a) * d;
            h[o..o + d].copy_from_slice(&st.h);
            gamma[o..o + d].copy_from_slice(&st.d);
            let oj = ((k * 2 + side) * na + a) * d * d;
            jac[oj..oj + d * d].copy_from_slice(&st.p);
            if side == 1 && Matrix::from_row_slice(d, d, &st.p).determinant().abs() < crate::flows::SINGULAR_DET {
                singular.push((field_grid.nodes()[k], a));
            }
        }
    }
    Ok(CohomologyField {
        dim: d,
        grid: field_grid.clone(),
        lattice: lattice.clone(),
        tail_horizon: opts.tail_horizon,
        newton_tol: opts.newton_tol,
        h,
        gamma,
        jac,
        singular,
        extrapolations: AtomicUsize::new(0),
    })
}

/// `x` with `H_0(ω,x) = y`.
pub fn invert_h0(field: &CohomologyField, y: &Vector) -> Result<Vector> {
    let k = field.node_index(0.0).ok_or_else(|| Error::Parameter("field has no node at t = 0".into()))?;
    field.invert(k, Side::Left, y)
}

/// `(∂H_t/∂x)^{-1}[a(H_t(y)) − Γ_t(y)]` at node `node`, from the `side` limits.
pub fn transformed_drift(
    field: &CohomologyField,
    sys: &SystemSpec,
    node: usize,
    side: Side,
    y: &[f64],
) -> Result<Vector> {
    let s = field.sample(node, side, y);
    let a = sys.drift.value(&s.h);
    s.dh_dx.lu().solve(&(a - &s.gamma)).ok_or(Error::Singular { t: field.nodes()[node] })
}

/// Right-hand side of the transformed random differential equation, indexed by field nodes.
pub struct ItoRde<'a> {
    pub field: &'a CohomologyField,
    pub sys: &'a SystemSpec,
}

impl RdeField for ItoRde<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval(&self, node: usize, _t: f64, side: Side, y: &[f64], out: &mut [f64]) -> Result<()> {
        let v = transformed_drift(self.field, self.sys, node, side, y)?;
        out.copy_from_slice(v.as_slice());
        Ok(())
    }
}

/// Residual series `r(t) = |φ_t(ω,x_0) − H_t(ω, ψ_t(ω, H_0^{-1}x_0))|`.
#[derive(Clone, Debug)]
pub struct ConjugacyReport {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    pub y0: Vector,
    pub sde: FlowResult,
    pub rde: FlowResult,
    pub extrapolations: usize,
}

impl ConjugacyReport {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "residual"]);
        for (a, b) in self.times.iter().zip(&self.residual) {
            t.push(vec![*a, *b]);
        }
        t
    }
}

/// Runs the SDE and the transformed RDE on the field's grid (which must start at 0) and
/// compares them through `H_t`.
pub fn verify_conjugacy_ito<D: Driver + ?Sized>(
    sys: &SystemSpec,
    driver: &D,
    x0: &Vector,
    field: &CohomologyField,
) -> Result<ConjugacyReport> {
    if field.nodes()[0] != 0.0 {
        return Err(Error::Parameter("the conjugacy check starts at t = 0".into()));
    }
    let y0 = invert_h0(field, x0)?;
    let rde = integrate_rde(&ItoRde { field, sys }, &y0, field.grid())?;
    let sde = integrate_ito(sys, driver, x0, field.grid())?;
    let mut residual = Vec::with_capacity(field.nodes().len());
    for (k, _) in field.nodes().iter().enumerate() {
        let mapped = field.h_at(k, rde.states[k].as_slice());
        residual.push((&sde.states[k] - mapped).norm());
    }
    Ok(ConjugacyReport {
        times: field.nodes().to_vec(),
        residual,
        y0,
        sde,
        rde,
        extrapolations: field.extrapolations(),
    })
}

/// `max |H_{s+t}(ω,x) − H_t(θ_sω,x)|` over the nodes of `[0, span]` (view coordinates) and the
/// anchors, each side built with its own truncated window.
pub fn stationarity_defect(
    sys: &SystemSpec,
    path: &crate::levy_paths::TwoSidedPath,
    lattice: &AnchorLattice,
    s: f64,
    span: f64,
    step: f64,
    opts: &CohomologyOptions,
) -> Result<f64> {
    let base_grid = TimeGrid::new(path, s, s + span, step)?;
    let view = path.shift(s)?;
    let view_grid = base_grid.shifted(s);
    let direct = build_cohomology(sys, path, lattice, &base_grid, opts)?;
    let shifted = build_cohomology(sys, &view, lattice, &view_grid, opts)?;
    let mut worst: f64 = 0.0;
    for k in 0..base_grid.len() {
        let side = convention_side(base_grid.nodes()[k]);
        for a in 0..lattice.len() {
            let d = direct.anchor_h(k, side, a) - shifted.anchor_h(k, side, a);
            worst = worst.max(d.amax());
        }
    }
    Ok(worst)
}

/// Largest telescoped defect of `dH_t = Γ_t dt + σ_i(H_t) dL^i_t` over the field nodes, per
/// anchor: `|H_{t_k} − H_{t_0} − Σ_{j<k}(Γ_{t_j}Δt_j + σ_i(H_{t_j})ΔL^i_j)|`, jump terms taken
/// at the pre-jump value.
pub fn sde_identity_defect<D: Driver + ?Sized>(sys: &SystemSpec, driver: &D, field: &CohomologyField) -> Result<f64> {
    let table = CellTable::new(driver, field.grid())?;
    let d = field.dim();
    let m = table.dim();
    let mut worst: f64 = 0.0;
    let mut cont = vec![0.0; m];
    for a in 0..field.lattice().len() {
        let start_side = convention_side(field.nodes()[0]);
        let h0 = field.anchor_h(0, start_side, a);
        let mut acc = h0.clone();
        for i in 0..table.len() {
            for j in table.jumps(i).iter().filter(|j| j.at_start) {
                let pre = field.anchor_h(i, Side::Left, a);
                acc += noise_sum(sys, &pre, table.jump_size(j));
            }
            let start = field.anchor_h(i, Side::Right, a);
            let g = field.anchor_gamma(i, Side::Right, a);
            table.continuous_into(i, &mut cont);
            acc += g * table.dt(i) + noise_sum(sys, &start, &cont);
            for j in table.jumps(i).iter().filter(|j| !j.at_start) {
                let pre = field.anchor_h(i + 1, Side::Left, a);
                acc += noise_sum(sys, &pre, table.jump_size(j));
            }
            let side = convention_side(field.nodes()[i + 1]);
            let target = field.anchor_h(i + 1, side, a);
            worst = worst.max((&target - &acc).amax());
        }
        let _ = d;
    }
    Ok(worst)
}

fn noise_sum(sys: &SystemSpec, x: &Vector, u: &[f64]) -> Vector {
    let mut out = Vector::zeros(sys.dim());
    for (s, &ui) in sys.noise.iter().zip(u) {
        if ui != 0.0 {
            out += s.value(x) * ui;
        }
    }
    out
}
