//! Jump-adapted integrators for Itô SDEs, random differential equations and Jacobian flows.

mod fields;

pub(crate) use fields::{noise_combination, noise_jacobian_combination};
pub use fields::{Affine, Field, FnField, SystemSpec, VectorField};

use crate::error::{Error, Result};
use crate::levy_paths::{CellTable, Driver, TableJump, TimeGrid, TwoSidedPath};
use crate::linalg::{Matrix, Vector};
use crate::table::{numbered, Table};

/// States beyond this norm count as blow-up.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// |det J| below this is flagged as numerically singular.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowMeta {
    pub integrator: &'static str,
    pub cells: usize,
    pub jumps: usize,
    /// Node times where the Jacobian determinant fell below [`SINGULAR_DET`].
    pub singular_at: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub grid: TimeGrid,
    pub states: Vec<Vector>,
    pub jacobians: Option<Vec<Matrix>>,
    pub meta: FlowMeta,
}

impl FlowResult {
    pub fn times(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn first(&self) -> &Vector {
        &self.states[0]
    }

    pub fn last(&self) -> &Vector {
        &self.states[self.states.len() - 1]
    }

    pub fn state_at(&self, t: f64) -> Option<&Vector> {
        self.grid.index_of(t).map(|i| &self.states[i])
    }

    /// Columns `t, x_1..x_d[, J_11..J_dd]`.
    pub fn to_table(&self) -> Table {
        let d = self.states[0].len();
        let mut header = vec!["t".to_string()];
        header.extend(numbered("x", d));
        if self.jacobians.is_some() {
            for i in 1..=d {
                for j in 1..=d {
                    header.push(format!("J_{i}{j}"));
                }
            }
        }
        let mut table = Table::new(header);
        for (k, &t) in self.grid.nodes().iter().enumerate() {
            let mut row = vec![t];
            row.extend(self.states[k].iter());
            if let Some(js) = &self.jacobians {
                let j = &js[k];
                for r in 0..d {
                    for c in 0..d {
                        row.push(j[(r, c)]);
                    }
                }
            }
            table.push(row);
        }
        table
    }
}

pub(crate) fn check_state(x: &[f64], t: f64, last_finite_t: f64) -> Result<()> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence { t, last_finite_t });
    }
    Ok(())
}

/// Scratch space for one Euler cell.
pub(crate) struct EulerWork {
    d: usize,
    a: Vec<f64>,
    s: Vec<f64>,
    tmp: Vec<f64>,
    cont: Vec<f64>,
    ja: Vec<f64>,
    js: Vec<f64>,
    jtmp: Vec<f64>,
}

impl EulerWork {
    pub(crate) fn new(d: usize, m: usize) -> Self {
        Self {
            d,
            a: vec![0.0; d],
            s: vec![0.0; d],
            tmp: vec![0.0; d],
            cont: vec![0.0; m],
            ja: vec![0.0; d * d],
            js: vec![0.0; d * d],
            jtmp: vec![0.0; d * d],
        }
    }
}

fn left_multiply(m: &[f64], j: &mut Matrix, d: usize) {
    let mm = Matrix::from_row_slice(d, d, m);
    let out = &mm * &*j;
    j.copy_from(&out);
}

fn ito_jump(sys: &SystemSpec, x: &mut [f64], u: &[f64], jac: Option<&mut Matrix>, w: &mut EulerWork) {
    let d = w.d;
    noise_combination(&sys.noise, x, u, &mut w.s, &mut w.tmp);
    if let Some(j) = jac {
        noise_jacobian_combination(&sys.noise, x, u, &mut w.js, &mut w.jtmp);
        for i in 0..d {
            w.js[i * d + i] += 1.0;
        }
        left_multiply(&w.js, j, d);
    }
    for (xi, si) in x.iter_mut().zip(&w.s) {
        *xi += si;
    }
}

/// One Euler cell: negative-time jumps owned by the cell act first, then the continuous
/// increment, then positive-time jumps.
pub(crate) fn ito_cell(
    sys: &SystemSpec,
    table: &CellTable,
    i: usize,
    x: &mut [f64],
    mut jac: Option<&mut Matrix>,
    w: &mut EulerWork,
) {
    let d = w.d;
    let jumps = table.jumps(i);
    for j in jumps.iter().filter(|j| j.at_start) {
        ito_jump(sys, x, table.jump_size(j), jac.as_deref_mut(), w);
    }
    let dt = table.dt(i);
    table.continuous_into(i, &mut w.cont);
    sys.drift.eval(x, &mut w.a);
    noise_combination(&sys.noise, x, &w.cont, &mut w.s, &mut w.tmp);
    if let Some(j) = jac.as_deref_mut() {
        sys.drift.jacobian(x, &mut w.ja);
        noise_jacobian_combination(&sys.noise, x, &w.cont, &mut w.js, &mut w.jtmp);
        for k in 0..d * d {
            w.js[k] += w.ja[k] * dt;
        }
        for k in 0..d {
            w.js[k * d + k] += 1.0;
        }
        left_multiply(&w.js, j, d);
    }
    for k in 0..d {
        x[k] += w.a[k] * dt + w.s[k];
    }
    for j in jumps.iter().filter(|j| !j.at_start) {
        ito_jump(sys, x, table.jump_size(j), jac.as_deref_mut(), w);
    }
}

fn run_forward(
    sys: &SystemSpec,
    table: &CellTable,
    grid: &TimeGrid,
    x0: &Vector,
    with_jacobian: bool,
    integrator: &'static str,
) -> Result<FlowResult> {
    sys.check_driver_dim(table.dim())?;
    let d = sys.dim();
    if x0.len() != d {
        return Err(Error::Parameter(format!("initial state has length {}, expected {d}", x0.len())));
    }
    let mut w = EulerWork::new(d, table.dim());
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(grid.len());
    states.push(x.clone());
    let mut jac = with_jacobian.then(|| Matrix::identity(d, d));
    let mut jacobians = with_jacobian.then(|| vec![Matrix::identity(d, d)]);
    let mut singular_at = Vec::new();
    for i in 0..table.len() {
        ito_cell(sys, table, i, x.as_mut_slice(), jac.as_mut(), &mut w);
        check_state(x.as_slice(), table.t1(i), table.t0(i))?;
        states.push(x.clone());
        if let (Some(j), Some(js)) = (&jac, &mut jacobians) {
            if j.determinant().abs() < SINGULAR_DET {
                singular_at.push(table.t1(i));
            }
            js.push(j.clone());
        }
    }
    Ok(FlowResult {
        grid: grid.clone(),
        states,
        jacobians,
        meta: FlowMeta { integrator, cells: table.len(), jumps: table.total_jumps(), singular_at },
    })
}

/// Jump-adapted Euler–Maruyama for `dX = a(X)dt + σ_i(X)dL^i`, started at the first grid node.
pub fn integrate_ito<D: Driver + ?Sized>(
    sys: &SystemSpec,
    driver: &D,
    x0: &Vector,
    grid: &TimeGrid,
) -> Result<FlowResult> {
    let table = CellTable::new(driver, grid)?;
    run_forward(sys, &table, grid, x0, false, "ito-euler")
}

/// Same scheme on a precomputed cell table.
pub fn integrate_ito_table(sys: &SystemSpec, table: &CellTable, x0: &Vector) -> Result<FlowResult> {
    let grid = TimeGrid::from_nodes(table.nodes().to_vec())?;
    run_forward(sys, table, &grid, x0, false, "ito-euler")
}

/// Euler scheme together with `J_t = ∂X_t/∂x_0`.
pub fn integrate_variational<D: Driver + ?Sized>(
    sys: &SystemSpec,
    driver: &D,
    x0: &Vector,
    grid: &TimeGrid,
) -> Result<FlowResult> {
    let table = CellTable::new(driver, grid)?;
    run_forward(sys, &table, grid, x0, true, "ito-euler-variational")
}

/// Runs the Euler scheme backwards from the last grid node: each cell map is inverted by
/// Newton's method, so forward and backward runs are exact inverses of each other.
pub fn integrate_ito_backward<D: Driver + ?Sized>(
    sys: &SystemSpec,
    driver: &D,
    x_end: &Vector,
    grid: &TimeGrid,
) -> Result<FlowResult> {
    let table = CellTable::new(driver, grid)?;
    sys.check_driver_dim(table.dim())?;
    let d = sys.dim();
    let mut w = EulerWork::new(d, table.dim());
    let n = table.len();
    let mut states = vec![Vector::zeros(d); n + 1];
    states[n] = x_end.clone();
    for i in (0..n).rev() {
        let target = states[i + 1].clone();
        let mut x = target.clone();
        let mut converged = false;
        for _ in 0..60 {
            let mut y = x.clone();
            let mut j = Matrix::identity(d, d);
            ito_cell(sys, &table, i, y.as_mut_slice(), Some(&mut j), &mut w);
            let r = &y - &target;
            if r.amax() <= 1e-14 * (1.0 + target.amax()) {
                converged = true;
                break;
            }
            let dx = j.lu().solve(&r).ok_or(Error::Singular { t: table.t0(i) })?;
            x -= dx;
            check_state(x.as_slice(), table.t0(i), table.t1(i))?;
        }
        if !converged {
            return Err(Error::Inversion(format!("backward cell [{}, {}] did not converge", table.t0(i), table.t1(i))));
        }
        states[i] = x;
    }
    Ok(FlowResult {
        grid: grid.clone(),
        states,
        jacobians: None,
        meta: FlowMeta { integrator: "ito-euler-backward", cells: n, jumps: table.total_jumps(), singular_at: vec![] },
    })
}

/// Which one-sided value an RDE right-hand side should use at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Limit from the left (end of the preceding cell).
    Left,
    /// Limit from the right (start of the following cell).
    Right,
}

/// Right-hand side `F(θ_tω, y)` of a random differential equation, evaluated at grid nodes.
pub trait RdeField: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, node: usize, t: f64, side: Side, y: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Closure-backed [`RdeField`] taking `(t, side, y, out)`.
pub struct RdeFn<F>(pub usize, pub F);

impl<F> RdeField for RdeFn<F>
where
    F: Fn(f64, Side, &[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.0
    }

    fn eval(&self, _node: usize, t: f64, side: Side, y: &[f64], out: &mut [f64]) -> Result<()> {
        (self.1)(t, side, y, out);
        Ok(())
    }
}

/// Heun's method between nodes; the start of a cell sees right limits, the end left limits, so
/// discontinuities of ω only enter through the time argument.
pub fn integrate_rde<F: RdeField + ?Sized>(field: &F, y0: &Vector, grid: &TimeGrid) -> Result<FlowResult> {
    let d = field.dim();
    if y0.len() != d {
        return Err(Error::Parameter(format!("initial state has length {}, expected {d}", y0.len())));
    }
    let nodes = grid.nodes();
    let mut y = y0.clone();
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut yp = vec![0.0; d];
    let mut states = Vec::with_capacity(nodes.len());
    states.push(y.clone());
    for i in 0..nodes.len() - 1 {
        let dt = nodes[i + 1] - nodes[i];
        field.eval(i, nodes[i], Side::Right, y.as_slice(), &mut k1)?;
        for k in 0..d {
            yp[k] = y[k] + dt * k1[k];
        }
        field.eval(i + 1, nodes[i + 1], Side::Left, &yp, &mut k2)?;
        for k in 0..d {
            y[k] += 0.5 * dt * (k1[k] + k2[k]);
        }
        check_state(y.as_slice(), nodes[i + 1], nodes[i])?;
        states.push(y.clone());
    }
    Ok(FlowResult {
        grid: grid.clone(),
        states,
        jacobians: None,
        meta: FlowMeta { integrator: "rde-heun", cells: nodes.len() - 1, jumps: 0, singular_at: vec![] },
    })
}

/// A cocycle realized by an integrator: `(driver, x0, grid) ↦ trajectory` started at the first node.
pub trait Cocycle: Sync {
    fn run(&self, driver: &dyn Driver, x0: &Vector, grid: &TimeGrid) -> Result<FlowResult>;
}

impl<F> Cocycle for F
where
    F: Fn(&dyn Driver, &Vector, &TimeGrid) -> Result<FlowResult> + Sync,
{
    fn run(&self, driver: &dyn Driver, x0: &Vector, grid: &TimeGrid) -> Result<FlowResult> {
        self(driver, x0, grid)
    }
}

/// `|φ_{t+s}(ω,x_0) − φ_t(θ_sω, φ_s(ω,x_0))|`, both legs on one grid of the given step.
pub fn cocycle_check<C: Cocycle + ?Sized>(
    cocycle: &C,
    path: &TwoSidedPath,
    x0: &Vector,
    s: f64,
    t: f64,
    step: f64,
) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return Err(Error::Parameter("cocycle check expects s, t ≥ 0".into()));
    }
    if s + t == 0.0 {
        return Ok(0.0);
    }
    let full = TimeGrid::new(path, 0.0, s + t, step)?;
    let direct = cocycle.run(path, x0, &full)?.last().clone();
    let first = if s > 0.0 { cocycle.run(path, x0, &full.restrict(0.0, s)?)?.last().clone() } else { x0.clone() };
    let composed = if t > 0.0 {
        let view = path.shift(s)?;
        let second = full.restrict(s, s + t)?.shifted(s);
        cocycle.run(&view, &first, &second)?.last().clone()
    } else {
        first
    };
    Ok((direct - composed).norm())
}

/// Ito cocycle of a system, usable wherever a [`Cocycle`] is expected.
pub struct ItoCocycle<'a>(pub &'a SystemSpec);

impl Cocycle for ItoCocycle<'_> {
    fn run(&self, driver: &dyn Driver, x0: &Vector, grid: &TimeGrid) -> Result<FlowResult> {
        integrate_ito(self.0, driver, x0, grid)
    }
}

/// Jump records of a table cell, exposed for schemes built on top of [`CellTable`].
pub fn cell_jumps(table: &CellTable, i: usize) -> impl Iterator<Item = (&TableJump, &[f64])> {
    table.jumps(i).iter().map(move |j| (j, table.jump_size(j)))
}
