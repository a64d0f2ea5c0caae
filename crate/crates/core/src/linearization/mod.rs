//! Linearization at a fixed point: the linear SDE `dx = B_0x dt + B_ix dL^i`, its Lyapunov
//! spectrum, the coefficient `f(ω)` of the linearized random equation, and the conjugacy of the
//! two linear cocycles through `∂H_t/∂x(·,0)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::conjugacy_ito::{convention_side, CohomologyField};
use crate::error::{Error, Result};
use crate::flows::{
    check_state, integrate_ito, integrate_rde, Affine, Field, FlowMeta, FlowResult, FnField, RdeField, Side, SystemSpec,
};
use crate::levy_paths::{sample_path, CellTable, Driver, LevyTriplet, TimeGrid};
use crate::linalg::{Matrix, Vector};
use crate::rng::derive_indexed;
use crate::table::Table;

/// Largest `|a(0)|`, `|σ_i(0)|` accepted as a fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-10;

/// Orthonormalization period, in cells, of the spectrum estimator.
pub const QR_PERIOD: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub b0: Matrix,
    pub bs: Vec<Matrix>,
}

impl LinearSystem {
    pub fn new(b0: Matrix, bs: Vec<Matrix>) -> Result<Self> {
        let d = b0.nrows();
        if !b0.is_square() || bs.iter().any(|b| b.shape() != (d, d)) {
            return Err(Error::Parameter("linear system matrices must all be d × d".into()));
        }
        Ok(Self { b0, bs })
    }

    pub fn dim(&self) -> usize {
        self.b0.nrows()
    }

    pub fn noise_count(&self) -> usize {
        self.bs.len()
    }

    pub fn to_system(&self) -> SystemSpec {
        SystemSpec::linear(self.b0.clone(), self.bs.clone()).expect("shapes checked on construction")
    }

    /// `B_0 dt + Σ_i B_i c_i`.
    fn cell_matrix(&self, dt: f64, c: &[f64]) -> Matrix {
        let mut m = &self.b0 * dt;
        for (b, &ci) in self.bs.iter().zip(c) {
            if ci != 0.0 {
                m += b * ci;
            }
        }
        m
    }
}

/// `B_0 = ∂a(0)`, `B_i = ∂σ_i(0)`, after checking that 0 is a fixed point of every coefficient.
pub fn linearize(sys: &SystemSpec) -> Result<LinearSystem> {
    let zero = Vector::zeros(sys.dim());
    for (name, f) in std::iter::once(("a", &sys.drift)).chain(sys.noise.iter().map(|s| ("σ", s))) {
        let v = f.value(&zero).amax();
        if v > FIXED_POINT_TOL {
            return Err(Error::Hypothesis(format!("{name}(0) has size {v:e}, 0 is not a fixed point")));
        }
    }
    LinearSystem::new(sys.drift.jacobian_matrix(&zero), sys.noise.iter().map(|s| s.jacobian_matrix(&zero)).collect())
}

fn scalar_entries(linsys: &LinearSystem) -> (f64, Vec<f64>) {
    (linsys.b0[(0, 0)], linsys.bs.iter().map(|b| b[(0, 0)]).collect())
}

/// Log-growth of a scalar cell: `B_0Δ + B·c − ½ BQBᵀΔ`.
fn scalar_log_growth(b0: f64, b: &[f64], q: &Matrix, dt: f64, cont: &[f64]) -> f64 {
    let mut g = b0 * dt;
    for (i, &bi) in b.iter().enumerate() {
        g += bi * cont[i];
        for (j, &bj) in b.iter().enumerate() {
            g -= 0.5 * bi * bj * q[(i, j)] * dt;
        }
    }
    g
}

/// In one dimension every cell is the exact Doléans-Dade factor
/// `exp(B_0Δ + B·ΔL^c − ½BQBᵀΔ)`, jumps multiply by `1 + B·u`. Otherwise jump-adapted Euler.
pub fn integrate_linear<D: Driver + ?Sized>(
    linsys: &LinearSystem,
    driver: &D,
    x0: &Vector,
    grid: &TimeGrid,
) -> Result<FlowResult> {
    if linsys.dim() != 1 {
        return integrate_ito(&linsys.to_system(), driver, x0, grid);
    }
    if driver.dim() != linsys.noise_count() {
        return Err(Error::Parameter(format!(
            "driver has dimension {}, system expects {}",
            driver.dim(),
            linsys.noise_count()
        )));
    }
    if x0.len() != 1 {
        return Err(Error::Parameter("initial state must be scalar".into()));
    }
    let (b0, b) = scalar_entries(linsys);
    let q = driver.triplet().covariance();
    let table = CellTable::new(driver, grid)?;
    let jump_factor = |u: &[f64]| 1.0 + b.iter().zip(u).map(|(bi, ui)| bi * ui).sum::<f64>();
    let mut cont = vec![0.0; table.dim()];
    let mut x = x0[0];
    let mut states = Vec::with_capacity(grid.len());
    states.push(x0.clone());
    for i in 0..table.len() {
        for j in table.jumps(i).iter().filter(|j| j.at_start) {
            x *= jump_factor(table.jump_size(j));
        }
        table.continuous_into(i, &mut cont);
        x *= scalar_log_growth(b0, &b, &q, table.dt(i), &cont).exp();
        for j in table.jumps(i).iter().filter(|j| !j.at_start) {
            x *= jump_factor(table.jump_size(j));
        }
        check_state(&[x], table.t1(i), table.t0(i))?;
        states.push(Vector::from_element(1, x));
    }
    Ok(FlowResult {
        grid: grid.clone(),
        states,
        jacobians: None,
        meta: FlowMeta {
            integrator: "doleans-dade",
            cells: table.len(),
            jumps: table.total_jumps(),
            singular_at: vec![],
        },
    })
}

/// Closed-form stochastic exponential of `dx = βx dt + Bx dL` for scalar `L`, read off the path:
/// `x_t = x_0 exp(βt + B(L_t − Σ_{s≤t}ΔL_s) − ½B²a²t) Π_{s≤t}(1 + BΔL_s)`, `t ≥ 0`.
pub fn stochastic_exponential<D: Driver + ?Sized>(driver: &D, beta: f64, b: f64, x0: f64, t: f64) -> Result<f64> {
    if driver.dim() != 1 || t < 0.0 {
        return Err(Error::Parameter("closed-form stochastic exponential needs a scalar driver and t ≥ 0".into()));
    }
    let l = driver.evaluate(t)?[0];
    let a2 = driver.triplet().covariance()[(0, 0)];
    let s = driver.offset();
    let mut jumps = 0.0;
    let mut product = 1.0;
    let path = driver.path();
    let all = path.jumps_neg().iter().chain(path.jumps_pos());
    for j in all.filter(|j| j.time > s && j.time <= s + t) {
        jumps += j.size[0];
        product *= 1.0 + b * j.size[0];
    }
    Ok(x0 * (beta * t + b * (l - jumps) - 0.5 * b * b * a2 * t).exp() * product)
}

#[derive(Clone, Debug)]
pub struct LyapunovSpectrum {
    /// Sorted descending.
    pub exponents: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub horizon: f64,
    pub n_samples: usize,
}

impl LyapunovSpectrum {
    /// Every exponent is more than three standard errors away from 0.
    pub fn hyperbolic(&self) -> bool {
        self.exponents.iter().zip(&self.standard_errors).all(|(e, s)| e.abs() > 3.0 * s)
    }

    /// Columns `exponent_rank, value, stderr`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["exponent_rank", "value", "stderr"]);
        for (k, (e, s)) in self.exponents.iter().zip(&self.standard_errors).enumerate() {
            t.push(vec![(k + 1) as f64, *e, *s]);
        }
        t
    }
}

/// Growth exponents of one path over `[0, T]`, sorted descending.
fn path_exponents(linsys: &LinearSystem, driver: &dyn Driver, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    let grid = TimeGrid::new(driver, 0.0, t_end, dt)?;
    let table = CellTable::new(driver, &grid)?;
    let d = linsys.dim();
    let mut cont = vec![0.0; table.dim()];
    if d == 1 {
        let (b0, b) = scalar_entries(linsys);
        let q = driver.triplet().covariance();
        let mut log = 0.0;
        for i in 0..table.len() {
            table.continuous_into(i, &mut cont);
            log += scalar_log_growth(b0, &b, &q, table.dt(i), &cont);
            for j in table.jumps(i) {
                let f = 1.0 + b.iter().zip(table.jump_size(j)).map(|(bi, ui)| bi * ui).sum::<f64>();
                log += f.abs().ln();
            }
        }
        return Ok(vec![log / t_end]);
    }
    let mut q = Matrix::identity(d, d);
    let mut sums = vec![0.0; d];
    let orthonormalize = |q: &mut Matrix, sums: &mut [f64]| {
        let qr = q.clone().qr();
        let r = qr.r();
        let mut qq = qr.q();
        for k in 0..d {
            let rk = r[(k, k)];
            sums[k] += rk.abs().ln();
            if rk < 0.0 {
                qq.column_mut(k).neg_mut();
            }
        }
        *q = qq;
    };
    for i in 0..table.len() {
        for j in table.jumps(i).iter().filter(|j| j.at_start) {
            q = (Matrix::identity(d, d) + linsys.cell_matrix(0.0, table.jump_size(j))) * q;
        }
        table.continuous_into(i, &mut cont);
        q = (Matrix::identity(d, d) + linsys.cell_matrix(table.dt(i), &cont)) * q;
        for j in table.jumps(i).iter().filter(|j| !j.at_start) {
            q = (Matrix::identity(d, d) + linsys.cell_matrix(0.0, table.jump_size(j))) * q;
        }
        if (i + 1) % QR_PERIOD == 0 || i + 1 == table.len() {
            orthonormalize(&mut q, &mut sums);
        }
    }
    let mut e: Vec<f64> = sums.into_iter().map(|s| s / t_end).collect();
    e.sort_by(|a, b| b.total_cmp(a));
    Ok(e)
}

/// Monte-Carlo spectrum over `n_samples` independent paths on `[0, T]`. In one dimension the
/// exponent is `log|x_T/x_0|/T` accumulated from exact cell factors; otherwise Euler cells with
/// QR re-orthonormalization every [`QR_PERIOD`] cells.
pub fn lyapunov_exponents(
    linsys: &LinearSystem,
    triplet: &LevyTriplet,
    t_end: f64,
    dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<LyapunovSpectrum> {
    if triplet.dim() != linsys.noise_count() {
        return Err(Error::Parameter(format!(
            "triplet has dimension {}, system expects {}",
            triplet.dim(),
            linsys.noise_count()
        )));
    }
    if !(t_end > 0.0) || !(dt > 0.0) || n_samples < 2 {
        return Err(Error::Parameter("spectrum needs T > 0, dt > 0 and at least two samples".into()));
    }
    let per_path: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|p| {
            let path = sample_path(triplet, (-dt, t_end), dt, derive_indexed(seed, "lyapunov.path", p as i64))?;
            path_exponents(linsys, &path, t_end, dt)
        })
        .collect::<Result<_>>()?;
    let d = linsys.dim();
    let n = n_samples as f64;
    let mut exponents = Vec::with_capacity(d);
    let mut standard_errors = Vec::with_capacity(d);
    for k in 0..d {
        let mean = per_path.iter().map(|e| e[k]).sum::<f64>() / n;
        let var = per_path.iter().map(|e| (e[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        exponents.push(mean);
        standard_errors.push((var / n).sqrt());
    }
    Ok(LyapunovSpectrum { exponents, standard_errors, horizon: t_end, n_samples })
}

/// `β + b + rate·E[log|1 + u|] − a²/2`, the exponent of `dx = βx dt + x dL` for scalar `L`.
pub fn scalar_exponent_oracle(beta: f64, triplet: &LevyTriplet) -> Result<f64> {
    if triplet.dim() != 1 {
        return Err(Error::Parameter("the scalar oracle needs a one-dimensional triplet".into()));
    }
    let mut e = beta + triplet.effective_drift()[0] - 0.5 * triplet.covariance()[(0, 0)];
    if triplet.has_jumps() {
        e += triplet.jump_rate * triplet.jump_law.expectation(|u| (1.0 + u).abs().ln())?;
    }
    Ok(e)
}

/// Central-difference step around 0 on each lattice axis; 0 must be an interior anchor.
fn zero_steps(field: &CohomologyField) -> Result<Vec<f64>> {
    field
        .lattice()
        .axes()
        .iter()
        .map(|a| {
            let k = a.iter().position(|&v| v == 0.0);
            match k {
                Some(k) if k > 0 && k + 1 < a.len() => Ok((a[k + 1] - a[k]).min(a[k] - a[k - 1])),
                _ => Err(Error::Parameter("anchor lattice needs 0 as an interior point of every axis".into())),
            }
        })
        .collect()
}

/// `(∂H_t/∂x(·,0), ∂Γ_t/∂x(·,0))` at a node, the second from central differences on the lattice.
pub fn derivatives_at_zero(field: &CohomologyField, node: usize, side: Side) -> Result<(Matrix, Matrix)> {
    let d = field.dim();
    let steps = zero_steps(field)?;
    let m = field.sample(node, side, &vec![0.0; d]).dh_dx;
    let mut dg = Matrix::zeros(d, d);
    for (k, &h) in steps.iter().enumerate() {
        let mut y = vec![0.0; d];
        y[k] = h;
        let gp = field.sample(node, side, &y).gamma;
        y[k] = -h;
        let gm = field.sample(node, side, &y).gamma;
        dg.set_column(k, &((gp - gm) / (2.0 * h)));
    }
    Ok((m, dg))
}

/// `f(θ_tω) = (∂H_t/∂x)^{-1}(·,0)[B_0 ∂H_t/∂x(·,0) − ∂Γ_t/∂x(·,0)]`.
pub fn linearized_rde_coefficient(
    field: &CohomologyField,
    linsys: &LinearSystem,
    node: usize,
    side: Side,
) -> Result<Matrix> {
    if field.dim() != linsys.dim() {
        return Err(Error::Parameter("field and linear system dimensions differ".into()));
    }
    let (m, dg) = derivatives_at_zero(field, node, side)?;
    let rhs = &linsys.b0 * &m - dg;
    m.lu().solve(&rhs).ok_or(Error::Singular { t: field.nodes()[node] })
}

/// `f` at every node of the field, both one-sided limits.
#[derive(Clone, Debug)]
pub struct LinearRde {
    left: Vec<Matrix>,
    right: Vec<Matrix>,
}

impl LinearRde {
    pub fn new(field: &CohomologyField, linsys: &LinearSystem) -> Result<Self> {
        let n = field.nodes().len();
        let mut left = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for k in 0..n {
            left.push(linearized_rde_coefficient(field, linsys, k, Side::Left)?);
            right.push(linearized_rde_coefficient(field, linsys, k, Side::Right)?);
        }
        Ok(Self { left, right })
    }

    pub fn at(&self, k: usize, side: Side) -> &Matrix {
        match side {
            Side::Left => &self.left[k],
            Side::Right => &self.right[k],
        }
    }
}

impl RdeField for LinearRde {
    fn dim(&self) -> usize {
        self.left[0].nrows()
    }

    fn eval(&self, node: usize, _t: f64, side: Side, y: &[f64], out: &mut [f64]) -> Result<()> {
        let v = self.at(node, side) * Vector::from_column_slice(y);
        out.copy_from_slice(v.as_slice());
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Step2Report {
    pub times: Vec<f64>,
    /// `|M_t y_t − x_t|` with `M_t = ∂H_t/∂x(·,0)`.
    pub residual: Vec<f64>,
    pub linear: FlowResult,
    pub rde: FlowResult,
}

impl Step2Report {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    /// Columns `t, residual`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "residual"]);
        for (s, r) in self.times.iter().zip(&self.residual) {
            t.push(vec![*s, *r]);
        }
        t
    }
}

/// Integrates `dy = f(θ_tω)y dt` on the field grid (which must start at 0), maps it through
/// `M_t = ∂H_t/∂x(·,0)` and compares with the linear SDE started at `M_0 y_0`. The SDE runs on the
/// jump-adapted Euler scheme whose cells also build `H`, so the comparison sees no scheme mismatch.
pub fn verify_step2_conjugacy<D: Driver + ?Sized>(
    field: &CohomologyField,
    linsys: &LinearSystem,
    driver: &D,
    y0: &Vector,
) -> Result<Step2Report> {
    let grid = field.grid().clone();
    if grid.start() != 0.0 {
        return Err(Error::Parameter("the Step-2 check starts at t = 0".into()));
    }
    let rde_field = LinearRde::new(field, linsys)?;
    let rde = integrate_rde(&rde_field, y0, &grid)?;
    let ms: Vec<Matrix> = (0..grid.len())
        .map(|k| derivatives_at_zero(field, k, convention_side(grid.nodes()[k])).map(|(m, _)| m))
        .collect::<Result<_>>()?;
    let x0 = &ms[0] * y0;
    let linear = integrate_ito(&linsys.to_system(), driver, &x0, &grid)?;
    let residual = (0..grid.len()).map(|k| (&ms[k] * &rde.states[k] - &linear.states[k]).norm()).collect();
    Ok(Step2Report { times: grid.nodes().to_vec(), residual, linear, rde })
}

/// Parameters of `dX = (βX − X^l)dt + X dL`, `β = α + σ²/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarExample {
    pub alpha: f64,
    pub sigma: f64,
    pub l: u32,
}

impl ScalarExample {
    pub fn beta(&self) -> f64 {
        self.alpha + 0.5 * self.sigma * self.sigma
    }

    pub fn system(&self) -> Result<SystemSpec> {
        if self.l < 2 {
            return Err(Error::Parameter(format!("the nonlinearity exponent must be an integer > 1, got {}", self.l)));
        }
        let (beta, l) = (self.beta(), self.l as i32);
        let drift: Field =
            Arc::new(FnField::scalar(move |x| beta * x - x.powi(l), move |x| beta - l as f64 * x.powi(l - 1)));
        let noise: Field = Arc::new(Affine::linear(Matrix::identity(1, 1)));
        SystemSpec::new(drift, vec![noise])
    }
}

pub const DEFAULT_LADDER: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[derive(Clone, Debug)]
pub struct ScalarSuiteReport {
    pub example: ScalarExample,
    pub linear: LinearSystem,
    /// Both flows keep 0 fixed.
    pub zero_fixed: bool,
    pub ladder: Vec<f64>,
    /// `sup_t |φ_t(x_0) − φ⁰_t(x_0)|/|x_0|` per rung.
    pub ratios: Vec<f64>,
    pub nonlinear_final: Vec<f64>,
    pub linear_final: Vec<f64>,
    /// Pathwise `log|φ⁰_T(1)|/T` on the given path.
    pub path_exponent: f64,
    pub spectrum: LyapunovSpectrum,
}

impl ScalarSuiteReport {
    pub fn ratios_decreasing(&self) -> bool {
        self.ratios.windows(2).all(|w| w[1] < w[0])
    }

    /// Some rung left the local regime: nonlinear and linear flows differ by more than |x_0|/2.
    pub fn beyond_local(&self) -> bool {
        self.ratios.iter().any(|&r| r > 0.5)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "scalar example: alpha = {}, sigma = {}, l = {}, beta = {}\nB0 = {}, B = {}\nzero fixed by both flows: {}\n",
            self.example.alpha,
            self.example.sigma,
            self.example.l,
            self.example.beta(),
            self.linear.b0[(0, 0)],
            self.linear.bs[0][(0, 0)],
            self.zero_fixed
        );
        for k in 0..self.ladder.len() {
            s += &format!(
                "x0 = {:e}: ratio = {:e}, nonlinear(T) = {:e}, linear(T) = {:e}\n",
                self.ladder[k], self.ratios[k], self.nonlinear_final[k], self.linear_final[k]
            );
        }
        s +=
            &format!("ratios decreasing: {}\nbeyond local regime: {}\n", self.ratios_decreasing(), self.beyond_local());
        s += &format!(
            "pathwise exponent: {}\nspectrum: {} ± {} ({})\n",
            self.path_exponent,
            self.spectrum.exponents[0],
            self.spectrum.standard_errors[0],
            if self.spectrum.exponents[0] < 0.0 { "negative" } else { "non-negative" }
        );
        s += "zeta, rho, stopping times and the composed homeomorphism: not constructed\n";
        s
    }
}

/// Runs the nonlinear equation and its linearization from each rung of the ladder. Both use the
/// same Euler scheme, which is exactly linear on the linearization, so the ratios see only the
/// nonlinear remainder.
pub fn scalar_example_suite<D: Driver + ?Sized>(
    example: ScalarExample,
    driver: &D,
    grid: &TimeGrid,
    ladder: &[f64],
    spectrum_horizon: f64,
    spectrum_samples: usize,
    seed: u64,
) -> Result<ScalarSuiteReport> {
    let sys = example.system()?;
    let linear = linearize(&sys)?;
    let lin_sys = linear.to_system();
    let zero = Vector::zeros(1);
    let zero_fixed = integrate_ito(&sys, driver, &zero, grid)?.states.iter().all(|x| x[0] == 0.0)
        && integrate_ito(&lin_sys, driver, &zero, grid)?.states.iter().all(|x| x[0] == 0.0);
    let mut ratios = Vec::with_capacity(ladder.len());
    let mut nonlinear_final = Vec::with_capacity(ladder.len());
    let mut linear_final = Vec::with_capacity(ladder.len());
    for &x0 in ladder {
        let v = Vector::from_element(1, x0);
        let a = integrate_ito(&sys, driver, &v, grid)?;
        let b = integrate_ito(&lin_sys, driver, &v, grid)?;
        let sup = a.states.iter().zip(&b.states).map(|(p, q)| (p[0] - q[0]).abs()).fold(0.0, f64::max);
        ratios.push(sup / x0.abs());
        nonlinear_final.push(a.last()[0]);
        linear_final.push(b.last()[0]);
    }
    let unit = integrate_linear(&linear, driver, &Vector::from_element(1, 1.0), grid)?;
    let span = grid.end() - grid.start();
    let path_exponent = unit.last()[0].abs().ln() / span;
    let spectrum =
        lyapunov_exponents(&linear, driver.triplet(), spectrum_horizon, grid.step(), spectrum_samples, seed)?;
    Ok(ScalarSuiteReport {
        example,
        linear,
        zero_fixed,
        ladder: ladder.to_vec(),
        ratios,
        nonlinear_final,
        linear_final,
        path_exponent,
        spectrum,
    })
}

pub type StubMap = Arc<dyn Fn(f64, &Vector) -> Vector + Send + Sync>;

/// Stand-in for the local conjugacy `ζ(θ_tω, ·)` between the random equation and its
/// linearization, which is not constructed here. Must fix 0 and come with its inverse.
#[derive(Clone)]
pub struct ZetaStub {
    pub forward: StubMap,
    pub inverse: StubMap,
}

impl ZetaStub {
    pub fn identity() -> Self {
        Self { forward: Arc::new(|_, y: &Vector| y.clone()), inverse: Arc::new(|_, y: &Vector| y.clone()) }
    }
}

/// `ς(θ_tω, x) = H_t(ζ(θ_tω, M_t^{-1}x))` with `M_t = ∂H_t/∂x(·,0)`.
pub fn varsigma(field: &CohomologyField, zeta: &ZetaStub, node: usize, side: Side, x: &Vector) -> Result<Vector> {
    let t = field.nodes()[node];
    let (m, _) = derivatives_at_zero(field, node, side)?;
    let u = m.lu().solve(x).ok_or(Error::Singular { t })?;
    let z = (zeta.forward)(t, &u);
    Ok(field.sample(node, side, z.as_slice()).h)
}

/// `ς^{-1}(θ_tω, x) = M_t ζ^{-1}(θ_tω, H_t^{-1}x)`.
pub fn varsigma_inverse(
    field: &CohomologyField,
    zeta: &ZetaStub,
    node: usize,
    side: Side,
    x: &Vector,
) -> Result<Vector> {
    let t = field.nodes()[node];
    let (m, _) = derivatives_at_zero(field, node, side)?;
    let y = field.invert(node, side, x)?;
    Ok(m * (zeta.inverse)(t, &y))
}
