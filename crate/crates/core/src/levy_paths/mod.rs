//! Two-sided Lévy paths: sampling, evaluation, the Wiener shift and exponential integrals.

mod cells;
mod grid;
mod path;
mod triplet;

pub use cells::{CellTable, TableJump};
pub use grid::TimeGrid;
pub use path::{Cell, CellJump, Driver, Jump, ShiftView, TwoSidedPath};
pub use triplet::{JumpLaw, LevyTriplet};

use nalgebra::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng::indexed_stream;
use crate::table::{numbered, Table};

pub fn sample_path(triplet: &LevyTriplet, horizon: (f64, f64), base_step: f64, seed: u64) -> Result<TwoSidedPath> {
    TwoSidedPath::sample(triplet, horizon, base_step, seed)
}

/// `∫ e^{μ(s − t_ref)} dL_s` over one cell, exact for the drift and the jumps, Brownian increment
/// weighted at the cell midpoint.
pub fn exp_weighted_increment(cell: &Cell, mu: f64, t_ref: f64) -> Vector {
    let dt = cell.dt();
    let mut v = Vector::zeros(cell.drift.len());
    if dt > 0.0 {
        let w = ((mu * (cell.t1 - t_ref)).exp() - (mu * (cell.t0 - t_ref)).exp()) / mu;
        v += &cell.drift * (w / dt);
        let mid = 0.5 * (cell.t0 + cell.t1);
        v += &cell.gaussian * (mu * (mid - t_ref)).exp();
    }
    for j in &cell.jumps {
        v += &j.size * (mu * (j.time - t_ref)).exp();
    }
    v
}

/// `e^{−μt} ∫_{−T_h}^t e^{μs} dL_s`, summed over the jump-adapted cells of `[−T_h, t]`.
pub fn stationary_exp_integral<D: Driver + ?Sized>(driver: &D, mu: f64, t: f64, tail_horizon: f64) -> Result<Vector> {
    if !(mu > 0.0) || !(tail_horizon > 0.0) {
        return Err(Error::Parameter("μ and T_h must be positive".into()));
    }
    let (lo, hi) = driver.horizon();
    let tol = 1e-7 * driver.base_step();
    if -tail_horizon < lo - tol || t > hi + tol {
        return Err(Error::Range { t: -tail_horizon, lo, hi });
    }
    if t <= -tail_horizon {
        return Ok(Vector::zeros(driver.dim()));
    }
    let grid = TimeGrid::new(driver, -tail_horizon, t, driver.base_step())?;
    let mut z = Vector::zeros(driver.dim());
    for w in grid.nodes().windows(2) {
        z += exp_weighted_increment(&driver.cell(w[0], w[1])?, mu, t);
    }
    Ok(z)
}

/// Largest deviation over `z_grid` between the empirical characteristic function of `L_t` and
/// `exp(tΨ(z))`.
pub fn empirical_characteristic_check(
    triplet: &LevyTriplet,
    t: f64,
    z_grid: &[Vector],
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples < 1000 {
        return Err(Error::Parameter("need at least 1000 samples".into()));
    }
    triplet.validate()?;
    let samples: Vec<Vector> = (0..n_samples)
        .into_par_iter()
        .map(|i| triplet.sample_value(t, &mut indexed_stream(seed, "levy.cf", i as i64)))
        .collect();
    let mut worst: f64 = 0.0;
    for z in z_grid {
        let mut acc = Complex::new(0.0, 0.0);
        for x in &samples {
            acc += Complex::new(0.0, z.dot(x)).exp();
        }
        let emp = acc / n_samples as f64;
        let exact = (triplet.characteristic_exponent(z) * t).exp();
        worst = worst.max((emp - exact).norm());
    }
    Ok(worst)
}

/// Node values of a path: columns `t, L_1..L_m, is_jump`.
pub fn path_table<D: Driver + ?Sized>(driver: &D, grid: &TimeGrid) -> Result<Table> {
    let m = driver.dim();
    let mut header = vec!["t".to_string()];
    header.extend(numbered("L", m));
    header.push("is_jump".into());
    let mut table = Table::new(header);
    let tol = 1e-7 * driver.base_step();
    for &t in grid.nodes() {
        let v = driver.evaluate(t)?;
        let is_jump = !driver.jump_times(t - tol, t + tol).is_empty();
        let mut row = vec![t];
        row.extend(v.iter());
        row.push(if is_jump { 1.0 } else { 0.0 });
        table.push(row);
    }
    Ok(table)
}
