use crate::error::{Error, Result};
use crate::flows::Side;
use crate::levy_paths::{stationary_exp_integral, CellTable, Driver, TimeGrid};
use crate::linalg::Vector;
use crate::table::{numbered, Table};

/// Default mean-reversion rate of the stationary Ornstein–Uhlenbeck process.
pub const DEFAULT_MU: f64 = 1.0;

/// `Z_t = e^{−μt}∫_{−∞}^t e^{μs} dL_s` at the nodes of a grid, both one-sided limits stored.
#[derive(Clone, Debug)]
pub struct OuState {
    pub mu: f64,
    pub tail_horizon: f64,
    pub grid: TimeGrid,
    left: Vec<Vector>,
    right: Vec<Vector>,
}

impl OuState {
    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn dim(&self) -> usize {
        self.left[0].len()
    }

    pub fn at(&self, k: usize, side: Side) -> &Vector {
        match side {
            Side::Left => &self.left[k],
            Side::Right => &self.right[k],
        }
    }

    /// Node value under the path convention: right limit for `t > 0`, left limit otherwise.
    pub fn value(&self, k: usize) -> &Vector {
        self.at(k, crate::conjugacy_ito::convention_side(self.nodes()[k]))
    }

    pub fn values(&self) -> Vec<Vector> {
        (0..self.nodes().len()).map(|k| self.value(k).clone()).collect()
    }

    /// Columns `t, Z_1..Z_m`.
    pub fn to_table(&self) -> Table {
        let mut header = vec!["t".to_string()];
        header.extend(numbered("Z", self.dim()));
        let mut t = Table::new(header);
        for (k, &s) in self.nodes().iter().enumerate() {
            let mut row = vec![s];
            row.extend(self.value(k).iter());
            t.push(row);
        }
        t
    }
}

/// Starts from the truncated integral at the first node and then applies the exact cell recursion
/// `Z ← e^{−μΔ}Z + ∫_cell e^{−μ(t_1−s)} dL_s`.
pub fn ou_path<D: Driver + ?Sized>(driver: &D, mu: f64, grid: &TimeGrid, tail_horizon: f64) -> Result<OuState> {
    if !(mu > 0.0) {
        return Err(Error::Parameter("μ must be positive".into()));
    }
    let table = CellTable::new(driver, grid)?;
    let m = table.dim();
    let start = stationary_exp_integral(driver, mu, grid.start(), tail_horizon)?;
    let mut z = start.clone();
    let mut left = Vec::with_capacity(grid.len());
    let mut right = Vec::with_capacity(grid.len());
    left.push(start);
    for i in 0..table.len() {
        let dt = table.dt(i);
        for j in table.jumps(i).iter().filter(|j| j.at_start) {
            z += Vector::from_column_slice(table.jump_size(j));
        }
        right.push(z.clone());
        let decay = (-mu * dt).exp();
        let wd = -(-mu * dt).exp_m1() / (mu * dt);
        let wg = (-0.5 * mu * dt).exp();
        let (drift, gauss) = (table.drift(i), table.gaussian(i));
        for k in 0..m {
            z[k] = decay * z[k] + wd * drift[k] + wg * gauss[k];
        }
        left.push(z.clone());
        for j in table.jumps(i).iter().filter(|j| !j.at_start) {
            z += Vector::from_column_slice(table.jump_size(j));
        }
    }
    right.push(z);
    Ok(OuState { mu, tail_horizon, grid: grid.clone(), left, right })
}

/// Node values of `Z` from the integral form, one truncated integral per node.
pub fn ou_integral_form<D: Driver + ?Sized>(
    driver: &D,
    mu: f64,
    grid: &TimeGrid,
    tail_horizon: f64,
) -> Result<Vec<Vector>> {
    grid.nodes().iter().map(|&t| stationary_exp_integral(driver, mu, t, tail_horizon)).collect()
}

/// `max |Z_{s+t}(ω) − Z_t(θ_sω)|` over the nodes of `[s, s + span]`, each side truncated at its
/// own `−T_h`.
pub fn ou_shift_defect(
    path: &crate::levy_paths::TwoSidedPath,
    mu: f64,
    s: f64,
    span: f64,
    step: f64,
    tail_horizon: f64,
) -> Result<f64> {
    let grid = TimeGrid::new(path, s, s + span, step)?;
    let direct = ou_path(path, mu, &grid, tail_horizon)?;
    let view = path.shift(s)?;
    let shifted = ou_path(&view, mu, &grid.shifted(s), tail_horizon)?;
    let mut worst: f64 = 0.0;
    for k in 0..grid.len() {
        worst = worst.max((direct.value(k) - shifted.value(k)).amax());
    }
    Ok(worst)
}

/// Largest per-cell defect of `Z_{t+Δ} − Z_t + μZ_tΔ − ΔL` over cells without jumps.
pub fn ou_sde_form_defect<D: Driver + ?Sized>(driver: &D, ou: &OuState) -> Result<f64> {
    let table = CellTable::new(driver, &ou.grid)?;
    let mut cont = vec![0.0; table.dim()];
    let mut worst: f64 = 0.0;
    for i in 0..table.len() {
        if !table.jumps(i).is_empty() {
            continue;
        }
        table.continuous_into(i, &mut cont);
        let z0 = ou.at(i, Side::Right);
        let z1 = ou.at(i + 1, Side::Left);
        for k in 0..cont.len() {
            worst = worst.max((z1[k] - z0[k] + ou.mu * z0[k] * table.dt(i) - cont[k]).abs());
        }
    }
    Ok(worst)
}
