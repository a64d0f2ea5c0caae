//! Marcus canonical equations `dX = ā(X)dt + σ̄_i(X)◊dL^i` with commuting noise fields, the
//! stationary Ornstein–Uhlenbeck process `Z`, the cohomology `H̄_t = Φ(Z_t,·)` and the conjugate
//! random differential equation.

mod flow_map;
mod ou;

pub use flow_map::{lie_bracket_check, FlowMap, PINV_TOL};
pub use ou::{ou_integral_form, ou_path, ou_sde_form_defect, ou_shift_defect, OuState, DEFAULT_MU};

use crate::conjugacy_ito::{convention_side, ConjugacyReport};
use crate::error::{Error, Result};
use crate::flows::{check_state, integrate_rde, Field, FlowMeta, FlowResult, RdeField, Side};
use crate::levy_paths::{CellTable, Driver, TimeGrid, TwoSidedPath};
use crate::linalg::{Matrix, Vector};

/// Largest bracket norm accepted as commuting.
pub const BRACKET_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct MarcusSystem {
    pub drift: Field,
    pub map: FlowMap,
    pub commutativity_certified: bool,
}

/// Points of `[-2, 2]^d` used to certify commutation.
fn bracket_points(d: usize) -> Vec<Vector> {
    let vals = [-2.0, -0.7, 0.3, 1.1, 2.0];
    (0..vals.len()).map(|k| Vector::from_fn(d, |i, _| vals[(k + 2 * i) % vals.len()])).collect()
}

impl MarcusSystem {
    /// Certifies `[σ̄_i, σ̄_j] = 0` at sample points; non-commuting noise is rejected.
    pub fn new(drift: Field, map: FlowMap) -> Result<Self> {
        if drift.dim() != map.dim() {
            return Err(Error::Parameter(format!("drift has dimension {}, noise {}", drift.dim(), map.dim())));
        }
        let bracket = lie_bracket_check(&map.fields(), &bracket_points(map.dim()));
        if bracket > BRACKET_TOL {
            return Err(Error::Hypothesis(format!("noise fields do not commute (bracket {bracket:e})")));
        }
        Ok(Self { drift, map, commutativity_certified: true })
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn noise_count(&self) -> usize {
        self.map.noise_count()
    }

    fn check_driver(&self, m: usize) -> Result<()> {
        if m != self.noise_count() {
            return Err(Error::Parameter(format!("driver has dimension {m}, system expects {}", self.noise_count())));
        }
        Ok(())
    }

    /// `ā(x) + ½ Σ_{ij} ∇σ̄_i(x) σ̄_j(x) Q_{ij}`, the Itô drift of the continuous part.
    pub fn corrected_drift(&self, x: &Vector, q: &Matrix) -> Vector {
        let mut v = self.drift.value(x);
        let m = self.noise_count();
        for i in 0..m {
            if (0..m).all(|j| q[(i, j)] == 0.0) {
                continue;
            }
            let ji = self.map.field_jacobian(i, x);
            for j in 0..m {
                if q[(i, j)] != 0.0 {
                    v += &ji * self.map.field_value(j, x) * (0.5 * q[(i, j)]);
                }
            }
        }
        v
    }
}

/// Milstein steps for the Itô form of the continuous part, `x ← Φ(ΔL, x)` at every jump. Jumps on
/// the negative half-line act at the start of their cell, so the forward rule applies there too.
pub fn integrate_marcus<D: Driver + ?Sized>(
    sys: &MarcusSystem,
    driver: &D,
    x0: &Vector,
    grid: &TimeGrid,
) -> Result<FlowResult> {
    sys.check_driver(driver.dim())?;
    if x0.len() != sys.dim() {
        return Err(Error::Parameter(format!("initial state has length {}, expected {}", x0.len(), sys.dim())));
    }
    let table = CellTable::new(driver, grid)?;
    let q = driver.triplet().covariance();
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(grid.len());
    states.push(x.clone());
    let mut cont = vec![0.0; table.dim()];
    let mut jumps = 0;
    for i in 0..table.len() {
        for j in table.jumps(i).iter().filter(|j| j.at_start) {
            x = sys.map.phi(table.jump_size(j), &x)?;
            jumps += 1;
        }
        table.continuous_into(i, &mut cont);
        let mut dx = sys.corrected_drift(&x, &q) * table.dt(i);
        for (k, &c) in cont.iter().enumerate() {
            if c != 0.0 {
                dx += sys.map.field_value(k, &x) * c;
            }
        }
        let gauss = table.gaussian(i);
        if gauss.iter().any(|&g| g != 0.0) {
            // Milstein term; commuting fields make it free of Lévy areas.
            let dt = table.dt(i);
            for a in 0..gauss.len() {
                let ja = sys.map.field_jacobian(a, &x);
                for b in 0..gauss.len() {
                    let w = gauss[a] * gauss[b] - q[(a, b)] * dt;
                    if w != 0.0 {
                        dx += &ja * sys.map.field_value(b, &x) * (0.5 * w);
                    }
                }
            }
        }
        x += dx;
        for j in table.jumps(i).iter().filter(|j| !j.at_start) {
            x = sys.map.phi(table.jump_size(j), &x)?;
            jumps += 1;
        }
        check_state(x.as_slice(), table.t1(i), table.t0(i))?;
        states.push(x.clone());
    }
    Ok(FlowResult {
        grid: grid.clone(),
        states,
        jacobians: None,
        meta: FlowMeta { integrator: "marcus-milstein", cells: table.len(), jumps, singular_at: vec![] },
    })
}

/// `H̄_t(x) = Φ(Z_t, x)`, evaluated on demand at the nodes of the OU grid.
#[derive(Clone, Debug)]
pub struct MarcusCohomology {
    pub map: FlowMap,
    pub ou: OuState,
}

pub fn build_marcus_cohomology(map: &FlowMap, ou: &OuState) -> Result<MarcusCohomology> {
    if map.noise_count() != ou.dim() {
        return Err(Error::Parameter(format!("Z has dimension {}, map expects {}", ou.dim(), map.noise_count())));
    }
    Ok(MarcusCohomology { map: map.clone(), ou: ou.clone() })
}

impl MarcusCohomology {
    pub fn nodes(&self) -> &[f64] {
        self.ou.nodes()
    }

    pub fn h(&self, k: usize, side: Side, x: &Vector) -> Result<Vector> {
        self.map.phi(self.ou.at(k, side).as_slice(), x)
    }

    /// Node value under the path's side convention.
    pub fn h_at(&self, k: usize, x: &Vector) -> Result<Vector> {
        self.h(k, convention_side(self.nodes()[k]), x)
    }

    pub fn jacobian(&self, k: usize, side: Side, x: &Vector) -> Result<Matrix> {
        self.map.jacobian(self.ou.at(k, side).as_slice(), x)
    }

    /// `H̄_t(·)^{-1}(y) = Φ(−Z_t, y)`.
    pub fn invert(&self, k: usize, side: Side, y: &Vector) -> Result<Vector> {
        self.map.inverse(self.ou.at(k, side).as_slice(), y)
    }
}

/// `(∂H̄/∂x)^{-1}[ā(H̄) + μ σ̄_i(H̄) Z^i]` at `H̄ = Φ(z, y)`.
pub fn transformed_drift_marcus(map: &FlowMap, sys: &MarcusSystem, mu: f64, z: &[f64], y: &Vector) -> Result<Vector> {
    let (h, j) = map.phi_with_jacobian(z, y, true)?;
    let mut rhs = sys.drift.value(&h);
    for (i, &zi) in z.iter().enumerate() {
        if zi != 0.0 {
            rhs += map.field_value(i, &h) * (mu * zi);
        }
    }
    j.expect("requested").lu().solve(&rhs).ok_or(Error::Singular { t: f64::NAN })
}

/// Right-hand side of the conjugate RDE, `Z` read at the requested side of each node.
pub struct MarcusRde<'a> {
    pub sys: &'a MarcusSystem,
    pub ou: &'a OuState,
}

impl RdeField for MarcusRde<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn eval(&self, node: usize, t: f64, side: Side, y: &[f64], out: &mut [f64]) -> Result<()> {
        let z = self.ou.at(node, side);
        let v =
            transformed_drift_marcus(&self.sys.map, self.sys, self.ou.mu, z.as_slice(), &Vector::from_column_slice(y))
                .map_err(|e| match e {
                    Error::Singular { .. } => Error::Singular { t },
                    e => e,
                })?;
        out.copy_from_slice(v.as_slice());
        Ok(())
    }
}

/// `r(t) = |φ̄_t(x_0) − H̄_t(ψ̄_t(H̄_0^{-1}x_0))|` on `grid` (which must start at 0).
pub fn verify_conjugacy_marcus<D: Driver + ?Sized>(
    sys: &MarcusSystem,
    driver: &D,
    x0: &Vector,
    grid: &TimeGrid,
    mu: f64,
    tail_horizon: f64,
) -> Result<ConjugacyReport> {
    if grid.start() != 0.0 {
        return Err(Error::Parameter("the conjugacy check starts at t = 0".into()));
    }
    let ou = ou_path(driver, mu, grid, tail_horizon)?;
    let coh = build_marcus_cohomology(&sys.map, &ou)?;
    let y0 = coh.invert(0, Side::Left, x0)?;
    let rde = integrate_rde(&MarcusRde { sys, ou: &ou }, &y0, grid)?;
    let sde = integrate_marcus(sys, driver, x0, grid)?;
    let residual = (0..grid.len())
        .map(|k| Ok((&sde.states[k] - coh.h_at(k, &rde.states[k])?).norm()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ConjugacyReport { times: grid.nodes().to_vec(), residual, y0, sde, rde, extrapolations: 0 })
}

/// `max |H̄_{s+t}(ω,x) − H̄_t(θ_sω,x)|` over the nodes of `[s, s + span]` and the given points.
pub fn marcus_stationarity_defect(
    map: &FlowMap,
    path: &TwoSidedPath,
    points: &[Vector],
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
        for x in points {
            let a = map.phi(direct.value(k).as_slice(), x)?;
            let b = map.phi(shifted.value(k).as_slice(), x)?;
            worst = worst.max((a - b).amax());
        }
    }
    Ok(worst)
}

/// Marcus cocycle of a system, usable wherever a [`Cocycle`](crate::flows::Cocycle) is expected.
pub struct MarcusCocycle<'a>(pub &'a MarcusSystem);

impl crate::flows::Cocycle for MarcusCocycle<'_> {
    fn run(&self, driver: &dyn Driver, x0: &Vector, grid: &TimeGrid) -> Result<FlowResult> {
        integrate_marcus(self.0, driver, x0, grid)
    }
}
