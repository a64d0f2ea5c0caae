//! Composition `ξ_t(η_t)` of a random field with a semimartingale, computed directly and by
//! accumulating every term of the Itô–Ventzell expansion cell by cell.
//!
//! Everything here is scalar: `η` and `x` live in `R`, the Brownian motion is the first
//! component of the driver's `W` and the marks are its one-dimensional jumps. The jump measure is
//! `n(du) = rate · law(du)` of the driver's triplet.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy_paths::{CellTable, Driver, LevyTriplet, TimeGrid, TwoSidedPath};
use crate::rng::derive_indexed;

/// Noise seen by a random field at time `t`: Brownian value, raw jump sum over `(0,t]` and the
/// compensated sum `Σu − t·rate·E[u]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseState {
    pub t: f64,
    pub w: f64,
    pub jump_sum: f64,
    pub compensated: f64,
}

/// `ξ_t(x) = ξ_0(x) + ∫E ds + ∫F dW + ∫∫G(s−,x,u) Ñ(ds,du)` with every coefficient a function of
/// the noise state.
pub trait RandomField: Sync {
    fn value(&self, n: &NoiseState, x: f64) -> f64;
    fn gradient(&self, n: &NoiseState, x: f64) -> f64;
    fn hessian(&self, n: &NoiseState, x: f64) -> f64;

    fn drift(&self, _n: &NoiseState, _x: f64) -> f64 {
        0.0
    }

    fn diffusion(&self, _n: &NoiseState, _x: f64) -> f64 {
        0.0
    }

    fn diffusion_gradient(&self, _n: &NoiseState, _x: f64) -> f64 {
        0.0
    }

    fn jump(&self, _n: &NoiseState, _x: f64, _u: f64) -> f64 {
        0.0
    }
}

/// `ξ_t(x) = x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityField;

impl RandomField for IdentityField {
    fn value(&self, _: &NoiseState, x: f64) -> f64 {
        x
    }
    fn gradient(&self, _: &NoiseState, _: f64) -> f64 {
        1.0
    }
    fn hessian(&self, _: &NoiseState, _: f64) -> f64 {
        0.0
    }
}

/// `ξ_t(x) = x²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuadraticField;

impl RandomField for QuadraticField {
    fn value(&self, _: &NoiseState, x: f64) -> f64 {
        x * x
    }
    fn gradient(&self, _: &NoiseState, x: f64) -> f64 {
        2.0 * x
    }
    fn hessian(&self, _: &NoiseState, _: f64) -> f64 {
        2.0
    }
}

/// `ξ_t(x) = x·exp(c W_t − c²t/2)`, so `F = c ξ`.
#[derive(Clone, Copy, Debug)]
pub struct ExponentialBrownianField {
    pub c: f64,
}

impl ExponentialBrownianField {
    fn factor(&self, n: &NoiseState) -> f64 {
        (self.c * n.w - 0.5 * self.c * self.c * n.t).exp()
    }
}

impl RandomField for ExponentialBrownianField {
    fn value(&self, n: &NoiseState, x: f64) -> f64 {
        x * self.factor(n)
    }
    fn gradient(&self, n: &NoiseState, _: f64) -> f64 {
        self.factor(n)
    }
    fn hessian(&self, _: &NoiseState, _: f64) -> f64 {
        0.0
    }
    fn diffusion(&self, n: &NoiseState, x: f64) -> f64 {
        self.c * x * self.factor(n)
    }
    fn diffusion_gradient(&self, n: &NoiseState, _: f64) -> f64 {
        self.c * self.factor(n)
    }
}

/// `ξ_t(x) = x + k(Σu − t·rate·E[u])`, so `G = k u`.
#[derive(Clone, Copy, Debug)]
pub struct JumpShiftField {
    pub k: f64,
}

impl RandomField for JumpShiftField {
    fn value(&self, n: &NoiseState, x: f64) -> f64 {
        x + self.k * n.compensated
    }
    fn gradient(&self, _: &NoiseState, _: f64) -> f64 {
        1.0
    }
    fn hessian(&self, _: &NoiseState, _: f64) -> f64 {
        0.0
    }
    fn jump(&self, _: &NoiseState, _: f64, u: f64) -> f64 {
        self.k * u
    }
}

/// `η_t = x0 + e t + f W_t + g(Σu − t·rate·E[u])`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItoProcess {
    pub x0: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

impl ItoProcess {
    pub fn value(&self, n: &NoiseState) -> f64 {
        self.x0 + self.e * n.t + self.f * n.w + self.g * n.compensated
    }
}

/// Terms that can be switched off to build negative controls.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VentzellOptions {
    pub drop_second_order: bool,
    pub drop_cross_term: bool,
}

/// Signed discrepancy `ξ_t(η_t) − (ξ_0(η_0) + accumulated terms)` at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct VentzellReport {
    pub times: Vec<f64>,
    pub discrepancy: Vec<f64>,
}

impl VentzellReport {
    pub fn sup(&self) -> f64 {
        self.discrepancy.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn terminal(&self) -> f64 {
        *self.discrepancy.last().expect("report has nodes")
    }
}

fn measure_integral(triplet: &LevyTriplet, phi: impl Fn(f64) -> f64) -> Result<f64> {
    if triplet.jump_rate == 0.0 {
        return Ok(0.0);
    }
    Ok(triplet.jump_rate * triplet.jump_law.expectation(phi)?)
}

/// Pathwise discrepancy on `grid` (which must start at 0 and contain the jump times).
pub fn ito_ventzell_residual<D: Driver + ?Sized>(
    xi: &dyn RandomField,
    eta: &ItoProcess,
    driver: &D,
    grid: &TimeGrid,
    opts: &VentzellOptions,
) -> Result<VentzellReport> {
    if driver.dim() != 1 {
        return Err(Error::Parameter("the Itô–Ventzell check is one-dimensional".into()));
    }
    if grid.start() != 0.0 {
        return Err(Error::Parameter("the Itô–Ventzell check starts at t = 0".into()));
    }
    let triplet = driver.triplet();
    let table = CellTable::new(driver, grid)?;
    let mean_rate = measure_integral(triplet, |u| u)?;
    let has_w = table.brownian_dim() > 0;
    let g = eta.g;

    let mut n = NoiseState { t: 0.0, w: 0.0, jump_sum: 0.0, compensated: 0.0 };
    let mut acc = xi.value(&n, eta.value(&n));
    let mut times = vec![0.0];
    let mut discrepancy = vec![0.0];
    for i in 0..table.len() {
        let x = eta.value(&n);
        let dt = table.dt(i);
        let dw = if has_w { table.dw(i)[0] } else { 0.0 };
        let d1 = xi.gradient(&n, x);
        let d2 = xi.hessian(&n, x);
        let f = eta.f;
        let comp_taylor = measure_integral(triplet, |u| xi.value(&n, x + g * u) - xi.value(&n, x) - d1 * g * u)?;
        let comp_tilde =
            measure_integral(triplet, |u| xi.value(&n, x + g * u) - xi.value(&n, x) + xi.jump(&n, x + g * u, u))?;
        let comp_field = measure_integral(triplet, |u| xi.jump(&n, x + g * u, u) - xi.jump(&n, x, u))?;
        let mut rate = d1 * eta.e + comp_taylor + xi.drift(&n, x) - comp_tilde + comp_field;
        if !opts.drop_second_order {
            rate += 0.5 * d2 * f * f;
        }
        if !opts.drop_cross_term {
            rate += f * xi.diffusion_gradient(&n, x);
        }
        acc += rate * dt + (d1 * f + xi.diffusion(&n, x)) * dw;

        n.t = table.t1(i);
        n.w += dw;
        n.compensated = n.jump_sum - n.t * mean_rate;
        for j in table.jumps(i) {
            let u = table.jump_size(j)[0];
            let before = eta.value(&n);
            acc += xi.value(&n, before + g * u) - xi.value(&n, before) + xi.jump(&n, before + g * u, u);
            n.jump_sum += u;
            n.compensated += u;
        }
        times.push(n.t);
        discrepancy.push(xi.value(&n, eta.value(&n)) - acc);
    }
    Ok(VentzellReport { times, discrepancy })
}

/// Monte-Carlo mean of the signed terminal discrepancy at each grid step, all steps sharing the
/// same sampled paths.
#[derive(Clone, Debug, PartialEq)]
pub struct VentzellEnsemble {
    pub steps: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub mean_sup: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn ventzell_ensemble(
    xi: &dyn RandomField,
    eta: &ItoProcess,
    triplet: &LevyTriplet,
    t_end: f64,
    base_step: f64,
    steps: &[f64],
    paths: usize,
    seed: u64,
    opts: &VentzellOptions,
) -> Result<VentzellEnsemble> {
    if paths < 2 {
        return Err(Error::Parameter("need at least two paths".into()));
    }
    let per_path: Vec<Vec<(f64, f64)>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let path = TwoSidedPath::sample(
                triplet,
                (0.0, t_end),
                base_step,
                derive_indexed(seed, "ventzell.path", p as i64),
            )?;
            steps
                .iter()
                .map(|&h| {
                    let grid = TimeGrid::new(&path, 0.0, t_end, h)?;
                    let r = ito_ventzell_residual(xi, eta, &path, &grid, opts)?;
                    Ok((r.terminal(), r.sup()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let nf = paths as f64;
    let mut out = VentzellEnsemble { steps: steps.to_vec(), mean: vec![], std_error: vec![], mean_sup: vec![] };
    for k in 0..steps.len() {
        let mean = per_path.iter().map(|v| v[k].0).sum::<f64>() / nf;
        let var = per_path.iter().map(|v| (v[k].0 - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        out.mean.push(mean);
        out.std_error.push((var / nf).sqrt());
        out.mean_sup.push(per_path.iter().map(|v| v[k].1).sum::<f64>() / nf);
    }
    Ok(out)
}
