//! Pullback estimates of random attractors, Lyapunov certificates for the conjugate random
//! equation, transport of attractors through the Marcus cohomology, and the Duffing–van der Pol
//! case study.

mod duffing;
mod lyapunov;

pub use duffing::{
    duffing_c2_decomposition, duffing_displayed_gradient, duffing_l_closed_form, duffing_polynomial_check,
    duffing_to_original, duffing_to_transformed, duffing_van_der_pol_system, DuffingParams, DuffingSystem, Poly,
    PolynomialCheck,
};
pub use lyapunov::{
    marcus_l_field, sphere_directions, verify_c1_c2, verify_lyapunov, z_grid, C1C2Report, Envelope, GradFn, LField,
    LyapunovCertificate, LyapunovScan, ScalarFn,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flows::{integrate_rde, Cocycle};
use crate::levy_paths::{Driver, TimeGrid, TwoSidedPath};
use crate::linalg::Vector;
use crate::marcus::{ou_path, MarcusCohomology, MarcusRde, MarcusSystem};
use crate::table::{numbered, Table};

/// `sup_{a∈A} inf_{b∈B} |a − b|`.
pub fn semi_hausdorff(a: &[Vector], b: &[Vector]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("semi-Hausdorff distance needs non-empty sets".into()));
    }
    Ok(a.par_iter().map(|x| b.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min)).reduce(|| 0.0, f64::max))
}

/// Symmetric Hausdorff distance, the larger of the two semi-distances.
pub fn hausdorff(a: &[Vector], b: &[Vector]) -> Result<f64> {
    Ok(semi_hausdorff(a, b)?.max(semi_hausdorff(b, a)?))
}

/// `sup |x|` over the cloud.
pub fn diameter(cloud: &[Vector]) -> f64 {
    cloud.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while n > 0 {
        r += (n % base) as f64 * f;
        n /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Point `n` of the Halton sequence in `[0,1)^d`.
pub(crate) fn halton(n: u64, d: usize) -> Vec<f64> {
    (0..d).map(|i| radical_inverse(n, PRIMES[i % PRIMES.len()])).collect()
}

/// `n` Halton points of the closed ball of the given radius around 0, by rejection from the cube.
pub fn ball_points(d: usize, radius: f64, n: usize) -> Result<Vec<Vector>> {
    if d == 0 || d > PRIMES.len() || radius < 0.0 {
        return Err(Error::Parameter(format!("ball points need 1 ≤ d ≤ {} and radius ≥ 0", PRIMES.len())));
    }
    let mut out = Vec::with_capacity(n);
    let mut k = 1;
    while out.len() < n {
        let u = halton(k, d);
        k += 1;
        let x = Vector::from_iterator(d, u.iter().map(|v| (2.0 * v - 1.0) * radius));
        if x.norm() <= radius {
            out.push(x);
        }
    }
    Ok(out)
}

/// Moves a whole cloud along a grid. Diverged points come back as `None`.
pub trait CloudFlow: Sync {
    fn flow_cloud(&self, driver: &dyn Driver, cloud: &[Vector], grid: &TimeGrid) -> Result<Vec<Option<Vector>>>;
}

/// A cocycle applied point by point.
pub struct Pointwise<C>(pub C);

impl<C: Cocycle> CloudFlow for Pointwise<C> {
    fn flow_cloud(&self, driver: &dyn Driver, cloud: &[Vector], grid: &TimeGrid) -> Result<Vec<Option<Vector>>> {
        cloud
            .par_iter()
            .map(|x| match self.0.run(driver, x, grid) {
                Ok(r) => Ok(Some(r.last().clone())),
                Err(Error::Divergence { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }
}

/// The conjugate random equation `ψ̄` of a Marcus system; `Z` is computed once per grid.
pub struct MarcusRdeFlow<'a> {
    pub sys: &'a MarcusSystem,
    pub mu: f64,
    pub tail_horizon: f64,
}

impl CloudFlow for MarcusRdeFlow<'_> {
    fn flow_cloud(&self, driver: &dyn Driver, cloud: &[Vector], grid: &TimeGrid) -> Result<Vec<Option<Vector>>> {
        let ou = ou_path(driver, self.mu, grid, self.tail_horizon)?;
        let field = MarcusRde { sys: self.sys, ou: &ou };
        cloud
            .par_iter()
            .map(|y| match integrate_rde(&field, y, grid) {
                Ok(r) => Ok(Some(r.last().clone())),
                Err(Error::Divergence { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }
}

/// A flowed cloud and the number of points lost to divergence.
#[derive(Clone, Debug)]
pub struct CloudResult {
    pub points: Vec<Vector>,
    pub dropped: usize,
}

/// `φ_t(θ_{−t}ω', cloud)` with `ω' = θ_{end}ω`: integration over `[end − t, end]` on the original path.
pub fn pullback_cloud_to<F: CloudFlow + ?Sized>(
    flow: &F,
    path: &TwoSidedPath,
    cloud: &[Vector],
    end: f64,
    t: f64,
    step: f64,
) -> Result<CloudResult> {
    if cloud.is_empty() {
        return Err(Error::Parameter("empty cloud".into()));
    }
    if t < 0.0 {
        return Err(Error::Parameter(format!("pullback time must be ≥ 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(CloudResult { points: cloud.to_vec(), dropped: 0 });
    }
    let grid = TimeGrid::new(path, end - t, end, step)?;
    let moved = flow.flow_cloud(path, cloud, &grid)?;
    let dropped = moved.iter().filter(|p| p.is_none()).count();
    let points: Vec<Vector> = moved.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(Error::Divergence { t: end, last_finite_t: end - t });
    }
    Ok(CloudResult { points, dropped })
}

/// `φ_t(θ_{−t}ω, cloud)`, integrating from `−t` to `0` along the original path.
pub fn pullback_cloud<F: CloudFlow + ?Sized>(
    flow: &F,
    path: &TwoSidedPath,
    cloud: &[Vector],
    t: f64,
    step: f64,
) -> Result<CloudResult> {
    pullback_cloud_to(flow, path, cloud, 0.0, t, step)
}

#[derive(Clone, Debug)]
pub struct PullbackSettings {
    pub ball_radius: f64,
    pub n_points: usize,
    pub schedule: Vec<f64>,
    pub tol: f64,
    pub step: f64,
}

impl PullbackSettings {
    fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() || self.schedule.windows(2).any(|w| w[1] <= w[0]) || self.schedule[0] <= 0.0 {
            return Err(Error::Parameter("pullback schedule must be positive and increasing".into()));
        }
        if self.n_points == 0 || !(self.step > 0.0) || !(self.tol > 0.0) {
            return Err(Error::Parameter("pullback needs n_points > 0, step > 0 and tol > 0".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        *self.schedule.last().expect("validated")
    }
}

#[derive(Clone, Debug)]
pub struct PullbackRun {
    pub times: Vec<f64>,
    pub clouds: Vec<Vec<Vector>>,
    pub diameters: Vec<f64>,
    /// Hausdorff distance to the previous cloud (the initial ball for the first entry).
    pub successive_hausdorff: Vec<f64>,
    pub dropped: usize,
    /// First schedule time from which every successive distance stays below `tol`.
    pub converged_at: Option<f64>,
    pub converged: bool,
}

impl PullbackRun {
    /// The attractor estimate `A(ω)`.
    pub fn final_cloud(&self) -> &[Vector] {
        self.clouds.last().expect("non-empty run")
    }

    /// Columns `t_pullback, point_id, x_1..x_d`.
    pub fn clouds_table(&self) -> Table {
        let d = self.final_cloud()[0].len();
        let mut header = vec!["t_pullback".to_string(), "point_id".to_string()];
        header.extend(numbered("x", d));
        let mut t = Table::new(header);
        for (k, cloud) in self.clouds.iter().enumerate() {
            for (i, x) in cloud.iter().enumerate() {
                let mut row = vec![self.times[k], i as f64];
                row.extend(x.iter());
                t.push(row);
            }
        }
        t
    }

    /// Columns `t_pullback, diameter, hausdorff_step`.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(["t_pullback", "diameter", "hausdorff_step"]);
        for k in 0..self.times.len() {
            t.push(vec![self.times[k], self.diameters[k], self.successive_hausdorff[k]]);
        }
        t
    }
}

fn run_schedule<F: CloudFlow + ?Sized>(
    flow: &F,
    path: &TwoSidedPath,
    initial: &[Vector],
    end: f64,
    settings: &PullbackSettings,
) -> Result<PullbackRun> {
    settings.validate()?;
    let mut clouds: Vec<Vec<Vector>> = Vec::with_capacity(settings.schedule.len());
    let mut successive = Vec::with_capacity(settings.schedule.len());
    let mut dropped = 0;
    for &t in &settings.schedule {
        let r = pullback_cloud_to(flow, path, initial, end, t, settings.step)?;
        dropped += r.dropped;
        let prev = clouds.last().map(|c| c.as_slice()).unwrap_or(initial);
        successive.push(hausdorff(&r.points, prev)?);
        clouds.push(r.points);
    }
    let mut converged_at = None;
    for k in (0..successive.len()).rev() {
        if successive[k] < settings.tol {
            converged_at = Some(settings.schedule[k]);
        } else {
            break;
        }
    }
    Ok(PullbackRun {
        times: settings.schedule.clone(),
        diameters: clouds.iter().map(|c| diameter(c)).collect(),
        clouds,
        successive_hausdorff: successive,
        dropped,
        converged: converged_at.is_some(),
        converged_at,
    })
}

/// Pulls a quasi-random ball back along the schedule; the last cloud estimates `A(ω)`.
pub fn estimate_attractor<F: CloudFlow + ?Sized>(
    flow: &F,
    path: &TwoSidedPath,
    dim: usize,
    settings: &PullbackSettings,
) -> Result<PullbackRun> {
    let ball = ball_points(dim, settings.ball_radius, settings.n_points)?;
    run_schedule(flow, path, &ball, 0.0, settings)
}

/// Same as [`estimate_attractor`] at the base point `θ_sω`.
pub fn estimate_attractor_at<F: CloudFlow + ?Sized>(
    flow: &F,
    path: &TwoSidedPath,
    dim: usize,
    s: f64,
    settings: &PullbackSettings,
) -> Result<PullbackRun> {
    let ball = ball_points(dim, settings.ball_radius, settings.n_points)?;
    run_schedule(flow, path, &ball, s, settings)
}

#[derive(Clone, Debug)]
pub struct InvarianceReport {
    pub t: f64,
    /// `dist(φ_t(ω, cloud), A(θ_tω))`.
    pub residual: f64,
    pub image: Vec<Vector>,
    pub target: Vec<Vector>,
}

/// Pushes `cloud` forward over `[0, t]` and compares it with a fresh pullback estimate at `θ_tω`
/// that uses the longest pullback time of `settings`.
pub fn invariance_check<F: CloudFlow + ?Sized>(
    flow: &F,
    path: &TwoSidedPath,
    cloud: &[Vector],
    t: f64,
    settings: &PullbackSettings,
) -> Result<InvarianceReport> {
    settings.validate()?;
    if t == 0.0 {
        return Ok(InvarianceReport { t, residual: 0.0, image: cloud.to_vec(), target: cloud.to_vec() });
    }
    if t < 0.0 {
        return Err(Error::Parameter("invariance check needs t ≥ 0".into()));
    }
    let image = pullback_cloud_to(flow, path, cloud, t, t, settings.step)?.points;
    let d = cloud.first().map(|x| x.len()).ok_or_else(|| Error::Parameter("empty cloud".into()))?;
    let ball = ball_points(d, settings.ball_radius, settings.n_points)?;
    let target = pullback_cloud_to(flow, path, &ball, t, settings.horizon(), settings.step)?.points;
    Ok(InvarianceReport { t, residual: semi_hausdorff(&image, &target)?, image, target })
}

#[derive(Clone, Debug)]
pub struct TemperednessReport {
    pub slope: f64,
    pub intercept: f64,
    pub betas: Vec<f64>,
    pub passes: Vec<bool>,
}

impl TemperednessReport {
    pub fn pass(&self) -> bool {
        self.passes.iter().all(|&p| p)
    }
}

/// Least-squares fit of `log d(t)` against `t`; passes for `β` iff the slope is below `β`.
pub fn temperedness_check(times: &[f64], diameters: &[f64], betas: &[f64]) -> Result<TemperednessReport> {
    if times.len() != diameters.len() || times.len() < 10 {
        return Err(Error::Parameter("temperedness needs at least 10 matching samples".into()));
    }
    if betas.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::Parameter("β must be positive".into()));
    }
    let logs: Vec<f64> = diameters.iter().map(|&d| d.max(f64::MIN_POSITIVE).ln()).collect();
    let n = times.len() as f64;
    let mt = times.iter().sum::<f64>() / n;
    let ml = logs.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - mt).powi(2)).sum();
    let sxy: f64 = times.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(TemperednessReport {
        slope,
        intercept: ml - slope * mt,
        betas: betas.to_vec(),
        passes: betas.iter().map(|&b| slope < b).collect(),
    })
}

/// `d(H̄_0(θ_{−t}ω, K)) = sup_{x∈K} |Φ(Z_{−t}, x)|` at every node of the cohomology grid with `t ≤ 0`,
/// returned as `(t, d)` pairs with `t ≥ 0` the pullback time.
pub fn cohomology_image_diameters(coh: &MarcusCohomology, cloud: &[Vector]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ts = Vec::new();
    let mut ds = Vec::new();
    for (k, &t) in coh.nodes().iter().enumerate() {
        if t > 0.0 {
            continue;
        }
        let mut d: f64 = 0.0;
        for x in cloud {
            d = d.max(coh.h_at(k, x)?.norm());
        }
        ts.push(-t);
        ds.push(d);
    }
    Ok((ts, ds))
}

/// `{H̄_t(ω, a) : a ∈ cloud}` at node `k`.
pub fn map_cloud_at(coh: &MarcusCohomology, k: usize, cloud: &[Vector]) -> Result<Vec<Vector>> {
    cloud.iter().map(|a| coh.h_at(k, a)).collect()
}

/// `B(ω) = H̄_0(ω, A(ω))`; the cohomology grid must contain `t = 0`.
pub fn map_attractor_through_cohomology(coh: &MarcusCohomology, cloud: &[Vector]) -> Result<Vec<Vector>> {
    let k =
        coh.ou.grid.index_of(0.0).ok_or_else(|| Error::Parameter("cohomology grid does not contain t = 0".into()))?;
    map_cloud_at(coh, k, cloud)
}
