use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::triplet::LevyTriplet;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::{indexed_stream, stream};

/// One jump of the compound-Poisson part.
#[derive(Clone, Debug, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub size: Vector,
}

/// Relative tolerance (in units of the base step) under which two times are the same node.
pub(crate) const SNAP: f64 = 1e-7;

/// One realization ω of the two-sided process on a finite horizon.
///
/// For `t ≥ 0`, `L_t = b t + A W_t + Σ_{0<τ≤t} u_τ` (right-continuous);
/// for `t < 0`, `L_t = b t + A W_t − Σ_{t≤τ<0} u_τ` (left-continuous).
#[derive(Clone, Debug)]
pub struct TwoSidedPath {
    triplet: LevyTriplet,
    seed: u64,
    step: f64,
    k_min: i64,
    k_max: i64,
    drift: Vector,
    jumps_pos: Vec<Jump>,
    jumps_neg: Vec<Jump>,
    // prefix_pos[i] = Σ_{j<i} jumps_pos[j]; jumps_neg is sorted increasingly in time
    prefix_pos: Vec<Vector>,
    prefix_neg: Vec<Vector>,
    w_nodes: Vec<Vector>,
    // Brownian values at jump times that are not base nodes, sorted by time
    w_extra: Vec<(f64, Vector)>,
    all_jump_times: Vec<f64>,
}

fn draw_gaussian<R: Rng + ?Sized>(dim: usize, sd: f64, rng: &mut R) -> Vector {
    Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal) * sd)
}

impl TwoSidedPath {
    /// Samples a path on `horizon = (t_min, t_max)` with Brownian cells of width `base_step`.
    pub fn sample(triplet: &LevyTriplet, horizon: (f64, f64), base_step: f64, seed: u64) -> Result<Self> {
        let (k_min, k_max) = Self::cell_range(triplet, horizon, base_step)?;
        let (t_lo, t_hi) = (k_min as f64 * base_step, k_max as f64 * base_step);
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        if triplet.has_jumps() {
            let exp = Exp::new(triplet.jump_rate).map_err(|e| Error::Parameter(e.to_string()))?;
            let mut rng = stream(seed, "levy.jumps.pos");
            let mut t = 0.0;
            loop {
                t += exp.sample(&mut rng);
                if t > t_hi {
                    break;
                }
                pos.push(Jump { time: t, size: triplet.sample_jump(&mut rng) });
            }
            let mut rng = stream(seed, "levy.jumps.neg");
            let mut t = 0.0;
            loop {
                t -= exp.sample(&mut rng);
                if t < t_lo {
                    break;
                }
                neg.push(Jump { time: t, size: triplet.sample_jump(&mut rng) });
            }
        }
        Self::assemble(triplet, base_step, seed, k_min, k_max, pos, neg)
    }

    /// Path with the given jump record instead of sampled jumps; the Brownian part is still
    /// drawn from `seed`.
    pub fn with_jumps(
        triplet: &LevyTriplet,
        horizon: (f64, f64),
        base_step: f64,
        seed: u64,
        jumps: Vec<(f64, Vector)>,
    ) -> Result<Self> {
        let (k_min, k_max) = Self::cell_range(triplet, horizon, base_step)?;
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (time, size) in jumps {
            if size.len() != triplet.dim() {
                return Err(Error::Parameter("jump size has wrong dimension".into()));
            }
            if time > 0.0 {
                pos.push(Jump { time, size });
            } else if time < 0.0 {
                neg.push(Jump { time, size });
            } else {
                return Err(Error::Parameter("no jump may occur at t = 0".into()));
            }
        }
        Self::assemble(triplet, base_step, seed, k_min, k_max, pos, neg)
    }

    fn cell_range(triplet: &LevyTriplet, horizon: (f64, f64), step: f64) -> Result<(i64, i64)> {
        triplet.validate()?;
        let (lo, hi) = horizon;
        if !(lo <= 0.0 && 0.0 <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Parameter(format!("horizon [{lo}, {hi}] must contain 0")));
        }
        if !(step > 0.0) {
            return Err(Error::Parameter("base step must be positive".into()));
        }
        let k_min = (lo / step - SNAP).floor() as i64;
        let k_max = (hi / step + SNAP).ceil() as i64;
        Ok((k_min.min(0), k_max.max(0)))
    }

    fn assemble(
        triplet: &LevyTriplet,
        step: f64,
        seed: u64,
        k_min: i64,
        k_max: i64,
        mut pos: Vec<Jump>,
        mut neg: Vec<Jump>,
    ) -> Result<Self> {
        let (t_lo, t_hi) = (k_min as f64 * step, k_max as f64 * step);
        pos.retain(|j| j.time <= t_hi);
        neg.retain(|j| j.time >= t_lo);
        pos.sort_by(|a, b| a.time.total_cmp(&b.time));
        neg.sort_by(|a, b| a.time.total_cmp(&b.time));
        let merge = |v: Vec<Jump>| {
            let mut out: Vec<Jump> = Vec::with_capacity(v.len());
            for j in v {
                match out.last_mut() {
                    Some(last) if (j.time - last.time).abs() <= SNAP * step => last.size += j.size,
                    _ => out.push(j),
                }
            }
            out
        };
        let pos = merge(pos);
        let neg = merge(neg);
        let m = triplet.dim();
        let prefix = |v: &[Jump]| {
            let mut acc = vec![Vector::zeros(m)];
            for j in v {
                let next = acc.last().unwrap() + &j.size;
                acc.push(next);
            }
            acc
        };
        let prefix_pos = prefix(&pos);
        let prefix_neg = prefix(&neg);

        let mp = triplet.brownian_dim();
        let n_cells = (k_max - k_min) as usize;
        let mut dw = Vec::with_capacity(n_cells);
        let mut rngs = Vec::with_capacity(n_cells);
        for k in k_min..k_max {
            let mut rng = indexed_stream(seed, "levy.brownian", k);
            dw.push(draw_gaussian(mp, step.sqrt(), &mut rng));
            rngs.push(rng);
        }
        let mut w_nodes = vec![Vector::zeros(mp); n_cells + 1];
        let zero = (-k_min) as usize;
        for i in zero..n_cells {
            w_nodes[i + 1] = &w_nodes[i] + &dw[i];
        }
        for i in (0..zero).rev() {
            w_nodes[i] = &w_nodes[i + 1] - &dw[i];
        }

        let mut all_jump_times: Vec<f64> = neg.iter().chain(pos.iter()).map(|j| j.time).collect();
        all_jump_times.sort_by(f64::total_cmp);

        // Brownian bridge through the jump times inside each cell, drawn left to right from the
        // cell's own stream after its increment.
        let mut w_extra = Vec::new();
        if mp > 0 {
            let mut idx = 0;
            while idx < all_jump_times.len() {
                let t = all_jump_times[idx];
                let k = (t / step).floor() as i64;
                let ci = (k - k_min) as usize;
                let left = k as f64 * step;
                let right = left + step;
                let mut inner = Vec::new();
                while idx < all_jump_times.len() && all_jump_times[idx] < right {
                    let s = all_jump_times[idx];
                    if (s - left).abs() > SNAP * step && (right - s).abs() > SNAP * step {
                        inner.push(s);
                    }
                    idx += 1;
                }
                if ci >= n_cells {
                    continue;
                }
                let rng = &mut rngs[ci];
                let (mut ta, mut wa) = (left, w_nodes[ci].clone());
                let wb = &w_nodes[ci + 1];
                for s in inner {
                    let frac = (s - ta) / (right - ta);
                    let mean = &wa + (wb - &wa) * frac;
                    let var = (s - ta) * (right - s) / (right - ta);
                    let ws = mean + draw_gaussian(mp, var.max(0.0).sqrt(), rng);
                    w_extra.push((s, ws.clone()));
                    ta = s;
                    wa = ws;
                }
            }
        }

        Ok(Self {
            triplet: triplet.clone(),
            seed,
            step,
            k_min,
            k_max,
            drift: triplet.effective_drift(),
            jumps_pos: pos,
            jumps_neg: neg,
            prefix_pos,
            prefix_neg,
            w_nodes,
            w_extra,
            all_jump_times,
        })
    }

    /// Resamples the path on a base step `step / factor`. Coarse nodes, jumps and the Brownian
    /// values already stored are kept; new values are filled in by Brownian bridges.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Parameter("refinement factor must be at least 1".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let fine = self.step / factor as f64;
        let f = factor as i64;
        let (k_min, k_max) = (self.k_min * f, self.k_max * f);
        let mp = self.triplet.brownian_dim();
        let n = (k_max - k_min) as usize;
        let mut w_nodes = vec![Vector::zeros(mp); n + 1];
        for (ci, k) in (self.k_min..self.k_max).enumerate() {
            let left = k as f64 * self.step;
            // known points in this coarse cell: left node, stored jump values, right node
            let mut known: Vec<(f64, Vector)> = vec![(left, self.w_nodes[ci].clone())];
            known.extend(self.w_extra.iter().filter(|(s, _)| *s > left && *s < left + self.step).cloned());
            known.push((left + self.step, self.w_nodes[ci + 1].clone()));
            let mut rng = indexed_stream(self.seed, &format!("levy.refine.{factor}"), k);
            let mut seg = 0;
            let base = ci * factor;
            w_nodes[base] = self.w_nodes[ci].clone();
            let mut prev = (left, self.w_nodes[ci].clone());
            for j in 1..factor {
                let s = (k * f + j as i64) as f64 * fine;
                while known[seg + 1].0 <= s {
                    seg += 1;
                    prev = known[seg].clone();
                }
                let (tb, wb) = &known[seg + 1];
                let frac = (s - prev.0) / (tb - prev.0);
                let mean = &prev.1 + (wb - &prev.1) * frac;
                let var = (s - prev.0) * (tb - s) / (tb - prev.0);
                let ws = mean + draw_gaussian(mp, var.max(0.0).sqrt(), &mut rng);
                w_nodes[base + j] = ws.clone();
                prev = (s, ws);
            }
        }
        w_nodes[n] = self.w_nodes[self.w_nodes.len() - 1].clone();
        // every w_extra value stays valid; those landing on fine nodes are redundant but harmless
        Ok(Self { step: fine, k_min, k_max, w_nodes, ..self.clone() })
    }

    pub fn triplet(&self) -> &LevyTriplet {
        &self.triplet
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.triplet.dim()
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.k_min as f64 * self.step, self.k_max as f64 * self.step)
    }

    pub fn jumps_pos(&self) -> &[Jump] {
        &self.jumps_pos
    }

    pub fn jumps_neg(&self) -> &[Jump] {
        &self.jumps_neg
    }

    /// Brownian increment of cell `[k Δt, (k+1) Δt]`.
    pub fn brownian_increment(&self, k: i64) -> Option<Vector> {
        if k < self.k_min || k >= self.k_max {
            return None;
        }
        let i = (k - self.k_min) as usize;
        Some(&self.w_nodes[i + 1] - &self.w_nodes[i])
    }

    fn tol(&self) -> f64 {
        SNAP * self.step
    }

    /// Maps `t` onto the nearest jump time or base node when within the snapping tolerance.
    pub fn snap(&self, t: f64) -> f64 {
        let tol = self.tol();
        let i = self.all_jump_times.partition_point(|&s| s < t);
        for j in [i.wrapping_sub(1), i] {
            if let Some(&s) = self.all_jump_times.get(j) {
                if (s - t).abs() <= tol {
                    return s;
                }
            }
        }
        let k = (t / self.step).round();
        let node = k * self.step;
        if (node - t).abs() <= tol {
            node
        } else {
            t
        }
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.horizon();
        if t < lo - self.tol() || t > hi + self.tol() || !t.is_finite() {
            return Err(Error::Range { t, lo, hi });
        }
        Ok(())
    }

    /// Sum of jump sizes attributed to `L_t` (already snapped `t`).
    fn jump_part(&self, t: f64) -> Vector {
        if t > 0.0 {
            let n = self.jumps_pos.partition_point(|j| j.time <= t);
            self.prefix_pos[n].clone()
        } else if t < 0.0 {
            let n = self.jumps_neg.partition_point(|j| j.time < t);
            let total = &self.prefix_neg[self.jumps_neg.len()];
            -(total - &self.prefix_neg[n])
        } else {
            Vector::zeros(self.dim())
        }
    }

    fn brownian_snapped(&self, t: f64) -> Vector {
        let mp = self.triplet.brownian_dim();
        if mp == 0 {
            return Vector::zeros(0);
        }
        let (lo, hi) = self.horizon();
        let t = t.clamp(lo, hi);
        let x = t / self.step;
        let kr = x.round();
        if (x - kr).abs() * self.step <= self.tol() {
            let i = ((kr as i64) - self.k_min).clamp(0, self.w_nodes.len() as i64 - 1) as usize;
            return self.w_nodes[i].clone();
        }
        let k = x.floor() as i64;
        let i = ((k - self.k_min) as usize).min(self.w_nodes.len() - 2);
        let left = k as f64 * self.step;
        let right = left + self.step;
        let mut ta = left;
        let mut wa = &self.w_nodes[i];
        let mut tb = right;
        let mut wb = &self.w_nodes[i + 1];
        let start = self.w_extra.partition_point(|(s, _)| *s <= left);
        for (s, ws) in &self.w_extra[start..] {
            if *s >= right {
                break;
            }
            if *s == t {
                return ws.clone();
            }
            if *s < t {
                ta = *s;
                wa = ws;
            } else {
                tb = *s;
                wb = ws;
                break;
            }
        }
        wa + (wb - wa) * ((t - ta) / (tb - ta))
    }

    /// `L_t` with the side convention (càdlàg for `t ≥ 0`, càglàd for `t < 0`).
    pub fn evaluate(&self, t: f64) -> Result<Vector> {
        self.check_range(t)?;
        let t = self.snap(t);
        if t == 0.0 {
            return Ok(Vector::zeros(self.dim()));
        }
        Ok(self.value_snapped(t))
    }

    fn value_snapped(&self, t: f64) -> Vector {
        let mut v = &self.drift * t + self.jump_part(t);
        if self.triplet.brownian_dim() > 0 {
            v += &self.triplet.diffusion * self.brownian_snapped(t);
        }
        v
    }

    /// Left limit `L_{t−}` for `t > 0`, right limit `L_{t+}` for `t < 0`.
    pub fn evaluate_other_side(&self, t: f64) -> Result<Vector> {
        self.check_range(t)?;
        let t = self.snap(t);
        let mut v = self.value_snapped(t);
        if t > 0.0 {
            if let Some(j) = self.jumps_pos.iter().find(|j| j.time == t) {
                v -= &j.size;
            }
        } else if t < 0.0 {
            if let Some(j) = self.jumps_neg.iter().find(|j| j.time == t) {
                v += &j.size;
            }
        }
        Ok(v)
    }

    pub fn brownian(&self, t: f64) -> Result<Vector> {
        self.check_range(t)?;
        Ok(self.brownian_snapped(self.snap(t)))
    }

    /// All jump times in `[t0, t1]`, sorted.
    pub fn jump_times_in(&self, t0: f64, t1: f64) -> &[f64] {
        let a = self.all_jump_times.partition_point(|&s| s < t0);
        let b = self.all_jump_times.partition_point(|&s| s <= t1);
        &self.all_jump_times[a..b.max(a)]
    }

    /// Increments over the cell `[t0, t1]` with the jumps it owns: a positive-time jump belongs
    /// to the cell whose right end it is or lies inside, a negative-time jump to the cell whose
    /// left end it is or lies inside.
    pub fn cell(&self, t0: f64, t1: f64) -> Result<Cell> {
        self.check_range(t0)?;
        self.check_range(t1)?;
        let (a, b) = (self.snap(t0), self.snap(t1));
        let mp = self.triplet.brownian_dim();
        let dw = if mp > 0 { self.brownian_snapped(b) - self.brownian_snapped(a) } else { Vector::zeros(0) };
        let gaussian = if mp > 0 { &self.triplet.diffusion * &dw } else { Vector::zeros(self.dim()) };
        let mut jumps = Vec::new();
        let lo = self.jumps_neg.partition_point(|j| j.time < a);
        for j in &self.jumps_neg[lo..] {
            if j.time >= b {
                break;
            }
            jumps.push(CellJump { time: j.time, size: j.size.clone(), at_start: true });
        }
        let lo = self.jumps_pos.partition_point(|j| j.time <= a);
        for j in &self.jumps_pos[lo..] {
            if j.time > b {
                break;
            }
            jumps.push(CellJump { time: j.time, size: j.size.clone(), at_start: false });
        }
        Ok(Cell { t0: a, t1: b, drift: &self.drift * (b - a), dw, gaussian, jumps })
    }

    /// `θ_s ω`.
    pub fn shift(&self, s: f64) -> Result<ShiftView<'_>> {
        self.check_range(s)?;
        Ok(ShiftView { base: self, offset: self.snap(s) })
    }

    /// Identity view, handy where a [`Driver`] is expected.
    pub fn view(&self) -> ShiftView<'_> {
        ShiftView { base: self, offset: 0.0 }
    }
}

/// A jump owned by a cell. `at_start` jumps (negative time) act before the continuous increment
/// when stepping forward, the others after it.
#[derive(Clone, Debug, PartialEq)]
pub struct CellJump {
    pub time: f64,
    pub size: Vector,
    pub at_start: bool,
}

/// Increments of the driver over one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub t0: f64,
    pub t1: f64,
    /// Effective drift times the cell width.
    pub drift: Vector,
    pub dw: Vector,
    /// `A ΔW`.
    pub gaussian: Vector,
    pub jumps: Vec<CellJump>,
}

impl Cell {
    pub fn dt(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Increment of the continuous part.
    pub fn continuous(&self) -> Vector {
        &self.drift + &self.gaussian
    }

    pub fn total(&self) -> Vector {
        let mut v = self.continuous();
        for j in &self.jumps {
            v += &j.size;
        }
        v
    }

    pub fn jumps_before(&self) -> impl Iterator<Item = &CellJump> {
        self.jumps.iter().filter(|j| j.at_start)
    }

    pub fn jumps_after(&self) -> impl Iterator<Item = &CellJump> {
        self.jumps.iter().filter(|j| !j.at_start)
    }

    fn shifted(mut self, s: f64) -> Self {
        if s != 0.0 {
            self.t0 -= s;
            self.t1 -= s;
            for j in &mut self.jumps {
                j.time -= s;
            }
        }
        self
    }
}

/// `θ_s ω` as a view on the base path: `L'_t = L_{s+t} − L_s`.
#[derive(Clone, Copy, Debug)]
pub struct ShiftView<'a> {
    base: &'a TwoSidedPath,
    offset: f64,
}

impl<'a> ShiftView<'a> {
    pub fn base(&self) -> &'a TwoSidedPath {
        self.base
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn shift(&self, s: f64) -> Result<ShiftView<'a>> {
        self.base.shift(self.offset + s)
    }
}

/// Anything that can drive an integrator: a path or a shifted view of one.
pub trait Driver: Sync {
    fn path(&self) -> &TwoSidedPath;

    /// Base-time offset `s` of this view.
    fn offset(&self) -> f64;

    fn triplet(&self) -> &LevyTriplet {
        self.path().triplet()
    }

    fn dim(&self) -> usize {
        self.path().dim()
    }

    fn base_step(&self) -> f64 {
        self.path().base_step()
    }

    fn horizon(&self) -> (f64, f64) {
        let (lo, hi) = self.path().horizon();
        (lo - self.offset(), hi - self.offset())
    }

    fn evaluate(&self, t: f64) -> Result<Vector> {
        let s = self.offset();
        if s == 0.0 {
            return self.path().evaluate(t);
        }
        Ok(self.path().evaluate(s + t)? - self.path().evaluate(s)?)
    }

    fn brownian(&self, t: f64) -> Result<Vector> {
        let s = self.offset();
        if s == 0.0 {
            return self.path().brownian(t);
        }
        Ok(self.path().brownian(s + t)? - self.path().brownian(s)?)
    }

    fn cell(&self, t0: f64, t1: f64) -> Result<Cell> {
        let s = self.offset();
        Ok(self.path().cell(s + t0, s + t1)?.shifted(s))
    }

    /// Jump times in `[t0, t1]` in this view's coordinates.
    fn jump_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        let s = self.offset();
        self.path().jump_times_in(s + t0, s + t1).iter().map(|&u| u - s).collect()
    }

    fn diffusion(&self) -> &Matrix {
        &self.triplet().diffusion
    }
}

impl Driver for TwoSidedPath {
    fn path(&self) -> &TwoSidedPath {
        self
    }

    fn offset(&self) -> f64 {
        0.0
    }
}

impl Driver for ShiftView<'_> {
    fn path(&self) -> &TwoSidedPath {
        self.base
    }

    fn offset(&self) -> f64 {
        self.offset
    }
}

impl<D: Driver + ?Sized> Driver for &D {
    fn path(&self) -> &TwoSidedPath {
        (**self).path()
    }

    fn offset(&self) -> f64 {
        (**self).offset()
    }
}
