use super::path::{Driver, SNAP};
use crate::error::{Error, Result};

/// Jump-adapted time grid: multiples of the step, both endpoints, 0 when inside the range, and
/// every jump time of the attached driver.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    step: f64,
}

impl TimeGrid {
    pub fn new<D: Driver + ?Sized>(driver: &D, t_start: f64, t_end: f64, step: f64) -> Result<Self> {
        let (lo, hi) = driver.horizon();
        let tol = SNAP * driver.base_step();
        if t_start < lo - tol || t_end > hi + tol {
            return Err(Error::Range { t: if t_start < lo { t_start } else { t_end }, lo, hi });
        }
        let jumps = driver.jump_times(t_start, t_end);
        Self::build(t_start, t_end, step, &jumps, tol)
    }

    /// Grid without jump adaptation.
    pub fn uniform(t_start: f64, t_end: f64, step: f64) -> Result<Self> {
        Self::build(t_start, t_end, step, &[], SNAP * step)
    }

    /// Grid from explicit nodes (sorted and deduplicated).
    pub fn from_nodes(mut nodes: Vec<f64>) -> Result<Self> {
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        if nodes.len() < 2 || nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::Parameter("a grid needs at least two finite nodes".into()));
        }
        let step = nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        Ok(Self { nodes, step })
    }

    fn build(t_start: f64, t_end: f64, step: f64, jumps: &[f64], tol: f64) -> Result<Self> {
        if !(step > 0.0) || !(t_end > t_start) {
            return Err(Error::Parameter(format!(
                "grid needs step > 0 and t_end > t_start (got {step}, [{t_start}, {t_end}])"
            )));
        }
        let k0 = (t_start / step - SNAP).ceil() as i64;
        let k1 = (t_end / step + SNAP).floor() as i64;
        let mut nodes: Vec<f64> = (k0..=k1).map(|k| k as f64 * step).collect();
        nodes.push(t_start);
        nodes.push(t_end);
        if t_start < 0.0 && t_end > 0.0 {
            nodes.push(0.0);
        }
        nodes.sort_by(f64::total_cmp);
        let mut merged: Vec<f64> = Vec::with_capacity(nodes.len() + jumps.len());
        for t in nodes {
            match merged.last() {
                Some(&last) if t - last <= tol => {}
                _ => merged.push(t),
            }
        }
        // exact endpoints win over nearby multiples
        if let Some(first) = merged.first_mut() {
            *first = t_start;
        }
        if let Some(last) = merged.last_mut() {
            *last = t_end;
        }
        for &j in jumps {
            if j <= t_start + tol || j >= t_end - tol {
                continue;
            }
            let i = merged.partition_point(|&t| t < j);
            let near = |k: usize| merged.get(k).is_some_and(|&t| (t - j).abs() <= tol);
            if near(i) || (i > 0 && near(i - 1)) {
                continue;
            }
            merged.insert(i, j);
        }
        Ok(Self { nodes: merged, step })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Index of the node equal to `t` up to the snapping tolerance.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = SNAP * self.step;
        let i = self.nodes.partition_point(|&s| s < t - tol);
        self.nodes.get(i).filter(|&&s| (s - t).abs() <= tol).map(|_| i)
    }

    /// Sub-grid of the nodes inside `[t0, t1]`.
    pub fn restrict(&self, t0: f64, t1: f64) -> Result<Self> {
        let tol = SNAP * self.step;
        let nodes: Vec<f64> = self.nodes.iter().copied().filter(|&t| t >= t0 - tol && t <= t1 + tol).collect();
        if nodes.len() < 2 {
            return Err(Error::Parameter(format!("restriction to [{t0}, {t1}] leaves fewer than two nodes")));
        }
        Ok(Self { nodes, step: self.step })
    }

    /// This grid with extra nodes merged in (nodes closer than the snapping tolerance collapse).
    pub fn merged(&self, extra: &[f64]) -> Self {
        let tol = SNAP * self.step;
        let mut nodes = self.nodes.clone();
        for &t in extra {
            let i = nodes.partition_point(|&s| s < t);
            let near = |k: usize| nodes.get(k).is_some_and(|&s| (s - t).abs() <= tol);
            if !(near(i) || (i > 0 && near(i - 1))) {
                nodes.insert(i, t);
            }
        }
        Self { nodes, step: self.step }
    }

    /// The same grid seen from a driver shifted by `s`.
    pub fn shifted(&self, s: f64) -> Self {
        Self { nodes: self.nodes.iter().map(|t| t - s).collect(), step: self.step }
    }
}
