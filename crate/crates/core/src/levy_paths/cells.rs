use super::grid::TimeGrid;
use super::path::Driver;
use crate::error::Result;

/// A jump inside a [`CellTable`]; its size lives in the table's flat buffer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableJump {
    pub time: f64,
    pub at_start: bool,
    offset: usize,
}

/// Driver increments for every cell of a grid, stored flat for tight loops.
#[derive(Clone, Debug)]
pub struct CellTable {
    nodes: Vec<f64>,
    m: usize,
    mp: usize,
    drift: Vec<f64>,
    gaussian: Vec<f64>,
    dw: Vec<f64>,
    jump_index: Vec<usize>,
    jumps: Vec<TableJump>,
    jump_sizes: Vec<f64>,
}

impl CellTable {
    pub fn new<D: Driver + ?Sized>(driver: &D, grid: &TimeGrid) -> Result<Self> {
        let m = driver.dim();
        let mp = driver.triplet().brownian_dim();
        let n = grid.len() - 1;
        let mut t = Self {
            nodes: grid.nodes().to_vec(),
            m,
            mp,
            drift: Vec::with_capacity(n * m),
            gaussian: Vec::with_capacity(n * m),
            dw: Vec::with_capacity(n * mp),
            jump_index: vec![0],
            jumps: Vec::new(),
            jump_sizes: Vec::new(),
        };
        for w in grid.nodes().windows(2) {
            let c = driver.cell(w[0], w[1])?;
            t.drift.extend(c.drift.iter());
            t.gaussian.extend(c.gaussian.iter());
            t.dw.extend(c.dw.iter());
            for j in &c.jumps {
                t.jumps.push(TableJump { time: j.time, at_start: j.at_start, offset: t.jump_sizes.len() });
                t.jump_sizes.extend(j.size.iter());
            }
            t.jump_index.push(t.jumps.len());
        }
        Ok(t)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn brownian_dim(&self) -> usize {
        self.mp
    }

    pub fn t0(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn t1(&self, i: usize) -> f64 {
        self.nodes[i + 1]
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    /// Effective drift times the cell width.
    pub fn drift(&self, i: usize) -> &[f64] {
        &self.drift[i * self.m..(i + 1) * self.m]
    }

    /// `A ΔW`.
    pub fn gaussian(&self, i: usize) -> &[f64] {
        &self.gaussian[i * self.m..(i + 1) * self.m]
    }

    pub fn dw(&self, i: usize) -> &[f64] {
        &self.dw[i * self.mp..(i + 1) * self.mp]
    }

    pub fn jumps(&self, i: usize) -> &[TableJump] {
        &self.jumps[self.jump_index[i]..self.jump_index[i + 1]]
    }

    pub fn jump_size(&self, j: &TableJump) -> &[f64] {
        &self.jump_sizes[j.offset..j.offset + self.m]
    }

    /// Continuous increment (drift plus Gaussian) written into `out`.
    pub fn continuous_into(&self, i: usize, out: &mut [f64]) {
        for ((o, d), g) in out.iter_mut().zip(self.drift(i)).zip(self.gaussian(i)) {
            *o = d + g;
        }
    }

    pub fn total_jumps(&self) -> usize {
        self.jumps.len()
    }
}
