use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Tensor-product lattice of anchor points in ℝ^d, used for multilinear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorLattice {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
}

/// Corner indices and weights of the lattice cell containing a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    pub corners: Vec<(usize, f64)>,
    pub extrapolated: bool,
}

impl AnchorLattice {
    /// Axes are sorted and deduplicated; each needs at least two values.
    pub fn new(mut axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Parameter("anchor lattice needs at least one axis".into()));
        }
        for a in &mut axes {
            a.sort_by(f64::total_cmp);
            a.dedup();
            if a.len() < 2 || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter("each lattice axis needs at least two finite values".into()));
            }
        }
        let mut strides = vec![1; axes.len()];
        for k in (0..axes.len() - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].len();
        }
        Ok(Self { axes, strides })
    }

    /// `n[k]` equally spaced values on `[lo[k], hi[k]]` per axis.
    pub fn uniform(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != n.len() {
            return Err(Error::Parameter("lattice bounds and counts must have equal lengths".into()));
        }
        let axes = lo
            .iter()
            .zip(hi)
            .zip(n)
            .map(|((&a, &b), &k)| {
                let k = k.max(2);
                (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
            })
            .collect();
        Self::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> Vector {
        Vector::from_fn(self.dim(), |k, _| self.axes[k][(idx / self.strides[k]) % self.axes[k].len()])
    }

    pub fn points(&self) -> Vec<Vector> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter().zip(&self.axes).all(|(v, a)| *v >= a[0] && *v <= a[a.len() - 1])
    }

    /// Multilinear stencil; outside the hull the boundary cell is extended linearly.
    pub fn stencil(&self, y: &[f64]) -> Stencil {
        let d = self.dim();
        let mut base = 0;
        let mut lambdas = Vec::with_capacity(d);
        let mut extrapolated = false;
        for k in 0..d {
            let a = &self.axes[k];
            let j = a.partition_point(|&v| v <= y[k]).saturating_sub(1).min(a.len() - 2);
            let lam = (y[k] - a[j]) / (a[j + 1] - a[j]);
            if !(0.0..=1.0).contains(&lam) {
                extrapolated = true;
            }
            base += j * self.strides[k];
            lambdas.push(lam);
        }
        let mut corners = Vec::with_capacity(1 << d);
        for mask in 0..(1usize << d) {
            let mut idx = base;
            let mut w = 1.0;
            for k in 0..d {
                if mask >> k & 1 == 1 {
                    idx += self.strides[k];
                    w *= lambdas[k];
                } else {
                    w *= 1.0 - lambdas[k];
                }
            }
            corners.push((idx, w));
        }
        Stencil { corners, extrapolated }
    }
}
