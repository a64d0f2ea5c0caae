use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// A smooth map ℝ^d → ℝ^d. Jacobians are row-major `d × d`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Central differences unless overridden.
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for j in 0..d {
            let h = 1e-6 * x[j].abs().max(1.0);
            xp[j] = x[j] + h;
            self.eval(&xp, &mut fp);
            xp[j] = x[j] - h;
            self.eval(&xp, &mut fm);
            xp[j] = x[j];
            for i in 0..d {
                out[i * d + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }

    /// Whether [`VectorField::jacobian`] is exact rather than a finite difference.
    fn analytic_jacobian(&self) -> bool {
        false
    }

    fn value(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim());
        self.eval(x.as_slice(), out.as_mut_slice());
        out
    }

    fn jacobian_matrix(&self, x: &Vector) -> Matrix {
        let d = self.dim();
        let mut buf = vec![0.0; d * d];
        self.jacobian(x.as_slice(), &mut buf);
        Matrix::from_row_slice(d, d, &buf)
    }
}

/// `x ↦ Mx + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub matrix: Matrix,
    pub offset: Vector,
}

impl Affine {
    pub fn new(matrix: Matrix, offset: Vector) -> Self {
        assert!(matrix.is_square() && matrix.nrows() == offset.len(), "affine field shape mismatch");
        Self { matrix, offset }
    }

    pub fn linear(matrix: Matrix) -> Self {
        let d = matrix.nrows();
        Self::new(matrix, Vector::zeros(d))
    }

    pub fn constant(offset: Vector) -> Self {
        let d = offset.len();
        Self::new(Matrix::zeros(d, d), offset)
    }

    pub fn zero(d: usize) -> Self {
        Self::constant(Vector::zeros(d))
    }
}

impl VectorField for Affine {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut s = self.offset[i];
            for j in 0..d {
                s += self.matrix[(i, j)] * x[j];
            }
            *o = s;
        }
    }

    fn jacobian(&self, _x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.matrix[(i, j)];
            }
        }
    }

    fn analytic_jacobian(&self) -> bool {
        true
    }
}

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A field given by closures; the Jacobian falls back to finite differences when absent.
pub struct FnField {
    dim: usize,
    f: Box<EvalFn>,
    jac: Option<Box<EvalFn>>,
}

impl FnField {
    pub fn new(dim: usize, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { dim, f: Box::new(f), jac: None }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.jac = Some(Box::new(j));
        self
    }

    /// Scalar field `f` with derivative `df`.
    pub fn scalar(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(1, move |x, o| o[0] = f(x[0])).with_jacobian(move |x, o| o[0] = df(x[0]))
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField").field("dim", &self.dim).field("jacobian", &self.jac.is_some()).finish()
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        match &self.jac {
            Some(j) => j(x, out),
            None => {
                let d = self.dim;
                let mut xp = x.to_vec();
                let mut fp = vec![0.0; d];
                let mut fm = vec![0.0; d];
                for j in 0..d {
                    let h = 1e-6 * x[j].abs().max(1.0);
                    xp[j] = x[j] + h;
                    (self.f)(&xp, &mut fp);
                    xp[j] = x[j] - h;
                    (self.f)(&xp, &mut fm);
                    xp[j] = x[j];
                    for i in 0..d {
                        out[i * d + j] = (fp[i] - fm[i]) / (2.0 * h);
                    }
                }
            }
        }
    }

    fn analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }
}

impl fmt::Debug for dyn VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField(dim = {})", self.dim())
    }
}

pub type Field = Arc<dyn VectorField>;

/// Coefficients of `dX = a(X)dt + σ_i(X) dL^i`.
#[derive(Clone)]
pub struct SystemSpec {
    pub drift: Field,
    pub noise: Vec<Field>,
    /// Declared regularity class, for reports only.
    pub regularity: String,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("dim", &self.dim())
            .field("noise_count", &self.noise.len())
            .field("regularity", &self.regularity)
            .finish()
    }
}

impl SystemSpec {
    pub fn new(drift: Field, noise: Vec<Field>) -> Result<Self> {
        let d = drift.dim();
        if d == 0 {
            return Err(Error::Parameter("state dimension must be positive".into()));
        }
        if let Some(bad) = noise.iter().position(|s| s.dim() != d) {
            return Err(Error::Parameter(format!(
                "noise field {} has dimension {}, expected {d}",
                bad + 1,
                noise[bad].dim()
            )));
        }
        Ok(Self { drift, noise, regularity: "C_b^{1,γ}".into() })
    }

    pub fn with_regularity(mut self, tag: impl Into<String>) -> Self {
        self.regularity = tag.into();
        self
    }

    /// `a ≡ 0`, `σ_i ≡ 0`.
    pub fn zero(d: usize, m: usize) -> Self {
        let z: Field = Arc::new(Affine::zero(d));
        Self::new(z.clone(), vec![z; m]).expect("consistent shapes")
    }

    /// Linear coefficients `a(x) = B_0 x`, `σ_i(x) = B_i x`.
    pub fn linear(b0: Matrix, bs: Vec<Matrix>) -> Result<Self> {
        let drift: Field = Arc::new(Affine::linear(b0));
        let noise = bs.into_iter().map(|b| Arc::new(Affine::linear(b)) as Field).collect();
        Self::new(drift, noise)
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn noise_count(&self) -> usize {
        self.noise.len()
    }

    pub fn check_driver_dim(&self, m: usize) -> Result<()> {
        if m != self.noise.len() {
            return Err(Error::Parameter(format!(
                "driver has dimension {m} but the system has {} noise fields",
                self.noise.len()
            )));
        }
        Ok(())
    }

    /// Largest relative mismatch between each field's Jacobian and central differences.
    pub fn jacobian_self_test(&self, points: &[Vector]) -> f64 {
        let mut worst: f64 = 0.0;
        for f in std::iter::once(&self.drift).chain(&self.noise) {
            for x in points {
                let exact = f.jacobian_matrix(x);
                let d = self.dim();
                let mut fd = Matrix::zeros(d, d);
                for j in 0..d {
                    let h = 1e-5 * x[j].abs().max(1.0);
                    let mut xp = x.clone();
                    xp[j] += h;
                    let mut xm = x.clone();
                    xm[j] -= h;
                    fd.set_column(j, &((f.value(&xp) - f.value(&xm)) / (2.0 * h)));
                }
                let scale = exact.amax().max(1.0);
                worst = worst.max((exact - fd).amax() / scale);
            }
        }
        worst
    }
}

/// `Σ_i σ_i(x) u^i` written into `out`, using `tmp` as scratch.
pub(crate) fn noise_combination(noise: &[Field], x: &[f64], u: &[f64], out: &mut [f64], tmp: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (s, &ui) in noise.iter().zip(u) {
        if ui == 0.0 {
            continue;
        }
        s.eval(x, tmp);
        for (o, t) in out.iter_mut().zip(tmp.iter()) {
            *o += t * ui;
        }
    }
}

/// `Σ_i ∇σ_i(x) u^i` (row-major) written into `out`.
pub(crate) fn noise_jacobian_combination(noise: &[Field], x: &[f64], u: &[f64], out: &mut [f64], tmp: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (s, &ui) in noise.iter().zip(u) {
        if ui == 0.0 {
            continue;
        }
        s.jacobian(x, tmp);
        for (o, t) in out.iter_mut().zip(tmp.iter()) {
            *o += t * ui;
        }
    }
}
