use std::fmt;

use crate::error::{Error, Result};
use crate::flows::{Affine, Field};
use crate::linalg::{pinv, Matrix, Vector};

/// Relative tolerance of the commutation test for affine noise.
const COMMUTE_TOL: f64 = 1e-10;

/// Pseudo-inverse threshold, relative to the largest singular value.
pub const PINV_TOL: f64 = 1e-12;

/// `Φ(z,x)`: the joint flow of the commuting noise fields, `∂Φ/∂z_i = σ̄_i(Φ)`, `Φ(0,x) = x`.
#[derive(Clone)]
pub enum FlowMap {
    /// `σ̄_i(x) = S_i x + β_i` with commuting `S_i` and `S_iβ_j = S_jβ_i`.
    Affine { matrices: Vec<Matrix>, offsets: Vec<Vector> },
    /// General fields, integrated along `s ↦ Φ(sz,x)` with classical RK4.
    Numeric { fields: Vec<Field>, substeps: Option<usize> },
}

impl fmt::Debug for FlowMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowMap::Affine { matrices, offsets } => {
                f.debug_struct("Affine").field("matrices", matrices).field("offsets", offsets).finish()
            }
            FlowMap::Numeric { fields, substeps } => {
                f.debug_struct("Numeric").field("fields", &fields.len()).field("substeps", substeps).finish()
            }
        }
    }
}

fn scale(m: &Matrix) -> f64 {
    m.amax().max(1.0)
}

impl FlowMap {
    pub fn affine(matrices: Vec<Matrix>, offsets: Vec<Vector>) -> Result<Self> {
        if matrices.is_empty() || matrices.len() != offsets.len() {
            return Err(Error::Parameter("need one offset per noise matrix".into()));
        }
        let d = matrices[0].nrows();
        for (m, b) in matrices.iter().zip(&offsets) {
            if m.nrows() != d || m.ncols() != d || b.len() != d {
                return Err(Error::Parameter("noise matrices and offsets must share one dimension".into()));
            }
        }
        for i in 0..matrices.len() {
            for j in 0..i {
                let (a, b) = (&matrices[i], &matrices[j]);
                let tol = COMMUTE_TOL * scale(a) * scale(b);
                if (a * b - b * a).amax() > tol || (a * &offsets[j] - b * &offsets[i]).amax() > tol {
                    return Err(Error::Hypothesis(format!("noise fields {j} and {i} do not commute")));
                }
            }
        }
        Ok(FlowMap::Affine { matrices, offsets })
    }

    /// `σ̄_i(x) = S_i x`.
    pub fn linear(matrices: Vec<Matrix>) -> Result<Self> {
        let offsets = matrices.iter().map(|m| Vector::zeros(m.nrows())).collect();
        Self::affine(matrices, offsets)
    }

    pub fn numeric(fields: Vec<Field>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Parameter("need at least one noise field".into()));
        }
        let d = fields[0].dim();
        if fields.iter().any(|f| f.dim() != d) {
            return Err(Error::Parameter("noise fields must share one dimension".into()));
        }
        Ok(FlowMap::Numeric { fields, substeps: None })
    }

    /// Fixes the RK4 substep count instead of `max(8, ⌈|z|/0.1⌉)`.
    pub fn with_substeps(self, n: usize) -> Self {
        match self {
            FlowMap::Numeric { fields, .. } => FlowMap::Numeric { fields, substeps: Some(n.max(1)) },
            other => other,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FlowMap::Affine { matrices, .. } => matrices[0].nrows(),
            FlowMap::Numeric { fields, .. } => fields[0].dim(),
        }
    }

    pub fn noise_count(&self) -> usize {
        match self {
            FlowMap::Affine { matrices, .. } => matrices.len(),
            FlowMap::Numeric { fields, .. } => fields.len(),
        }
    }

    /// The noise fields `σ̄_i` as vector fields.
    pub fn fields(&self) -> Vec<Field> {
        match self {
            FlowMap::Affine { matrices, offsets } => matrices
                .iter()
                .zip(offsets)
                .map(|(m, b)| std::sync::Arc::new(Affine::new(m.clone(), b.clone())) as Field)
                .collect(),
            FlowMap::Numeric { fields, .. } => fields.clone(),
        }
    }

    /// `σ̄_i(x)`.
    pub fn field_value(&self, i: usize, x: &Vector) -> Vector {
        match self {
            FlowMap::Affine { matrices, offsets } => &matrices[i] * x + &offsets[i],
            FlowMap::Numeric { fields, .. } => fields[i].value(x),
        }
    }

    /// `∇σ̄_i(x)`.
    pub fn field_jacobian(&self, i: usize, x: &Vector) -> Matrix {
        match self {
            FlowMap::Affine { matrices, .. } => matrices[i].clone(),
            FlowMap::Numeric { fields, .. } => fields[i].jacobian_matrix(x),
        }
    }

    fn combined(&self, z: &[f64]) -> (Matrix, Vector) {
        let FlowMap::Affine { matrices, offsets } = self else { unreachable!() };
        let d = self.dim();
        let mut m = Matrix::zeros(d, d);
        let mut b = Vector::zeros(d);
        for ((s, beta), &zi) in matrices.iter().zip(offsets).zip(z) {
            m += s * zi;
            b += beta * zi;
        }
        (m, b)
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.noise_count() {
            return Err(Error::Parameter(format!("z has length {}, expected {}", z.len(), self.noise_count())));
        }
        Ok(())
    }

    pub fn substeps_for(&self, z: &[f64]) -> usize {
        match self {
            FlowMap::Numeric { substeps: Some(n), .. } => *n,
            _ => {
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                8.max((norm / 0.1).ceil() as usize)
            }
        }
    }

    /// `Φ(z,x)`.
    pub fn phi(&self, z: &[f64], x: &Vector) -> Result<Vector> {
        Ok(self.phi_with_jacobian(z, x, false)?.0)
    }

    /// `∂Φ(z,x)/∂x`.
    pub fn jacobian(&self, z: &[f64], x: &Vector) -> Result<Matrix> {
        Ok(self.phi_with_jacobian(z, x, true)?.1.expect("requested"))
    }

    /// `Φ(z,x)` and optionally `∂Φ/∂x`. The affine case is `e^M x + φ₁(M) b` with `M = Σ S_i z_i`
    /// and `b = Σ β_i z_i`, both read off one augmented exponential.
    pub fn phi_with_jacobian(&self, z: &[f64], x: &Vector, jac: bool) -> Result<(Vector, Option<Matrix>)> {
        self.check_z(z)?;
        if x.len() != self.dim() {
            return Err(Error::Parameter(format!("x has length {}, expected {}", x.len(), self.dim())));
        }
        if z.iter().all(|&v| v == 0.0) {
            let d = self.dim();
            return Ok((x.clone(), jac.then(|| Matrix::identity(d, d))));
        }
        match self {
            FlowMap::Affine { .. } => {
                let d = self.dim();
                let (m, b) = self.combined(z);
                let mut aug = Matrix::zeros(d + 1, d + 1);
                aug.view_mut((0, 0), (d, d)).copy_from(&m);
                aug.view_mut((0, d), (d, 1)).copy_from(&b);
                let e = aug.exp();
                let em = e.view((0, 0), (d, d)).into_owned();
                let y = &em * x + e.view((0, d), (d, 1)).column(0);
                Ok((y, jac.then_some(em)))
            }
            FlowMap::Numeric { fields, .. } => Ok(self.rk4(fields, z, x, jac)),
        }
    }

    fn rk4(&self, fields: &[Field], z: &[f64], x: &Vector, jac: bool) -> (Vector, Option<Matrix>) {
        let d = self.dim();
        let n = self.substeps_for(z);
        let h = 1.0 / n as f64;
        let rhs = |y: &Vector, j: Option<&Matrix>| -> (Vector, Option<Matrix>) {
            let mut v = Vector::zeros(d);
            let mut dj = j.map(|_| Matrix::zeros(d, d));
            for (f, &zi) in fields.iter().zip(z) {
                if zi == 0.0 {
                    continue;
                }
                v += f.value(y) * zi;
                if let (Some(dj), Some(j)) = (dj.as_mut(), j) {
                    *dj += f.jacobian_matrix(y) * j * zi;
                }
            }
            (v, dj)
        };
        let mut y = x.clone();
        let mut j = jac.then(|| Matrix::identity(d, d));
        for _ in 0..n {
            let (k1, j1) = rhs(&y, j.as_ref());
            let y2 = &y + &k1 * (0.5 * h);
            let j2in = j.as_ref().map(|j| j + j1.as_ref().unwrap() * (0.5 * h));
            let (k2, j2) = rhs(&y2, j2in.as_ref());
            let y3 = &y + &k2 * (0.5 * h);
            let j3in = j.as_ref().map(|j| j + j2.as_ref().unwrap() * (0.5 * h));
            let (k3, j3) = rhs(&y3, j3in.as_ref());
            let y4 = &y + &k3 * h;
            let j4in = j.as_ref().map(|j| j + j3.as_ref().unwrap() * h);
            let (k4, j4) = rhs(&y4, j4in.as_ref());
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if let Some(j) = j.as_mut() {
                *j += (j1.unwrap() + j2.unwrap() * 2.0 + j3.unwrap() * 2.0 + j4.unwrap()) * (h / 6.0);
            }
        }
        (y, j)
    }

    /// `Φ(z,·)^{-1}(y) = Φ(−z, y)`, valid because the fields commute.
    pub fn inverse(&self, z: &[f64], y: &Vector) -> Result<Vector> {
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        self.phi(&neg, y)
    }

    /// The affine flow written as `x e^M + Σ_i S_i^+ (e^M − I) β_i` with pseudo-inverses `S_i^+`.
    /// Agrees with [`FlowMap::phi`] for a single invertible `S`; with several fields or a
    /// singular `S` the two differ, and [`FlowMap::phi`] is the one solving the flow equation.
    pub fn phi_pseudo_inverse_form(&self, z: &[f64], x: &Vector) -> Result<Vector> {
        self.check_z(z)?;
        let FlowMap::Affine { matrices, offsets } = self else {
            return Err(Error::Parameter("pseudo-inverse form needs affine noise".into()));
        };
        let (m, _) = self.combined(z);
        let e = m.exp();
        let d = self.dim();
        let mut y = &e * x;
        let em1 = &e - Matrix::identity(d, d);
        for (s, b) in matrices.iter().zip(offsets) {
            y += pinv(s, PINV_TOL) * (&em1 * b);
        }
        Ok(y)
    }
}

/// `max |∇σ̄_j σ̄_i − ∇σ̄_i σ̄_j|` over pairs and points; zero for a single field.
pub fn lie_bracket_check(fields: &[Field], points: &[Vector]) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        for i in 0..fields.len() {
            for j in 0..i {
                let bracket = fields[j].jacobian_matrix(x) * fields[i].value(x)
                    - fields[i].jacobian_matrix(x) * fields[j].value(x);
                worst = worst.max(bracket.amax());
            }
        }
    }
    worst
}
