use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_rational::Rational64;

use crate::error::Result;
use crate::flows::{Field, FnField};
use crate::linalg::{Matrix, Vector};
use crate::marcus::{FlowMap, MarcusSystem};

use super::lyapunov::{marcus_l_field, LyapunovCertificate};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DuffingParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Constant of `k_1(z) = C|z|`.
    pub c: f64,
}

impl DuffingParams {
    pub fn new(gamma1: f64, gamma2: f64, sigma1: f64, sigma2: f64) -> Self {
        Self { gamma1, gamma2, sigma1, sigma2, c: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct DuffingSystem {
    pub params: DuffingParams,
    pub system: MarcusSystem,
    pub certificate: LyapunovCertificate,
}

/// `ȳ = (x_1, x_2 − γ_2 x_1 + x_1³/3)`.
pub fn duffing_to_transformed(gamma2: f64, x: &Vector) -> Vector {
    Vector::from_column_slice(&[x[0], x[1] - gamma2 * x[0] + x[0].powi(3) / 3.0])
}

pub fn duffing_to_original(gamma2: f64, y: &Vector) -> Vector {
    Vector::from_column_slice(&[y[0], y[1] + gamma2 * y[0] - y[0].powi(3) / 3.0])
}

/// `l(z,y) = (0, σ_1 y_1 z^1 + σ_2 z^2)`.
pub fn duffing_l_closed_form(p: &DuffingParams, z: &[f64], y: &Vector) -> Vector {
    Vector::from_column_slice(&[0.0, p.sigma1 * y[0] * z[0] + p.sigma2 * z[1]])
}

/// `∇V = (7/6 y_1³ + 3/2 y_1 − y_2, 3/2 y_2 − y_1)`, written out term by term.
pub fn duffing_displayed_gradient(y: &Vector) -> Vector {
    Vector::from_column_slice(&[7.0 / 6.0 * y[0].powi(3) + 1.5 * y[0] - y[1], 1.5 * y[1] - y[0]])
}

/// `S_1 + S_2 + S_3`, the closed form of `ā(y) − (∂Φ/∂y)^{-1} ā(Φ(z,y))`.
pub fn duffing_c2_decomposition(p: &DuffingParams, z: &[f64], y: &Vector) -> Vector {
    let c = p.sigma1 * z[0];
    let s1 = Vector::from_column_slice(&[-y[0], (p.gamma2 + c) * y[0] + y[1]]) * c;
    let s2 = -Vector::from_column_slice(&[1.0, -c]) * (p.sigma2 * z[1]);
    let s3 = Vector::from_column_slice(&[0.0, -y[0].powi(3) / 3.0]) * c;
    s1 + s2 + s3
}

fn drift_field(g1: f64, g2: f64) -> Field {
    Arc::new(
        FnField::new(2, move |y, o| {
            o[0] = g2 * y[0] - y[0].powi(3) / 3.0 + y[1];
            o[1] = g1 * y[0] - y[0].powi(3);
        })
        .with_jacobian(move |y, o| {
            o[0] = g2 - y[0] * y[0];
            o[1] = 1.0;
            o[2] = g1 - 3.0 * y[0] * y[0];
            o[3] = 0.0;
        }),
    )
}

/// The transformed Duffing–van der Pol system with its affine flow map and Lyapunov certificate.
pub fn duffing_van_der_pol_system(p: DuffingParams) -> Result<DuffingSystem> {
    let s1 = Matrix::from_row_slice(2, 2, &[0.0, 0.0, p.sigma1, 0.0]);
    let map = FlowMap::affine(
        vec![s1, Matrix::zeros(2, 2)],
        vec![Vector::zeros(2), Vector::from_column_slice(&[0.0, p.sigma2])],
    )?;
    let system = MarcusSystem::new(drift_field(p.gamma1, p.gamma2), map.clone())?;
    let v =
        |y: &Vector| 7.0 / 24.0 * y[0].powi(4) + 0.25 * y[0] * y[0] + 0.25 * y[1] * y[1] + 0.5 * (y[0] - y[1]).powi(2);
    let (a1, a2) = (p.sigma1.abs(), p.sigma2.abs());
    let c = p.c;
    let g2 = p.gamma2.abs();
    let certificate = LyapunovCertificate {
        v: Arc::new(v),
        grad_v: Arc::new(duffing_displayed_gradient),
        alpha: 4.0 / 3.0,
        kappa: Some(Arc::new(|y: &Vector| y[0].powi(6) + y[1] * y[1])),
        k1: Arc::new(move |z: &[f64]| c * norm(z)),
        k2: Arc::new(move |z: &[f64]| {
            let r = norm(z);
            (2f64.sqrt() + g2 + a1 * r) * a1 * r + (1.0 + a1 * r) * a2 * r + a1 * r
        }),
        l_field: marcus_l_field(map),
        eta: 7.0 / 18.0,
    };
    Ok(DuffingSystem { params: p, system, certificate })
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Exponents of `(y_1, y_2, γ_1, γ_2)`.
pub type Monomial = [u32; 4];

/// Polynomial in `y_1, y_2, γ_1, γ_2` with exact rational coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Poly(BTreeMap<Monomial, Rational64>);

impl Poly {
    pub fn constant(c: Rational64) -> Self {
        Self::term(c, [0; 4])
    }

    pub fn term(c: Rational64, m: Monomial) -> Self {
        let mut map = BTreeMap::new();
        if c != Rational64::from_integer(0) {
            map.insert(m, c);
        }
        Self(map)
    }

    /// Variable `i` in the order `y_1, y_2, γ_1, γ_2`.
    pub fn var(i: usize) -> Self {
        let mut m = [0; 4];
        m[i] = 1;
        Self::term(Rational64::from_integer(1), m)
    }

    pub fn coefficient(&self, m: Monomial) -> Rational64 {
        self.0.get(&m).copied().unwrap_or_else(|| Rational64::from_integer(0))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational64)> {
        self.0.iter()
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::constant(Rational64::from_integer(1)), |acc, _| &acc * self)
    }

    /// `∂/∂ var_i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::default();
        for (m, c) in &self.0 {
            if m[i] > 0 {
                let mut m2 = *m;
                m2[i] -= 1;
                out = &out + &Self::term(c * Rational64::from_integer(m[i] as i64), m2);
            }
        }
        out
    }

    fn scale(&self, c: Rational64) -> Self {
        let mut out = Self::default();
        for (m, v) in &self.0 {
            out = &out + &Self::term(v * c, *m);
        }
        out
    }
}

impl Add for &Poly {
    type Output = Poly;

    fn add(self, rhs: &Poly) -> Poly {
        let mut map = self.0.clone();
        for (m, c) in &rhs.0 {
            let e = map.entry(*m).or_insert_with(|| Rational64::from_integer(0));
            *e += c;
            if *e == Rational64::from_integer(0) {
                map.remove(m);
            }
        }
        Poly(map)
    }
}

impl Sub for &Poly {
    type Output = Poly;

    fn sub(self, rhs: &Poly) -> Poly {
        self + &-rhs
    }
}

impl Neg for &Poly {
    type Output = Poly;

    fn neg(self) -> Poly {
        self.scale(Rational64::from_integer(-1))
    }
}

impl Mul for &Poly {
    type Output = Poly;

    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::default();
        for (ma, ca) in &self.0 {
            for (mb, cb) in &rhs.0 {
                let m = [ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2], ma[3] + mb[3]];
                out = &out + &Poly::term(ca * cb, m);
            }
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        let names = ["y1", "y2", "g1", "g2"];
        for (k, (m, c)) in self.0.iter().rev().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})")?;
            for (i, &e) in m.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*{}", names[i])?,
                    _ => write!(f, "*{}^{e}", names[i])?,
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PolynomialCheck {
    /// `⟨∇V, ā⟩` expanded from `V` and `ā`.
    pub expanded: Poly,
    /// The polynomial as displayed for the example.
    pub displayed: Poly,
    /// `∂V/∂y` equals the displayed gradient.
    pub gradient_matches: bool,
}

impl PolynomialCheck {
    pub fn matches(&self) -> bool {
        self.gradient_matches && self.expanded == self.displayed
    }

    /// Monomials whose coefficients differ, with (expanded, displayed).
    pub fn mismatches(&self) -> Vec<(Monomial, Rational64, Rational64)> {
        let diff = &self.expanded - &self.displayed;
        diff.terms().map(|(m, _)| (*m, self.expanded.coefficient(*m), self.displayed.coefficient(*m))).collect()
    }
}

fn q(n: i64, d: i64) -> Poly {
    Poly::constant(Rational64::new(n, d))
}

/// Symbolic expansion of `⟨∇V, ā⟩` with `∇V` obtained by differentiating `V`, compared with the
/// displayed polynomial `−7/18 y_1⁶ + (7/6 γ_2 + 1/2) y_1⁴ + (3/2 γ_2 − γ_1) y_1² +
/// (3/2 − γ_2 + 3/2 γ_1) y_1 y_2 − y_2²`.
pub fn duffing_polynomial_check() -> PolynomialCheck {
    let (y1, y2, g1, g2) = (Poly::var(0), Poly::var(1), Poly::var(2), Poly::var(3));
    let v = &(&(&(&q(7, 24) * &y1.pow(4)) + &(&q(1, 4) * &y1.pow(2))) + &(&q(1, 4) * &y2.pow(2)))
        + &(&q(1, 2) * &(&y1 - &y2).pow(2));
    let grad = [v.derivative(0), v.derivative(1)];
    let a = [&(&(&g2 * &y1) - &(&q(1, 3) * &y1.pow(3))) + &y2, &(&g1 * &y1) - &y1.pow(3)];
    let expanded = &(&grad[0] * &a[0]) + &(&grad[1] * &a[1]);

    let shown_grad = [&(&(&q(7, 6) * &y1.pow(3)) + &(&q(3, 2) * &y1)) - &y2, &(&q(3, 2) * &y2) - &y1];
    let gradient_matches = grad[0] == shown_grad[0] && grad[1] == shown_grad[1];

    let c4 = &(&q(7, 6) * &g2) + &q(1, 2);
    let c2 = &(&q(3, 2) * &g2) - &g1;
    let c11 = &(&(&q(3, 2) - &g2) + &(&q(3, 2) * &g1));
    let displayed = &(&(&(&(&q(-7, 18) * &y1.pow(6)) + &(&c4 * &y1.pow(4))) + &(&c2 * &y1.pow(2)))
        + &(&(c11 * &y1) * &y2))
        - &y2.pow(2);
    PolynomialCheck { expanded, displayed, gradient_matches }
}
