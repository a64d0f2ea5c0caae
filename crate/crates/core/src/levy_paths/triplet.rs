use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Jump-size distribution of the compound-Poisson part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JumpLaw {
    /// No jumps regardless of the rate.
    None,
    /// Uniform on the closed ball of the given radius.
    UniformBall { radius: f64 },
    /// `first` with probability `p_first`, `second` otherwise.
    TwoPoint { first: Vec<f64>, second: Vec<f64>, p_first: f64 },
    /// Independent centred Gaussian coordinates, each truncated to `[-bound, bound]`.
    TruncatedGaussian { std: f64, bound: f64 },
}

const QUAD_INTERVALS: usize = 2000;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

impl JumpLaw {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            JumpLaw::None => Ok(()),
            JumpLaw::UniformBall { radius } if *radius > 0.0 => Ok(()),
            JumpLaw::UniformBall { .. } => Err(Error::Parameter("ball radius must be positive".into())),
            JumpLaw::TwoPoint { first, second, p_first } => {
                if first.len() != dim || second.len() != dim {
                    return Err(Error::Parameter(format!("two-point jump law needs vectors of length {dim}")));
                }
                if !(0.0..=1.0).contains(p_first) {
                    return Err(Error::Parameter("p_first must lie in [0, 1]".into()));
                }
                if first.iter().all(|x| *x == 0.0) || second.iter().all(|x| *x == 0.0) {
                    return Err(Error::Parameter("jump sizes must be non-zero".into()));
                }
                Ok(())
            }
            JumpLaw::TruncatedGaussian { std, bound } if *std > 0.0 && *bound > 0.0 => Ok(()),
            JumpLaw::TruncatedGaussian { .. } => {
                Err(Error::Parameter("truncated Gaussian needs positive std and bound".into()))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vector {
        match self {
            JumpLaw::None => Vector::zeros(dim),
            JumpLaw::UniformBall { radius } => {
                let mut dir = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                while dir.norm() == 0.0 {
                    dir = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                }
                let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                dir.normalize() * r
            }
            JumpLaw::TwoPoint { first, second, p_first } => {
                if rng.random::<f64>() < *p_first {
                    Vector::from_column_slice(first)
                } else {
                    Vector::from_column_slice(second)
                }
            }
            JumpLaw::TruncatedGaussian { std, bound } => Vector::from_fn(dim, |_, _| loop {
                let g: f64 = StandardNormal.sample(rng);
                let x = std * g;
                if x.abs() <= *bound {
                    break x;
                }
            }),
        }
    }

    /// `E[u 1{|u| ≤ δ}]`.
    pub fn small_jump_mean(&self, dim: usize, delta: f64) -> Vector {
        match self {
            // symmetric laws
            JumpLaw::None | JumpLaw::UniformBall { .. } | JumpLaw::TruncatedGaussian { .. } => Vector::zeros(dim),
            JumpLaw::TwoPoint { first, second, p_first } => {
                let a = Vector::from_column_slice(first);
                let b = Vector::from_column_slice(second);
                let mut m = Vector::zeros(dim);
                if a.norm() <= delta {
                    m += &a * *p_first;
                }
                if b.norm() <= delta {
                    m += &b * (1.0 - p_first);
                }
                m
            }
        }
    }

    /// `E[φ(u)]` for a one-dimensional mark (exact for two-point laws, Simpson otherwise).
    pub fn expectation(&self, phi: impl Fn(f64) -> f64) -> Result<f64> {
        match self {
            JumpLaw::None => Ok(0.0),
            JumpLaw::TwoPoint { first, second, p_first } => {
                if first.len() != 1 || second.len() != 1 {
                    return Err(Error::Parameter("expectation needs one-dimensional marks".into()));
                }
                Ok(p_first * phi(first[0]) + (1.0 - p_first) * phi(second[0]))
            }
            JumpLaw::UniformBall { radius } => Ok(simpson(&phi, -radius, *radius, QUAD_INTERVALS) / (2.0 * radius)),
            JumpLaw::TruncatedGaussian { std, bound } => {
                let dens = |u: f64| (-0.5 * (u / std).powi(2)).exp();
                let norm = simpson(dens, -bound, *bound, QUAD_INTERVALS);
                Ok(simpson(|u| phi(u) * dens(u), -bound, *bound, QUAD_INTERVALS) / norm)
            }
        }
    }

    /// `E[exp(i⟨z,u⟩)]`.
    pub fn characteristic_function(&self, z: &Vector) -> Complex<f64> {
        match self {
            JumpLaw::None => Complex::new(1.0, 0.0),
            JumpLaw::TwoPoint { first, second, p_first } => {
                let pa = z.dot(&Vector::from_column_slice(first));
                let pb = z.dot(&Vector::from_column_slice(second));
                Complex::new(0.0, pa).exp() * *p_first + Complex::new(0.0, pb).exp() * (1.0 - p_first)
            }
            JumpLaw::UniformBall { radius } => {
                // The projection ⟨ẑ,u⟩ = r sin φ has density ∝ cos^m φ on [-π/2, π/2].
                let m = z.len() as i32;
                let k = z.norm() * radius;
                let half = std::f64::consts::FRAC_PI_2;
                let num = simpson(|p| (k * p.sin()).cos() * p.cos().powi(m), -half, half, QUAD_INTERVALS);
                let den = simpson(|p| p.cos().powi(m), -half, half, QUAD_INTERVALS);
                Complex::new(num / den, 0.0)
            }
            JumpLaw::TruncatedGaussian { std, bound } => {
                let dens = |u: f64| (-0.5 * (u / std).powi(2)).exp();
                let norm = simpson(dens, -bound, *bound, QUAD_INTERVALS);
                let v = z
                    .iter()
                    .map(|zk| simpson(|u| (zk * u).cos() * dens(u), -bound, *bound, QUAD_INTERVALS) / norm)
                    .product::<f64>();
                Complex::new(v, 0.0)
            }
        }
    }
}

/// Law of the driving noise: drift `b`, diffusion matrix `A` (so `Q = AAᵀ`) and a finite-activity
/// jump measure `ν = rate × law`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevyTriplet {
    pub drift: Vector,
    pub diffusion: Matrix,
    pub jump_rate: f64,
    pub jump_law: JumpLaw,
    pub small_jump_cutoff: f64,
    pub compensate_small: bool,
}

impl LevyTriplet {
    pub fn new(
        drift: Vector,
        diffusion: Matrix,
        jump_rate: f64,
        jump_law: JumpLaw,
        small_jump_cutoff: f64,
        compensate_small: bool,
    ) -> Result<Self> {
        let triplet = Self { drift, diffusion, jump_rate, jump_law, small_jump_cutoff, compensate_small };
        triplet.validate()?;
        Ok(triplet)
    }

    /// Pure drift in dimension `b.len()`.
    pub fn drift_only(b: Vector) -> Self {
        let m = b.len();
        Self {
            drift: b,
            diffusion: Matrix::zeros(m, 0),
            jump_rate: 0.0,
            jump_law: JumpLaw::None,
            small_jump_cutoff: 0.5,
            compensate_small: false,
        }
    }

    /// `b = 0`, `A` given, no jumps.
    pub fn gaussian(a: Matrix) -> Self {
        let m = a.nrows();
        Self { drift: Vector::zeros(m), diffusion: a, ..Self::drift_only(Vector::zeros(m)) }
    }

    pub fn zero(dim: usize) -> Self {
        Self::drift_only(Vector::zeros(dim))
    }

    pub fn with_drift(mut self, b: Vector) -> Self {
        self.drift = b;
        self
    }

    pub fn with_diffusion(mut self, a: Matrix) -> Self {
        self.diffusion = a;
        self
    }

    pub fn with_jumps(mut self, rate: f64, law: JumpLaw) -> Self {
        self.jump_rate = rate;
        self.jump_law = law;
        self
    }

    pub fn with_compensation(mut self, cutoff: f64) -> Self {
        self.small_jump_cutoff = cutoff;
        self.compensate_small = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.drift.len();
        if m == 0 {
            return Err(Error::Parameter("triplet dimension must be positive".into()));
        }
        if self.diffusion.nrows() != m {
            return Err(Error::Parameter(format!("diffusion has {} rows, expected {m}", self.diffusion.nrows())));
        }
        if !(self.small_jump_cutoff > 0.0 && self.small_jump_cutoff < 1.0) {
            return Err(Error::Parameter("small-jump cutoff δ must lie in (0, 1)".into()));
        }
        if !(self.jump_rate >= 0.0) || !self.jump_rate.is_finite() {
            return Err(Error::Parameter("jump rate must be finite and non-negative".into()));
        }
        self.jump_law.validate(m)
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn brownian_dim(&self) -> usize {
        self.diffusion.ncols()
    }

    pub fn covariance(&self) -> Matrix {
        &self.diffusion * self.diffusion.transpose()
    }

    pub fn has_jumps(&self) -> bool {
        self.jump_rate > 0.0 && self.jump_law != JumpLaw::None
    }

    /// Drift actually added per unit time: `b − rate·E[u 1{|u|≤δ}]` when small jumps are compensated.
    pub fn effective_drift(&self) -> Vector {
        if self.compensate_small && self.has_jumps() {
            &self.drift - self.jump_law.small_jump_mean(self.dim(), self.small_jump_cutoff) * self.jump_rate
        } else {
            self.drift.clone()
        }
    }

    /// Characteristic exponent `Ψ` of the process this crate actually simulates, so that
    /// `E exp(i⟨z, L_t⟩) = exp(tΨ(z))`. With compensation on this is the Lévy-Khintchine form.
    pub fn characteristic_exponent(&self, z: &Vector) -> Complex<f64> {
        let q = self.covariance();
        let mut psi = Complex::new(-0.5 * z.dot(&(&q * z)), z.dot(&self.drift));
        if self.has_jumps() {
            psi += (self.jump_law.characteristic_function(z) - 1.0) * self.jump_rate;
            if self.compensate_small {
                let m = self.jump_law.small_jump_mean(self.dim(), self.small_jump_cutoff);
                psi -= Complex::new(0.0, self.jump_rate * z.dot(&m));
            }
        }
        psi
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        self.jump_law.sample(self.dim(), rng)
    }

    /// One draw of `L_t` for `t ≥ 0`, generated exactly like a path increment.
    pub fn sample_value<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Vector {
        let mut x = self.effective_drift() * t;
        let mp = self.brownian_dim();
        if mp > 0 {
            let w = Vector::from_fn(mp, |_, _| rng.sample::<f64, _>(StandardNormal) * t.sqrt());
            x += &self.diffusion * w;
        }
        if self.has_jumps() {
            let n: f64 = rand_distr::Poisson::new(self.jump_rate * t).map(|p| p.sample(rng)).unwrap_or(0.0);
            for _ in 0..n as u64 {
                x += self.sample_jump(rng);
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector;
    use crate::rng::stream;

    #[test]
    fn rejects_bad_cutoff_and_shapes() {
        let t = LevyTriplet::drift_only(vector(&[1.0]));
        assert!(t.clone().with_compensation(1.5).validate().is_err());
        assert!(t.clone().with_diffusion(Matrix::zeros(2, 1)).validate().is_err());
        assert!(t
            .clone()
            .with_jumps(1.0, JumpLaw::TwoPoint { first: vec![1.0, 0.0], second: vec![0.5], p_first: 0.5 })
            .validate()
            .is_err());
        assert!(t.validate().is_ok());
    }

    #[test]
    fn two_point_small_jump_mean_only_counts_small_jumps() {
        let law = JumpLaw::TwoPoint { first: vec![0.3], second: vec![-0.8], p_first: 0.25 };
        let m = law.small_jump_mean(1, 0.5);
        assert!((m[0] - 0.075).abs() < 1e-15);
    }

    #[test]
    fn compensation_shifts_effective_drift() {
        let t = LevyTriplet::drift_only(vector(&[1.0]))
            .with_jumps(2.0, JumpLaw::TwoPoint { first: vec![0.3], second: vec![0.3], p_first: 1.0 })
            .with_compensation(0.5);
        assert!((t.effective_drift()[0] - (1.0 - 0.6)).abs() < 1e-15);
    }

    #[test]
    fn ball_characteristic_function_in_one_and_three_dimensions() {
        // m = 1: sin(k)/k ; m = 3: 3(sin k - k cos k)/k³.
        let law = JumpLaw::UniformBall { radius: 0.7 };
        let z1 = vector(&[2.0]);
        let k: f64 = 1.4;
        assert!((law.characteristic_function(&z1).re - k.sin() / k).abs() < 1e-9);
        let z3 = vector(&[1.0, 1.0, 1.0]) * (2.0 / 3f64.sqrt());
        let expected = 3.0 * (k.sin() - k * k.cos()) / k.powi(3);
        assert!((law.characteristic_function(&z3).re - expected).abs() < 1e-9);
    }

    #[test]
    fn truncated_gaussian_cf_tends_to_gaussian_for_wide_bound() {
        let law = JumpLaw::TruncatedGaussian { std: 0.2, bound: 3.0 };
        let z = vector(&[1.5]);
        let expected = (-0.5f64 * (0.3f64).powi(2)).exp();
        assert!((law.characteristic_function(&z).re - expected).abs() < 1e-9);
    }

    #[test]
    fn samples_respect_support() {
        let mut rng = stream(3, "test");
        let ball = JumpLaw::UniformBall { radius: 0.4 };
        let tg = JumpLaw::TruncatedGaussian { std: 1.0, bound: 0.5 };
        for _ in 0..1000 {
            assert!(ball.sample(2, &mut rng).norm() <= 0.4 + 1e-15);
            assert!(tg.sample(3, &mut rng).iter().all(|x| x.abs() <= 0.5));
        }
    }
}
