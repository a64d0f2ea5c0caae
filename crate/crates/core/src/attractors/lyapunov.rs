use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flows::VectorField;
use crate::linalg::Vector;
use crate::marcus::FlowMap;

use super::halton;

pub type ScalarFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
/// Scalar function of the noise value `z ∈ ℝ^m`.
pub type Envelope = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type LField = Arc<dyn Fn(&[f64], &Vector) -> Result<Vector> + Send + Sync>;

/// Lyapunov function of the deterministic drift together with the envelopes `k_1, k_2` and the
/// field `l` that enter the attractor conditions for the conjugate random equation.
#[derive(Clone)]
pub struct LyapunovCertificate {
    pub v: ScalarFn,
    pub grad_v: GradFn,
    /// Claimed decay rate of `⟨∇log V, ā⟩`.
    pub alpha: f64,
    pub kappa: Option<ScalarFn>,
    pub k1: Envelope,
    pub k2: Envelope,
    pub l_field: LField,
    /// Claimed bound for `⟨∇V, ā⟩/κ`.
    pub eta: f64,
}

impl fmt::Debug for LyapunovCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovCertificate")
            .field("alpha", &self.alpha)
            .field("eta", &self.eta)
            .field("kappa", &self.kappa.is_some())
            .finish()
    }
}

/// `l(z,y) = (∂Φ/∂y)^{-1} σ̄_i(Φ(z,y)) z^i` for any flow map.
pub fn marcus_l_field(map: FlowMap) -> LField {
    Arc::new(move |z: &[f64], y: &Vector| {
        let (h, j) = map.phi_with_jacobian(z, y, true)?;
        let mut s = Vector::zeros(y.len());
        for (i, &zi) in z.iter().enumerate() {
            if zi != 0.0 {
                s += map.field_value(i, &h) * zi;
            }
        }
        j.expect("requested").lu().solve(&s).ok_or(Error::Singular { t: f64::NAN })
    })
}

/// Unit directions: `±1` in one dimension, equally spaced angles in two, normalized Halton
/// points otherwise.
pub fn sphere_directions(d: usize, n: usize) -> Vec<Vector> {
    match d {
        1 => vec![Vector::from_element(1, 1.0), Vector::from_element(1, -1.0)],
        2 => (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                Vector::from_column_slice(&[a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(n);
            let mut k = 1;
            while out.len() < n {
                let v = Vector::from_iterator(d, halton(k, d).into_iter().map(|u| 2.0 * u - 1.0));
                k += 1;
                let r = v.norm();
                if r > 0.1 && r <= 1.0 {
                    out.push(v / r);
                }
            }
            out
        }
    }
}

/// Noise values `r·e` for every magnitude `r` and every direction `e` of [`sphere_directions`].
pub fn z_grid(m: usize, magnitudes: &[f64], n_dirs: usize) -> Vec<Vec<f64>> {
    let dirs = sphere_directions(m, n_dirs);
    magnitudes.iter().flat_map(|&r| dirs.iter().map(move |e| e.iter().map(|v| v * r).collect())).collect()
}

fn annulus_radii(r_min: f64, r_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(r_min > 0.0) || r_max < r_min || n == 0 {
        return Err(Error::Parameter("annulus needs 0 < R_min ≤ R_max and at least one radius".into()));
    }
    if n == 1 || r_max == r_min {
        return Ok(vec![r_min]);
    }
    let q = (r_max / r_min).ln() / (n - 1) as f64;
    Ok((0..n).map(|k| r_min * (q * k as f64).exp()).collect())
}

#[derive(Clone, Debug)]
pub struct LyapunovScan {
    pub radii: Vec<f64>,
    /// `−max ⟨∇log V, ā⟩` over the annulus grid.
    pub alpha_hat: f64,
    /// `−max ⟨∇V, ā⟩/κ`, when the certificate carries `κ`.
    pub eta_hat: Option<f64>,
    /// Per-radius maxima of `⟨∇log V, ā⟩`.
    pub alpha_profile: Vec<f64>,
}

impl LyapunovScan {
    pub fn alpha_pass(&self) -> bool {
        self.alpha_hat > 0.0
    }

    pub fn eta_pass(&self) -> bool {
        self.eta_hat.is_some_and(|e| e > 0.0)
    }
}

fn positive_v(cert: &LyapunovCertificate, y: &Vector) -> Result<f64> {
    let v = (cert.v)(y);
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Certificate(format!("V = {v} at y = {:?}", y.as_slice())));
    }
    Ok(v)
}

/// Scans the annulus `R_min ≤ |y| ≤ R_max` on `n_radii` geometric radii times `n_dirs` directions.
pub fn verify_lyapunov(
    cert: &LyapunovCertificate,
    drift: &dyn VectorField,
    r_min: f64,
    r_max: f64,
    n_radii: usize,
    n_dirs: usize,
) -> Result<LyapunovScan> {
    let radii = annulus_radii(r_min, r_max, n_radii)?;
    let dirs = sphere_directions(drift.dim(), n_dirs);
    let mut worst_alpha = f64::NEG_INFINITY;
    let mut worst_eta = f64::NEG_INFINITY;
    let mut profile = Vec::with_capacity(radii.len());
    for &r in &radii {
        let mut at_r = f64::NEG_INFINITY;
        for e in &dirs {
            let y = e * r;
            let v = positive_v(cert, &y)?;
            let inner = (cert.grad_v)(&y).dot(&drift.value(&y));
            at_r = at_r.max(inner / v);
            if let Some(k) = &cert.kappa {
                let kv = k(&y);
                if !(kv > 0.0) {
                    return Err(Error::Certificate(format!("κ = {kv} at y = {:?}", y.as_slice())));
                }
                worst_eta = worst_eta.max(inner / kv);
            }
        }
        worst_alpha = worst_alpha.max(at_r);
        profile.push(at_r);
    }
    Ok(LyapunovScan {
        radii,
        alpha_hat: -worst_alpha,
        eta_hat: cert.kappa.as_ref().map(|_| -worst_eta),
        alpha_profile: profile,
    })
}

#[derive(Clone, Debug)]
pub struct C1C2Report {
    pub radii: Vec<f64>,
    /// `sup |⟨∇log V(y), l(z,y)/k_1(z)⟩|` over `|y| = R` and the z-grid.
    pub c1_sup: Vec<f64>,
    /// Sup of the (c2) ratio over `|y| = R` and the z-grid.
    pub c2_sup: Vec<f64>,
    pub shrink: Vec<f64>,
    /// `k_2` along the shrinking sequence.
    pub k2_values: Vec<f64>,
}

impl C1C2Report {
    pub fn c1_decreasing(&self) -> bool {
        self.c1_sup.windows(2).all(|w| w[1] < w[0])
    }

    /// `k_2` strictly decreasing along the sequence and shrunk by at least the span of the magnitudes.
    pub fn k2_vanishes(&self) -> bool {
        let (Some(&first), Some(&last)) = (self.k2_values.first(), self.k2_values.last()) else {
            return false;
        };
        let span = self.shrink.last().expect("non-empty") / self.shrink[0];
        self.k2_values.windows(2).all(|w| w[1] < w[0]) && last <= first * span * 10.0
    }

    pub fn c2_at_last(&self) -> f64 {
        *self.c2_sup.last().expect("non-empty")
    }
}

/// Evaluates the (c1) expression and the (c2) ratio on circles of the given radii, and `k_2` on
/// `shrink[i]·(1,…,1)/√m`.
pub fn verify_c1_c2(
    cert: &LyapunovCertificate,
    drift: &dyn VectorField,
    map: &FlowMap,
    radii: &[f64],
    n_dirs: usize,
    zs: &[Vec<f64>],
    shrink: &[f64],
) -> Result<C1C2Report> {
    if radii.is_empty() || zs.is_empty() || shrink.is_empty() {
        return Err(Error::Parameter("(c1)/(c2) scan needs radii, z values and a shrinking sequence".into()));
    }
    let dirs = sphere_directions(drift.dim(), n_dirs);
    let mut c1_sup = Vec::with_capacity(radii.len());
    let mut c2_sup = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut c1: f64 = 0.0;
        let mut c2 = f64::NEG_INFINITY;
        for e in &dirs {
            let y = e * r;
            let v = positive_v(cert, &y)?;
            let g = (cert.grad_v)(&y);
            let a = drift.value(&y);
            let base = g.dot(&a).abs();
            for z in zs {
                let k1 = (cert.k1)(z);
                if !(k1 > 0.0) {
                    return Err(Error::Parameter(format!("k1 = {k1} at z = {z:?}")));
                }
                let l = (cert.l_field)(z, &y)?;
                c1 = c1.max((g.dot(&l) / (v * k1)).abs());
                let (h, j) = map.phi_with_jacobian(z, &y, true)?;
                let pulled =
                    j.expect("requested").lu().solve(&drift.value(&h)).ok_or(Error::Singular { t: f64::NAN })?;
                let k2 = (cert.k2)(z);
                if !(k2 > 0.0) {
                    return Err(Error::Parameter(format!("k2 = {k2} at z = {z:?}")));
                }
                c2 = c2.max(g.dot(&(&a - pulled)) / (base * k2));
            }
        }
        c1_sup.push(c1);
        c2_sup.push(c2);
    }
    let m = zs[0].len();
    let unit = 1.0 / (m as f64).sqrt();
    let k2_values = shrink.iter().map(|&s| (cert.k2)(&vec![s * unit; m])).collect();
    Ok(C1C2Report { radii: radii.to_vec(), c1_sup, c2_sup, shrink: shrink.to_vec(), k2_values })
}
