//! Functional calculus of −Δ and of operators that act blockwise on Fourier
//! coefficients: multipliers, Bessel potentials, the Laplacian parametrix,
//! and contour quadratures for complex powers A^z and semigroups e^{−tA^z}.
//!
//! The contour Γ_R is a keyhole around the positive axis: a ray coming in
//! along arg λ = θ₀, an arc of radius R crossing the positive axis between 0
//! and the spectrum, and a ray leaving along arg λ = −θ₀. The rays are
//! parametrized by λ = (R + c eˢ) e^{±iθ₀}, s ∈ ℝ, with c the geometric
//! mean of R and the largest eigenvalue, and integrated with the
//! trapezoid rule on a step balancing discretization against truncation, so
//! the error decays like e^{−c√Q}. The arc uses Gauss–Legendre.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{sobolev_norm, FourierCoefficients};
use crate::group::Irrep;
use crate::linalg::{self, C64, I, ONE, ZERO};
use crate::quadrature::gauss_legendre;

/// Half-aperture of the keyhole.
pub const APERTURE: f64 = FRAC_PI_4;

/// Imaginary parts of eigenvalues below this are treated as zero.
const REAL_TOL: f64 = 1e-12;

/// û(ξ) ↦ m(ξ) û(ξ), one row-major block per irrep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralOperator {
    pub dual: Vec<Irrep>,
    pub blocks: Vec<Vec<C64>>,
}

impl SpectralOperator {
    pub fn new(dual: Vec<Irrep>, blocks: Vec<Vec<C64>>) -> Result<Self> {
        if dual.len() != blocks.len() {
            return invalid("one block per irrep is required");
        }
        for (xi, b) in dual.iter().zip(&blocks) {
            if b.len() != xi.dim * xi.dim {
                return invalid(format!("block for {:?} has the wrong shape", xi.label));
            }
            if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return invalid(format!("block for {:?} is not finite", xi.label));
            }
        }
        Ok(SpectralOperator { dual, blocks })
    }

    /// f(λ_ξ) I_{d_ξ}.
    pub fn multiplier(dual: &[Irrep], f: impl Fn(f64) -> C64) -> Result<Self> {
        let blocks = dual
            .iter()
            .map(|xi| linalg::identity(xi.dim).into_iter().map(|z| z * f(xi.eigenvalue)).collect())
            .collect();
        SpectralOperator::new(dual.to_vec(), blocks)
    }

    /// Diagonal operator with the given value on each irrep.
    pub fn diagonal(dual: &[Irrep], values: &[C64]) -> Result<Self> {
        if values.len() != dual.len() {
            return invalid("one value per irrep is required");
        }
        let blocks = dual
            .iter()
            .zip(values)
            .map(|(xi, &v)| linalg::identity(xi.dim).into_iter().map(|z| z * v).collect())
            .collect();
        SpectralOperator::new(dual.to_vec(), blocks)
    }

    pub fn identity(dual: &[Irrep]) -> Self {
        SpectralOperator::multiplier(dual, |_| ONE).expect("finite")
    }

    /// −Δ.
    pub fn laplacian(dual: &[Irrep]) -> Self {
        SpectralOperator::multiplier(dual, C64::from).expect("finite")
    }

    /// (I − Δ)^{s/2}.
    pub fn bessel(dual: &[Irrep], s: f64) -> Self {
        SpectralOperator::multiplier(dual, |l| C64::from((1.0 + l).powf(s / 2.0))).expect("finite")
    }

    /// e^{−t√(−Δ)}.
    pub fn poisson(dual: &[Irrep], t: f64) -> Self {
        SpectralOperator::multiplier(dual, |l| C64::from((-t * l.sqrt()).exp())).expect("finite")
    }

    /// 1/λ off the kernel of −Δ, 0 on it.
    pub fn laplacian_parametrix(dual: &[Irrep]) -> Self {
        SpectralOperator::multiplier(dual, |l| if l == 0.0 { ZERO } else { C64::from(1.0 / l) }).expect("finite")
    }

    pub fn block(&self, xi: &Irrep) -> Option<&[C64]> {
        self.dual.iter().position(|e| e.label == xi.label).map(|i| self.blocks[i].as_slice())
    }

    fn check_dual(&self, dual: &[Irrep]) -> Result<()> {
        if self.dual.len() != dual.len() || self.dual.iter().zip(dual).any(|(a, b)| a.label != b.label) {
            return invalid("operator and argument live on different duals");
        }
        Ok(())
    }

    pub fn apply(&self, u: &FourierCoefficients) -> Result<FourierCoefficients> {
        self.check_dual(&u.dual)?;
        let blocks = self.dual.iter().zip(&self.blocks).zip(&u.blocks).map(|((xi, m), b)| linalg::mul(m, b, xi.dim)).collect();
        FourierCoefficients::new(u.dual.clone(), blocks)
    }

    /// self ∘ other.
    pub fn compose(&self, other: &SpectralOperator) -> Result<SpectralOperator> {
        self.check_dual(&other.dual)?;
        let blocks = self.dual.iter().zip(&self.blocks).zip(&other.blocks).map(|((xi, a), b)| linalg::mul(a, b, xi.dim)).collect();
        SpectralOperator::new(self.dual.clone(), blocks)
    }

    pub fn sub(&self, other: &SpectralOperator) -> Result<SpectralOperator> {
        self.check_dual(&other.dual)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        SpectralOperator::new(self.dual.clone(), blocks)
    }

    /// Largest entrywise difference.
    pub fn max_diff(&self, other: &SpectralOperator) -> Result<f64> {
        self.check_dual(&other.dual)?;
        Ok(self.blocks.iter().zip(&other.blocks).map(|(a, b)| linalg::max_abs_diff(a, b)).fold(0.0, f64::max))
    }

    /// Blockwise conjugation g ↦ U(ξ) m(ξ) U(ξ)*.
    pub fn conjugate(&self, u: &[Vec<C64>]) -> Result<SpectralOperator> {
        if u.len() != self.dual.len() {
            return invalid("one conjugating block per irrep is required");
        }
        let blocks = self
            .dual
            .iter()
            .zip(&self.blocks)
            .zip(u)
            .map(|((xi, m), g)| linalg::mul(&linalg::mul(g, m, xi.dim), &linalg::adjoint(g, xi.dim), xi.dim))
            .collect();
        SpectralOperator::new(self.dual.clone(), blocks)
    }

    /// Eigenvalues of each block, which must be diagonal with real
    /// nonnegative entries.
    fn nonnegative_spectrum(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.dual.len());
        for (xi, b) in self.dual.iter().zip(&self.blocks) {
            let d = xi.dim;
            let scale = b.iter().map(|z| z.norm()).fold(1.0, f64::max);
            let mut diag = Vec::with_capacity(d);
            for r in 0..d {
                for c in 0..d {
                    if r != c && b[r * d + c].norm() > REAL_TOL * scale {
                        return Err(Error::Unsupported("contour calculus needs diagonal blocks".into()));
                    }
                }
                let a = b[r * d + r];
                if a.im.abs() > REAL_TOL * scale || a.re < -REAL_TOL * scale {
                    return Err(Error::InvalidContour(format!("eigenvalue {a} at {:?} is off the nonnegative axis", xi.label)));
                }
                diag.push(a.re.max(0.0));
            }
            out.push(diag);
        }
        Ok(out)
    }

    /// Smallest nonzero eigenvalue, if any.
    pub fn spectral_gap(&self) -> Result<Option<f64>> {
        let spec = self.nonnegative_spectrum()?;
        Ok(spec.iter().flatten().copied().filter(|&a| a > 0.0).min_by(f64::total_cmp))
    }

    fn from_diagonals(&self, diags: Vec<Vec<C64>>) -> SpectralOperator {
        let blocks = self
            .dual
            .iter()
            .zip(diags)
            .map(|(xi, v)| {
                let mut b = vec![ZERO; xi.dim * xi.dim];
                for (r, x) in v.into_iter().enumerate() {
                    b[r * xi.dim + r] = x;
                }
                b
            })
            .collect();
        SpectralOperator { dual: self.dual.clone(), blocks }
    }
}

/// Outcome of a contour quadrature: the operator, the number of nodes per
/// contour piece and an estimate of the truncation error of the rays.
#[derive(Clone, Debug)]
pub struct ContourResult {
    pub operator: SpectralOperator,
    pub nodes: usize,
    pub step: f64,
    pub tail_bound: f64,
}

/// Nodes and weights (dλ included) of one piece of the keyhole.
struct Keyhole {
    nodes: Vec<(C64, C64)>,
    step: f64,
    /// Indices of the first and last node of each ray.
    ends: Vec<usize>,
}

/// Γ_R traversed counterclockwise around the spectrum; `rate` is the
/// exponential decay of the integrand in s along the outer end of the rays.
fn keyhole(radius: f64, scale: f64, q: usize, rate: f64) -> Keyhole {
    let n = (q.saturating_sub(1) / 2).max(1) as i64;
    // Sinc step for a strip of half-width θ₀ and the slower of the two decay
    // rates (the inner end decays like eˢ).
    let gamma = rate.min(1.0);
    let h = (PI * APERTURE / (gamma * n as f64)).sqrt();
    let mut nodes = Vec::with_capacity(2 * (2 * n as usize + 1) + q);
    let mut ends = Vec::new();
    let up = C64::from_polar(1.0, APERTURE);
    let down = up.conj();
    // incoming ray, from ∞ e^{iθ₀} towards R e^{iθ₀}
    ends.push(nodes.len());
    for j in (-n..=n).rev() {
        let e = scale * (j as f64 * h).exp();
        nodes.push(((radius + e) * up, -up * e * h));
    }
    ends.push(nodes.len() - 1);
    // arc from θ₀ to −θ₀ through 0
    for (phi, w) in gauss_legendre(q.max(2), -APERTURE, APERTURE).into_iter().rev() {
        let l = C64::from_polar(radius, phi);
        nodes.push((l, -I * l * w));
    }
    // outgoing ray
    ends.push(nodes.len());
    for j in -n..=n {
        let e = scale * (j as f64 * h).exp();
        nodes.push(((radius + e) * down, down * e * h));
    }
    ends.push(nodes.len() - 1);
    Keyhole { nodes, step: h, ends }
}

fn check_radius(op: &SpectralOperator, radius: f64, q: usize) -> Result<Vec<Vec<f64>>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidContour("the keyhole radius must be positive".into()));
    }
    if q < 8 {
        return invalid("contour quadrature needs at least 8 nodes");
    }
    let spec = op.nonnegative_spectrum()?;
    if let Some(a) = spec.iter().flatten().copied().find(|&a| a > 0.0 && a <= radius) {
        return Err(Error::InvalidContour(format!("radius {radius} encloses the nonzero eigenvalue {a}")));
    }
    Ok(spec)
}

/// Centre of the ray parametrization: the geometric mean of the radius and
/// the largest eigenvalue.
fn ray_scale(radius: f64, spec: &[Vec<f64>]) -> f64 {
    let top = spec.iter().flatten().copied().fold(radius, f64::max);
    (radius * top).sqrt()
}

/// Default keyhole radius: half the smallest nonzero eigenvalue.
pub fn default_radius(op: &SpectralOperator) -> Result<f64> {
    Ok(op.spectral_gap()?.map_or(0.5, |g| 0.5 * g))
}

/// Principal λ^w.
fn cpow(l: C64, w: C64) -> C64 {
    (w * l.ln()).exp()
}

fn integrate(k: &Keyhole, a: f64, g: impl Fn(C64) -> C64) -> (C64, f64) {
    let mut acc = ZERO;
    let mut tail: f64 = 0.0;
    for (idx, &(l, w)) in k.nodes.iter().enumerate() {
        let v = g(l) / (l - a) * w;
        acc += v;
        if k.ends.contains(&idx) {
            tail = tail.max(v.norm() / k.step);
        }
    }
    (acc / (2.0 * PI * I), tail / (2.0 * PI))
}

/// A^z = (1/2πi) ∫_Γ λ^{z−k} (λ − A)^{−1} A^k dλ, eigenvalue by eigenvalue.
/// The kernel of A is annihilated by the factor A^k. The integrand decays
/// like |λ|^{Re z − k}; k ≥ Re z + 1 keeps Q = 400 well inside 1e−6.
pub fn complex_power_contour(op: &SpectralOperator, z: C64, k: u32, radius: f64, q: usize) -> Result<ContourResult> {
    if k == 0 || !(z.re < k as f64) {
        return invalid("the power needs an integer k ≥ 1 with Re z < k");
    }
    let spec = check_radius(op, radius, q)?;
    let rate = k as f64 - z.re;
    let kh = keyhole(radius, ray_scale(radius, &spec), q, rate);
    let w = z - k as f64;
    let mut tail_bound: f64 = 0.0;
    let diags = spec
        .iter()
        .map(|v| {
            v.iter()
                .map(|&a| {
                    if a == 0.0 {
                        return ZERO;
                    }
                    let ak = a.powi(k as i32);
                    let (val, tail) = integrate(&kh, a, |l| cpow(l, w) * ak);
                    tail_bound = tail_bound.max(tail);
                    val
                })
                .collect()
        })
        .collect();
    Ok(ContourResult { operator: op.from_diagonals(diags), nodes: q, step: kh.step, tail_bound })
}

/// e^{−tA^z} = (1/2πi) ∫_Γ e^{−tλ^z} (λ − A)^{−1} dλ + (1/2πi) ∮_{|λ|=R} (λ − A)^{−1} dλ.
/// The circle term is the projection onto the kernel of A.
pub fn exp_power_contour(op: &SpectralOperator, t: f64, z: C64, radius: f64, q: usize) -> Result<ContourResult> {
    if !(t > 0.0) || !t.is_finite() {
        return invalid("the semigroup time must be positive");
    }
    if !(z.re > 0.0) {
        return invalid("the semigroup needs Re z > 0");
    }
    if z.im != 0.0 || z.re * APERTURE >= PI / 2.0 {
        return Err(Error::InvalidContour(format!("e^(-t λ^z) does not decay in the sector of half-angle π/4 for z = {z}")));
    }
    let spec = check_radius(op, radius, q)?;
    let kh = keyhole(radius, ray_scale(radius, &spec), q, 1.0);
    let circle: Vec<(C64, C64)> = (0..q)
        .map(|j| {
            let l = C64::from_polar(radius, 2.0 * PI * j as f64 / q as f64);
            (l, I * l * (2.0 * PI / q as f64))
        })
        .collect();
    let mut tail_bound: f64 = 0.0;
    let diags = spec
        .iter()
        .map(|v| {
            v.iter()
                .map(|&a| {
                    let (val, tail) = integrate(&kh, a, |l| (-t * cpow(l, z)).exp());
                    tail_bound = tail_bound.max(tail);
                    let ring: C64 = circle.iter().map(|&(l, w)| w / (l - a)).sum();
                    val + ring / (2.0 * PI * I)
                })
                .collect()
        })
        .collect();
    Ok(ContourResult { operator: op.from_diagonals(diags), nodes: q, step: kh.step, tail_bound })
}

/// max over test vectors of ‖(AB − BA)u‖_{L²} / ‖u‖_{L²}.
pub fn commutator_norm(a: &SpectralOperator, b: &SpectralOperator, tests: &[FourierCoefficients]) -> Result<f64> {
    a.check_dual(&b.dual)?;
    let ab = a.compose(b)?;
    let ba = b.compose(a)?;
    let c = ab.sub(&ba)?;
    let mut worst: f64 = 0.0;
    for u in tests {
        let norm = sobolev_norm(u, 0.0);
        if norm == 0.0 {
            continue;
        }
        worst = worst.max(sobolev_norm(&c.apply(u)?, 0.0) / norm);
    }
    Ok(worst)
}
