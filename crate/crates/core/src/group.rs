//! Group backends: the n-torus and SU(2).
//!
//! SU(2) representations are realized on homogeneous polynomials of degree
//! 2ℓ in two variables, which makes evaluation valid on all of SL(2, C) and
//! hence on the complexified tube.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{self, CMat, C64, I, ONE, ZERO};
use crate::quadrature::gauss_legendre;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroupSpec {
    Torus { n: usize },
    Su2,
}

impl GroupSpec {
    pub fn torus(n: usize) -> Self {
        GroupSpec::Torus { n }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroupSpec::Torus { n } if *n == 0 => invalid("torus dimension must be at least 1"),
            _ => Ok(()),
        }
    }

    /// Dimension of the group, equal to the dimension of its Lie algebra.
    pub fn dim(&self) -> usize {
        match self {
            GroupSpec::Torus { n } => *n,
            GroupSpec::Su2 => 3,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, GroupSpec::Torus { .. })
    }

    pub fn identity(&self) -> GroupPoint {
        match self {
            GroupSpec::Torus { n } => GroupPoint::Torus(vec![0.0; *n]),
            GroupSpec::Su2 => GroupPoint::Su2(SU2_ID),
        }
    }
}

/// Irrep label: a lattice point for the torus, twice the spin for SU(2).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Torus(Vec<i64>),
    Spin(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Label", into = "Label")]
pub struct Irrep {
    pub label: Label,
    pub dim: usize,
    pub eigenvalue: f64,
}

impl From<Label> for Irrep {
    fn from(label: Label) -> Self {
        match label {
            Label::Torus(k) => Irrep::torus(k),
            Label::Spin(two_l) => Irrep::spin(two_l),
        }
    }
}

impl From<Irrep> for Label {
    fn from(xi: Irrep) -> Self {
        xi.label
    }
}

impl Irrep {
    pub fn torus(k: Vec<i64>) -> Self {
        let eigenvalue = k.iter().map(|&v| (v * v) as f64).sum();
        Irrep { label: Label::Torus(k), dim: 1, eigenvalue }
    }

    /// Spin ℓ = two_l / 2.
    pub fn spin(two_l: u32) -> Self {
        let l = two_l as f64 / 2.0;
        Irrep { label: Label::Spin(two_l), dim: two_l as usize + 1, eigenvalue: l * (l + 1.0) }
    }

    /// ⟨ξ⟩ = (1 + λ_ξ)^{1/2}.
    pub fn bracket(&self) -> f64 {
        (1.0 + self.eigenvalue).sqrt()
    }

    pub fn torus_k(&self) -> Option<&[i64]> {
        match &self.label {
            Label::Torus(k) => Some(k),
            Label::Spin(_) => None,
        }
    }

    pub fn two_l(&self) -> Option<u32> {
        match self.label {
            Label::Spin(t) => Some(t),
            Label::Torus(_) => None,
        }
    }

    pub fn belongs_to(&self, group: &GroupSpec) -> bool {
        match (&self.label, group) {
            (Label::Torus(k), GroupSpec::Torus { n }) => k.len() == *n,
            (Label::Spin(_), GroupSpec::Su2) => true,
            _ => false,
        }
    }

    fn order_key(&self, other: &Irrep) -> Ordering {
        self.eigenvalue
            .total_cmp(&other.eigenvalue)
            .then_with(|| self.label.cmp(&other.label))
    }
}

pub fn sort_dual(dual: &mut [Irrep]) {
    dual.sort_by(|a, b| a.order_key(b));
}

/// All irreps with ⟨ξ⟩ ≤ cutoff, sorted by (λ, label).
pub fn enumerate_dual(group: &GroupSpec, cutoff: f64) -> Result<Vec<Irrep>> {
    group.validate()?;
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return invalid(format!("cutoff must be positive and finite, got {cutoff}"));
    }
    let max_lambda = cutoff * cutoff - 1.0 + 1e-12;
    let mut out = Vec::new();
    if max_lambda < -1e-12 {
        return Ok(out);
    }
    match group {
        GroupSpec::Torus { n } => {
            let r = max_lambda.max(0.0).sqrt().floor() as i64;
            let mut k = vec![-r; *n];
            loop {
                let lam: i64 = k.iter().map(|v| v * v).sum();
                if (lam as f64) <= max_lambda {
                    out.push(Irrep::torus(k.clone()));
                }
                let mut axis = *n;
                loop {
                    if axis == 0 {
                        sort_dual(&mut out);
                        return Ok(out);
                    }
                    axis -= 1;
                    if k[axis] < r {
                        k[axis] += 1;
                        break;
                    }
                    k[axis] = -r;
                }
            }
        }
        GroupSpec::Su2 => {
            let mut two_l = 0u32;
            loop {
                let xi = Irrep::spin(two_l);
                if xi.eigenvalue > max_lambda {
                    break;
                }
                out.push(xi);
                two_l += 1;
            }
            Ok(out)
        }
    }
}

pub type Su2Mat = [C64; 4];

const SU2_ID: Su2Mat = [ONE, ZERO, ZERO, ONE];

/// A point of the compact group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupPoint {
    Torus(Vec<f64>),
    /// Row-major 2×2 matrix.
    Su2(Su2Mat),
}

/// A point of the complexified group: C^n or SL(2, C).
#[derive(Clone, Debug, PartialEq)]
pub enum ComplexPoint {
    Torus(Vec<C64>),
    Sl2(Su2Mat),
}

/// The point exp(iY)x of the tube, stored by its Cartan coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubePoint {
    pub base: GroupPoint,
    pub imag: Vec<f64>,
}

impl TubePoint {
    pub fn new(base: GroupPoint, imag: Vec<f64>) -> Self {
        TubePoint { base, imag }
    }

    pub fn real(base: GroupPoint) -> Self {
        let n = match &base {
            GroupPoint::Torus(x) => x.len(),
            GroupPoint::Su2(_) => 3,
        };
        TubePoint { base, imag: vec![0.0; n] }
    }

    pub fn imag_norm(&self) -> f64 {
        self.imag.iter().map(|y| y * y).sum::<f64>().sqrt()
    }

    pub fn complexify(&self) -> ComplexPoint {
        match &self.base {
            GroupPoint::Torus(x) => ComplexPoint::Torus(
                x.iter().zip(&self.imag).map(|(&a, &b)| C64::new(a, b)).collect(),
            ),
            GroupPoint::Su2(u) => ComplexPoint::Sl2(mat2_mul(&exp_i_y(&self.imag), u)),
        }
    }
}

pub(crate) fn mat2_mul(a: &Su2Mat, b: &Su2Mat) -> Su2Mat {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn mat2_adjoint(a: &Su2Mat) -> Su2Mat {
    [a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()]
}

pub fn pauli(axis: usize) -> Su2Mat {
    match axis {
        0 => [ZERO, ONE, ONE, ZERO],
        1 => [ZERO, -I, I, ZERO],
        2 => [ONE, ZERO, ZERO, -ONE],
        _ => panic!("su(2) has three axes"),
    }
}

/// The orthonormal basis element X_axis = -iσ_axis/2 of su(2).
pub fn su2_basis(axis: usize) -> Su2Mat {
    pauli(axis).map(|z| z * C64::new(0.0, -0.5))
}

/// exp(iY) for Y = Σ y_j X_j, which equals exp(Σ y_j σ_j / 2).
pub fn exp_i_y(y: &[f64]) -> Su2Mat {
    let t = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
    if t == 0.0 {
        return SU2_ID;
    }
    let (ch, sh) = ((t / 2.0).cosh(), (t / 2.0).sinh());
    let mut out = SU2_ID.map(|z| z * ch);
    for (axis, &ya) in y.iter().enumerate() {
        let s = pauli(axis);
        for k in 0..4 {
            out[k] += s[k] * (sh * ya / t);
        }
    }
    out
}

/// Euler-angle parametrization exp(-iασ3/2) exp(-iβσ2/2) exp(-iγσ3/2).
pub fn su2_euler(alpha: f64, beta: f64, gamma: f64) -> GroupPoint {
    let rz = |t: f64| [C64::from_polar(1.0, -t / 2.0), ZERO, ZERO, C64::from_polar(1.0, t / 2.0)];
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let ry = [C64::from(c), C64::from(-s), C64::from(s), C64::from(c)];
    GroupPoint::Su2(mat2_mul(&mat2_mul(&rz(alpha), &ry), &rz(gamma)))
}

pub fn group_mul(x: &GroupPoint, y: &GroupPoint) -> Result<GroupPoint> {
    match (x, y) {
        (GroupPoint::Torus(a), GroupPoint::Torus(b)) if a.len() == b.len() => Ok(GroupPoint::Torus(
            a.iter().zip(b).map(|(p, q)| (p + q).rem_euclid(2.0 * PI)).collect(),
        )),
        (GroupPoint::Su2(a), GroupPoint::Su2(b)) => Ok(GroupPoint::Su2(mat2_mul(a, b))),
        _ => invalid("group points belong to different groups"),
    }
}

pub fn group_inv(x: &GroupPoint) -> GroupPoint {
    match x {
        GroupPoint::Torus(a) => GroupPoint::Torus(a.iter().map(|p| (-p).rem_euclid(2.0 * PI)).collect()),
        GroupPoint::Su2(a) => GroupPoint::Su2(mat2_adjoint(a)),
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        0.0
    } else {
        factorial(n) / (factorial(k) * factorial(n - k))
    }
}

/// Spin-ℓ representation of an arbitrary 2×2 complex matrix acting on
/// normalized monomials x^{ℓ+m} y^{ℓ-m}; index 0 is m = +ℓ.
pub fn wigner(two_l: u32, u: &Su2Mat) -> Vec<C64> {
    let d = two_l as usize + 1;
    let (a, b, c, dd) = (u[0], u[1], u[2], u[3]);
    let mut out = vec![ZERO; d * d];
    // p = ℓ + m, q = ℓ + m'
    for col in 0..d {
        let p = two_l - col as u32;
        for row in 0..d {
            let q = two_l - row as u32;
            let norm = (factorial(q) * factorial(two_l - q) / (factorial(p) * factorial(two_l - p))).sqrt();
            let mut acc = ZERO;
            for s in 0..=p.min(q) {
                let t = q - s;
                if t > two_l - p {
                    continue;
                }
                let coef = binomial(p, s) * binomial(two_l - p, t);
                acc += a.powu(s) * c.powu(p - s) * b.powu(t) * dd.powu(two_l - p - t) * coef;
            }
            out[row * d + col] = acc * norm;
        }
    }
    out
}

/// Differential of the spin-ℓ representation at an arbitrary 2×2 matrix.
pub fn wigner_lie(two_l: u32, x: &Su2Mat) -> Vec<C64> {
    let d = two_l as usize + 1;
    let l = two_l as f64 / 2.0;
    let mut out = vec![ZERO; d * d];
    for col in 0..d {
        let m = l - col as f64;
        out[col * d + col] = x[0] * (l + m) + x[3] * (l - m);
        if col + 1 < d {
            out[(col + 1) * d + col] = x[2] * ((l + m) * (l - m + 1.0)).sqrt();
        }
        if col > 0 {
            out[(col - 1) * d + col] = x[1] * ((l - m) * (l + m + 1.0)).sqrt();
        }
    }
    out
}

/// dξ(X_axis) for the orthonormal basis of the Lie algebra.
pub fn lie_generator(xi: &Irrep, axis: usize) -> Vec<C64> {
    match &xi.label {
        Label::Torus(k) => vec![C64::new(0.0, k[axis] as f64)],
        Label::Spin(t) => wigner_lie(*t, &su2_basis(axis)),
    }
}

/// ξ(x) on the compact group.
pub fn irrep_eval(xi: &Irrep, x: &GroupPoint) -> Result<Vec<C64>> {
    match (&xi.label, x) {
        (Label::Torus(k), GroupPoint::Torus(a)) if k.len() == a.len() => {
            let phase: f64 = k.iter().zip(a).map(|(&kj, &aj)| kj as f64 * aj).sum();
            Ok(vec![C64::from_polar(1.0, phase)])
        }
        (Label::Spin(t), GroupPoint::Su2(u)) => Ok(wigner(*t, u)),
        _ => invalid("irrep and group point belong to different groups"),
    }
}

/// ξ at a point of the complexified group.
pub fn irrep_eval_complex(xi: &Irrep, z: &ComplexPoint) -> Result<Vec<C64>> {
    match (&xi.label, z) {
        (Label::Torus(k), ComplexPoint::Torus(w)) if k.len() == w.len() => {
            let phase: C64 = k.iter().zip(w).map(|(&kj, &wj)| wj * kj as f64).sum();
            Ok(vec![(I * phase).exp()])
        }
        (Label::Spin(t), ComplexPoint::Sl2(u)) => Ok(wigner(*t, u)),
        _ => invalid("irrep and complex point belong to different groups"),
    }
}

/// ξ(exp(iY)x) = exp(i dξ(Y)) ξ(x).
pub fn irrep_eval_tube(xi: &Irrep, z: &TubePoint) -> Result<Vec<C64>> {
    let base = irrep_eval(xi, &z.base)?;
    if z.imag.iter().all(|&y| y == 0.0) {
        return Ok(base);
    }
    match &xi.label {
        Label::Torus(k) => {
            if k.len() != z.imag.len() {
                return invalid("imaginary part has the wrong dimension");
            }
            let damp: f64 = k.iter().zip(&z.imag).map(|(&kj, &yj)| kj as f64 * yj).sum();
            Ok(vec![base[0] * (-damp).exp()])
        }
        Label::Spin(_) => {
            if z.imag.len() != 3 {
                return invalid("su(2) vectors have three components");
            }
            let d = xi.dim;
            let mut gen = CMat::zeros(d, d);
            for (axis, &y) in z.imag.iter().enumerate() {
                let g = linalg::to_cmat(&lie_generator(xi, axis), d);
                gen += g * C64::new(0.0, y);
            }
            let e = linalg::from_cmat(&linalg::expm(&gen));
            Ok(linalg::mul(&e, &base, d))
        }
    }
}

/// Quadrature nodes with normalized Haar weights.
#[derive(Clone, Debug)]
pub struct HaarGrid {
    pub group: GroupSpec,
    pub resolution: usize,
    pub nodes: Vec<GroupPoint>,
    pub weights: Vec<f64>,
}

impl HaarGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Checks that every irrep in `dual` is resolved.
    pub fn check_nyquist(&self, dual: &[Irrep]) -> Result<()> {
        for xi in dual {
            if !xi.belongs_to(&self.group) {
                return invalid("dual and grid belong to different groups");
            }
            let ok = match &xi.label {
                Label::Torus(k) => k.iter().all(|&v| 2 * v.unsigned_abs() as usize + 1 <= self.resolution),
                Label::Spin(t) => *t as usize <= self.resolution,
            };
            if !ok {
                return invalid(format!(
                    "grid resolution {} violates the Nyquist condition for irrep {:?}",
                    self.resolution, xi.label
                ));
            }
        }
        Ok(())
    }
}

/// Product quadrature: uniform on the torus; on SU(2) uniform in the two
/// Euler angles α, γ and Gauss–Legendre in cos β. The SU(2) rule with
/// resolution r integrates exactly every product of matrix coefficients
/// whose spins add up to at most r.
pub fn haar_grid(group: &GroupSpec, resolution: usize) -> Result<HaarGrid> {
    group.validate()?;
    if resolution < 1 {
        return invalid("grid resolution must be at least 1");
    }
    let (nodes, weights) = match group {
        GroupSpec::Torus { n } => {
            let m = resolution;
            let total = m.pow(*n as u32);
            let mut nodes = Vec::with_capacity(total);
            for idx in 0..total {
                let mut rem = idx;
                let mut x = vec![0.0; *n];
                for axis in (0..*n).rev() {
                    x[axis] = 2.0 * PI * (rem % m) as f64 / m as f64;
                    rem /= m;
                }
                nodes.push(GroupPoint::Torus(x));
            }
            (nodes, vec![1.0 / total as f64; total])
        }
        GroupSpec::Su2 => {
            let r = resolution;
            let n_alpha = r + 1;
            let n_gamma = 2 * r + 1;
            let betas = gauss_legendre(r / 2 + 1, -1.0, 1.0);
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            for i in 0..n_alpha {
                let alpha = 2.0 * PI * i as f64 / n_alpha as f64;
                for &(t, wt) in &betas {
                    let beta = t.clamp(-1.0, 1.0).acos();
                    for j in 0..n_gamma {
                        let gamma = 4.0 * PI * j as f64 / n_gamma as f64;
                        nodes.push(su2_euler(alpha, beta, gamma));
                        weights.push(wt / 2.0 / (n_alpha * n_gamma) as f64);
                    }
                }
            }
            (nodes, weights)
        }
    };
    Ok(HaarGrid { group: group.clone(), resolution, nodes, weights })
}
