//! Closed-form symbol expressions p(z, ξ), evaluated at points of the
//! complexified group. Every node is holomorphic in z, so an expression
//! defines a symbol on the whole tube.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::group::{lie_generator, wigner, ComplexPoint, Irrep, Label};
use crate::linalg::{self, C64, ONE, ZERO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Expr {
    Const {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// e^{i m·z} on the torus.
    CoordExp { m: Vec<i64> },
    /// Entry of the spin-ℓ representation at z ∈ SL(2, C).
    RepEntry { two_l: u32, row: usize, col: usize },
    /// Π k_j^{p_j} on the torus.
    DualMonomial { powers: Vec<u32> },
    /// λ_ξ.
    Casimir,
    /// ⟨ξ⟩^power.
    Bracket { power: f64 },
    /// dξ(X_axis); i k_axis on the torus.
    Generator { axis: usize },
    /// A literal block, only defined on irreps of dimension `dim`.
    Matrix { dim: usize, entries: Vec<C64> },
    Sum { terms: Vec<Expr> },
    /// Matrix product, left to right.
    Product { factors: Vec<Expr> },
    Power { base: Box<Expr>, exponent: u32 },
    Exp { arg: Box<Expr> },
    Inverse { arg: Box<Expr> },
    /// I on the listed irreps, 0 elsewhere.
    Indicator { labels: Vec<Label> },
    /// e^{-t λ_ξ}.
    Heat { t: f64 },
}

impl Expr {
    pub fn constant(c: C64) -> Expr {
        Expr::Const { re: c.re, im: c.im }
    }

    pub fn real(re: f64) -> Expr {
        Expr::Const { re, im: 0.0 }
    }

    pub fn coord_exp(m: Vec<i64>) -> Expr {
        Expr::CoordExp { m }
    }

    pub fn bracket(power: f64) -> Expr {
        Expr::Bracket { power }
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        Expr::Sum { terms }
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        Expr::Product { factors }
    }

    pub fn scaled(c: C64, e: Expr) -> Expr {
        Expr::product(vec![Expr::constant(c), e])
    }

    pub fn inverse(e: Expr) -> Expr {
        Expr::Inverse { arg: Box::new(e) }
    }

    pub fn one_minus(e: Expr) -> Expr {
        Expr::sum(vec![Expr::real(1.0), Expr::scaled(-ONE, e)])
    }

    /// p(z, ξ) as a row-major d_ξ×d_ξ block.
    pub fn eval(&self, z: &ComplexPoint, xi: &Irrep) -> Result<Vec<C64>> {
        let d = xi.dim;
        let scalar = |c: C64| linalg::identity(d).into_iter().map(|v| v * c).collect::<Vec<_>>();
        match self {
            Expr::Const { re, im } => Ok(scalar(C64::new(*re, *im))),
            Expr::CoordExp { m } => match z {
                ComplexPoint::Torus(w) if w.len() == m.len() => {
                    let phase: C64 = m.iter().zip(w).map(|(&mj, &wj)| wj * mj as f64).sum();
                    Ok(scalar((phase * linalg::I).exp()))
                }
                _ => invalid("coord_exp needs a torus point of matching dimension"),
            },
            Expr::RepEntry { two_l, row, col } => match z {
                ComplexPoint::Sl2(u) => {
                    let n = *two_l as usize + 1;
                    if *row >= n || *col >= n {
                        return invalid("rep_entry index out of range");
                    }
                    Ok(scalar(wigner(*two_l, u)[row * n + col]))
                }
                _ => invalid("rep_entry needs an SL(2, C) point"),
            },
            Expr::DualMonomial { powers } => match xi.torus_k() {
                Some(k) if k.len() == powers.len() => {
                    Ok(scalar(C64::from(k.iter().zip(powers).map(|(&kj, &p)| (kj as f64).powi(p as i32)).product::<f64>())))
                }
                _ => invalid("dual_monomial needs a torus irrep of matching dimension"),
            },
            Expr::Casimir => Ok(scalar(C64::from(xi.eigenvalue))),
            Expr::Bracket { power } => Ok(scalar(C64::from(xi.bracket().powf(*power)))),
            Expr::Generator { axis } => {
                let n = match &xi.label {
                    Label::Torus(k) => k.len(),
                    Label::Spin(_) => 3,
                };
                if *axis >= n {
                    return invalid("generator axis out of range");
                }
                Ok(lie_generator(xi, *axis))
            }
            Expr::Matrix { dim, entries } => {
                if entries.len() != dim * dim {
                    return invalid("matrix literal has the wrong number of entries");
                }
                if *dim != d {
                    return invalid(format!("matrix literal of size {dim} applied to an irrep of dimension {d}"));
                }
                Ok(entries.clone())
            }
            Expr::Sum { terms } => {
                let mut acc = vec![ZERO; d * d];
                for t in terms {
                    for (a, b) in acc.iter_mut().zip(t.eval(z, xi)?) {
                        *a += b;
                    }
                }
                Ok(acc)
            }
            Expr::Product { factors } => {
                let mut acc = linalg::identity(d);
                for f in factors {
                    acc = linalg::mul(&acc, &f.eval(z, xi)?, d);
                }
                Ok(acc)
            }
            Expr::Power { base, exponent } => {
                let b = base.eval(z, xi)?;
                let mut acc = linalg::identity(d);
                for _ in 0..*exponent {
                    acc = linalg::mul(&acc, &b, d);
                }
                Ok(acc)
            }
            Expr::Exp { arg } => {
                let a = arg.eval(z, xi)?;
                Ok(linalg::from_cmat(&linalg::expm(&linalg::to_cmat(&a, d))))
            }
            Expr::Inverse { arg } => {
                let a = arg.eval(z, xi)?;
                linalg::inverse(&a, d).ok_or_else(|| Error::InvalidArgument(format!("singular block at {:?}", xi.label)))
            }
            Expr::Indicator { labels } => Ok(scalar(if labels.contains(&xi.label) { ONE } else { ZERO })),
            Expr::Heat { t } => Ok(scalar(C64::from((-t * xi.eigenvalue).exp()))),
        }
    }
}
