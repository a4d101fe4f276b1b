//! Peter–Weyl transform on a quadrature grid, Parseval, Sobolev and
//! sequence-space norms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::group::{irrep_eval, HaarGrid, Irrep};
use crate::linalg::{self, C64, ZERO};

/// One d_ξ×d_ξ block per irrep; blocks are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    pub dual: Vec<Irrep>,
    pub blocks: Vec<Vec<C64>>,
}

impl FourierCoefficients {
    pub fn new(dual: Vec<Irrep>, blocks: Vec<Vec<C64>>) -> Result<Self> {
        let a = FourierCoefficients { dual, blocks };
        a.validate()?;
        Ok(a)
    }

    pub fn zeros(dual: Vec<Irrep>) -> Self {
        let blocks = dual.iter().map(|xi| vec![ZERO; xi.dim * xi.dim]).collect();
        FourierCoefficients { dual, blocks }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dual.len() != self.blocks.len() {
            return invalid("number of blocks differs from the number of irreps");
        }
        for (xi, b) in self.dual.iter().zip(&self.blocks) {
            if b.len() != xi.dim * xi.dim {
                return invalid(format!("block for {:?} has the wrong shape", xi.label));
            }
            if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return invalid(format!("block for {:?} has non-finite entries", xi.label));
            }
        }
        Ok(())
    }

    /// Block for `xi`, if present.
    pub fn get(&self, xi: &Irrep) -> Option<&[C64]> {
        self.dual.iter().position(|e| e.label == xi.label).map(|i| &self.blocks[i][..])
    }

    /// Coefficientwise map `a(ξ) ↦ f(ξ, a(ξ))`.
    pub fn map(&self, mut f: impl FnMut(&Irrep, &[C64]) -> Vec<C64>) -> Self {
        let blocks = self.dual.iter().zip(&self.blocks).map(|(xi, b)| f(xi, b)).collect();
        FourierCoefficients { dual: self.dual.clone(), blocks }
    }

    /// Multiplies each block by a scalar function of the eigenvalue.
    pub fn scale_by(&self, f: impl Fn(&Irrep) -> C64) -> Self {
        self.map(|xi, b| {
            let s = f(xi);
            b.iter().map(|z| z * s).collect()
        })
    }

    pub fn linear_combination(&self, alpha: C64, other: &Self, beta: C64) -> Result<Self> {
        if self.dual != other.dual {
            return invalid("coefficient sets live on different duals");
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect())
            .collect();
        Ok(FourierCoefficients { dual: self.dual.clone(), blocks })
    }

    /// Σ d_ξ Tr(a(ξ)* b(ξ)), the L² inner product of the inverse transforms.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.dual != other.dual {
            return invalid("coefficient sets live on different duals");
        }
        Ok(self
            .dual
            .iter()
            .zip(self.blocks.iter().zip(&other.blocks))
            .map(|(xi, (a, b))| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * xi.dim as f64)
            .sum())
    }
}

/// Samples of a function at the nodes of a grid.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub grid: Arc<HaarGrid>,
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn new(grid: Arc<HaarGrid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid("value count differs from node count");
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: Arc<HaarGrid>, f: impl Fn(&crate::group::GroupPoint) -> C64) -> Self {
        let values = grid.nodes.iter().map(f).collect();
        GridFunction { grid, values }
    }

    /// Quadrature L² norm.
    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.grid.weights)
            .map(|(v, w)| w * v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Quadrature inner product ∫ u conj(v).
    pub fn inner(&self, other: &GridFunction) -> C64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.grid.weights)
            .map(|((a, b), w)| a * b.conj() * *w)
            .sum()
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        GridFunction { grid: self.grid.clone(), values }
    }
}

/// û(ξ) = ∫ u(y) ξ(y)* dy by quadrature.
pub fn fourier_forward(u: &GridFunction, dual: &[Irrep]) -> Result<FourierCoefficients> {
    u.grid.check_nyquist(dual)?;
    let blocks = dual
        .iter()
        .map(|xi| {
            let d = xi.dim;
            let mut acc = vec![ZERO; d * d];
            for ((node, &w), &v) in u.grid.nodes.iter().zip(&u.grid.weights).zip(&u.values) {
                let e = irrep_eval(xi, node).expect("nyquist check validated the group");
                // (ξ*)_{ab} = conj(ξ_{ba})
                for a in 0..d {
                    for b in 0..d {
                        acc[a * d + b] += v * w * e[b * d + a].conj();
                    }
                }
            }
            acc
        })
        .collect();
    Ok(FourierCoefficients { dual: dual.to_vec(), blocks })
}

/// u(x) = Σ d_ξ Tr(ξ(x) a(ξ)) at every grid node.
pub fn fourier_inverse(a: &FourierCoefficients, grid: &Arc<HaarGrid>) -> Result<GridFunction> {
    a.validate()?;
    if a.dual.iter().any(|xi| !xi.belongs_to(&grid.group)) {
        return invalid("coefficients and grid belong to different groups");
    }
    let values = grid
        .nodes
        .iter()
        .map(|node| {
            a.dual
                .iter()
                .zip(&a.blocks)
                .map(|(xi, b)| linalg::trace_mul(&irrep_eval(xi, node).unwrap(), b, xi.dim) * xi.dim as f64)
                .sum()
        })
        .collect();
    Ok(GridFunction { grid: grid.clone(), values })
}

fn weighted_norm(a: &FourierCoefficients, weight: impl Fn(&Irrep) -> f64) -> f64 {
    a.dual
        .iter()
        .zip(&a.blocks)
        .map(|(xi, b)| xi.dim as f64 * weight(xi) * linalg::hs_norm_sq(b))
        .sum::<f64>()
        .sqrt()
}

/// (Σ d_ξ (1+λ_ξ)^s Tr(a(ξ)* a(ξ)))^{1/2}.
pub fn sobolev_norm(a: &FourierCoefficients, s: f64) -> f64 {
    weighted_norm(a, |xi| (1.0 + xi.eigenvalue).powf(s))
}

/// The S^d sequence-space norm with weights ⟨ξ⟩^{2d}.
pub fn sequence_norm(a: &FourierCoefficients, d: f64) -> f64 {
    weighted_norm(a, |xi| xi.bracket().powf(2.0 * d))
}
