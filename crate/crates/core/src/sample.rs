//! Seeded random test data: smooth coefficient sequences and band-limited
//! symbols.

use std::sync::Arc;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{Frame, XCoeffs, XSpec};
use crate::fourier::FourierCoefficients;
use crate::group::Irrep;
use crate::linalg::{C64, ZERO};
use crate::symbol::Symbol;

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn seeded(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.gen_range(lo..hi)
    }

    /// Uniform in the unit square [-1, 1] + i[-1, 1].
    pub fn complex(&mut self) -> C64 {
        C64::new(self.uniform(-1.0, 1.0), self.uniform(-1.0, 1.0))
    }
}

/// Random blocks with entries of size ⟨ξ⟩^{-n-1}, emulating the Fourier
/// coefficients of a smooth function on a group of dimension n.
pub fn random_band_limited(dual: &[Irrep], n: usize, rng: &mut Rng) -> FourierCoefficients {
    let blocks = dual
        .iter()
        .map(|xi| {
            let scale = xi.bracket().powi(-(n as i32) - 1);
            (0..xi.dim * xi.dim).map(|_| rng.complex() * scale).collect()
        })
        .collect();
    FourierCoefficients { dual: dual.to_vec(), blocks }
}

/// Random x-coefficients with band at most `band` and geometric decay.
pub fn random_xcoeffs(spec: &XSpec, band: usize, rng: &mut Rng) -> XCoeffs {
    match spec {
        XSpec::Torus { m, n, freqs } => {
            let total = m.pow(*n as u32);
            let mut c = vec![ZERO; total];
            for (idx, slot) in c.iter_mut().enumerate() {
                let mut rem = idx;
                let mut ext = 0usize;
                for _ in 0..*n {
                    ext = ext.max(freqs[rem % m].unsigned_abs() as usize);
                    rem /= m;
                }
                if ext <= band && 2 * ext < *m {
                    *slot = rng.complex() * 0.5f64.powi(ext as i32);
                }
            }
            XCoeffs::Torus(c)
        }
        XSpec::Su2 { spins, .. } => XCoeffs::Su2(
            spins
                .iter()
                .map(|xi| {
                    let two_j = xi.dim - 1;
                    (0..xi.dim * xi.dim)
                        .map(|_| {
                            if two_j <= band {
                                rng.complex() * 0.5f64.powi(two_j as i32) / xi.dim as f64
                            } else {
                                ZERO
                            }
                        })
                        .collect()
                })
                .collect(),
        ),
    }
}

/// A symbol of order `d` whose entries are ⟨ξ⟩^d times random functions of
/// x-band at most `band`.
pub fn random_symbol(frame: &Arc<Frame>, d: f64, band: usize, rng: &mut Rng) -> Symbol {
    let spec = frame.xspec();
    let nodes = frame.nodes();
    let mut p = Symbol::zeros(frame.clone(), d);
    for (i, xi) in frame.dual.iter().enumerate() {
        let dd = xi.dim * xi.dim;
        let w = xi.bracket().powf(d);
        for e in 0..dd {
            let vals = spec.synthesize(&random_xcoeffs(spec, band, rng));
            for node in 0..nodes {
                p.data[i][node * dd + e] = vals[node] * w;
            }
        }
    }
    p
}

/// An x-independent random symbol of order `d`.
pub fn random_sequence_symbol(frame: &Arc<Frame>, d: f64, rng: &mut Rng) -> Symbol {
    let mut p = Symbol::zeros(frame.clone(), d);
    for (i, xi) in frame.dual.iter().enumerate() {
        let dd = xi.dim * xi.dim;
        let w = xi.bracket().powf(d);
        let block: Vec<C64> = (0..dd).map(|_| rng.complex() * w).collect();
        for node in 0..frame.nodes() {
            p.data[i][node * dd..(node + 1) * dd].copy_from_slice(&block);
        }
    }
    p
}
