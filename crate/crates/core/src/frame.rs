//! A frame bundles a truncated dual with a spatial quadrature grid and the
//! tabulated representation matrices at the grid nodes. It also provides the
//! spectral analysis of scalar grid functions in the x variable, which is how
//! symbols are differentiated and how their x-bandwidth is measured.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::group::{enumerate_dual, haar_grid, irrep_eval, GroupSpec, HaarGrid, Irrep, Label};
use crate::linalg::{self, C64, ZERO};

#[derive(Debug)]
pub struct Frame {
    pub group: GroupSpec,
    pub dual: Vec<Irrep>,
    pub grid: Arc<HaarGrid>,
    index: HashMap<Label, usize>,
    table: Vec<Vec<C64>>,
    xspec: OnceLock<XSpec>,
}

impl Frame {
    pub fn new(group: &GroupSpec, cutoff: f64, resolution: usize) -> Result<Arc<Frame>> {
        let dual = enumerate_dual(group, cutoff)?;
        let grid = Arc::new(haar_grid(group, resolution)?);
        Frame::from_parts(dual, grid)
    }

    pub fn from_parts(dual: Vec<Irrep>, grid: Arc<HaarGrid>) -> Result<Arc<Frame>> {
        grid.check_nyquist(&dual)?;
        let mut index = HashMap::with_capacity(dual.len());
        for (i, xi) in dual.iter().enumerate() {
            if index.insert(xi.label.clone(), i).is_some() {
                return invalid(format!("duplicate irrep {:?}", xi.label));
            }
        }
        let table = dual
            .iter()
            .map(|xi| {
                let mut out = Vec::with_capacity(grid.len() * xi.dim * xi.dim);
                for node in &grid.nodes {
                    out.extend(irrep_eval(xi, node).expect("nyquist check validated the group"));
                }
                out
            })
            .collect();
        Ok(Arc::new(Frame {
            group: grid.group.clone(),
            dual,
            grid,
            index,
            table,
            xspec: OnceLock::new(),
        }))
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn position(&self, label: &Label) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// ξ_i(x_node) as a row-major block.
    pub fn eval(&self, i: usize, node: usize) -> &[C64] {
        let d = self.dual[i].dim;
        &self.table[i][node * d * d..(node + 1) * d * d]
    }

    /// Largest ⟨ξ⟩ in the dual.
    pub fn max_bracket(&self) -> f64 {
        self.dual.iter().map(Irrep::bracket).fold(1.0, f64::max)
    }

    /// Irreps with index `j` such that ξ_j = ξ_i + e_axis (torus only).
    pub fn torus_neighbor(&self, i: usize, shift: &[i64]) -> Option<usize> {
        let k = self.dual[i].torus_k()?;
        let label = Label::Torus(k.iter().zip(shift).map(|(a, b)| a + b).collect());
        self.position(&label)
    }

    pub fn same_layout(&self, other: &Frame) -> bool {
        std::ptr::eq(self, other)
            || (self.dual == other.dual
                && self.grid.resolution == other.grid.resolution
                && self.grid.group == other.grid.group)
    }

    pub fn xspec(&self) -> &XSpec {
        self.xspec.get_or_init(|| XSpec::new(&self.grid))
    }
}

/// Spectral analysis in the x variable of scalar functions on the grid.
#[derive(Debug)]
pub enum XSpec {
    Torus {
        m: usize,
        n: usize,
        /// Signed frequency per axis for each FFT bin.
        freqs: Vec<i64>,
    },
    Su2 {
        spins: Vec<Irrep>,
        /// Conjugate-transposed representation matrices weighted by the
        /// quadrature weights, one flat array per spin.
        analysis: Vec<Vec<C64>>,
        synthesis: Vec<Vec<C64>>,
    },
}

/// Coefficients of a scalar grid function in the x variable.
#[derive(Clone, Debug)]
pub enum XCoeffs {
    /// Row-major array of FFT bins normalized so that f = Σ c_m e^{imx}.
    Torus(Vec<C64>),
    /// One block per spin j ≤ r/2 so that f = Σ d_j Tr(D^j(x) F_j).
    Su2(Vec<Vec<C64>>),
}

impl XSpec {
    fn new(grid: &HaarGrid) -> XSpec {
        match grid.group {
            GroupSpec::Torus { n } => {
                let m = grid.resolution;
                let freqs = (0..m)
                    .map(|f| if 2 * f < m { f as i64 } else { f as i64 - m as i64 })
                    .collect();
                XSpec::Torus { m, n, freqs }
            }
            GroupSpec::Su2 => {
                let spins: Vec<Irrep> = (0..=grid.resolution as u32).map(Irrep::spin).collect();
                let mut analysis = Vec::new();
                let mut synthesis = Vec::new();
                for xi in &spins {
                    let d = xi.dim;
                    let mut a = Vec::with_capacity(grid.len() * d * d);
                    let mut s = Vec::with_capacity(grid.len() * d * d);
                    for (node, &w) in grid.nodes.iter().zip(&grid.weights) {
                        let e = irrep_eval(xi, node).unwrap();
                        s.extend_from_slice(&e);
                        a.extend(linalg::adjoint(&e, d).into_iter().map(|z| z * w));
                    }
                    analysis.push(a);
                    synthesis.push(s);
                }
                XSpec::Su2 { spins, analysis, synthesis }
            }
        }
    }

    pub fn analyze(&self, values: &[C64]) -> XCoeffs {
        match self {
            XSpec::Torus { m, n, .. } => {
                let mut data = values.to_vec();
                fft_nd(&mut data, *m, *n, false);
                let scale = 1.0 / data.len() as f64;
                data.iter_mut().for_each(|z| *z *= scale);
                XCoeffs::Torus(data)
            }
            XSpec::Su2 { spins, analysis, .. } => {
                let blocks = spins
                    .iter()
                    .zip(analysis)
                    .map(|(xi, a)| {
                        let dd = xi.dim * xi.dim;
                        let mut acc = vec![ZERO; dd];
                        for (node, &v) in values.iter().enumerate() {
                            if v == ZERO {
                                continue;
                            }
                            for (e, slot) in acc.iter_mut().enumerate() {
                                *slot += v * a[node * dd + e];
                            }
                        }
                        acc
                    })
                    .collect();
                XCoeffs::Su2(blocks)
            }
        }
    }

    pub fn synthesize(&self, coeffs: &XCoeffs) -> Vec<C64> {
        match (self, coeffs) {
            (XSpec::Torus { m, n, .. }, XCoeffs::Torus(c)) => {
                let mut data = c.clone();
                fft_nd(&mut data, *m, *n, true);
                data
            }
            (XSpec::Su2 { spins, synthesis, .. }, XCoeffs::Su2(blocks)) => {
                let nodes = synthesis[0].len();
                let mut out = vec![ZERO; nodes];
                for ((xi, s), f) in spins.iter().zip(synthesis).zip(blocks) {
                    let d = xi.dim;
                    let dd = d * d;
                    if f.iter().all(|z| *z == ZERO) {
                        continue;
                    }
                    for (node, slot) in out.iter_mut().enumerate() {
                        *slot += linalg::trace_mul(&s[node * dd..(node + 1) * dd], f, d) * d as f64;
                    }
                }
                out
            }
            _ => panic!("coefficient kind does not match the spectral engine"),
        }
    }

    /// Band extent of each coefficient slot: max |m_j| on the torus, 2j on SU(2).
    fn slot_bands(&self) -> Vec<(usize, usize)> {
        match self {
            XSpec::Torus { m, n, freqs } => {
                let total = m.pow(*n as u32);
                (0..total)
                    .map(|idx| {
                        let mut rem = idx;
                        let mut band = 0usize;
                        for _ in 0..*n {
                            band = band.max(freqs[rem % m].unsigned_abs() as usize);
                            rem /= m;
                        }
                        (idx, band)
                    })
                    .collect()
            }
            XSpec::Su2 { spins, .. } => {
                spins.iter().enumerate().map(|(i, xi)| (i, xi.dim - 1)).collect()
            }
        }
    }

    /// Largest band the grid represents without aliasing.
    pub fn max_band(&self) -> usize {
        match self {
            XSpec::Torus { m, .. } => m / 2,
            XSpec::Su2 { spins, .. } => spins.len() - 1,
        }
    }

    /// Squared ℓ²-mass of the coefficients per band value.
    pub fn band_masses(&self, coeffs: &XCoeffs) -> Vec<f64> {
        let mut masses = vec![0.0; self.max_band() + 1];
        match coeffs {
            XCoeffs::Torus(c) => {
                for (idx, band) in self.slot_bands() {
                    masses[band] += c[idx].norm_sqr();
                }
            }
            XCoeffs::Su2(blocks) => {
                for (j, f) in blocks.iter().enumerate() {
                    masses[j] += (j + 1) as f64 * linalg::hs_norm_sq(f);
                }
            }
        }
        masses
    }

    /// Smallest band B such that the coefficient mass beyond B is at most
    /// `tol` times the total. Fails when the grid cannot resolve the function.
    pub fn effective_band(&self, values: &[C64], tol: f64) -> Result<usize> {
        self.effective_band_above(values, tol, 0.0)
    }

    /// [`XSpec::effective_band`] ignoring content of RMS amplitude below the
    /// absolute `floor`.
    pub fn effective_band_above(&self, values: &[C64], tol: f64, floor: f64) -> Result<usize> {
        let coeffs = self.analyze(values);
        let masses = self.band_masses(&coeffs);
        let total: f64 = masses.iter().sum();
        let floor2 = floor * floor;
        if total <= floor2 {
            return Ok(0);
        }
        let top = *masses.last().unwrap();
        let unresolved = match self {
            XSpec::Torus { .. } => top > (1e-20 * total).max(floor2),
            XSpec::Su2 { .. } => {
                let back = self.synthesize(&coeffs);
                let err: f64 = back.iter().zip(values).map(|(a, b)| (a - b).norm_sqr()).sum();
                let norm: f64 = values.iter().map(|v| v.norm_sqr()).sum();
                err > (1e-18 * norm).max(floor2 * values.len() as f64).max(f64::MIN_POSITIVE)
            }
        };
        if unresolved {
            return invalid("x-band of the function is not resolvable on the grid");
        }
        let mut tail = 0.0;
        for b in (0..masses.len()).rev() {
            tail += masses[b];
            if tail > (tol * tol * total).max(floor2) {
                return Ok(b);
            }
        }
        Ok(0)
    }

    /// Zeroes coefficients of amplitude below `floor`.
    pub fn denoise(&self, coeffs: &mut XCoeffs, floor: f64) {
        match coeffs {
            XCoeffs::Torus(c) => c.iter_mut().filter(|z| z.norm() <= floor).for_each(|z| *z = ZERO),
            XCoeffs::Su2(blocks) => {
                for (j, f) in blocks.iter_mut().enumerate() {
                    let w = ((j + 1) as f64).sqrt();
                    f.iter_mut().filter(|z| z.norm() * w <= floor).for_each(|z| *z = ZERO);
                }
            }
        }
    }

    /// Applies the left-invariant differential operator X^β.
    pub fn differentiate(&self, coeffs: &mut XCoeffs, beta: &[usize]) {
        match (self, coeffs) {
            (XSpec::Torus { m, n, freqs }, XCoeffs::Torus(c)) => {
                for (idx, z) in c.iter_mut().enumerate() {
                    let mut rem = idx;
                    let mut factor = C64::new(1.0, 0.0);
                    for axis in (0..*n).rev() {
                        let f = freqs[rem % m] as f64;
                        rem /= m;
                        factor *= C64::new(0.0, f).powu(beta[axis] as u32);
                    }
                    *z *= factor;
                }
                // The unpaired Nyquist bin of an even grid has no derivative.
                if m % 2 == 0 && beta.iter().any(|&b| b > 0) {
                    for (idx, z) in c.iter_mut().enumerate() {
                        let mut rem = idx;
                        for _ in 0..*n {
                            if rem % m == m / 2 {
                                *z = ZERO;
                            }
                            rem /= m;
                        }
                    }
                }
            }
            (XSpec::Su2 { spins, .. }, XCoeffs::Su2(blocks)) => {
                for (xi, f) in spins.iter().zip(blocks.iter_mut()) {
                    let d = xi.dim;
                    for axis in (0..3).rev() {
                        let g = crate::group::lie_generator(xi, axis);
                        for _ in 0..beta[axis] {
                            *f = linalg::mul(&g, f, d);
                        }
                    }
                }
            }
            _ => panic!("coefficient kind does not match the spectral engine"),
        }
    }

    /// Multiplies each torus coefficient c_m by `f(m)`.
    pub fn torus_multiply(&self, coeffs: &mut XCoeffs, f: impl Fn(&[i64]) -> C64) {
        if let (XSpec::Torus { m, n, freqs }, XCoeffs::Torus(c)) = (self, coeffs) {
            let mut freq = vec![0i64; *n];
            for (idx, z) in c.iter_mut().enumerate() {
                let mut rem = idx;
                for axis in (0..*n).rev() {
                    freq[axis] = freqs[rem % m];
                    rem /= m;
                }
                *z *= f(&freq);
            }
        } else {
            panic!("torus multiplier applied to a non-torus spectrum");
        }
    }
}

fn fft_nd(data: &mut [C64], m: usize, n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    let total = data.len();
    let mut line = vec![ZERO; m];
    let mut stride = 1;
    for _ in 0..n {
        let block = stride * m;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[outer + inner + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[outer + inner + j * stride] = *v;
                }
            }
        }
        stride *= m;
    }
}
