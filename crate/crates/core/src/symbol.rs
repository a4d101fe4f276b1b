//! Matrix-valued symbols p(x, ξ) sampled on a frame, their quantization,
//! the exact product ⊙ and adjoint †, difference operators in ξ,
//! derivatives in x and the S^d seminorms.
//!
//! Every symbol carries a validity mask over the dual. An irrep is marked
//! invalid when its value depends on data outside the truncated dual (the
//! far side of a difference, or couplings cut off by a composition).
//! Seminorms and certified comparisons only look at valid irreps.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{fourier_forward, GridFunction};
use crate::frame::Frame;
use crate::group::{GroupPoint, GroupSpec, Irrep};
use crate::linalg::{self, C64, ONE, ZERO};

/// Relative size below which x-spectral coefficients are treated as absent
/// when deciding which irreps a composition couples.
pub const BAND_TOL: f64 = 1e-13;

/// Relative amplitude, against the largest entry of a symbol, below which
/// x-spectral content counts as roundoff.
pub const NOISE_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct Symbol {
    pub frame: Arc<Frame>,
    /// Per irrep, the blocks at all nodes: `data[i][node * d * d + entry]`.
    pub data: Vec<Vec<C64>>,
    pub valid: Vec<bool>,
    pub order_hint: f64,
    /// Per irrep, an absolute roundoff level inherited from the operations
    /// that produced the symbol. Zero for sampled symbols.
    pub noise: Vec<f64>,
}

impl Symbol {
    pub fn zeros(frame: Arc<Frame>, order_hint: f64) -> Self {
        let n = frame.nodes();
        let data = frame.dual.iter().map(|xi| vec![ZERO; n * xi.dim * xi.dim]).collect();
        let valid = vec![true; frame.dual.len()];
        let noise = vec![0.0; frame.dual.len()];
        Symbol { frame, data, valid, order_hint, noise }
    }

    pub fn from_fn(
        frame: Arc<Frame>,
        order_hint: f64,
        f: impl Fn(&GroupPoint, &Irrep) -> Vec<C64>,
    ) -> Self {
        let mut p = Symbol::zeros(frame.clone(), order_hint);
        for (i, xi) in frame.dual.iter().enumerate() {
            let dd = xi.dim * xi.dim;
            for (node, x) in frame.grid.nodes.iter().enumerate() {
                let b = f(x, xi);
                assert_eq!(b.len(), dd, "block has the wrong shape");
                p.data[i][node * dd..(node + 1) * dd].copy_from_slice(&b);
            }
        }
        p
    }

    /// The symbol c·I.
    pub fn constant(frame: Arc<Frame>, c: C64) -> Self {
        Symbol::from_fn(frame, 0.0, |_, xi| linalg::identity(xi.dim).into_iter().map(|z| z * c).collect())
    }

    /// x-independent symbol given by a scalar function of the irrep.
    pub fn scalar_multiplier(frame: Arc<Frame>, order_hint: f64, f: impl Fn(&Irrep) -> C64) -> Self {
        Symbol::from_fn(frame, order_hint, |_, xi| {
            let s = f(xi);
            linalg::identity(xi.dim).into_iter().map(|z| z * s).collect()
        })
    }

    pub fn dim(&self, i: usize) -> usize {
        self.frame.dual[i].dim
    }

    pub fn block(&self, i: usize, node: usize) -> &[C64] {
        let dd = self.dim(i) * self.dim(i);
        &self.data[i][node * dd..(node + 1) * dd]
    }

    pub fn block_mut(&mut self, i: usize, node: usize) -> &mut [C64] {
        let dd = self.dim(i) * self.dim(i);
        &mut self.data[i][node * dd..(node + 1) * dd]
    }

    fn check_same(&self, other: &Symbol) -> Result<()> {
        if !self.frame.same_layout(&other.frame) {
            return invalid("symbols live on different frames");
        }
        Ok(())
    }

    fn zip_with(&self, other: &Symbol, f: impl Fn(C64, C64) -> C64) -> Result<Symbol> {
        self.check_same(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
            .collect();
        let valid = self.valid.iter().zip(&other.valid).map(|(a, b)| *a && *b).collect();
        let noise = (0..self.frame.dual.len())
            .map(|i| {
                let scale = self.max_abs(i).max(other.max_abs(i));
                self.noise[i].max(other.noise[i]).max(NOISE_FLOOR * scale)
            })
            .collect();
        Ok(Symbol { frame: self.frame.clone(), data, valid, order_hint: self.order_hint.max(other.order_hint), noise })
    }

    pub fn add(&self, other: &Symbol) -> Result<Symbol> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Symbol) -> Result<Symbol> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: C64) -> Symbol {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| v.iter_mut().for_each(|z| *z *= c));
        out.noise.iter_mut().for_each(|n| *n *= c.norm());
        out
    }

    /// Largest entry of the blocks of irrep `i`.
    pub fn max_abs(&self, i: usize) -> f64 {
        self.data[i].iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Blockwise matrix product p(x, ξ) q(x, ξ).
    pub fn pointwise_mul(&self, other: &Symbol) -> Result<Symbol> {
        self.check_same(other)?;
        let mut out = Symbol::zeros(self.frame.clone(), self.order_hint + other.order_hint);
        for (i, xi) in self.frame.dual.iter().enumerate() {
            let d = xi.dim;
            for node in 0..self.frame.nodes() {
                let prod = linalg::mul(self.block(i, node), other.block(i, node), d);
                out.block_mut(i, node).copy_from_slice(&prod);
            }
            out.valid[i] = self.valid[i] && other.valid[i];
            out.noise[i] = self.noise[i] * other.max_abs(i) + self.max_abs(i) * other.noise[i];
        }
        Ok(out)
    }

    /// `1 - self`.
    pub fn one_minus(&self) -> Symbol {
        let mut out = self.scale(-ONE);
        for (i, xi) in self.frame.dual.iter().enumerate() {
            for node in 0..self.frame.nodes() {
                let b = out.block_mut(i, node);
                for a in 0..xi.dim {
                    b[a * xi.dim + a] += ONE;
                }
            }
        }
        for i in 0..self.frame.dual.len() {
            out.noise[i] = out.noise[i].max(NOISE_FLOOR * self.max_abs(i).max(1.0));
        }
        out
    }

    /// Sup over nodes and valid irreps of ⟨ξ⟩^{-d} ‖p(x, ξ)‖, restricted to
    /// ⟨ξ⟩ ≤ `cutoff`.
    pub fn weighted_sup(&self, d: f64, cutoff: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, xi) in self.frame.dual.iter().enumerate() {
            if !self.valid[i] || xi.bracket() > cutoff * (1.0 + 1e-12) {
                continue;
            }
            let w = xi.bracket().powf(-d);
            for node in 0..self.frame.nodes() {
                worst = worst.max(w * linalg::spectral_norm(self.block(i, node), xi.dim));
            }
        }
        worst
    }

    /// Largest deviation between two symbols over irreps valid in both.
    pub fn max_diff(&self, other: &Symbol) -> Result<f64> {
        self.check_same(other)?;
        let mut worst: f64 = 0.0;
        for i in 0..self.frame.dual.len() {
            if self.valid[i] && other.valid[i] {
                worst = worst.max(linalg::max_abs_diff(&self.data[i], &other.data[i]));
            }
        }
        Ok(worst)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Largest ⟨ξ⟩ below which every irrep is valid.
    pub fn certified_bracket(&self) -> f64 {
        let mut best: f64 = 0.0;
        let mut brackets: Vec<(f64, bool)> =
            self.frame.dual.iter().zip(&self.valid).map(|(xi, v)| (xi.bracket(), *v)).collect();
        brackets.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut k = 0;
        while k < brackets.len() {
            let b = brackets[k].0;
            let mut all = true;
            while k < brackets.len() && brackets[k].0 == b {
                all &= brackets[k].1;
                k += 1;
            }
            if !all {
                break;
            }
            best = b;
        }
        best
    }

    /// Values of entry `e` of irrep `i` across the grid.
    fn entry_values(&self, i: usize, e: usize) -> Vec<C64> {
        let dd = self.dim(i) * self.dim(i);
        (0..self.frame.nodes()).map(|node| self.data[i][node * dd + e]).collect()
    }

    fn set_entry_values(&mut self, i: usize, e: usize, vals: &[C64]) {
        let dd = self.dim(i) * self.dim(i);
        for (node, v) in vals.iter().enumerate() {
            self.data[i][node * dd + e] = *v;
        }
    }

    /// Absolute amplitude below which x-spectral content of irrep `i` is
    /// treated as roundoff.
    pub fn noise_floor(&self, i: usize) -> f64 {
        (NOISE_FLOOR * self.max_abs(i)).max(self.noise[i])
    }

    /// x-band (max |m_j| on the torus, 2j on SU(2)) of p(·, ξ_i) beyond which
    /// the relative spectral mass is below `tol`.
    pub fn x_band(&self, i: usize, tol: f64) -> Result<usize> {
        self.x_band_above(i, tol, self.noise_floor(i))
    }

    /// x-bands of every irrep.
    pub fn x_bands(&self, tol: f64) -> Result<Vec<usize>> {
        (0..self.frame.dual.len()).map(|i| self.x_band(i, tol)).collect()
    }

    fn x_band_above(&self, i: usize, tol: f64, floor: f64) -> Result<usize> {
        let spec = self.frame.xspec();
        let dd = self.dim(i) * self.dim(i);
        let mut masses: Vec<Vec<f64>> = Vec::with_capacity(dd);
        for e in 0..dd {
            let vals = self.entry_values(i, e);
            spec.effective_band_above(&vals, 1.0, floor)?;
            masses.push(spec.band_masses(&spec.analyze(&vals)));
        }
        let total: f64 = masses.iter().map(|m| m.iter().sum::<f64>()).fold(0.0, f64::max);
        if total <= floor * floor {
            return Ok(0);
        }
        let mut band = 0;
        for m in &masses {
            let mut tail = 0.0;
            for b in (0..m.len()).rev() {
                tail += m[b];
                if tail > (tol * tol * total).max(floor * floor) {
                    band = band.max(b);
                    break;
                }
            }
        }
        Ok(band)
    }

    /// x-spectrum of entry `e` of irrep `i`, with roundoff below `floor`
    /// removed.
    fn entry_spectrum(&self, i: usize, e: usize, floor: f64) -> Result<crate::frame::XCoeffs> {
        let spec = self.frame.xspec();
        let vals = self.entry_values(i, e);
        spec.effective_band_above(&vals, 1.0, floor)?;
        let mut c = spec.analyze(&vals);
        spec.denoise(&mut c, floor);
        Ok(c)
    }

    /// Whether the symbol is constant in x to the given tolerance.
    pub fn is_x_independent(&self, tol: f64) -> bool {
        (0..self.frame.dual.len()).all(|i| {
            let first = self.block(i, 0);
            let scale = linalg::hs_norm_sq(first).sqrt().max(1.0);
            (1..self.frame.nodes()).all(|node| linalg::max_abs_diff(self.block(i, node), first) <= tol * scale)
        })
    }
}

/// Op(p)u(x) = Σ d_ξ Tr(ξ(x) p(x, ξ) û(ξ)) on the grid of `p`.
pub fn quantize_apply(p: &Symbol, u: &GridFunction) -> Result<GridFunction> {
    let frame = &p.frame;
    if u.grid.resolution != frame.grid.resolution || u.grid.group != frame.group {
        return invalid("function and symbol live on different grids");
    }
    let uh = fourier_forward(u, &frame.dual)?;
    let norm = u.l2_norm();
    let back = crate::fourier::fourier_inverse(&uh, &u.grid)?;
    if back.sub(u).l2_norm() > 1e-8 * norm.max(f64::MIN_POSITIVE) {
        return invalid("function is not band-limited within the dual of the symbol");
    }
    let values = (0..frame.nodes())
        .map(|node| {
            frame
                .dual
                .iter()
                .enumerate()
                .map(|(i, xi)| {
                    let d = xi.dim;
                    let a = linalg::mul(frame.eval(i, node), p.block(i, node), d);
                    linalg::trace_mul(&a, &uh.blocks[i], d) * d as f64
                })
                .sum()
        })
        .collect();
    GridFunction::new(u.grid.clone(), values)
}

/// Irreps ξ that can couple to η through an x-band `band`, and whether all
/// of them are present in the dual.
fn coupled(frame: &Frame, i: usize, band: usize) -> (Vec<usize>, bool) {
    match frame.dual[i].label {
        crate::group::Label::Torus(ref k) => {
            let n = k.len();
            let b = band as i64;
            let mut out = Vec::new();
            let mut complete = true;
            let mut m = vec![-b; n];
            loop {
                match frame.torus_neighbor(i, &m) {
                    Some(j) => out.push(j),
                    None => complete = false,
                }
                let mut axis = n;
                loop {
                    if axis == 0 {
                        return (out, complete);
                    }
                    axis -= 1;
                    if m[axis] < b {
                        m[axis] += 1;
                        break;
                    }
                    m[axis] = -b;
                }
            }
        }
        crate::group::Label::Spin(t) => {
            let lo = t.saturating_sub(band as u32);
            let hi = t + band as u32;
            let mut out = Vec::new();
            for s in lo..=hi {
                match frame.position(&crate::group::Label::Spin(s)) {
                    Some(j) => out.push(j),
                    None => return (out, false),
                }
            }
            (out, true)
        }
    }
}

/// Validity of each output irrep of ⊙ or †: every coupled irrep must be in
/// the dual and valid in `valid_in`.
fn coupling_validity(frame: &Frame, bands: &[usize], valid_in: &[bool], valid_out: &[bool]) -> Vec<bool> {
    (0..frame.dual.len())
        .map(|i| {
            let (partners, complete) = coupled(frame, i, bands[i]);
            complete && valid_out[i] && partners.iter().all(|&j| valid_in[j])
        })
        .collect()
}

/// (p ⊙ q)(x, η) = η(x)* Σ_ξ d_ξ Σ_ab (ξ(x) p(x, ξ))_{ab} C_{ξ,ab}(η) with
/// C_{ξ,ab}(η) = ∫ conj(ξ(y)_{ab}) η(y) q(y, η) dy.
fn compose_core(p: &Symbol, q: &Symbol, bands: &[usize]) -> Symbol {
    let frame = &p.frame;
    let nodes = frame.nodes();
    let w = &frame.grid.weights;
    let mut out = Symbol::zeros(frame.clone(), p.order_hint + q.order_hint);
    let mut lefts: Vec<Option<Vec<C64>>> = vec![None; frame.dual.len()];
    for (eta_i, eta) in frame.dual.iter().enumerate() {
        let de = eta.dim;
        let dde = de * de;
        let (partners, _) = coupled(frame, eta_i, bands[eta_i]);
        let mut g = Vec::with_capacity(nodes * dde);
        for y in 0..nodes {
            g.extend(linalg::mul(frame.eval(eta_i, y), q.block(eta_i, y), de));
        }
        let mut acc = vec![ZERO; nodes * dde];
        for &xi_i in &partners {
            let dx = frame.dual[xi_i].dim;
            let ddx = dx * dx;
            let mut c = vec![ZERO; ddx * dde];
            for y in 0..nodes {
                let e = frame.eval(xi_i, y);
                let gy = &g[y * dde..(y + 1) * dde];
                for ab in 0..ddx {
                    let f = e[ab].conj() * w[y];
                    let row = &mut c[ab * dde..(ab + 1) * dde];
                    for (slot, v) in row.iter_mut().zip(gy) {
                        *slot += f * v;
                    }
                }
            }
            let a = lefts[xi_i].get_or_insert_with(|| {
                let mut v = Vec::with_capacity(nodes * ddx);
                for x in 0..nodes {
                    v.extend(linalg::mul(frame.eval(xi_i, x), p.block(xi_i, x), dx));
                }
                v
            });
            for x in 0..nodes {
                let ax = &a[x * ddx..(x + 1) * ddx];
                let slot = &mut acc[x * dde..(x + 1) * dde];
                for ab in 0..ddx {
                    let f = ax[ab] * dx as f64;
                    for (s, v) in slot.iter_mut().zip(&c[ab * dde..(ab + 1) * dde]) {
                        *s += f * v;
                    }
                }
            }
        }
        for x in 0..nodes {
            let eta_x = linalg::adjoint(frame.eval(eta_i, x), de);
            let prod = linalg::mul(&eta_x, &acc[x * dde..(x + 1) * dde], de);
            out.block_mut(eta_i, x).copy_from_slice(&prod);
        }
    }
    out
}

/// Symbol of Op(p)Op(q), evaluated by the defining double sum.
pub fn compose_exact(p: &Symbol, q: &Symbol) -> Result<Symbol> {
    p.check_same(q)?;
    let frame = &p.frame;
    let bands = q.x_bands(BAND_TOL)?;
    let mut out = compose_core(p, q, &bands);
    out.valid = coupling_validity(frame, &bands, &p.valid, &q.valid);
    for (i, b) in bands.iter().enumerate() {
        let (partners, _) = coupled(frame, i, *b);
        let (pa, pn) = partners.iter().fold((0.0f64, 0.0f64), |(a, n), &j| (a.max(p.max_abs(j)), n.max(p.noise[j])));
        out.noise[i] = NOISE_FLOOR * pa * q.max_abs(i) + pn * q.max_abs(i) + pa * q.noise[i];
    }
    if out.valid_count() == 0 {
        return Err(Error::Truncation(
            "no irrep of the dual has all of its couplings retained; raise the cutoff".into(),
        ));
    }
    Ok(out)
}

/// Symbol of Op(p)*, evaluated by the defining double sum.
pub fn adjoint_exact(p: &Symbol) -> Result<Symbol> {
    let frame = &p.frame;
    let band = p.x_bands(BAND_TOL)?.into_iter().max().unwrap_or(0);
    let bands = vec![band; frame.dual.len()];
    let mut out = adjoint_core(p, &bands);
    out.valid = coupling_validity(frame, &bands, &p.valid, &vec![true; frame.dual.len()]);
    for i in 0..frame.dual.len() {
        let (partners, _) = coupled(frame, i, band);
        out.noise[i] = partners.iter().map(|&j| NOISE_FLOOR * p.max_abs(j) + p.noise[j]).fold(0.0, f64::max);
    }
    if out.valid_count() == 0 {
        return Err(Error::Truncation(
            "no irrep of the dual has all of its couplings retained; raise the cutoff".into(),
        ));
    }
    Ok(out)
}

/// p†(x, η) = η(x)* Σ_ξ d_ξ Σ_ab ξ(x)_{ab} E_{ξ,ba}(η) with
/// E_{ξ,ba}(η) = ∫ (p(y, ξ)* ξ(y)*)_{ba} η(y) dy.
fn adjoint_core(p: &Symbol, bands: &[usize]) -> Symbol {
    let frame = &p.frame;
    let nodes = frame.nodes();
    let w = &frame.grid.weights;
    let mut out = Symbol::zeros(frame.clone(), p.order_hint);
    // B(y, ξ) = p(y, ξ)* ξ(y)*, tabulated once.
    let bs: Vec<Vec<C64>> = frame
        .dual
        .iter()
        .enumerate()
        .map(|(xi_i, xi)| {
            let d = xi.dim;
            let mut v = Vec::with_capacity(nodes * d * d);
            for y in 0..nodes {
                let pa = linalg::adjoint(p.block(xi_i, y), d);
                let ea = linalg::adjoint(frame.eval(xi_i, y), d);
                v.extend(linalg::mul(&pa, &ea, d));
            }
            v
        })
        .collect();
    for (eta_i, eta) in frame.dual.iter().enumerate() {
        let de = eta.dim;
        let dde = de * de;
        let (partners, _) = coupled(frame, eta_i, bands[eta_i]);
        let mut acc = vec![ZERO; nodes * dde];
        for &xi_i in &partners {
            let dx = frame.dual[xi_i].dim;
            let ddx = dx * dx;
            // E_{ξ,ba}(η) = Σ_y w_y B(y, ξ)_{ba} η(y), stored at index ab.
            let mut e = vec![ZERO; ddx * dde];
            for y in 0..nodes {
                let b = &bs[xi_i][y * ddx..(y + 1) * ddx];
                let ey = frame.eval(eta_i, y);
                for a in 0..dx {
                    for bb in 0..dx {
                        let f = b[bb * dx + a] * w[y];
                        if f == ZERO {
                            continue;
                        }
                        let row = &mut e[(a * dx + bb) * dde..(a * dx + bb + 1) * dde];
                        for (s, v) in row.iter_mut().zip(ey) {
                            *s += f * v;
                        }
                    }
                }
            }
            for x in 0..nodes {
                let ex = frame.eval(xi_i, x);
                let slot = &mut acc[x * dde..(x + 1) * dde];
                for ab in 0..ddx {
                    let f = ex[ab] * dx as f64;
                    for (s, v) in slot.iter_mut().zip(&e[ab * dde..(ab + 1) * dde]) {
                        *s += f * v;
                    }
                }
            }
        }
        for x in 0..nodes {
            let eta_x = linalg::adjoint(frame.eval(eta_i, x), de);
            let prod = linalg::mul(&eta_x, &acc[x * dde..(x + 1) * dde], de);
            out.block_mut(eta_i, x).copy_from_slice(&prod);
        }
    }
    out
}

/// Number of entries of a difference multi-index for the group.
pub fn delta_arity(group: &GroupSpec) -> usize {
    match group {
        GroupSpec::Torus { n } => *n,
        GroupSpec::Su2 => 4,
    }
}

/// Multi-index of δ^{e_ij}: on the torus only diagonal entries exist and
/// `None` marks the vanishing off-diagonal operators.
pub fn entry_index(group: &GroupSpec, i: usize, j: usize) -> Option<Vec<usize>> {
    match group {
        GroupSpec::Torus { n } => {
            if i != j {
                return None;
            }
            let mut a = vec![0; *n];
            a[i] = 1;
            Some(a)
        }
        GroupSpec::Su2 => {
            let mut a = vec![0; 4];
            a[i * 2 + j] = 1;
            Some(a)
        }
    }
}

/// Difference operator δ^α_ξ applied at every node.
pub fn delta_xi(p: &Symbol, alpha: &[usize]) -> Result<Symbol> {
    let frame = &p.frame;
    if alpha.len() != delta_arity(&frame.group) {
        return invalid("difference multi-index has the wrong length");
    }
    match frame.group {
        GroupSpec::Torus { n } => {
            let mut cur = p.clone();
            for axis in 0..n {
                for _ in 0..alpha[axis] {
                    let mut shift = vec![0i64; n];
                    shift[axis] = 1;
                    let mut next = Symbol::zeros(frame.clone(), cur.order_hint - 1.0);
                    for i in 0..frame.dual.len() {
                        match frame.torus_neighbor(i, &shift) {
                            Some(j) => {
                                next.data[i] = cur.data[j].iter().zip(&cur.data[i]).map(|(a, b)| a - b).collect();
                                next.valid[i] = cur.valid[i] && cur.valid[j];
                            }
                            None => next.valid[i] = false,
                        }
                    }
                    cur = next;
                }
            }
            Ok(cur)
        }
        GroupSpec::Su2 => delta_su2(p, alpha),
    }
}

/// δ^α on SU(2): multiply the convolution kernel of p(x, ·) by
/// d_α(y) = ((y* - I)_{ij})^{α_ij} and transform back.
fn delta_su2(p: &Symbol, alpha: &[usize]) -> Result<Symbol> {
    let frame = &p.frame;
    let nodes = frame.nodes();
    let order: usize = alpha.iter().sum();
    let two_l_max = frame.dual.iter().filter_map(|xi| xi.two_l()).max().unwrap_or(0);
    let dvals: Vec<C64> = frame
        .grid
        .nodes
        .iter()
        .map(|y| match y {
            GroupPoint::Su2(u) => {
                // (y* - I)_{ij} = conj(y_{ji}) - δ_ij
                let q = [u[0].conj() - ONE, u[2].conj(), u[1].conj(), u[3].conj() - ONE];
                q.iter().zip(alpha).map(|(z, &a)| z.powu(a as u32)).product()
            }
            _ => unreachable!(),
        })
        .collect();
    let x_independent = p.is_x_independent(0.0);
    let mut out = Symbol::zeros(frame.clone(), p.order_hint - order as f64);
    let x_nodes: Vec<usize> = if x_independent { vec![0] } else { (0..nodes).collect() };
    for &x in &x_nodes {
        // κ(y) = Σ d_ξ Tr(ξ(y) p(x, ξ)) d_α(y)
        let kappa: Vec<C64> = (0..nodes)
            .map(|y| {
                let s: C64 = frame
                    .dual
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| linalg::trace_mul(frame.eval(i, y), p.block(i, x), xi.dim) * xi.dim as f64)
                    .sum();
                s * dvals[y]
            })
            .collect();
        for (i, xi) in frame.dual.iter().enumerate() {
            let d = xi.dim;
            let mut acc = vec![ZERO; d * d];
            for y in 0..nodes {
                let f = kappa[y] * frame.grid.weights[y];
                let e = frame.eval(i, y);
                for a in 0..d {
                    for b in 0..d {
                        acc[a * d + b] += f * e[b * d + a].conj();
                    }
                }
            }
            out.block_mut(i, x).copy_from_slice(&acc);
        }
    }
    if x_independent {
        for i in 0..frame.dual.len() {
            let first = out.block(i, 0).to_vec();
            for x in 1..nodes {
                out.block_mut(i, x).copy_from_slice(&first);
            }
        }
    }
    let all_valid = p.valid.iter().all(|v| *v);
    for (i, xi) in frame.dual.iter().enumerate() {
        let t = xi.two_l().unwrap() as usize;
        out.valid[i] = all_valid && t + order <= two_l_max as usize;
    }
    Ok(out)
}

/// Sup over interior irreps of ‖δ^{e_ij}(ab) − δ^{e_ij}(a) b − a δ^{e_ij}(b)
/// − Σ_k δ^{e_ik}(a) δ^{e_kj}(b)‖ for x-independent a, b.
pub fn leibniz_defect(a: &Symbol, b: &Symbol, i: usize, j: usize) -> Result<f64> {
    a.check_same(b)?;
    let group = a.frame.group.clone();
    let m = match group {
        GroupSpec::Torus { n } => n,
        GroupSpec::Su2 => 2,
    };
    if i >= m || j >= m {
        return invalid("entry index out of range");
    }
    if !a.is_x_independent(1e-14) || !b.is_x_independent(1e-14) {
        return invalid("the Leibniz check expects x-independent sequences");
    }
    let delta = |s: &Symbol, r: usize, c: usize| -> Result<Symbol> {
        match entry_index(&group, r, c) {
            Some(alpha) => delta_xi(s, &alpha),
            None => Ok(Symbol::zeros(s.frame.clone(), s.order_hint)),
        }
    };
    let lhs = delta(&a.pointwise_mul(b)?, i, j)?;
    let mut rhs = delta(a, i, j)?.pointwise_mul(b)?.add(&a.pointwise_mul(&delta(b, i, j)?)?)?;
    for k in 0..m {
        rhs = rhs.add(&delta(a, i, k)?.pointwise_mul(&delta(b, k, j)?)?)?;
    }
    let mut worst: f64 = 0.0;
    for idx in 0..a.frame.dual.len() {
        if lhs.valid[idx] && rhs.valid[idx] {
            let d = a.dim(idx);
            let diff: Vec<C64> = lhs.block(idx, 0).iter().zip(rhs.block(idx, 0)).map(|(x, y)| x - y).collect();
            worst = worst.max(linalg::spectral_norm(&diff, d));
        }
    }
    Ok(worst)
}

/// Left-invariant derivative X^β in x, by spectral differentiation.
pub fn derivative_x(p: &Symbol, beta: &[usize]) -> Result<Symbol> {
    let frame = &p.frame;
    if beta.len() != frame.group.dim() {
        return invalid("derivative multi-index has the wrong length");
    }
    let mut out = p.clone();
    if beta.iter().all(|&b| b == 0) {
        return Ok(out);
    }
    let spec = frame.xspec();
    for i in 0..frame.dual.len() {
        let dd = p.dim(i) * p.dim(i);
        for e in 0..dd {
            let mut c = p.entry_spectrum(i, e, p.noise_floor(i))?;
            spec.differentiate(&mut c, beta);
            out.set_entry_values(i, e, &spec.synthesize(&c));
        }
    }
    Ok(out)
}

/// sup ⟨ξ⟩^{|α|-d} ‖δ^α_ξ X^β_x p(x, ξ)‖ over nodes and valid irreps.
pub fn symbol_seminorm(p: &Symbol, d: f64, alpha: &[usize], beta: &[usize]) -> Result<f64> {
    seminorm_within(p, d, alpha, beta, f64::INFINITY)
}

/// [`symbol_seminorm`] restricted to irreps with ⟨ξ⟩ ≤ `cutoff`.
pub fn seminorm_within(p: &Symbol, d: f64, alpha: &[usize], beta: &[usize], cutoff: f64) -> Result<f64> {
    let q = delta_xi(&derivative_x(p, beta)?, alpha)?;
    let order: usize = alpha.iter().sum();
    Ok(q.weighted_sup(d - order as f64, cutoff))
}

/// Multi-indices of a given length with entries summing to at most `max`.
pub fn multi_indices(len: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::new();
        for v in &out {
            let used: usize = v.iter().sum();
            for a in 0..=(max - used) {
                let mut w = v.clone();
                w.push(a);
                next.push(w);
            }
        }
        out = next;
    }
    out.sort_by_key(|v| (v.iter().sum::<usize>(), v.clone()));
    out
}

/// Σ_{|α|<N} (1/α!) δ^α_ξ(p) · D^{(α)}_x(q), where on the torus
/// D^{(α)} = Π_j Π_{l<α_j} (−i∂_j − l) is the x-side partner of the forward
/// difference δ^α_ξ.
pub fn asymptotic_compose(p: &Symbol, q: &Symbol, n_terms: usize) -> Result<Symbol> {
    p.check_same(q)?;
    let n = match p.frame.group {
        GroupSpec::Torus { n } => n,
        GroupSpec::Su2 => return Err(Error::Unsupported("asymptotic expansion needs the torus backend".into())),
    };
    if n_terms == 0 {
        return invalid("the expansion needs at least one term");
    }
    let spec = p.frame.xspec();
    let mut total: Option<Symbol> = None;
    for alpha in multi_indices(n, n_terms - 1) {
        let fact: f64 = alpha.iter().map(|&a| (1..=a).map(|v| v as f64).product::<f64>()).product();
        let dp = delta_xi(p, &alpha)?;
        let mut dq = q.clone();
        if alpha.iter().any(|&a| a > 0) {
            for i in 0..p.frame.dual.len() {
                let mut c = q.entry_spectrum(i, 0, q.noise_floor(i))?;
                spec.torus_multiply(&mut c, |m| {
                    let mut f = ONE;
                    for (axis, &a) in alpha.iter().enumerate() {
                        for l in 0..a {
                            f *= C64::from((m[axis] - l as i64) as f64);
                        }
                    }
                    f
                });
                dq.set_entry_values(i, 0, &spec.synthesize(&c));
            }
        }
        let term = dp.pointwise_mul(&dq)?.scale(C64::from(1.0 / fact));
        total = Some(match total {
            None => term,
            Some(t) => t.add(&term)?,
        });
    }
    let mut out = total.unwrap();
    out.order_hint = p.order_hint + q.order_hint;
    Ok(out)
}

/// Persisted form of a symbol: the dual, the grid resolution and the blocks
/// at every node.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SymbolRecord {
    pub group: GroupSpec,
    pub dual: Vec<Irrep>,
    pub resolution: usize,
    pub order_hint: f64,
    pub valid: Vec<bool>,
    /// `blocks[node][irrep]`, row-major.
    pub blocks: Vec<Vec<Vec<C64>>>,
}

impl SymbolRecord {
    pub fn from_symbol(p: &Symbol) -> Self {
        let blocks = (0..p.frame.nodes())
            .map(|node| (0..p.frame.dual.len()).map(|i| p.block(i, node).to_vec()).collect())
            .collect();
        SymbolRecord {
            group: p.frame.group.clone(),
            dual: p.frame.dual.clone(),
            resolution: p.frame.grid.resolution,
            order_hint: p.order_hint,
            valid: p.valid.clone(),
            blocks,
        }
    }

    pub fn to_symbol(&self) -> Result<Symbol> {
        let grid = Arc::new(crate::group::haar_grid(&self.group, self.resolution)?);
        let frame = Frame::from_parts(self.dual.clone(), grid)?;
        if self.blocks.len() != frame.nodes() || self.valid.len() != frame.dual.len() {
            return invalid("symbol record does not match its grid");
        }
        let mut p = Symbol::zeros(frame.clone(), self.order_hint);
        p.valid = self.valid.clone();
        for (node, row) in self.blocks.iter().enumerate() {
            if row.len() != frame.dual.len() {
                return invalid("symbol record does not match its dual");
            }
            for (i, b) in row.iter().enumerate() {
                if b.len() != p.dim(i) * p.dim(i) {
                    return invalid("symbol block has the wrong shape");
                }
                p.block_mut(i, node).copy_from_slice(b);
            }
        }
        Ok(p)
    }
}
