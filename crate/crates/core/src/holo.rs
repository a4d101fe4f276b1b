//! Symbol families p_Y(x, ξ) = p(exp(iY)x, ξ) on the tube G_ε: membership
//! in S^d_ε, ellipticity, Neumann-series parametrices, asymptotic sums and
//! the holomorphic extension of Op(p)u.
//!
//! Order membership is certified empirically: a seminorm computed up to the
//! full dual cutoff must not exceed twice the same seminorm computed up to
//! half the cutoff.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expr::Expr;
use crate::fourier::FourierCoefficients;
use crate::frame::Frame;
use crate::group::{irrep_eval, irrep_eval_tube, su2_basis, ComplexPoint, GroupPoint, GroupSpec, Irrep, Label, TubePoint};
use crate::linalg::{self, C64, ONE, ZERO};
use crate::quadrature::gauss_legendre;
use crate::symbol::{compose_exact, derivative_x, multi_indices, seminorm_within, Symbol, SymbolRecord};

/// Smallest singular value below which a block counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Fraction of ε covered by the Y meshes used for certification.
pub const MESH_SAFETY: f64 = 0.95;

/// Nodes in the Lie algebra, optionally with ball-quadrature weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YGrid {
    pub dim: usize,
    pub radius: f64,
    pub nodes: Vec<Vec<f64>>,
    /// Empty for meshes that carry no quadrature.
    pub weights: Vec<f64>,
}

impl YGrid {
    pub fn origin(dim: usize) -> YGrid {
        YGrid { dim, radius: 0.0, nodes: vec![vec![0.0; dim]], weights: vec![] }
    }

    /// Cube mesh with `per_axis` points per axis on the closed ball of
    /// radius 0.95ε, plus the poles ±r e_j and Y = 0.
    pub fn mesh(dim: usize, epsilon: f64, per_axis: usize) -> Result<YGrid> {
        if !(epsilon > 0.0) || dim == 0 {
            return invalid("mesh needs ε > 0 and a positive dimension");
        }
        if per_axis < 2 {
            return invalid("mesh needs at least two points per axis");
        }
        let r = MESH_SAFETY * epsilon;
        let mut nodes = vec![vec![0.0; dim]];
        for j in 0..dim {
            for s in [-1.0, 1.0] {
                let mut y = vec![0.0; dim];
                y[j] = s * r;
                nodes.push(y);
            }
        }
        let total = per_axis.pow(dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let y: Vec<f64> = (0..dim)
                .map(|_| {
                    let i = rem % per_axis;
                    rem /= per_axis;
                    -r + 2.0 * r * i as f64 / (per_axis - 1) as f64
                })
                .collect();
            if norm(&y) <= r * (1.0 + 1e-12) {
                nodes.push(y);
            }
        }
        nodes.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        nodes.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-14));
        Ok(YGrid { dim, radius: r, nodes, weights: vec![] })
    }

    /// Product quadrature for ∫_{|Y|<radius} f(Y) dY: Gauss–Legendre on
    /// (−R, R) in one dimension, Gauss–Legendre in the radius times a
    /// trapezoid rule in angle (dimension 2) or Gauss–Legendre in cos θ times
    /// a trapezoid rule in φ (dimension 3).
    pub fn ball_quadrature(dim: usize, radius: f64, order: usize) -> Result<YGrid> {
        if !(radius > 0.0) || order == 0 {
            return invalid("ball quadrature needs a positive radius and order");
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        match dim {
            1 => {
                for (y, w) in gauss_legendre(order, -radius, radius) {
                    nodes.push(vec![y]);
                    weights.push(w);
                }
            }
            2 => {
                let m = 2 * order;
                for (rho, wr) in gauss_legendre(order, 0.0, radius) {
                    for a in 0..m {
                        let th = 2.0 * PI * a as f64 / m as f64;
                        nodes.push(vec![rho * th.cos(), rho * th.sin()]);
                        weights.push(wr * rho * 2.0 * PI / m as f64);
                    }
                }
            }
            3 => {
                let m = 2 * order;
                for (rho, wr) in gauss_legendre(order, 0.0, radius) {
                    for (c, wc) in gauss_legendre(order, -1.0, 1.0) {
                        let s = (1.0 - c * c).max(0.0).sqrt();
                        for a in 0..m {
                            let ph = 2.0 * PI * a as f64 / m as f64;
                            nodes.push(vec![rho * s * ph.cos(), rho * s * ph.sin(), rho * c]);
                            weights.push(wr * rho * rho * wc * 2.0 * PI / m as f64);
                        }
                    }
                }
            }
            _ => return Err(Error::Unsupported(format!("ball quadrature in dimension {dim}"))),
        }
        Ok(YGrid { dim, radius, nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ w_i f(Y_i).
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        if self.weights.len() != self.nodes.len() {
            return invalid("grid carries no quadrature weights");
        }
        Ok(self.nodes.iter().zip(&self.weights).map(|(y, w)| w * f(y)).sum())
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A complex-capable sampler (z, ξ) ↦ p(z, ξ).
pub type Sampler = Arc<dyn Fn(&ComplexPoint, &Irrep) -> Result<Vec<C64>> + Send + Sync>;

/// Symbols p_Y sampled on a frame at a fixed list of Y.
#[derive(Clone, Debug)]
pub struct HoloSamples {
    pub frame: Arc<Frame>,
    pub ys: Vec<Vec<f64>>,
    pub symbols: Vec<Symbol>,
}

impl HoloSamples {
    fn find(&self, y: &[f64]) -> Result<usize> {
        self.ys
            .iter()
            .position(|v| v.len() == y.len() && v.iter().zip(y).all(|(a, b)| (a - b).abs() <= 1e-12))
            .ok_or_else(|| Error::InvalidArgument(format!("no sample stored at Y = {y:?}")))
    }
}

#[derive(Clone)]
pub enum HoloRepr {
    Expr(Expr),
    Func(Sampler),
    Samples(HoloSamples),
}

impl fmt::Debug for HoloRepr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HoloRepr::Expr(e) => f.debug_tuple("Expr").field(e).finish(),
            HoloRepr::Func(_) => f.write_str("Func(..)"),
            HoloRepr::Samples(s) => write!(f, "Samples({} Y-nodes)", s.ys.len()),
        }
    }
}

/// The family {p_Y}_{|Y|<ε} of a symbol in S^d_ε.
#[derive(Clone, Debug)]
pub struct HoloSymbol {
    pub repr: HoloRepr,
    pub epsilon: f64,
    pub order: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return invalid("tube radius must be positive and finite");
    }
    Ok(())
}

fn same_point(a: &GroupPoint, b: &GroupPoint) -> bool {
    match (a, b) {
        (GroupPoint::Torus(x), GroupPoint::Torus(y)) => {
            x.len() == y.len()
                && x.iter().zip(y).all(|(p, q)| {
                    let d = (p - q).rem_euclid(2.0 * PI);
                    d.min(2.0 * PI - d) < 1e-12
                })
        }
        (GroupPoint::Su2(u), GroupPoint::Su2(v)) => linalg::max_abs_diff(u, v) < 1e-12,
        _ => false,
    }
}

impl HoloSymbol {
    pub fn from_expr(expr: Expr, epsilon: f64, order: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(HoloSymbol { repr: HoloRepr::Expr(expr), epsilon, order })
    }

    pub fn from_fn(
        f: impl Fn(&ComplexPoint, &Irrep) -> Result<Vec<C64>> + Send + Sync + 'static,
        epsilon: f64,
        order: f64,
    ) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(HoloSymbol { repr: HoloRepr::Func(Arc::new(f)), epsilon, order })
    }

    pub fn from_samples(frame: Arc<Frame>, ys: Vec<Vec<f64>>, symbols: Vec<Symbol>, epsilon: f64, order: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if ys.len() != symbols.len() || ys.is_empty() {
            return invalid("one symbol per Y-node is required");
        }
        if symbols.iter().any(|s| !s.frame.same_layout(&frame)) {
            return invalid("samples live on different frames");
        }
        if ys.iter().any(|y| norm(y) >= epsilon) {
            return Err(Error::OutOfTube("sample node with |Y| ≥ ε".into()));
        }
        Ok(HoloSymbol { repr: HoloRepr::Samples(HoloSamples { frame, ys, symbols }), epsilon, order })
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.repr {
            HoloRepr::Expr(e) => Some(e),
            _ => None,
        }
    }

    fn check_tube(&self, y: &[f64]) -> Result<()> {
        if norm(y) >= self.epsilon {
            return Err(Error::OutOfTube(format!("|Y| = {} ≥ ε = {}", norm(y), self.epsilon)));
        }
        Ok(())
    }

    /// p(z, ξ) at an arbitrary point of the complexified group; not
    /// available for sampled families.
    pub fn eval_complex(&self, z: &ComplexPoint, xi: &Irrep) -> Result<Vec<C64>> {
        match &self.repr {
            HoloRepr::Expr(e) => e.eval(z, xi),
            HoloRepr::Func(f) => f(z, xi),
            HoloRepr::Samples(_) => Err(Error::Unsupported("sampled symbols have no analytic continuation".into())),
        }
    }

    /// p(exp(iY)x, ξ) for z = (x, Y) in the tube.
    pub fn eval(&self, z: &TubePoint, xi: &Irrep) -> Result<Vec<C64>> {
        self.check_tube(&z.imag)?;
        match &self.repr {
            HoloRepr::Samples(s) => {
                let k = s.find(&z.imag)?;
                let node = s
                    .frame
                    .grid
                    .nodes
                    .iter()
                    .position(|x| same_point(x, &z.base))
                    .ok_or_else(|| Error::InvalidArgument("point is not a grid node of the samples".into()))?;
                let i = s
                    .frame
                    .position(&xi.label)
                    .ok_or_else(|| Error::InvalidArgument(format!("irrep {:?} is not sampled", xi.label)))?;
                Ok(s.symbols[k].block(i, node).to_vec())
            }
            _ => self.eval_complex(&z.complexify(), xi),
        }
    }

    /// The symbol p_Y on `frame`.
    pub fn sample(&self, frame: &Arc<Frame>, y: &[f64]) -> Result<Symbol> {
        self.check_tube(y)?;
        if y.len() != frame.group.dim() {
            return invalid("Y has the wrong dimension for the group");
        }
        if let HoloRepr::Samples(s) = &self.repr {
            if !s.frame.same_layout(frame) {
                return invalid("samples live on a different frame");
            }
            return Ok(s.symbols[s.find(y)?].clone());
        }
        let mut p = Symbol::zeros(frame.clone(), self.order);
        for (node, x) in frame.grid.nodes.iter().enumerate() {
            let z = TubePoint::new(x.clone(), y.to_vec()).complexify();
            for (i, xi) in frame.dual.iter().enumerate() {
                let b = self.eval_complex(&z, xi)?;
                if b.len() != xi.dim * xi.dim {
                    return invalid("sampler returned a block of the wrong shape");
                }
                p.block_mut(i, node).copy_from_slice(&b);
            }
        }
        Ok(p)
    }

    /// Samples at every node of `ygrid`.
    pub fn sample_all(&self, frame: &Arc<Frame>, ygrid: &YGrid) -> Result<Vec<Symbol>> {
        ygrid.nodes.iter().map(|y| self.sample(frame, y)).collect()
    }

    pub fn to_record(&self) -> Result<HoloRecord> {
        let data = match &self.repr {
            HoloRepr::Expr(e) => HoloData::Expr { expr: e.clone() },
            HoloRepr::Samples(s) => HoloData::Samples {
                ys: s.ys.clone(),
                symbols: s.symbols.iter().map(SymbolRecord::from_symbol).collect(),
            },
            HoloRepr::Func(_) => return Err(Error::Unsupported("closure samplers cannot be persisted".into())),
        };
        Ok(HoloRecord { epsilon: self.epsilon, order: self.order, data })
    }

    pub fn from_record(rec: &HoloRecord) -> Result<Self> {
        match &rec.data {
            HoloData::Expr { expr } => HoloSymbol::from_expr(expr.clone(), rec.epsilon, rec.order),
            HoloData::Samples { ys, symbols } => {
                let mut syms: Vec<Symbol> = symbols.iter().map(SymbolRecord::to_symbol).collect::<Result<_>>()?;
                let frame = syms.first().ok_or_else(|| Error::InvalidArgument("empty sample list".into()))?.frame.clone();
                for s in syms.iter_mut() {
                    if !s.frame.same_layout(&frame) {
                        return invalid("samples live on different frames");
                    }
                    s.frame = frame.clone();
                }
                HoloSymbol::from_samples(frame, ys.clone(), syms, rec.epsilon, rec.order)
            }
        }
    }
}

/// Persisted form of a [`HoloSymbol`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoloRecord {
    pub epsilon: f64,
    pub order: f64,
    pub data: HoloData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoloData {
    Expr { expr: Expr },
    Samples { ys: Vec<Vec<f64>>, symbols: Vec<SymbolRecord> },
}

/// A seminorm evaluated up to two dual cutoffs, maximized over Y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoCutoff {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub order: f64,
    pub low: f64,
    pub high: f64,
    pub sup_low: f64,
    pub sup_high: f64,
    pub worst_y: Vec<f64>,
}

impl TwoCutoff {
    pub fn ratio(&self) -> f64 {
        if self.sup_low > 0.0 {
            self.sup_high / self.sup_low
        } else if self.sup_high == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    }

    /// The seminorm does not grow by more than a factor 2 between the cutoffs.
    pub fn stable(&self) -> bool {
        self.sup_high.is_finite() && self.ratio() <= 2.0
    }
}

/// The seminorm of order `d` at cutoffs `low` < `high`, maximized over the
/// given samples. Fails if a sample is not certified up to `high`.
pub fn two_cutoff(samples: &[(Vec<f64>, Symbol)], d: f64, alpha: &[usize], beta: &[usize], low: f64, high: f64) -> Result<TwoCutoff> {
    if !(low > 0.0 && high > low) {
        return invalid("cutoffs must satisfy 0 < low < high");
    }
    let mut out = TwoCutoff {
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        order: d,
        low,
        high,
        sup_low: 0.0,
        sup_high: 0.0,
        worst_y: vec![],
    };
    for (y, p) in samples {
        let certified = crate::symbol::delta_xi(p, alpha)?.certified_bracket();
        if certified < high * (1.0 - 1e-12) {
            return Err(Error::Truncation(format!("sample certified only up to ⟨ξ⟩ = {certified}, below the cutoff {high}")));
        }
        let lo = seminorm_within(p, d, alpha, beta, low)?;
        let hi = seminorm_within(p, d, alpha, beta, high)?;
        out.sup_low = out.sup_low.max(lo);
        if hi >= out.sup_high {
            out.sup_high = hi;
            out.worst_y = y.clone();
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub order: f64,
    pub rows: Vec<TwoCutoff>,
    /// Largest normalized Morera contour integral; `None` for sampled
    /// families, which carry no analytic continuation.
    pub holomorphy_defect: Option<f64>,
}

impl MembershipReport {
    pub fn bounded(&self) -> bool {
        self.rows.iter().all(TwoCutoff::stable)
    }

    pub fn holomorphic(&self) -> bool {
        self.holomorphy_defect.is_none_or(|d| d <= 1e-8)
    }

    pub fn member(&self) -> bool {
        self.bounded() && self.holomorphic()
    }
}

/// Seminorms of p_Y over `ygrid` for each (α, β) at the full and half dual
/// cutoff, and the Morera defect of z ↦ p(z, ξ) along coordinate discs.
pub fn membership_check(
    p: &HoloSymbol,
    d: f64,
    frame: &Arc<Frame>,
    ygrid: &YGrid,
    orders: &[(Vec<usize>, Vec<usize>)],
) -> Result<MembershipReport> {
    if orders.is_empty() {
        return invalid("at least one (α, β) pair is required");
    }
    let samples: Vec<(Vec<f64>, Symbol)> =
        ygrid.nodes.iter().map(|y| Ok((y.clone(), p.sample(frame, y)?))).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(orders.len());
    for (alpha, beta) in orders {
        let high = frame.max_bracket();
        let mut row = TwoCutoff {
            alpha: alpha.clone(),
            beta: beta.clone(),
            order: d,
            low: high / 2.0,
            high,
            sup_low: 0.0,
            sup_high: 0.0,
            worst_y: vec![],
        };
        for (y, s) in &samples {
            let lo = seminorm_within(s, d, alpha, beta, high / 2.0)?;
            let hi = seminorm_within(s, d, alpha, beta, high)?;
            row.sup_low = row.sup_low.max(lo);
            if hi >= row.sup_high {
                row.sup_high = hi;
                row.worst_y = y.clone();
            }
        }
        rows.push(row);
    }
    let holomorphy_defect = match p.repr {
        HoloRepr::Samples(_) => None,
        _ => Some(morera_defect(p, frame, ygrid)?),
    };
    Ok(MembershipReport { order: d, rows, holomorphy_defect })
}

const MORERA_POINTS: usize = 32;
const MORERA_RADIUS: f64 = 0.05;
const MORERA_MAX_NODES: usize = 64;

/// z·exp(W X_j) for complex W: a step in the j-th complex coordinate.
fn complex_step(z: &ComplexPoint, axis: usize, w: C64) -> ComplexPoint {
    match z {
        ComplexPoint::Torus(v) => {
            let mut v = v.clone();
            v[axis] += w;
            ComplexPoint::Torus(v)
        }
        ComplexPoint::Sl2(u) => {
            let x = su2_basis(axis);
            let m = linalg::to_cmat(&x.iter().map(|e| e * w).collect::<Vec<_>>(), 2);
            let e = linalg::from_cmat(&linalg::expm(&m));
            let e = [e[0], e[1], e[2], e[3]];
            ComplexPoint::Sl2(crate::group::mat2_mul(u, &e))
        }
    }
}

/// max |∮ p(z exp(W e_j), ξ) dW_j| / (2πρ · max |p|) over sampled centres,
/// axes and irreps, with a trapezoid rule on circles of radius ρ.
fn morera_defect(p: &HoloSymbol, frame: &Arc<Frame>, ygrid: &YGrid) -> Result<f64> {
    let stride = frame.nodes().div_ceil(MORERA_MAX_NODES).max(1);
    let dim = frame.group.dim();
    let mut worst: f64 = 0.0;
    for y in &ygrid.nodes {
        for x in frame.grid.nodes.iter().step_by(stride) {
            let z0 = TubePoint::new(x.clone(), y.clone()).complexify();
            for axis in 0..dim {
                for xi in &frame.dual {
                    let dd = xi.dim * xi.dim;
                    let mut integral = vec![ZERO; dd];
                    let mut scale: f64 = 0.0;
                    for k in 0..MORERA_POINTS {
                        let th = 2.0 * PI * k as f64 / MORERA_POINTS as f64;
                        let w = C64::from_polar(MORERA_RADIUS, th);
                        let v = p.eval_complex(&complex_step(&z0, axis, w), xi)?;
                        let dw = w * linalg::I * (2.0 * PI / MORERA_POINTS as f64);
                        for (a, b) in integral.iter_mut().zip(&v) {
                            *a += b * dw;
                        }
                        scale = scale.max(v.iter().map(|c| c.norm()).fold(0.0, f64::max));
                    }
                    if scale > 0.0 {
                        let mag = integral.iter().map(|c| c.norm()).fold(0.0, f64::max);
                        worst = worst.max(mag / (2.0 * PI * MORERA_RADIUS * scale));
                    }
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub y: Vec<f64>,
    pub node: usize,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub elliptic: bool,
    pub exceptional_set: Vec<Label>,
    /// sup ⟨ξ⟩^d ‖p(z, ξ)^{-1}‖ over sampled z and ξ ∉ F.
    pub bound: f64,
    /// The same supremum over ⟨ξ⟩ ≤ half the dual cutoff.
    pub bound_half: f64,
    pub witness: Option<Witness>,
}

/// Invertibility of p(z, ξ) off a finite exceptional set F with
/// ⟨ξ⟩^d-bounded inverses. F collects every irrep singular at some sampled
/// z; the symbol is reported elliptic when F lies within half the dual cutoff
/// and the inverse bound at most doubles between half and full cutoff.
pub fn ellipticity_check(p: &HoloSymbol, d: f64, frame: &Arc<Frame>, ygrid: &YGrid) -> Result<EllipticityReport> {
    let half = frame.max_bracket() / 2.0;
    let n = frame.dual.len();
    let mut singular = vec![false; n];
    let mut inv = vec![(0.0f64, None::<(usize, usize)>); n];
    for (k, y) in ygrid.nodes.iter().enumerate() {
        let s = p.sample(frame, y)?;
        for (i, xi) in frame.dual.iter().enumerate() {
            for node in 0..frame.nodes() {
                let smin = linalg::min_singular_value(s.block(i, node), xi.dim);
                if smin < SINGULAR_TOL {
                    singular[i] = true;
                } else {
                    let v = xi.bracket().powf(d) / smin;
                    if v > inv[i].0 {
                        inv[i] = (v, Some((k, node)));
                    }
                }
            }
        }
    }
    let exceptional_set: Vec<Label> =
        frame.dual.iter().zip(&singular).filter(|(_, s)| **s).map(|(xi, _)| xi.label.clone()).collect();
    let mut bound: f64 = 0.0;
    let mut bound_half: f64 = 0.0;
    let mut witness = None;
    for (i, xi) in frame.dual.iter().enumerate() {
        if singular[i] {
            continue;
        }
        let (v, at) = inv[i];
        if v > bound {
            bound = v;
            witness = at.map(|(k, node)| Witness { y: ygrid.nodes[k].clone(), node, label: xi.label.clone() });
        }
        if xi.bracket() <= half * (1.0 + 1e-12) {
            bound_half = bound_half.max(v);
        }
    }
    let f_stable = frame.dual.iter().zip(&singular).all(|(xi, s)| !*s || xi.bracket() <= half * (1.0 + 1e-12));
    let any_regular = singular.iter().any(|s| !s);
    let elliptic = f_stable && any_regular && bound.is_finite() && bound_half > 0.0 && bound <= 2.0 * bound_half;
    Ok(EllipticityReport { elliptic, exceptional_set, bound, bound_half, witness })
}

/// q0 = (χ_F + (1 − χ_F) p)^{-1}, with χ_F the indicator of the exceptional set.
pub fn default_q0(p: &HoloSymbol, report: &EllipticityReport) -> Result<HoloSymbol> {
    if !report.elliptic {
        return invalid("symbol is not elliptic");
    }
    let f = report.exceptional_set.clone();
    match &p.repr {
        HoloRepr::Expr(e) => {
            let inner = if f.is_empty() {
                e.clone()
            } else {
                let chi = Expr::Indicator { labels: f };
                Expr::sum(vec![chi.clone(), Expr::product(vec![Expr::one_minus(chi), e.clone()])])
            };
            HoloSymbol::from_expr(Expr::inverse(inner), p.epsilon, -p.order)
        }
        HoloRepr::Func(g) => {
            let g = g.clone();
            HoloSymbol::from_fn(
                move |z, xi| {
                    if f.contains(&xi.label) {
                        return Ok(linalg::identity(xi.dim));
                    }
                    let b = g(z, xi)?;
                    linalg::inverse(&b, xi.dim).ok_or_else(|| Error::InvalidArgument("singular block off F".into()))
                },
                p.epsilon,
                -p.order,
            )
        }
        HoloRepr::Samples(s) => {
            let symbols = s.symbols.iter().map(|sym| masked_inverse(sym, &f)).collect::<Result<_>>()?;
            HoloSymbol::from_samples(s.frame.clone(), s.ys.clone(), symbols, p.epsilon, -p.order)
        }
    }
}

fn masked_inverse(p: &Symbol, f: &[Label]) -> Result<Symbol> {
    let mut out = p.clone();
    out.order_hint = -p.order_hint;
    for (i, xi) in p.frame.dual.iter().enumerate() {
        let on_f = f.contains(&xi.label);
        for node in 0..p.frame.nodes() {
            let b = if on_f {
                linalg::identity(xi.dim)
            } else {
                linalg::inverse(p.block(i, node), xi.dim)
                    .ok_or_else(|| Error::InvalidArgument(format!("singular block at {:?} off F", xi.label)))?
            };
            out.block_mut(i, node).copy_from_slice(&b);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// A truncated Neumann-series parametrix with its residual family.
#[derive(Clone, Debug)]
pub struct Parametrix {
    pub side: Side,
    pub terms: usize,
    /// Σ_{j<N} q_j at every Y-node.
    pub q: HoloSymbol,
    /// q ⊙ p − 1 (left) or p ⊙ q − 1 (right) at every Y-node.
    pub residual: HoloSymbol,
}

impl Parametrix {
    fn residual_samples(&self) -> Vec<(Vec<f64>, Symbol)> {
        match &self.residual.repr {
            HoloRepr::Samples(s) => s.ys.iter().cloned().zip(s.symbols.iter().cloned()).collect(),
            _ => unreachable!("parametrix residuals are sampled"),
        }
    }

    /// Two-cutoff test of the residual at order `d`.
    pub fn residual_order(&self, d: f64, alpha: &[usize], beta: &[usize], low: f64, high: f64) -> Result<TwoCutoff> {
        two_cutoff(&self.residual_samples(), d, alpha, beta, low, high)
    }
}

fn check_neumann(r: &Symbol) -> Result<()> {
    let cb = r.certified_bracket();
    let mut worst: f64 = 0.0;
    for (i, xi) in r.frame.dual.iter().enumerate() {
        if !r.valid[i] || xi.bracket() < cb / 2.0 {
            continue;
        }
        for node in 0..r.frame.nodes() {
            worst = worst.max(linalg::spectral_norm(r.block(i, node), xi.dim));
        }
    }
    if worst >= 1.0 {
        return Err(Error::NoParametrix(format!("order-0 residual has norm {worst} ≥ 1 at large ⟨ξ⟩")));
    }
    Ok(())
}

/// Left: r = 1 − q0 ⊙ p, q_j = r^{⊙j} ⊙ q0. Right: r = 1 − p ⊙ q0,
/// q_j = q0 ⊙ r^{⊙j}. Returns Σ_{j<N} q_j at every node of `ygrid`, with
/// every product computed by the exact composition.
pub fn parametrix(p: &HoloSymbol, q0: &HoloSymbol, terms: usize, side: Side, frame: &Arc<Frame>, ygrid: &YGrid) -> Result<Parametrix> {
    if terms == 0 {
        return invalid("at least one Neumann term is required");
    }
    let epsilon = p.epsilon.min(q0.epsilon);
    let mut qs = Vec::with_capacity(ygrid.len());
    let mut res = Vec::with_capacity(ygrid.len());
    for y in &ygrid.nodes {
        let ps = p.sample(frame, y)?;
        let q0s = q0.sample(frame, y)?;
        let one = Symbol::constant(frame.clone(), ONE);
        let (r, mut qj) = match side {
            Side::Left => (compose_exact(&q0s, &ps)?.one_minus(), q0s.clone()),
            Side::Right => (compose_exact(&ps, &q0s)?.one_minus(), q0s.clone()),
        };
        check_neumann(&r)?;
        let mut q = qj.clone();
        for _ in 1..terms {
            qj = match side {
                Side::Left => compose_exact(&r, &qj)?,
                Side::Right => compose_exact(&qj, &r)?,
            };
            q = q.add(&qj)?;
        }
        q.order_hint = q0s.order_hint;
        let residual = match side {
            Side::Left => compose_exact(&q, &ps)?.sub(&one)?,
            Side::Right => compose_exact(&ps, &q)?.sub(&one)?,
        };
        qs.push(q);
        res.push(residual);
    }
    let ys = ygrid.nodes.clone();
    Ok(Parametrix {
        side,
        terms,
        q: HoloSymbol::from_samples(frame.clone(), ys.clone(), qs, epsilon, -p.order)?,
        residual: HoloSymbol::from_samples(frame.clone(), ys, res, epsilon, -(terms as f64))?,
    })
}

/// Parametrix of p = p_k + p_{k−1} with p_k x-independent and invertible off
/// a finite set. Checks the Neumann condition ‖p_k^{-1} p_{k−1}‖ < 1 at large
/// ⟨ξ⟩ before building q0 = (χ_F + (1 − χ_F) p)^{-1}.
pub fn leading_term_parametrix(
    p_k: &Symbol,
    p_km1: &HoloSymbol,
    order: f64,
    terms: usize,
    side: Side,
    ygrid: &YGrid,
) -> Result<Parametrix> {
    let frame = p_k.frame.clone();
    if !p_k.is_x_independent(1e-12) {
        return invalid("leading term must be independent of x");
    }
    let half = frame.max_bracket() / 2.0;
    let mut f = Vec::new();
    let (mut bound, mut bound_half) = (0.0f64, 0.0f64);
    for (i, xi) in frame.dual.iter().enumerate() {
        let smin = linalg::min_singular_value(p_k.block(i, 0), xi.dim);
        if smin < SINGULAR_TOL {
            if xi.bracket() > half * (1.0 + 1e-12) {
                return Err(Error::NoParametrix(format!("leading term is singular at {:?}, beyond any finite set", xi.label)));
            }
            f.push(xi.label.clone());
            continue;
        }
        let v = xi.bracket().powf(order) / smin;
        bound = bound.max(v);
        if xi.bracket() <= half * (1.0 + 1e-12) {
            bound_half = bound_half.max(v);
        }
    }
    if !(bound.is_finite() && bound <= 2.0 * bound_half) {
        return Err(Error::NoParametrix("inverse of the leading term is not ⟨ξ⟩^k-bounded".into()));
    }
    let epsilon = p_km1.epsilon;
    let mut combined = Vec::with_capacity(ygrid.len());
    for y in &ygrid.nodes {
        let lower = p_km1.sample(&frame, y)?;
        let mut worst: f64 = 0.0;
        for (i, xi) in frame.dual.iter().enumerate() {
            if xi.bracket() < half || f.contains(&xi.label) {
                continue;
            }
            let inv = linalg::inverse(p_k.block(i, 0), xi.dim).expect("regular off F");
            for node in 0..frame.nodes() {
                worst = worst.max(linalg::spectral_norm(&linalg::mul(&inv, lower.block(i, node), xi.dim), xi.dim));
            }
        }
        if worst >= 1.0 {
            return Err(Error::NoParametrix(format!("Neumann condition fails: ‖p_k⁻¹ p_(k−1)‖ = {worst}")));
        }
        let mut s = p_k.add(&lower)?;
        s.order_hint = order;
        combined.push(s);
    }
    let p = HoloSymbol::from_samples(frame.clone(), ygrid.nodes.clone(), combined, epsilon, order)?;
    let mut exceptional = f;
    if let HoloRepr::Samples(s) = &p.repr {
        for sym in &s.symbols {
            for (i, xi) in frame.dual.iter().enumerate() {
                if exceptional.contains(&xi.label) {
                    continue;
                }
                if (0..frame.nodes()).any(|node| linalg::min_singular_value(sym.block(i, node), xi.dim) < SINGULAR_TOL) {
                    exceptional.push(xi.label.clone());
                }
            }
        }
    }
    let report = EllipticityReport { elliptic: true, exceptional_set: exceptional, bound, bound_half, witness: None };
    let q0 = default_q0(&p, &report)?;
    parametrix(&p, &q0, terms, side, &frame, ygrid)
}

/// Result of the asymptotic summation.
#[derive(Clone, Debug)]
pub struct AsymptoticSum {
    /// Σ_j p_j (1 − e^{−t_j λ_ξ}).
    pub symbol: HoloSymbol,
    pub cutoffs: Vec<f64>,
    /// The measured tail of each term at its cutoff, below 2^{−(j+1)}.
    pub tails: Vec<f64>,
}

/// Per (Y, β, x) the weights d_ξ ⟨ξ⟩^{2s} ‖X^β p_Y(x, ξ)‖²_HS, so that the
/// H^s-norm of the high-pass part at heat time t is
/// (Σ_ξ w_ξ (1 − e^{−tλ_ξ})²)^{1/2}.
struct TailProfile {
    eigen: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl TailProfile {
    fn new(p: &HoloSymbol, j: usize, s: f64, frame: &Arc<Frame>, ygrid: &YGrid) -> Result<Self> {
        let dim = frame.group.dim();
        let eigen: Vec<f64> = frame.dual.iter().map(|xi| xi.eigenvalue).collect();
        let mut rows = Vec::new();
        for y in &ygrid.nodes {
            let sym = p.sample(frame, y)?;
            for beta in multi_indices(dim, j) {
                let db = derivative_x(&sym, &beta)?;
                for node in 0..frame.nodes() {
                    rows.push(
                        frame
                            .dual
                            .iter()
                            .enumerate()
                            .map(|(i, xi)| xi.dim as f64 * xi.bracket().powf(2.0 * s) * linalg::hs_norm_sq(db.block(i, node)))
                            .collect(),
                    );
                }
            }
        }
        Ok(TailProfile { eigen, rows })
    }

    fn tail(&self, t: f64) -> f64 {
        let damp: Vec<f64> = self.eigen.iter().map(|l| (1.0 - (-t * l).exp()).powi(2)).collect();
        self.rows
            .iter()
            .map(|r| r.iter().zip(&damp).map(|(w, c)| w * c).sum::<f64>())
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// Largest heat time t (up to bisection accuracy) whose tail is below `bound`.
fn bisect_heat_time(profile: &TailProfile, bound: f64) -> (f64, f64) {
    let mut hi = 1.0;
    while profile.tail(hi) < bound && hi < 1e12 {
        hi *= 2.0;
    }
    if profile.tail(hi) < bound {
        return (hi, profile.tail(hi));
    }
    let mut lo = 1e-16;
    if profile.tail(lo) >= bound {
        return (lo, profile.tail(lo));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if profile.tail(mid) < bound {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    (lo, profile.tail(lo))
}

/// p ~ Σ p_j with orders d_j strictly decreasing: p = Σ_j p_j (1 − e^{−t_j λ_ξ}),
/// where each t_j is chosen by bisection so that the H^{−d_j−⌈n/2⌉}-norm of
/// X^β p_j (1 − e^{−t_j λ}) stays below 2^{−(j+1)} for |β| ≤ j at every
/// sampled (x, Y).
pub fn asymptotic_sum(terms: &[HoloSymbol], epsilon: f64, frame: &Arc<Frame>, ygrid: &YGrid) -> Result<AsymptoticSum> {
    check_epsilon(epsilon)?;
    if terms.is_empty() {
        return invalid("at least one term is required");
    }
    if terms.windows(2).any(|w| w[1].order >= w[0].order) {
        return invalid("orders must be strictly decreasing");
    }
    if terms.iter().any(|t| t.epsilon < epsilon) {
        return invalid("every term must extend to the requested tube");
    }
    let half_dim = (frame.group.dim() as f64 / 2.0).ceil();
    let mut pieces = Vec::with_capacity(terms.len());
    let mut cutoffs = Vec::with_capacity(terms.len());
    let mut tails = Vec::with_capacity(terms.len());
    for (j, pj) in terms.iter().enumerate() {
        let e = pj
            .expr()
            .ok_or_else(|| Error::Unsupported("asymptotic sums are built from closed-form terms".into()))?;
        let profile = TailProfile::new(pj, j, -pj.order - half_dim, frame, ygrid)?;
        let (t, tail) = bisect_heat_time(&profile, 0.5f64.powi(j as i32 + 1));
        pieces.push(Expr::product(vec![e.clone(), Expr::one_minus(Expr::Heat { t })]));
        cutoffs.push(t);
        tails.push(tail);
    }
    Ok(AsymptoticSum {
        symbol: HoloSymbol::from_expr(Expr::sum(pieces), epsilon, terms[0].order)?,
        cutoffs,
        tails,
    })
}

/// Coefficients of y ↦ u(exp(iY)y): û(ξ) ξ(exp(iY)).
pub fn shifted_coefficients(u: &FourierCoefficients, group: &GroupSpec, y: &[f64]) -> Result<FourierCoefficients> {
    let e = TubePoint::new(group.identity(), y.to_vec());
    let mut out = u.clone();
    for (xi, b) in out.dual.iter().zip(out.blocks.iter_mut()) {
        *b = linalg::mul(b, &irrep_eval_tube(xi, &e)?, xi.dim);
    }
    Ok(out)
}

/// Op(p)u(z) = Σ d_ξ Tr(ξ(x) p_Y(x, ξ) û(ξ) ξ(exp(iY))) at z = exp(iY)x.
pub fn holo_apply(p: &HoloSymbol, u: &FourierCoefficients, z: &TubePoint) -> Result<C64> {
    u.validate()?;
    p.check_tube(&z.imag)?;
    let e = TubePoint::new(
        match &z.base {
            GroupPoint::Torus(x) => GroupPoint::Torus(vec![0.0; x.len()]),
            GroupPoint::Su2(_) => GroupSpec::Su2.identity(),
        },
        z.imag.clone(),
    );
    let mut acc = ZERO;
    for (xi, b) in u.dual.iter().zip(&u.blocks) {
        if b.iter().all(|c| *c == ZERO) {
            continue;
        }
        let d = xi.dim;
        let shifted = linalg::mul(b, &irrep_eval_tube(xi, &e)?, d);
        let left = linalg::mul(&irrep_eval(xi, &z.base)?, &p.eval(z, xi)?, d);
        acc += linalg::trace_mul(&left, &shifted, d) * d as f64;
    }
    Ok(acc)
}
