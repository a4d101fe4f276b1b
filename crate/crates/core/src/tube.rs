//! Grauert tubes G_ε = {exp(iY)x : |Y| < ε}: the Poisson transform P_ε,
//! restriction R_ε, the HL² and HH^s norms on torus tubes, the extension
//! diagrams R_ε Ã = A R_ε, and the half-wave kernel Σ e^{ik·x − ε|k|}.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{fourier_forward, fourier_inverse, sobolev_norm, FourierCoefficients, GridFunction};
use crate::frame::Frame;
use crate::group::{irrep_eval_tube, GroupPoint, GroupSpec, Irrep, TubePoint};
use crate::holo::{holo_apply, HoloSymbol, YGrid};
use crate::linalg::{self, C64, ZERO};
use crate::spectral::SpectralOperator;
use crate::symbol::quantize_apply;

/// Radial Gauss–Legendre order of the default ball quadrature.
pub const DEFAULT_BALL_ORDER: usize = 48;

/// Doubling delta below which a partial-sum ladder counts as converged.
pub const LADDER_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub group: GroupSpec,
    pub epsilon: f64,
    pub ygrid: YGrid,
}

impl TubeSpec {
    pub fn new(group: &GroupSpec, epsilon: f64) -> Result<TubeSpec> {
        TubeSpec::with_order(group, epsilon, DEFAULT_BALL_ORDER)
    }

    pub fn with_order(group: &GroupSpec, epsilon: f64, order: usize) -> Result<TubeSpec> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return invalid("the tube radius must be positive");
        }
        let ygrid = YGrid::ball_quadrature(group.dim(), epsilon, order)?;
        Ok(TubeSpec { group: group.clone(), epsilon, ygrid })
    }
}

/// A holomorphic function on the tube, stored by its boundary coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoloFunction {
    pub coeffs: FourierCoefficients,
    pub epsilon: f64,
}

fn check_group(coeffs: &FourierCoefficients, group: &GroupSpec) -> Result<()> {
    if coeffs.dual.iter().any(|xi| !xi.belongs_to(group)) {
        return invalid("coefficients belong to a different group");
    }
    Ok(())
}

/// P_ε f: blocks damped by e^{−ε√λ_ξ}, continued holomorphically to G_ε.
pub fn poisson_transform(f: &FourierCoefficients, spec: &TubeSpec) -> Result<HoloFunction> {
    f.validate()?;
    check_group(f, &spec.group)?;
    let coeffs = f.scale_by(|xi| C64::from((-spec.epsilon * xi.eigenvalue.sqrt()).exp()));
    Ok(HoloFunction { coeffs, epsilon: spec.epsilon })
}

/// R_ε u: the boundary values on G.
pub fn restrict(u: &HoloFunction) -> FourierCoefficients {
    u.coeffs.clone()
}

/// u(z) = Σ d_ξ Tr(ξ(z) û(ξ)).
pub fn tube_evaluate(u: &HoloFunction, z: &TubePoint) -> Result<C64> {
    let r = z.imag_norm();
    if r >= u.epsilon {
        return Err(Error::OutOfTube(format!("|Y| = {r} is not below ε = {}", u.epsilon)));
    }
    let mut acc = ZERO;
    for (xi, b) in u.coeffs.dual.iter().zip(&u.coeffs.blocks) {
        if b.iter().all(|c| *c == ZERO) {
            continue;
        }
        acc += linalg::trace_mul(&irrep_eval_tube(xi, z)?, b, xi.dim) * xi.dim as f64;
    }
    Ok(acc)
}

fn torus_k(xi: &Irrep) -> Result<&[i64]> {
    xi.torus_k().ok_or_else(|| {
        Error::Unsupported("tube norms need the Jacobian of exp on the group; only torus tubes are available".into())
    })
}

/// w_ε(k) = ∫_{|Y|<ε} e^{−2k·Y} dY by the ball quadrature of `spec`.
pub fn hl2_weight(k: &[i64], spec: &TubeSpec) -> Result<f64> {
    if !spec.group.is_torus() {
        return Err(Error::Unsupported("HL² weights are only available on torus tubes".into()));
    }
    if k.len() != spec.ygrid.dim {
        return invalid("lattice point has the wrong dimension");
    }
    spec.ygrid.integrate(|y| (-2.0 * k.iter().zip(y).map(|(&kj, &yj)| kj as f64 * yj).sum::<f64>()).exp())
}

/// ⟨u, v⟩_{HL²(G_ε)} = Σ_k û(k) conj(v̂(k)) w_ε(k).
pub fn hl2_inner(u: &HoloFunction, v: &HoloFunction, spec: &TubeSpec) -> Result<C64> {
    if u.coeffs.dual != v.coeffs.dual {
        return invalid("functions live on different duals");
    }
    let mut acc = ZERO;
    for ((xi, a), b) in u.coeffs.dual.iter().zip(&u.coeffs.blocks).zip(&v.coeffs.blocks) {
        let k = torus_k(xi)?;
        if a[0] == ZERO || b[0] == ZERO {
            continue;
        }
        acc += a[0] * b[0].conj() * hl2_weight(k, spec)?;
    }
    Ok(acc)
}

/// ‖(I − Δ_C)^{s/2} u‖_{HL²(G_ε)}.
pub fn hh_norm(u: &HoloFunction, s: f64, spec: &TubeSpec) -> Result<f64> {
    let b = SpectralOperator::bessel(&u.coeffs.dual, s);
    let w = HoloFunction { coeffs: b.apply(&u.coeffs)?, epsilon: u.epsilon };
    Ok(hl2_inner(&w, &w, spec)?.re.max(0.0).sqrt())
}

/// Largest blockwise relative gap between P_ε(I − Δ)^{s/2} f and
/// (I − Δ_C)^{s/2} P_ε f. The two sides apply the same real scalings in a
/// different order, so the gap is a few units of roundoff.
pub fn intertwining_defect(f: &FourierCoefficients, s: f64, spec: &TubeSpec) -> Result<f64> {
    let b = SpectralOperator::bessel(&f.dual, s);
    let left = poisson_transform(&b.apply(f)?, spec)?;
    let right = b.apply(&poisson_transform(f, spec)?.coeffs)?;
    Ok(left
        .coeffs
        .blocks
        .iter()
        .zip(&right.blocks)
        .map(|(x, y)| {
            let scale = x.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if scale == 0.0 {
                linalg::max_abs_diff(x, y)
            } else {
                linalg::max_abs_diff(x, y) / scale
            }
        })
        .fold(0.0, f64::max))
}

/// Constants with c₁‖f‖_{H^{s−shift}} ≤ ‖P_ε f‖_{HH^s} ≤ c₂‖f‖_{H^{s−shift}} on
/// the given dual, shift = (n + 1)/4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalence {
    pub s: f64,
    pub shift: f64,
    pub c1: f64,
    pub c2: f64,
}

impl NormEquivalence {
    pub fn ratio(&self) -> f64 {
        self.c2 / self.c1
    }
}

/// Exact on the truncated space: both norms are diagonal in k.
pub fn norm_equivalence(dual: &[Irrep], s: f64, spec: &TubeSpec) -> Result<NormEquivalence> {
    let n = spec.group.dim() as f64;
    let shift = (n + 1.0) / 4.0;
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    for xi in dual {
        let k = torus_k(xi)?;
        let lam = xi.eigenvalue;
        let r2 = (1.0 + lam).powf(shift) * (-2.0 * spec.epsilon * lam.sqrt()).exp() * hl2_weight(k, spec)?;
        c1 = c1.min(r2.sqrt());
        c2 = c2.max(r2.sqrt());
    }
    if dual.is_empty() {
        return invalid("empty dual");
    }
    Ok(NormEquivalence { s, shift, c1, c2 })
}

/// An operator on G whose extension to the tube is tested.
#[derive(Clone, Copy)]
pub enum DiagramOperator<'a> {
    Spectral(&'a SpectralOperator),
    Symbol { symbol: &'a HoloSymbol, frame: &'a Arc<Frame> },
}

/// max over tests of ‖R_ε Ã P_ε f − A R_ε P_ε f‖_{H^s} / ‖A R_ε P_ε f‖_{H^s}.
/// The top path evaluates Ã P_ε f pointwise at Y = 0 (tube evaluation for a
/// multiplier, holo_apply for a symbol); the bottom path applies A to the
/// boundary values (coefficient multiplier, or quantization on the grid).
pub fn diagram_defect(op: DiagramOperator, s: f64, spec: &TubeSpec, frame: &Arc<Frame>, tests: &[FourierCoefficients]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for f in tests {
        let u = poisson_transform(f, spec)?;
        let (top, bottom) = match op {
            DiagramOperator::Spectral(a) => {
                // Ã = P_ε A P_ε^{−1} on the tube coefficients
                let damp = SpectralOperator::poisson(&f.dual, spec.epsilon);
                let grow = SpectralOperator::poisson(&f.dual, -spec.epsilon);
                let tilde = HoloFunction { coeffs: damp.compose(a)?.compose(&grow)?.apply(&u.coeffs)?, epsilon: u.epsilon };
                let top: Vec<C64> = frame
                    .grid
                    .nodes
                    .iter()
                    .map(|x| tube_evaluate(&tilde, &TubePoint::real(x.clone())))
                    .collect::<Result<_>>()?;
                let bottom = fourier_inverse(&a.apply(&restrict(&u))?, &frame.grid)?;
                (GridFunction::new(frame.grid.clone(), top)?, bottom)
            }
            DiagramOperator::Symbol { symbol, frame: sframe } => {
                if !Arc::ptr_eq(frame, sframe) && !frame.same_layout(sframe) {
                    return invalid("symbol and diagram live on different frames");
                }
                let top: Vec<C64> = frame
                    .grid
                    .nodes
                    .iter()
                    .map(|x| holo_apply(symbol, &u.coeffs, &TubePoint::real(x.clone())))
                    .collect::<Result<_>>()?;
                let p0 = symbol.sample(frame, &vec![0.0; frame.group.dim()])?;
                let boundary = fourier_inverse(&restrict(&u), &frame.grid)?;
                (GridFunction::new(frame.grid.clone(), top)?, quantize_apply(&p0, &boundary)?)
            }
        };
        let diff = fourier_forward(&top.sub(&bottom), &frame.dual)?;
        let reference = sobolev_norm(&fourier_forward(&bottom, &frame.dual)?, s);
        if reference == 0.0 {
            worst = worst.max(sobolev_norm(&diff, s));
        } else {
            worst = worst.max(sobolev_norm(&diff, s) / reference);
        }
    }
    Ok(worst)
}

/// Coefficients of the holomorphic function Op(p)u, read off its boundary
/// values Op(p_0)(R_ε u).
pub fn symbol_image(p: &HoloSymbol, u: &HoloFunction, frame: &Arc<Frame>) -> Result<HoloFunction> {
    let p0 = p.sample(frame, &vec![0.0; frame.group.dim()])?;
    let image = quantize_apply(&p0, &fourier_inverse(&restrict(u), &frame.grid)?)?;
    let coeffs = fourier_forward(&image, &frame.dual)?;
    Ok(HoloFunction { coeffs, epsilon: u.epsilon.min(p.epsilon) })
}

/// max over tests of ‖Op(p)u‖_{HH^{s−d}} / ‖u‖_{HH^s} with u = P_ε f.
pub fn sobolev_mirror_ratio(
    p: &HoloSymbol,
    d: f64,
    s: f64,
    spec: &TubeSpec,
    frame: &Arc<Frame>,
    tests: &[FourierCoefficients],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for f in tests {
        let u = poisson_transform(f, spec)?;
        let denom = hh_norm(&u, s, spec)?;
        if denom == 0.0 {
            continue;
        }
        let v = symbol_image(p, &u, frame)?;
        worst = worst.max(hh_norm(&v, s - d, spec)? / denom);
    }
    Ok(worst)
}

/// Partial sums of the half-wave kernel on a doubling ladder of cutoffs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfWave {
    pub value: C64,
    /// (cutoff, partial sum, |change from the previous rung|).
    pub ladder: Vec<(u64, C64, f64)>,
    pub converged: bool,
    /// Ratio of the last two deltas; above 1 when the partial sums grow.
    pub growth: f64,
    pub divergent: bool,
}

/// Σ_{|k| ≤ N} e^{ik·x − ε|k|} at the complex point z = x + iY, for N
/// doubling from 1 while the change exceeds the ladder tolerance and N stays
/// below `max_cutoff`.
pub fn half_wave_kernel(z: &TubePoint, spec: &TubeSpec, max_cutoff: u64) -> Result<HalfWave> {
    let x = match (&z.base, &spec.group) {
        (GroupPoint::Torus(x), GroupSpec::Torus { n }) if x.len() == *n && z.imag.len() == *n => x,
        _ => return Err(Error::Unsupported("the half-wave kernel is evaluated on torus tubes".into())),
    };
    if max_cutoff < 2 {
        return invalid("the ladder needs a maximal cutoff of at least 2");
    }
    let n = x.len();
    let eps = spec.epsilon;
    let term = |k: &[i64]| {
        let norm = k.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        let phase: f64 = k.iter().zip(x).map(|(&kj, &xj)| kj as f64 * xj).sum();
        let damp: f64 = k.iter().zip(&z.imag).map(|(&kj, &yj)| kj as f64 * yj).sum();
        C64::from_polar((-damp - eps * norm).exp(), phase)
    };
    // Σ over the Euclidean ball |k| ≤ r
    let ball = |r: i64| -> C64 {
        let mut acc = ZERO;
        let mut k = vec![-r; n];
        loop {
            if k.iter().map(|v| v * v).sum::<i64>() <= r * r {
                acc += term(&k);
            }
            let mut j = 0;
            loop {
                if j == n {
                    return acc;
                }
                k[j] += 1;
                if k[j] <= r {
                    break;
                }
                k[j] = -r;
                j += 1;
            }
        }
    };
    let mut ladder = Vec::new();
    let mut value = term(&vec![0; n]);
    let mut prev_cut = 0i64;
    let mut cut = 1i64;
    let mut converged = false;
    loop {
        let delta_sum = if n == 1 {
            (prev_cut + 1..=cut).map(|k| term(&[k]) + term(&[-k])).sum::<C64>()
        } else {
            ball(cut) - ball(prev_cut)
        };
        value += delta_sum;
        let delta = delta_sum.norm();
        ladder.push((cut as u64, value, delta));
        if delta <= LADDER_TOL {
            converged = true;
            break;
        }
        if 2 * cut as u64 > max_cutoff {
            break;
        }
        prev_cut = cut;
        cut *= 2;
    }
    let growth = match ladder.len() {
        0 | 1 => 0.0,
        l => ladder[l - 1].2 / ladder[l - 2].2,
    };
    Ok(HalfWave { value, ladder, converged, growth, divergent: !converged })
}

/// Closed form of the kernel on the real axis in one dimension,
/// Σ e^{ikx − ε|k|} = (1 − e^{−2ε}) / (1 − 2e^{−ε} cos x + e^{−2ε}).
pub fn poisson_kernel_1d(x: f64, epsilon: f64) -> f64 {
    let q = (-epsilon).exp();
    (1.0 - q * q) / (1.0 - 2.0 * q * x.cos() + q * q)
}

/// Volume of the ball of radius r in dimension n.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    let nf = n as f64;
    PI.powf(nf / 2.0) / gamma_half(n + 2) * r.powf(nf)
}

/// Γ(m/2) for m ≥ 1.
fn gamma_half(m: usize) -> f64 {
    if m == 1 {
        PI.sqrt()
    } else if m == 2 {
        1.0
    } else {
        (m as f64 / 2.0 - 1.0) * gamma_half(m - 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(1, 0.5) - 1.0).abs() < 1e-15);
        assert!((ball_volume(2, 1.0) - PI).abs() < 1e-15);
        assert!((ball_volume(3, 1.0) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn out_of_tube_is_reported() {
        let u = HoloFunction { coeffs: FourierCoefficients::zeros(vec![Irrep::torus(vec![0])]), epsilon: 0.3 };
        let z = TubePoint::new(GroupPoint::Torus(vec![0.0]), vec![0.3]);
        assert!(matches!(tube_evaluate(&u, &z), Err(Error::OutOfTube(_))));
    }

    #[test]
    fn su2_norms_are_unsupported() {
        let spec = TubeSpec::with_order(&GroupSpec::Su2, 0.2, 4).unwrap();
        let u = HoloFunction { coeffs: FourierCoefficients::zeros(vec![Irrep::spin(1)]), epsilon: 0.2 };
        assert!(matches!(hl2_inner(&u, &u, &spec), Err(Error::Unsupported(_))));
    }
}
