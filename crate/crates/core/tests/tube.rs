use std::sync::Arc;

use grauert::error::Error;
use grauert::expr::Expr;
use grauert::fourier::{fourier_inverse, sobolev_norm, FourierCoefficients};
use grauert::frame::Frame;
use grauert::group::{enumerate_dual, GroupPoint, GroupSpec, Irrep, TubePoint};
use grauert::holo::HoloSymbol;
use grauert::linalg::{self, C64, ONE, ZERO};
use grauert::sample::{random_band_limited, Rng};
use grauert::spectral::SpectralOperator;
use grauert::tube::*;
use proptest::prelude::*;

fn t1(cutoff: f64, m: usize) -> Arc<Frame> {
    Frame::new(&GroupSpec::torus(1), cutoff, m).unwrap()
}

fn single(dual: &[Irrep], k: &[i64]) -> FourierCoefficients {
    FourierCoefficients::new(
        dual.to_vec(),
        dual.iter().map(|xi| vec![if xi.torus_k() == Some(k) { ONE } else { ZERO }]).collect(),
    )
    .unwrap()
}

fn band_limited(dual: &[Irrep], cutoff: f64, n: usize, seed: u64) -> FourierCoefficients {
    let inner: Vec<Irrep> = dual.iter().filter(|xi| xi.bracket() <= cutoff).cloned().collect();
    let f = random_band_limited(&inner, n, &mut Rng::seeded(seed));
    FourierCoefficients::new(
        dual.to_vec(),
        dual.iter().map(|xi| f.get(xi).map_or_else(|| vec![ZERO; xi.dim * xi.dim], |b| b.to_vec())).collect(),
    )
    .unwrap()
}

/// ∫_{−ε}^{ε} e^{−2kY} dY
fn weight_1d(k: f64, eps: f64) -> f64 {
    if k == 0.0 {
        2.0 * eps
    } else {
        (2.0 * k * eps).sinh() / k
    }
}

/// I₁(x) by its power series.
fn bessel_i1(x: f64) -> f64 {
    let mut term = x / 2.0;
    let mut sum = term;
    for m in 1..200 {
        term *= (x / 2.0).powi(2) / (m as f64 * (m + 1) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

#[test]
fn poisson_transform_examples() {
    let spec = TubeSpec::new(&GroupSpec::torus(1), 0.2).unwrap();
    let dual = enumerate_dual(&GroupSpec::torus(1), 6.0).unwrap();
    let u = poisson_transform(&single(&dual, &[3]), &spec).unwrap();
    assert!((u.coeffs.get(&Irrep::torus(vec![3])).unwrap()[0].re - (-0.6f64).exp()).abs() < 1e-16);
    let c = single(&dual, &[0]);
    assert_eq!(poisson_transform(&c, &spec).unwrap().coeffs, c);
    let spec1 = TubeSpec::new(&GroupSpec::torus(1), 1.0).unwrap();
    let r = restrict(&poisson_transform(&single(&dual, &[1]), &spec1).unwrap());
    assert!((r.get(&Irrep::torus(vec![1])).unwrap()[0].re - (-1.0f64).exp()).abs() < 1e-16);
}

#[test]
fn half_wave_coefficients() {
    // the kernel Σ e^{ik·x − ε|k|} is P_ε of the delta at the identity
    let spec = TubeSpec::new(&GroupSpec::torus(1), 0.5).unwrap();
    let dual = enumerate_dual(&GroupSpec::torus(1), 30.0).unwrap();
    let delta = FourierCoefficients::new(dual.clone(), vec![vec![ONE]; dual.len()]).unwrap();
    let u = poisson_transform(&delta, &spec).unwrap();
    for (xi, b) in dual.iter().zip(&u.coeffs.blocks) {
        let k = xi.torus_k().unwrap()[0].abs() as f64;
        assert!((b[0].re - (-0.5 * k).exp()).abs() < 1e-16);
    }
    let x = 0.8;
    let v = tube_evaluate(&u, &TubePoint::real(GroupPoint::Torus(vec![x]))).unwrap();
    // truncated at |k| ≤ 30 the tail is below 2e^{−15}/(1 − e^{−0.5})
    assert!((v.re - poisson_kernel_1d(x, 0.5)).abs() < 1e-5);
}

#[test]
fn restriction_factors_through_the_poisson_multiplier() {
    for group in [GroupSpec::torus(1), GroupSpec::torus(2), GroupSpec::Su2] {
        let dual = enumerate_dual(&group, 8.0).unwrap();
        let spec = TubeSpec::with_order(&group, 0.4, 8).unwrap();
        let f = random_band_limited(&dual, group.dim(), &mut Rng::seeded(11));
        let r = restrict(&poisson_transform(&f, &spec).unwrap());
        let m = SpectralOperator::poisson(&dual, 0.4).apply(&f).unwrap();
        for (a, b) in r.blocks.iter().zip(&m.blocks) {
            assert!(linalg::max_abs_diff(a, b) <= 1e-16);
        }
    }
}

#[test]
fn tube_evaluation_of_exponentials() {
    let dual = enumerate_dual(&GroupSpec::torus(1), 6.0).unwrap();
    let u = HoloFunction { coeffs: single(&dual, &[4]), epsilon: 0.5 };
    for (x, y) in [(0.3, 0.2), (2.0, -0.45), (5.0, 0.0)] {
        let z = TubePoint::new(GroupPoint::Torus(vec![x]), vec![y]);
        let want = C64::from_polar((-4.0 * y).exp(), 4.0 * x);
        assert!((tube_evaluate(&u, &z).unwrap() - want).norm() < 1e-13);
    }
    let z = TubePoint::new(GroupPoint::Torus(vec![0.0]), vec![-0.5]);
    assert!(matches!(tube_evaluate(&u, &z), Err(Error::OutOfTube(_))));
}

#[test]
fn tube_evaluation_at_the_boundary_matches_the_grid() {
    let frame = Frame::new(&GroupSpec::Su2, 5.0, 12).unwrap();
    let f = random_band_limited(&frame.dual, 3, &mut Rng::seeded(2));
    let spec = TubeSpec::with_order(&GroupSpec::Su2, 0.3, 4).unwrap();
    let u = poisson_transform(&f, &spec).unwrap();
    let g = fourier_inverse(&restrict(&u), &frame.grid).unwrap();
    for (node, v) in frame.grid.nodes.iter().zip(&g.values).step_by(7) {
        let w = tube_evaluate(&u, &TubePoint::real(node.clone())).unwrap();
        assert!((w - v).norm() < 1e-13);
    }
}

#[test]
fn su2_characters_continue_to_the_tube() {
    // u = χ_ℓ has û(ℓ) = I/d; χ_ℓ(exp(iY)) = sinh(d|Y|/2)/sinh(|Y|/2)
    for two_l in 1..=3u32 {
        let xi = Irrep::spin(two_l);
        let d = xi.dim as f64;
        let block: Vec<C64> = linalg::identity(xi.dim).into_iter().map(|z| z / d).collect();
        let u = HoloFunction { coeffs: FourierCoefficients::new(vec![xi], vec![block]).unwrap(), epsilon: 1.0 };
        let y = [0.2, -0.3, 0.4];
        let t = (y.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let want = (d * t / 2.0).sinh() / (t / 2.0).sinh();
        let id = GroupSpec::Su2.identity();
        let v = tube_evaluate(&u, &TubePoint::new(id, y.to_vec())).unwrap();
        assert!((v - want).norm() < 1e-13, "{two_l}: {v} vs {want}");
    }
}

#[test]
fn hl2_norms_of_exponentials() {
    let dual = enumerate_dual(&GroupSpec::torus(1), 21.0).unwrap();
    for eps in [0.2, 0.5] {
        let spec = TubeSpec::new(&GroupSpec::torus(1), eps).unwrap();
        for k in -20..=20i64 {
            let u = HoloFunction { coeffs: single(&dual, &[k]), epsilon: eps };
            let got = hl2_inner(&u, &u, &spec).unwrap();
            let want = weight_1d(k as f64, eps);
            assert!((got.re - want).abs() < 1e-10 * want && got.im == 0.0, "k = {k}: {got} vs {want}");
        }
        let a = HoloFunction { coeffs: single(&dual, &[3]), epsilon: eps };
        let b = HoloFunction { coeffs: single(&dual, &[-2]), epsilon: eps };
        assert!(hl2_inner(&a, &b, &spec).unwrap().norm() < 1e-12);
    }
}

#[test]
fn hl2_inner_matches_direct_tube_quadrature() {
    // ∫_{|Y|<ε} ∫_T u(x+iY) conj(v(x+iY)) dx dY on a product grid
    let frame = t1(8.0, 32);
    let spec = TubeSpec::with_order(&GroupSpec::torus(1), 0.4, 24).unwrap();
    let u = poisson_transform(&random_band_limited(&frame.dual, 1, &mut Rng::seeded(1)), &spec).unwrap();
    let v = poisson_transform(&random_band_limited(&frame.dual, 1, &mut Rng::seeded(2)), &spec).unwrap();
    let mut direct = ZERO;
    for (y, wy) in spec.ygrid.nodes.iter().zip(&spec.ygrid.weights) {
        for (x, wx) in frame.grid.nodes.iter().zip(&frame.grid.weights) {
            let z = TubePoint::new(x.clone(), y.clone());
            direct += tube_evaluate(&u, &z).unwrap() * tube_evaluate(&v, &z).unwrap().conj() * wx * wy;
        }
    }
    let fast = hl2_inner(&u, &v, &spec).unwrap();
    assert!((direct - fast).norm() < 1e-12 * fast.norm().max(1.0));
}

#[test]
fn ball_weights_in_two_and_three_dimensions() {
    // ∫_{|Y|<ε} e^{a·Y} dY = 2πε I₁(|a|ε)/|a| (disc), 4π(|a|ε cosh(|a|ε) − sinh(|a|ε))/|a|³ (ball)
    let eps = 0.3;
    let spec2 = TubeSpec::new(&GroupSpec::torus(2), eps).unwrap();
    for k in [[0i64, 0], [1, 0], [3, -4], [-6, 2]] {
        let a = 2.0 * ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
        let want = if a == 0.0 { std::f64::consts::PI * eps * eps } else { 2.0 * std::f64::consts::PI * eps * bessel_i1(a * eps) / a };
        let got = hl2_weight(&k, &spec2).unwrap();
        assert!((got - want).abs() < 1e-10 * want, "{k:?}: {got} vs {want}");
    }
    let spec3 = TubeSpec::new(&GroupSpec::torus(3), eps).unwrap();
    for k in [[1i64, 0, 0], [2, -1, 2], [0, 5, 0]] {
        let a = 2.0 * ((k.iter().map(|v| v * v).sum::<i64>()) as f64).sqrt();
        let t = a * eps;
        let want = 4.0 * std::f64::consts::PI * (t * t.cosh() - t.sinh()) / a.powi(3);
        let got = hl2_weight(&k, &spec3).unwrap();
        assert!((got - want).abs() < 1e-10 * want, "{k:?}: {got} vs {want}");
    }
}

#[test]
fn hh_norms() {
    let dual = enumerate_dual(&GroupSpec::torus(1), 21.0).unwrap();
    let eps = 0.5;
    let spec = TubeSpec::new(&GroupSpec::torus(1), eps).unwrap();
    let f = random_band_limited(&dual, 1, &mut Rng::seeded(4));
    let u = HoloFunction { coeffs: f, epsilon: eps };
    assert!((hh_norm(&u, 0.0, &spec).unwrap() - hl2_inner(&u, &u, &spec).unwrap().re.sqrt()).abs() < 1e-14);
    for s in [-1.0, 0.5, 2.0] {
        for k in [-7i64, 1, 12] {
            let e = HoloFunction { coeffs: single(&dual, &[k]), epsilon: eps };
            let kf = k as f64;
            let want = (1.0 + kf * kf).powf(s) * weight_1d(kf, eps);
            let got = hh_norm(&e, s, &spec).unwrap().powi(2);
            assert!((got - want).abs() < 1e-10 * want);
        }
        assert!(intertwining_defect(&u.coeffs, s, &spec).unwrap() <= 4.0 * f64::EPSILON);
    }
}

#[test]
fn hl2_norms_grow_with_the_tube() {
    let dual = enumerate_dual(&GroupSpec::torus(1), 10.0).unwrap();
    let f = random_band_limited(&dual, 1, &mut Rng::seeded(9));
    let mut prev = 0.0;
    for eps in [0.1, 0.2, 0.4, 0.8] {
        let spec = TubeSpec::new(&GroupSpec::torus(1), eps).unwrap();
        let n = hh_norm(&HoloFunction { coeffs: f.clone(), epsilon: eps }, 0.0, &spec).unwrap();
        assert!(n > prev);
        prev = n;
    }
}

#[test]
fn norm_equivalence_constants_bracket_the_ratio() {
    let eps = 0.5;
    let spec = TubeSpec::new(&GroupSpec::torus(1), eps).unwrap();
    let mut prev_ratio = 0.0;
    for cutoff in [8.0, 16.0, 32.0] {
        let dual = enumerate_dual(&GroupSpec::torus(1), cutoff).unwrap();
        for s in [0.0, 1.5] {
            let c = norm_equivalence(&dual, s, &spec).unwrap();
            assert!(c.c1 > 0.0 && c.c2.is_finite());
            assert_eq!(c.shift, 0.5);
            for seed in 0..5 {
                let f = random_band_limited(&dual, 1, &mut Rng::seeded(seed));
                let r = hh_norm(&poisson_transform(&f, &spec).unwrap(), s, &spec).unwrap() / sobolev_norm(&f, s - c.shift);
                assert!(r >= c.c1 * (1.0 - 1e-12) && r <= c.c2 * (1.0 + 1e-12));
            }
            if s == 0.0 {
                assert!(c.ratio() >= prev_ratio);
                prev_ratio = c.ratio();
            }
        }
    }
}

#[test]
fn spectral_diagrams_commute() {
    let frame = t1(16.0, 64);
    let spec = TubeSpec::new(&GroupSpec::torus(1), 0.5).unwrap();
    let tests: Vec<_> = (0..3).map(|s| band_limited(&frame.dual, 16.0, 1, s)).collect();
    let ops = [
        SpectralOperator::poisson(&frame.dual, 0.3),
        SpectralOperator::laplacian_parametrix(&frame.dual),
        SpectralOperator::bessel(&frame.dual, -2.0),
        SpectralOperator::laplacian(&frame.dual),
    ];
    for a in &ops {
        for s in [-1.0, 0.0, 2.0] {
            let d = diagram_defect(DiagramOperator::Spectral(a), s, &spec, &frame, &tests).unwrap();
            assert!(d <= 1e-10, "{d}");
        }
    }
}

#[test]
fn symbol_diagram_commutes() {
    let frame = t1(24.0, 96);
    let spec = TubeSpec::new(&GroupSpec::torus(1), 0.5).unwrap();
    let tests: Vec<_> = (0..3).map(|s| band_limited(&frame.dual, 12.0, 1, s)).collect();
    let p = HoloSymbol::from_expr(Expr::product(vec![Expr::coord_exp(vec![1]), Expr::Generator { axis: 0 }]), 0.5, 1.0).unwrap();
    for s in [-1.0, 0.0, 2.0] {
        let d = diagram_defect(DiagramOperator::Symbol { symbol: &p, frame: &frame }, s, &spec, &frame, &tests).unwrap();
        assert!(d <= 1e-8, "{d}");
    }
}

#[test]
fn sobolev_mirror_ratio_is_stable_under_doubling() {
    let p = HoloSymbol::from_expr(Expr::product(vec![Expr::coord_exp(vec![1]), Expr::Generator { axis: 0 }]), 0.5, 1.0).unwrap();
    let spec = TubeSpec::new(&GroupSpec::torus(1), 0.5).unwrap();
    for s in [0.0, 1.0] {
        let mut ratios = Vec::new();
        for cutoff in [8.0, 16.0] {
            let frame = t1(2.0 * cutoff + 2.0, 128);
            let tests: Vec<_> = (0..4).map(|seed| band_limited(&frame.dual, cutoff, 1, seed)).collect();
            ratios.push(sobolev_mirror_ratio(&p, 1.0, s, &spec, &frame, &tests).unwrap());
        }
        assert!(ratios[1] <= 2.0 * ratios[0], "{ratios:?}");
        assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    }
}

#[test]
fn half_wave_kernel_on_the_real_axis() {
    let spec = TubeSpec::new(&GroupSpec::torus(1), 0.5).unwrap();
    for x in [0.0, 0.7, 2.5, -1.2] {
        let h = half_wave_kernel(&TubePoint::real(GroupPoint::Torus(vec![x])), &spec, 1 << 20).unwrap();
        assert!(h.converged && !h.divergent);
        assert!((h.value - poisson_kernel_1d(x, 0.5)).norm() < 1e-8);
    }
}

#[test]
fn half_wave_kernel_near_and_at_the_boundary() {
    let spec = TubeSpec::new(&GroupSpec::torus(1), 0.5).unwrap();
    let near = half_wave_kernel(&TubePoint::new(GroupPoint::Torus(vec![0.0]), vec![0.49]), &spec, 1 << 20).unwrap();
    assert!(near.converged);
    let deltas: Vec<f64> = near.ladder.iter().map(|r| r.2).collect();
    assert!(deltas[deltas.len() - 1] < deltas[deltas.len() - 3]);
    // Σ_k e^{−k(0.49) − 0.5|k|} in closed form
    let (a, b) = ((-0.99f64).exp(), (-0.01f64).exp());
    let want = 1.0 + a / (1.0 - a) + b / (1.0 - b);
    assert!((near.value.re - want).abs() < 1e-6);
    let at = half_wave_kernel(&TubePoint::new(GroupPoint::Torus(vec![0.0]), vec![0.5]), &spec, 1 << 20).unwrap();
    assert!(at.divergent && at.growth > 1.5);
    let beyond = half_wave_kernel(&TubePoint::new(GroupPoint::Torus(vec![0.3]), vec![-0.6]), &spec, 1 << 12).unwrap();
    assert!(beyond.divergent && beyond.growth > 1.0);
}

#[test]
fn half_wave_kernel_in_two_dimensions() {
    let spec = TubeSpec::with_order(&GroupSpec::torus(2), 1.0, 4).unwrap();
    let h = half_wave_kernel(&TubePoint::new(GroupPoint::Torus(vec![0.4, -0.2]), vec![0.1, 0.2]), &spec, 64).unwrap();
    assert!(h.converged);
    let h = half_wave_kernel(&TubePoint::new(GroupPoint::Torus(vec![0.0, 0.0]), vec![0.8, 0.6]), &spec, 64).unwrap();
    assert!(h.divergent);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn restrict_after_poisson_is_the_multiplier(seed in 0u64..10_000, eps in 0.05f64..1.0) {
        let dual = enumerate_dual(&GroupSpec::torus(2), 6.0).unwrap();
        let spec = TubeSpec::with_order(&GroupSpec::torus(2), eps, 4).unwrap();
        let f = random_band_limited(&dual, 2, &mut Rng::seeded(seed));
        let r = restrict(&poisson_transform(&f, &spec).unwrap());
        let m = SpectralOperator::poisson(&dual, eps).apply(&f).unwrap();
        prop_assert_eq!(r, m);
    }

    #[test]
    fn hl2_is_positive_and_monotone_in_epsilon(seed in 0u64..10_000, eps in 0.05f64..0.9) {
        let dual = enumerate_dual(&GroupSpec::torus(1), 12.0).unwrap();
        let f = random_band_limited(&dual, 1, &mut Rng::seeded(seed));
        let small = TubeSpec::new(&GroupSpec::torus(1), eps).unwrap();
        let large = TubeSpec::new(&GroupSpec::torus(1), eps * 1.1).unwrap();
        let u = HoloFunction { coeffs: f, epsilon: eps * 1.1 };
        let a = hh_norm(&u, 0.0, &small).unwrap();
        let b = hh_norm(&u, 0.0, &large).unwrap();
        prop_assert!(a > 0.0 && b > a);
    }
}
