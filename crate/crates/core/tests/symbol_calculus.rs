use std::sync::Arc;

use grauert::fourier::{fourier_forward, fourier_inverse, GridFunction};
use grauert::frame::Frame;
use grauert::group::{irrep_eval, GroupPoint, GroupSpec, Irrep};
use grauert::linalg::{self, C64, ONE};
use grauert::sample::{random_band_limited, random_sequence_symbol, random_symbol, Rng};
use grauert::symbol::*;
use proptest::prelude::*;

fn torus_frame(cutoff: f64, m: usize) -> Arc<Frame> {
    Frame::new(&GroupSpec::torus(1), cutoff, m).unwrap()
}

fn k_of(xi: &Irrep) -> f64 {
    xi.torus_k().unwrap()[0] as f64
}

fn x_of(p: &GroupPoint) -> f64 {
    match p {
        GroupPoint::Torus(x) => x[0],
        _ => unreachable!(),
    }
}

fn eix(x: f64, m: f64) -> C64 {
    C64::from_polar(1.0, m * x)
}

fn scalar(frame: &Arc<Frame>, order: f64, f: impl Fn(f64, f64) -> C64) -> Symbol {
    Symbol::from_fn(frame.clone(), order, |x, xi| vec![f(x_of(x), k_of(xi))])
}

fn band_limited_u(frame: &Arc<Frame>, cutoff: f64, seed: u64) -> GridFunction {
    let dual: Vec<Irrep> = frame.dual.iter().filter(|xi| xi.bracket() <= cutoff).cloned().collect();
    let a = random_band_limited(&dual, frame.group.dim(), &mut Rng::seeded(seed));
    fourier_inverse(&a, &frame.grid).unwrap()
}

#[test]
fn quantization_examples() {
    let frame = torus_frame(8.0, 32);
    let u = GridFunction::from_fn(frame.grid.clone(), |p| eix(x_of(p), 2.0));
    let id = Symbol::constant(frame.clone(), ONE);
    let out = quantize_apply(&id, &u).unwrap();
    assert!(linalg::max_abs_diff(&out.values, &u.values) < 1e-12);

    let ik = scalar(&frame, 1.0, |_, k| C64::new(0.0, k));
    let out = quantize_apply(&ik, &u).unwrap();
    for (o, v) in out.values.iter().zip(&u.values) {
        assert!((o - v * C64::new(0.0, 2.0)).norm() < 1e-12);
    }

    let w = band_limited_u(&frame, 6.0, 3);
    let mult = scalar(&frame, 0.0, |x, _| eix(x, 1.0));
    let out = quantize_apply(&mult, &w).unwrap();
    for ((o, v), node) in out.values.iter().zip(&w.values).zip(&frame.grid.nodes) {
        assert!((o - v * eix(x_of(node), 1.0)).norm() < 1e-12);
    }
}

#[test]
fn quantization_rejects_out_of_band_input() {
    let frame = torus_frame(3.0, 32);
    let u = GridFunction::from_fn(frame.grid.clone(), |p| eix(x_of(p), 9.0));
    assert!(quantize_apply(&Symbol::constant(frame, ONE), &u).is_err());
}

#[test]
fn compose_derivative_after_multiplication() {
    let frame = torus_frame(16.0, 64);
    let p = scalar(&frame, 1.0, |_, k| C64::new(0.0, k));
    let q = scalar(&frame, 0.0, |x, _| eix(x, 1.0));
    let pq = compose_exact(&p, &q).unwrap();
    let want = scalar(&frame, 1.0, |x, k| C64::new(0.0, k + 1.0) * eix(x, 1.0));
    assert!(pq.max_diff(&want).unwrap() < 1e-11);
    // Interior irreps are certified, the two extreme ones are not.
    assert_eq!(pq.valid_count(), frame.dual.len() - 2);

    // Operator-side oracle: d/dx (e^{ix} u) for u = e^{2ix}.
    let u = GridFunction::from_fn(frame.grid.clone(), |p| eix(x_of(p), 2.0));
    let lhs = quantize_apply(&pq, &u).unwrap();
    for (o, node) in lhs.values.iter().zip(&frame.grid.nodes) {
        assert!((o - C64::new(0.0, 3.0) * eix(x_of(node), 3.0)).norm() < 1e-11);
    }
}

#[test]
fn compose_multiplication_after_derivative_is_plain_product() {
    let frame = torus_frame(16.0, 64);
    let p = scalar(&frame, 0.0, |x, _| eix(x, 1.0));
    let q = scalar(&frame, 1.0, |_, k| C64::new(0.0, k));
    let pq = compose_exact(&p, &q).unwrap();
    assert!(pq.max_diff(&p.pointwise_mul(&q).unwrap()).unwrap() < 1e-11);
    assert_eq!(pq.valid_count(), frame.dual.len());
}

#[test]
fn compose_x_independent_is_pointwise() {
    let frame = Frame::new(&GroupSpec::Su2, 3.0, 6).unwrap();
    let mut rng = Rng::seeded(11);
    let p = random_sequence_symbol(&frame, 1.0, &mut rng);
    let q = random_sequence_symbol(&frame, -1.0, &mut rng);
    let pq = compose_exact(&p, &q).unwrap();
    assert_eq!(pq.valid_count(), frame.dual.len());
    assert!(pq.max_diff(&p.pointwise_mul(&q).unwrap()).unwrap() < 1e-11);
}

#[test]
fn compose_without_margin_is_a_truncation_error() {
    let frame = torus_frame(2.0, 32);
    let p = scalar(&frame, 0.0, |_, _| ONE);
    let q = scalar(&frame, 0.0, |x, _| eix(x, 3.0));
    assert!(matches!(compose_exact(&p, &q), Err(grauert::Error::Truncation(_))));
}

#[test]
fn adjoint_examples() {
    let frame = torus_frame(12.0, 48);
    let ik = scalar(&frame, 1.0, |_, k| C64::new(0.0, k));
    let adj = adjoint_exact(&ik).unwrap();
    assert!(adj.max_diff(&ik.scale(-ONE)).unwrap() < 1e-11);

    let m = scalar(&frame, 0.0, |x, _| C64::from(2.0 + x.cos()));
    assert!(adjoint_exact(&m).unwrap().max_diff(&m).unwrap() < 1e-11);

    let c = C64::new(0.3, 0.7);
    let cs = Symbol::constant(frame.clone(), c);
    assert!(adjoint_exact(&cs).unwrap().max_diff(&Symbol::constant(frame, c.conj())).unwrap() < 1e-12);
}

#[test]
fn forward_differences() {
    let frame = torus_frame(10.0, 32);
    let k = scalar(&frame, 1.0, |_, k| C64::from(k));
    let dk = delta_xi(&k, &[1]).unwrap();
    assert!(dk.max_diff(&Symbol::constant(frame.clone(), ONE)).unwrap() < 1e-15);
    assert!(!dk.valid[frame.dual.len() - 1] || !dk.valid[frame.dual.len() - 2]);

    let one = Symbol::constant(frame.clone(), ONE);
    assert!(delta_xi(&one, &[1]).unwrap().max_diff(&Symbol::zeros(frame.clone(), 0.0)).unwrap() < 1e-15);

    let k2 = scalar(&frame, 2.0, |_, k| C64::from(k * k));
    let want = scalar(&frame, 1.0, |_, k| C64::from(2.0 * k + 1.0));
    assert!(delta_xi(&k2, &[1]).unwrap().max_diff(&want).unwrap() < 1e-13);
}

// Oracle: if a = F f then δ^α a = F(d_α f), computed by the plain forward
// transform of the multiplied function.
#[test]
fn su2_difference_matches_transform_of_multiplied_function() {
    let frame = Frame::new(&GroupSpec::Su2, 3.0, 8).unwrap();
    let half = Irrep::spin(1);
    let f = |y: &GroupPoint| {
        let e = irrep_eval(&half, y).unwrap();
        e[1] + C64::new(0.5, 0.0) * e[2] + 0.25
    };
    let fg = GridFunction::from_fn(frame.grid.clone(), f);
    let a = fourier_forward(&fg, &frame.dual).unwrap();
    let sym = Symbol::from_fn(frame.clone(), 0.0, |_, xi| a.get(xi).unwrap().to_vec());
    for alpha in [[1usize, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 1]] {
        let d = delta_xi(&sym, &alpha).unwrap();
        let mult = GridFunction::from_fn(frame.grid.clone(), |y| {
            let u = match y {
                GroupPoint::Su2(u) => *u,
                _ => unreachable!(),
            };
            let q = [u[0].conj() - ONE, u[2].conj(), u[1].conj(), u[3].conj() - ONE];
            let dv: C64 = q.iter().zip(alpha).map(|(z, a)| z.powu(a as u32)).product();
            dv * f(y)
        });
        let want = fourier_forward(&mult, &frame.dual).unwrap();
        for (i, xi) in frame.dual.iter().enumerate() {
            if d.valid[i] {
                assert!(linalg::max_abs_diff(d.block(i, 0), want.get(xi).unwrap()) < 1e-12);
            }
        }
        assert!(d.valid[0]);
    }
}

#[test]
fn leibniz_scalar_identity() {
    let frame = torus_frame(10.0, 32);
    let k = scalar(&frame, 1.0, |_, k| C64::from(k));
    assert!(leibniz_defect(&k, &k, 0, 0).unwrap() < 1e-13);
}

#[test]
fn leibniz_random_torus_and_su2() {
    let frame = torus_frame(20.0, 64);
    for seed in 0..5 {
        let mut rng = Rng::seeded(seed);
        let a = random_sequence_symbol(&frame, 0.0, &mut rng);
        let b = random_sequence_symbol(&frame, 0.0, &mut rng);
        assert!(leibniz_defect(&a, &b, 0, 0).unwrap() < 1e-10);
    }
    let t2 = Frame::new(&GroupSpec::torus(2), 4.0, 9).unwrap();
    let mut rng = Rng::seeded(9);
    let a = random_sequence_symbol(&t2, 0.0, &mut rng);
    let b = random_sequence_symbol(&t2, 0.0, &mut rng);
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        assert!(leibniz_defect(&a, &b, i, j).unwrap() < 1e-10);
    }
    let su2 = Frame::new(&GroupSpec::Su2, 2.5, 8).unwrap();
    for seed in 0..3 {
        let mut rng = Rng::seeded(100 + seed);
        let a = random_sequence_symbol(&su2, 0.0, &mut rng);
        let b = random_sequence_symbol(&su2, 0.0, &mut rng);
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!(leibniz_defect(&a, &b, i, j).unwrap() < 1e-8);
        }
    }
}

#[test]
fn derivative_examples() {
    let frame = torus_frame(8.0, 32);
    let p = scalar(&frame, 1.0, |x, k| eix(x, 1.0) * k);
    let want = scalar(&frame, 1.0, |x, k| C64::new(0.0, 1.0) * eix(x, 1.0) * k);
    assert!(derivative_x(&p, &[1]).unwrap().max_diff(&want).unwrap() < 1e-12);
    let c = Symbol::constant(frame.clone(), C64::new(2.0, 1.0));
    assert!(derivative_x(&c, &[3]).unwrap().max_diff(&Symbol::zeros(frame.clone(), 0.0)).unwrap() < 1e-12);
    let e2 = scalar(&frame, 0.0, |x, k| eix(x, 2.0) * (1.0 + k * k));
    let want = e2.scale(C64::from(-4.0));
    assert!(derivative_x(&e2, &[2]).unwrap().max_diff(&want).unwrap() < 1e-10);
}

#[test]
fn seminorm_examples() {
    let frame = torus_frame(30.0, 64);
    for d in [-1.0, 0.5, 2.0] {
        let p = Symbol::scalar_multiplier(frame.clone(), d, |xi| C64::from(xi.bracket().powf(d)));
        assert!((symbol_seminorm(&p, d, &[0], &[0]).unwrap() - 1.0).abs() < 1e-13);
    }
    let ik = scalar(&frame, 1.0, |_, k| C64::new(0.0, k));
    let want = frame.dual.iter().map(|xi| k_of(xi).abs() / xi.bracket()).fold(0.0, f64::max);
    let got = symbol_seminorm(&ik, 1.0, &[0], &[0]).unwrap();
    assert!((got - want).abs() < 1e-14 && got <= 1.0);
    let c = Symbol::constant(frame, C64::new(1.0, -2.0));
    assert_eq!(symbol_seminorm(&c, 0.0, &[0], &[1]).unwrap(), 0.0);
}

#[test]
fn asymptotic_expansion_examples() {
    let frame = torus_frame(16.0, 64);
    let p = scalar(&frame, 1.0, |_, k| C64::new(0.0, k));
    let q = scalar(&frame, 0.0, |x, _| eix(x, 1.0));
    let n1 = asymptotic_compose(&p, &q, 1).unwrap();
    assert!(n1.max_diff(&p.pointwise_mul(&q).unwrap()).unwrap() < 1e-13);
    let n2 = asymptotic_compose(&p, &q, 2).unwrap();
    assert!(n2.max_diff(&compose_exact(&p, &q).unwrap()).unwrap() < 1e-11);

    let qi = scalar(&frame, 0.0, |_, k| C64::from(1.0 / (1.0 + k * k)));
    let n3 = asymptotic_compose(&p, &qi, 3).unwrap();
    assert!(n3.max_diff(&p.pointwise_mul(&qi).unwrap()).unwrap() < 1e-13);

    let su2 = Frame::new(&GroupSpec::Su2, 2.0, 4).unwrap();
    let c = Symbol::constant(su2, ONE);
    assert!(matches!(asymptotic_compose(&c, &c, 2), Err(grauert::Error::Unsupported(_))));
}

#[test]
fn asymptotic_expansion_converges_to_exact_product() {
    let frame = torus_frame(40.0, 128);
    let p = scalar(&frame, 2.0, |x, k| C64::from(k * k) + 0.3 * eix(x, 1.0) * k);
    let q = scalar(&frame, -2.0, |x, k| C64::from(1.0 / (1.0 + k * k)) * (1.0 + 0.2 * eix(x, -1.0)));
    let exact = compose_exact(&p, &q).unwrap();
    // At fixed large |k| each extra term gains roughly a factor |k|.
    let mut prev = f64::INFINITY;
    for n in 1..=4 {
        let approx = asymptotic_compose(&p, &q, n).unwrap();
        let err = exact.sub(&approx).unwrap().weighted_sup(-(n as f64), 30.0);
        assert!(err < 3.0, "N = {n}: {err}");
        let diff = exact.sub(&approx).unwrap();
        let i = frame.dual.iter().position(|xi| k_of(xi) == 25.0).unwrap();
        let raw = (0..frame.nodes()).map(|node| diff.block(i, node)[0].norm()).fold(0.0, f64::max);
        assert!(raw < prev / 10.0 || raw < 1e-12, "N = {n}: {raw} vs {prev}");
        prev = raw;
    }
}

#[test]
fn symbol_record_round_trip_is_exact() {
    let frame = Frame::new(&GroupSpec::Su2, 2.0, 4).unwrap();
    let p = random_symbol(&frame, 1.0, 1, &mut Rng::seeded(5));
    let rec = SymbolRecord::from_symbol(&p);
    let text = serde_json::to_string(&rec).unwrap();
    let back: SymbolRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rec);
    let q = back.to_symbol().unwrap();
    assert_eq!(q.data, p.data);
}

fn composition_defect(frame: &Arc<Frame>, band: usize, test_cutoff: f64, seed: u64) -> (f64, f64) {
    let mut rng = Rng::seeded(seed);
    let p = random_symbol(frame, 1.0, band, &mut rng);
    let q = random_symbol(frame, 0.0, band, &mut rng);
    let u = band_limited_u(frame, test_cutoff, seed + 1000);
    let pq = compose_exact(&p, &q).unwrap();
    let lhs = quantize_apply(&pq, &u).unwrap();
    let rhs = quantize_apply(&p, &quantize_apply(&q, &u).unwrap()).unwrap();
    let comp = lhs.sub(&rhs).l2_norm() / u.l2_norm();

    let v = band_limited_u(frame, test_cutoff, seed + 2000);
    let pa = adjoint_exact(&p).unwrap();
    let l = quantize_apply(&p, &u).unwrap().inner(&v);
    let r = u.inner(&quantize_apply(&pa, &v).unwrap());
    let adj = (l - r).norm() / (u.l2_norm() * v.l2_norm());
    (comp, adj)
}

#[test]
fn composition_and_adjoint_on_su2() {
    let frame = Frame::new(&GroupSpec::Su2, 3.9, 9).unwrap();
    for seed in 0..2 {
        let (c, a) = composition_defect(&frame, 1, 2.0, seed);
        assert!(c < 1e-8, "composition {c}");
        assert!(a < 1e-8, "adjoint {a}");
    }
}

#[test]
fn composition_and_adjoint_on_t2() {
    let frame = Frame::new(&GroupSpec::torus(2), 6.0, 15).unwrap();
    let (c, a) = composition_defect(&frame, 1, 3.0, 77);
    assert!(c < 1e-8 && a < 1e-8, "{c} {a}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn composition_and_adjoint_on_torus(seed in 0u64..10_000) {
        let frame = torus_frame(24.0, 64);
        let (c, a) = composition_defect(&frame, 3, 12.0, seed);
        prop_assert!(c < 1e-8);
        prop_assert!(a < 1e-8);
    }

    #[test]
    fn composition_is_associative(seed in 0u64..10_000) {
        let frame = torus_frame(24.0, 64);
        let mut rng = Rng::seeded(seed);
        let p = random_symbol(&frame, 1.0, 2, &mut rng);
        let q = random_symbol(&frame, 0.0, 2, &mut rng);
        let r = random_symbol(&frame, -1.0, 2, &mut rng);
        let left = compose_exact(&compose_exact(&p, &q).unwrap(), &r).unwrap();
        let right = compose_exact(&p, &compose_exact(&q, &r).unwrap()).unwrap();
        prop_assert!(left.valid_count() > 0);
        prop_assert!(left.max_diff(&right).unwrap() < 1e-7);
    }
}

// p ⊙ q − pq lowers the order by one: its weighted sup at order d1+d2−1 is
// stable when the cutoff doubles.
#[test]
fn first_order_remainder() {
    let frame = torus_frame(64.0, 256);
    let p = scalar(&frame, 1.0, |x, k| k * (1.0 + 0.3 * eix(x, 1.0)) + 0.5 * eix(x, -2.0));
    let q = scalar(&frame, 1.0, |x, k| (1.0 + k * k).sqrt() * (1.0 + 0.2 * eix(x, -1.0)));
    let rem = compose_exact(&p, &q).unwrap().sub(&p.pointwise_mul(&q).unwrap()).unwrap();
    let inner = rem.weighted_sup(1.0, 25.0);
    let outer = rem.weighted_sup(1.0, 50.0);
    assert!(outer / inner <= 2.0, "{inner} {outer}");
    let naive_inner = rem.weighted_sup(0.0, 25.0);
    let naive_outer = rem.weighted_sup(0.0, 50.0);
    assert!(naive_outer / naive_inner > 1.5);
}
