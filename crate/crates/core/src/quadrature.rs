use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Gauss–Legendre nodes and weights mapped to `[a, b]`, nodes ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).unwrap();
    let rule = GaussLegendre::new(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut out: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect();
    out.sort_by(|l, r| l.0.total_cmp(&r.0));
    out
}
