use std::fmt::Write as _;
use std::sync::Arc;

use grauert::fourier::{fourier_forward, fourier_inverse, sobolev_norm, FourierCoefficients, GridFunction};
use grauert::frame::Frame;
use grauert::group::{enumerate_dual, su2_euler, GroupPoint, GroupSpec, Irrep, TubePoint};
use grauert::holo::{
    asymptotic_sum, default_q0, ellipticity_check, parametrix, two_cutoff, HoloSymbol, Side, YGrid,
};
use grauert::linalg::{C64, ZERO};
use grauert::sample::{random_band_limited, Rng};
use grauert::spectral::{complex_power_contour, default_radius, exp_power_contour, ContourResult, SpectralOperator};
use grauert::symbol::{adjoint_exact, compose_exact, delta_arity, delta_xi, quantize_apply, Symbol, SymbolRecord};
use grauert::tube::{
    diagram_defect, half_wave_kernel, hh_norm, intertwining_defect, poisson_transform, tube_evaluate,
    DiagramOperator, TubeSpec,
};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, OperatorSpec};
use crate::record::{Certificate, CliError, Inputs, Outcome};

type Run = Result<Outcome, CliError>;

fn certificate(name: &'static str, passed: bool, tolerance: Option<f64>) -> Certificate {
    Certificate { name, passed, tolerance }
}

fn to_value(v: &impl serde::Serialize) -> Result<Value, CliError> {
    Ok(serde_json::to_value(v)?)
}

/// Seeded coefficients on ⟨ξ⟩ ≤ `band`, zero on the rest of `dual`.
fn seeded(dual: &[Irrep], band: f64, dim: usize, seed: u64) -> FourierCoefficients {
    let inner: Vec<Irrep> = dual.iter().filter(|xi| xi.bracket() <= band).cloned().collect();
    embed(dual, &random_band_limited(&inner, dim, &mut Rng::seeded(seed))).expect("subset of the dual")
}

fn embed(dual: &[Irrep], f: &FourierCoefficients) -> Result<FourierCoefficients, CliError> {
    if let Some(xi) = f.dual.iter().find(|xi| !dual.contains(xi)) {
        return Err(CliError::config(format!("input irrep {:?} lies outside the configured dual", xi.label)));
    }
    let blocks = dual.iter().map(|xi| f.get(xi).map_or_else(|| vec![ZERO; xi.dim * xi.dim], |b| b.to_vec())).collect();
    Ok(FourierCoefficients::new(dual.to_vec(), blocks)?)
}

/// The configured input, or one seeded test function per seed.
fn test_functions(cfg: &ExperimentConfig, dual: &[Irrep], band: f64, inputs: &mut Inputs) -> Result<Vec<FourierCoefficients>, CliError> {
    if let Some(path) = &cfg.input {
        let bytes = inputs.read(path)?;
        let f: FourierCoefficients =
            serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        f.validate().map_err(|e| CliError::config(e.to_string()))?;
        return Ok(vec![embed(dual, &f)?]);
    }
    let dim = cfg.group.dim();
    Ok(cfg.seeds.iter().map(|&s| seeded(dual, band, dim, s)).collect())
}

fn grid_tests(cfg: &ExperimentConfig, frame: &Arc<Frame>, inputs: &mut Inputs) -> Result<Vec<GridFunction>, CliError> {
    test_functions(cfg, &frame.dual, 0.5 * cfg.cutoff, inputs)?
        .iter()
        .map(|f| Ok(fourier_inverse(f, &frame.grid)?))
        .collect()
}

fn group_point(cfg: &ExperimentConfig, x: &[f64]) -> Result<GroupPoint, CliError> {
    match cfg.group {
        GroupSpec::Torus { n } if x.len() == n => Ok(GroupPoint::Torus(x.to_vec())),
        GroupSpec::Su2 if x.len() == 3 => Ok(su2_euler(x[0], x[1], x[2])),
        _ => Err(CliError::config("point.x has the wrong length (torus coordinates or SU(2) Euler angles)")),
    }
}

fn tube_point(cfg: &ExperimentConfig) -> Result<Option<TubePoint>, CliError> {
    let Some(p) = &cfg.point else { return Ok(None) };
    if p.y.len() != cfg.space_dim() {
        return Err(CliError::config("point.y has the wrong length"));
    }
    Ok(Some(TubePoint::new(group_point(cfg, &p.x)?, p.y.clone())))
}

pub fn dual(cfg: &ExperimentConfig) -> Run {
    let frame = cfg.frame()?;
    let mut csv = String::from("label,dim,eigenvalue,bracket\n");
    let mut rows = Vec::new();
    for xi in &frame.dual {
        let label = serde_json::to_string(&xi.label)?;
        writeln!(csv, "\"{}\",{},{},{}", label.replace('"', "\"\""), xi.dim, xi.eigenvalue, xi.bracket()).unwrap();
        rows.push(json!({"label": xi.label, "dim": xi.dim, "eigenvalue": xi.eigenvalue, "bracket": xi.bracket()}));
    }
    let value = json!({"count": rows.len(), "resolution": cfg.resolution(), "irreps": rows});
    let mut out = Outcome::new(value, None, certificate("nyquist", true, None));
    out.tables.push(("dual", csv));
    Ok(out)
}

pub fn apply(cfg: &ExperimentConfig, inputs: &mut Inputs) -> Run {
    let frame = cfg.frame()?;
    let spec = cfg.symbol_specs(1).into_iter().next().expect("a default symbol exists");
    let p = cfg.symbol(&spec, &frame, inputs)?;
    let mut results = Vec::new();
    let mut norms = Vec::new();
    for u in grid_tests(cfg, &frame, inputs)? {
        let v = quantize_apply(&p, &u)?;
        norms.push(json!({"input": u.l2_norm(), "output": v.l2_norm()}));
        results.push(fourier_forward(&v, &frame.dual)?);
    }
    let mut out = Outcome::new(json!({"norms": norms}), None, certificate("band-limit", true, None));
    out.artifacts.push(("coefficients", to_value(&results)?));
    Ok(out)
}

fn product_defect(p: &Symbol, q: &Symbol, pq: &Symbol, u: &GridFunction) -> Result<f64, CliError> {
    let lhs = quantize_apply(pq, u)?;
    let rhs = quantize_apply(p, &quantize_apply(q, u)?)?;
    Ok(lhs.sub(&rhs).l2_norm() / u.l2_norm())
}

pub fn compose(cfg: &ExperimentConfig, inputs: &mut Inputs) -> Run {
    let frame = cfg.frame()?;
    let specs = cfg.symbol_specs(2);
    if specs.len() < 2 {
        return Err(CliError::config("compose needs two symbols"));
    }
    let p = cfg.symbol(&specs[0], &frame, inputs)?;
    let q = cfg.symbol(&specs[1], &frame, inputs)?;
    let pq = compose_exact(&p, &q)?;
    let mut defects = Vec::new();
    for u in grid_tests(cfg, &frame, inputs)? {
        defects.push(product_defect(&p, &q, &pq, &u)?);
    }
    let worst = defects.iter().copied().fold(0.0, f64::max);
    let tol = cfg.tolerance.unwrap_or(1e-8);
    let mut out = Outcome::new(json!({"defects": defects, "valid_irreps": pq.valid_count()}), Some(worst), certificate("composition", worst <= tol, Some(tol)));
    out.artifacts.push(("symbol", to_value(&SymbolRecord::from_symbol(&pq))?));
    Ok(out)
}

pub fn adjoint(cfg: &ExperimentConfig, inputs: &mut Inputs) -> Run {
    let frame = cfg.frame()?;
    let spec = cfg.symbol_specs(1).into_iter().next().expect("a default symbol exists");
    let p = cfg.symbol(&spec, &frame, inputs)?;
    let pa = adjoint_exact(&p)?;
    let tests = grid_tests(cfg, &frame, inputs)?;
    let mut defects = Vec::new();
    for (i, u) in tests.iter().enumerate() {
        let v = &tests[(i + 1) % tests.len()];
        let l = quantize_apply(&p, u)?.inner(v);
        let r = u.inner(&quantize_apply(&pa, v)?);
        defects.push((l - r).norm() / (u.l2_norm() * v.l2_norm()));
    }
    let worst = defects.iter().copied().fold(0.0, f64::max);
    let tol = cfg.tolerance.unwrap_or(1e-8);
    let mut out = Outcome::new(json!({"defects": defects, "valid_irreps": pa.valid_count()}), Some(worst), certificate("duality", worst <= tol, Some(tol)));
    out.artifacts.push(("symbol", to_value(&SymbolRecord::from_symbol(&pa))?));
    Ok(out)
}

pub fn elliptic(cfg: &ExperimentConfig) -> Run {
    let frame = cfg.frame()?;
    let spec = cfg.symbol_specs(1).into_iter().next().expect("a default symbol exists");
    let p = cfg.holo_symbol(&spec)?;
    let report = ellipticity_check(&p, spec.order, &frame, &cfg.ygrid()?)?;
    let passed = report.elliptic;
    Ok(Outcome::new(to_value(&report)?, None, certificate("ellipticity", passed, None)))
}

/// (α, β) = (0, 0) and one difference with one derivative.
fn zero_and_unit(cfg: &ExperimentConfig) -> [(Vec<usize>, Vec<usize>); 2] {
    let (na, nb) = (delta_arity(&cfg.group), cfg.space_dim());
    let (mut a, mut b) = (vec![0; na], vec![0; nb]);
    a[0] = 1;
    b[0] = 1;
    [(vec![0; na], vec![0; nb]), (a, b)]
}

pub fn parametrix_table(cfg: &ExperimentConfig) -> Run {
    let frame = cfg.frame()?;
    let ygrid = cfg.ygrid()?;
    let spec = cfg.symbol_specs(1).into_iter().next().expect("a default symbol exists");
    let p = cfg.holo_symbol(&spec)?;
    let report = ellipticity_check(&p, spec.order, &frame, &ygrid)?;
    if !report.elliptic {
        let mut out = Outcome::new(to_value(&report)?, None, certificate("ellipticity", false, None));
        out.failure_code = 5;
        return Ok(out);
    }
    let q0 = default_q0(&p, &report)?;
    let orders = zero_and_unit(cfg);
    let mut built = Vec::new();
    for n in 1..=cfg.terms {
        let left = parametrix(&p, &q0, n, Side::Left, &frame, &ygrid)?;
        let right = parametrix(&p, &q0, n, Side::Right, &frame, &ygrid)?;
        built.push((n, left, right));
    }
    let [low, high] = match cfg.two_cutoff {
        Some(c) => c,
        None => {
            // the largest pair the residual samples support
            let mut certified = f64::INFINITY;
            for (_, left, right) in &built {
                for par in [left, right] {
                    for y in &ygrid.nodes {
                        let r = par.residual.sample(&frame, y)?;
                        for (a, _) in &orders {
                            certified = certified.min(delta_xi(&r, a)?.certified_bracket());
                        }
                    }
                }
            }
            if certified <= 1.0 {
                return Err(CliError::config(format!(
                    "residuals are certified only up to ⟨ξ⟩ = {certified}; raise the cutoff or lower the number of terms"
                )));
            }
            [0.5 * certified, certified]
        }
    };
    let mut csv = String::from("terms,side,alpha,beta,order,low,high,sup_low,sup_high,ratio\n");
    let mut rows = Vec::new();
    let mut passed = true;
    let mut agreement: f64 = 0.0;
    for (n, left, right) in &built {
        let n = *n;
        for (side, par) in [("left", left), ("right", right)] {
            for (a, b) in &orders {
                let t = par.residual_order(-(n as f64), a, b, low, high)?;
                passed &= t.stable();
                writeln!(
                    csv,
                    "{n},{side},{},{},{},{low},{high},{},{},{}",
                    join(a),
                    join(b),
                    t.order,
                    t.sup_low,
                    t.sup_high,
                    t.ratio()
                )
                .unwrap();
                rows.push(json!({"terms": n, "side": side, "test": t, "ratio": t.ratio()}));
            }
        }
        for y in &ygrid.nodes {
            let diff = left.q.sample(&frame, y)?.sub(&right.q.sample(&frame, y)?)?;
            agreement = agreement.max(diff.weighted_sup(-spec.order, f64::INFINITY));
        }
    }
    let value = json!({"exceptional_set": report.exceptional_set, "bound": report.bound, "rows": rows, "left_right": agreement});
    let mut out = Outcome::new(value, Some(agreement), certificate("residual-order", passed, Some(2.0)));
    out.tables.push(("parametrix", csv));
    Ok(out)
}

fn join(v: &[usize]) -> String {
    v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn asum(cfg: &ExperimentConfig) -> Run {
    let frame = cfg.frame()?;
    let ygrid = cfg.ygrid()?;
    let specs = cfg.asum_terms();
    let terms: Vec<HoloSymbol> = specs.iter().map(|s| cfg.holo_symbol(s)).collect::<Result<_, _>>()?;
    let sum = asymptotic_sum(&terms, cfg.epsilon, &frame, &ygrid)?;
    let bounds: Vec<f64> = (0..terms.len()).map(|j| 0.5f64.powi(j as i32 + 1)).collect();
    let mut passed = sum.tails.iter().zip(&bounds).all(|(t, b)| t < b);
    let [low, high] = cfg.two_cutoffs();
    let mut remainders = Vec::new();
    // the k-th remainder Σ − Σ_{j<k} p_j must have order d_k
    for k in 1..terms.len() {
        let partial: Vec<Symbol> = ygrid_sum(&terms[..k], &frame, &ygrid)?;
        let samples: Vec<(Vec<f64>, Symbol)> = ygrid
            .nodes
            .iter()
            .zip(partial)
            .map(|(y, s)| Ok((y.clone(), sum.symbol.sample(&frame, y)?.sub(&s)?)))
            .collect::<Result<_, CliError>>()?;
        let d = specs[k].order;
        let t = two_cutoff(&samples, d, &vec![0; delta_arity(&cfg.group)], &vec![0; cfg.space_dim()], low, high)?;
        passed &= t.stable();
        remainders.push(json!({"k": k, "order": d, "ratio": t.ratio(), "test": t}));
    }
    let value = json!({"cutoffs": sum.cutoffs, "tails": sum.tails, "bounds": bounds, "remainders": remainders});
    Ok(Outcome::new(value, None, certificate("tail-bounds", passed, None)))
}

fn ygrid_sum(terms: &[HoloSymbol], frame: &Arc<Frame>, ygrid: &YGrid) -> Result<Vec<Symbol>, CliError> {
    ygrid
        .nodes
        .iter()
        .map(|y| {
            let mut acc = terms[0].sample(frame, y)?;
            for t in &terms[1..] {
                acc = acc.add(&t.sample(frame, y)?)?;
            }
            Ok(acc)
        })
        .collect()
}

fn spectral_operator(cfg: &ExperimentConfig, dual: &[Irrep]) -> Result<SpectralOperator, CliError> {
    Ok(match cfg.operator {
        OperatorSpec::Laplacian => SpectralOperator::laplacian(dual),
        OperatorSpec::LaplacianParametrix => SpectralOperator::laplacian_parametrix(dual),
        OperatorSpec::Bessel { s } => SpectralOperator::bessel(dual, s),
        OperatorSpec::Poisson { t } => SpectralOperator::poisson(dual, t),
        OperatorSpec::Heat { t } => SpectralOperator::multiplier(dual, |l| C64::from((-t * l).exp()))?,
        OperatorSpec::Symbol => return Err(CliError::config("this command needs a spectral operator")),
    })
}

/// f applied to the diagonal entries of every block.
fn diagonal_map(op: &SpectralOperator, f: impl Fn(C64) -> C64) -> Result<SpectralOperator, CliError> {
    let blocks = op
        .dual
        .iter()
        .zip(&op.blocks)
        .map(|(xi, b)| {
            let mut out = vec![ZERO; b.len()];
            for i in 0..xi.dim {
                out[i * xi.dim + i] = f(b[i * xi.dim + i]);
            }
            out
        })
        .collect();
    Ok(SpectralOperator::new(op.dual.clone(), blocks)?)
}

/// Entrywise error against the oracle, relative once the entry exceeds 1.
fn contour_outcome(r: &ContourResult, oracle: &SpectralOperator, tol: f64) -> Run {
    let err = r
        .operator
        .blocks
        .iter()
        .flatten()
        .zip(oracle.blocks.iter().flatten())
        .map(|(a, b)| (a - b).norm() / b.norm().max(1.0))
        .fold(0.0, f64::max);
    let value = json!({"nodes": r.nodes, "step": r.step, "tail_bound": r.tail_bound, "error": err, "operator": r.operator});
    Ok(Outcome::new(value, Some(err), certificate("spectral-oracle", err <= tol, Some(tol))))
}

fn exponent(cfg: &ExperimentConfig) -> C64 {
    C64::new(cfg.exponent[0], cfg.exponent[1])
}

pub fn power(cfg: &ExperimentConfig) -> Run {
    let dual = enumerate_dual(&cfg.group, cfg.cutoff)?;
    let op = spectral_operator(cfg, &dual)?;
    let z = exponent(cfg);
    let k = cfg.contour_power.unwrap_or(z.re.floor().max(0.0) as u32 + 2);
    let r = complex_power_contour(&op, z, k, default_radius(&op)?, cfg.nodes)?;
    let oracle = diagonal_map(&op, |a| if a == ZERO { ZERO } else { (z * a.ln()).exp() })?;
    contour_outcome(&r, &oracle, cfg.tolerance.unwrap_or(1e-6))
}

pub fn semigroup(cfg: &ExperimentConfig) -> Run {
    let dual = enumerate_dual(&cfg.group, cfg.cutoff)?;
    let op = spectral_operator(cfg, &dual)?;
    let z = exponent(cfg);
    let r = exp_power_contour(&op, cfg.time, z, default_radius(&op)?, cfg.nodes)?;
    let t = cfg.time;
    let oracle = diagonal_map(&op, |a| if a == ZERO { C64::from(1.0) } else { (-t * (z * a.ln()).exp()).exp() })?;
    contour_outcome(&r, &oracle, cfg.tolerance.unwrap_or(1e-6))
}

pub fn poisson(cfg: &ExperimentConfig, inputs: &mut Inputs) -> Run {
    let dual = enumerate_dual(&cfg.group, cfg.cutoff)?;
    let spec = TubeSpec::new(&cfg.group, cfg.epsilon)?;
    let point = tube_point(cfg)?;
    let mut rows = Vec::new();
    let mut transforms = Vec::new();
    let mut worst: f64 = 0.0;
    for f in test_functions(cfg, &dual, cfg.cutoff, inputs)? {
        let u = poisson_transform(&f, &spec)?;
        let mut per_s = Vec::new();
        for &s in &cfg.sobolev {
            let d = intertwining_defect(&f, s, &spec)?;
            worst = worst.max(d);
            // HL² norms need the torus Jacobian; elsewhere they are reported as null
            let hh = match hh_norm(&u, s, &spec) {
                Ok(n) => Some(n),
                Err(grauert::Error::Unsupported(_)) => None,
                Err(e) => return Err(e.into()),
            };
            per_s.push(json!({"s": s, "sobolev": sobolev_norm(&f, s), "hh": hh, "intertwining": d}));
        }
        let at_point = match &point {
            Some(z) => Some(tube_evaluate(&u, z)?),
            None => None,
        };
        rows.push(json!({"norms": per_s, "value_at_point": at_point}));
        transforms.push(u);
    }
    let tol = cfg.tolerance.unwrap_or(4.0 * f64::EPSILON);
    let mut out = Outcome::new(json!({"functions": rows}), Some(worst), certificate("intertwining", worst <= tol, Some(tol)));
    out.artifacts.push(("transforms", to_value(&transforms)?));
    Ok(out)
}

pub fn diagram(cfg: &ExperimentConfig, inputs: &mut Inputs) -> Run {
    let frame = cfg.frame()?;
    let spec = TubeSpec::new(&cfg.group, cfg.epsilon)?;
    let tests = test_functions(cfg, &frame.dual, 0.5 * cfg.cutoff, inputs)?;
    let (defects, tol) = match cfg.operator {
        OperatorSpec::Symbol => {
            let s = cfg.symbol_specs(1).into_iter().next().expect("a default symbol exists");
            let p = cfg.holo_symbol(&s)?;
            let d: Vec<f64> = cfg
                .sobolev
                .iter()
                .map(|&s| diagram_defect(DiagramOperator::Symbol { symbol: &p, frame: &frame }, s, &spec, &frame, &tests))
                .collect::<Result<_, _>>()?;
            (d, cfg.tolerance.unwrap_or(1e-8))
        }
        _ => {
            let a = spectral_operator(cfg, &frame.dual)?;
            let d: Vec<f64> = cfg
                .sobolev
                .iter()
                .map(|&s| diagram_defect(DiagramOperator::Spectral(&a), s, &spec, &frame, &tests))
                .collect::<Result<_, _>>()?;
            (d, cfg.tolerance.unwrap_or(1e-10))
        }
    };
    let worst = defects.iter().copied().fold(0.0, f64::max);
    let rows: Vec<Value> = cfg.sobolev.iter().zip(&defects).map(|(s, d)| json!({"s": s, "defect": d})).collect();
    Ok(Outcome::new(json!({"defects": rows}), Some(worst), certificate("extension-diagram", worst <= tol, Some(tol))))
}

pub fn halfwave(cfg: &ExperimentConfig) -> Run {
    let spec = TubeSpec::new(&cfg.group, cfg.epsilon)?;
    let z = match tube_point(cfg)? {
        Some(z) => z,
        None => TubePoint::real(group_point(cfg, &vec![0.0; cfg.space_dim()])?),
    };
    let h = half_wave_kernel(&z, &spec, cfg.max_cutoff)?;
    let defect = h.ladder.last().map(|r| r.2);
    let mut out = Outcome::new(to_value(&h)?, defect, certificate("convergence", !h.divergent, Some(grauert::tube::LADDER_TOL)));
    out.failure_code = 4;
    Ok(out)
}
