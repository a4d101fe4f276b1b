use std::path::{Path, PathBuf};
use std::sync::Arc;

use grauert::expr::Expr;
use grauert::frame::Frame;
use grauert::group::GroupSpec;
use grauert::holo::{HoloSymbol, YGrid};
use grauert::symbol::{Symbol, SymbolRecord};
use serde::{Deserialize, Serialize};

use crate::record::{CliError, Inputs};

/// A symbol given either as an expression or as a saved symbol record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<PathBuf>,
    pub order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Laplacian,
    LaplacianParametrix,
    Bessel { s: f64 },
    Poisson { t: f64 },
    Heat { t: f64 },
    /// The first entry of `symbols`, extended to the tube.
    Symbol,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: GroupSpec,
    /// Dual cutoff on ⟨ξ⟩.
    pub cutoff: f64,
    /// Grid resolution; derived from the cutoff when absent.
    pub resolution: Option<usize>,
    pub epsilon: f64,
    /// Points per axis of the Y mesh; 1 samples Y = 0 only.
    pub y_resolution: usize,
    pub symbols: Vec<SymbolSpec>,
    pub seeds: Vec<u64>,
    pub tolerance: Option<f64>,
    /// Parametrix terms.
    pub terms: usize,
    /// Low and high cutoffs of the two-cutoff order test. When absent,
    /// parametrix picks the largest certified pair and asum uses
    /// cutoff/2.4 and cutoff/1.2.
    pub two_cutoff: Option<[f64; 2]>,
    pub sobolev: Vec<f64>,
    pub operator: OperatorSpec,
    /// Complex exponent z as [re, im].
    pub exponent: [f64; 2],
    /// Resolvent power of the contour integral; ⌊Re z⌋ + 2 when absent.
    pub contour_power: Option<u32>,
    pub time: f64,
    /// Quadrature nodes on the contour.
    pub nodes: usize,
    pub point: Option<PointSpec>,
    pub max_cutoff: u64,
    /// Fourier coefficients to use instead of a seeded test function.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            group: GroupSpec::torus(1),
            cutoff: 32.0,
            resolution: None,
            epsilon: 0.5,
            y_resolution: 5,
            symbols: Vec::new(),
            seeds: vec![0, 1, 2],
            tolerance: None,
            terms: 3,
            two_cutoff: None,
            sobolev: vec![-1.0, 0.0, 2.0],
            operator: OperatorSpec::Laplacian,
            exponent: [0.5, 0.0],
            contour_power: None,
            time: 0.3,
            nodes: 400,
            point: None,
            max_cutoff: 1 << 20,
            input: None,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path, inputs: &mut Inputs) -> Result<Self, CliError> {
        let bytes = inputs.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.group.validate().map_err(|e| CliError::config(e.to_string()))?;
        let positive = [("cutoff", self.cutoff), ("epsilon", self.epsilon), ("time", self.time)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::config(format!("{name} must be positive and finite")));
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("at least one seed is required"));
        }
        if self.terms == 0 || self.nodes < 3 || self.y_resolution == 0 {
            return Err(CliError::config("terms, nodes and y_resolution must be positive"));
        }
        if let Some([lo, hi]) = self.two_cutoff {
            if !(lo > 0.0 && hi > lo) {
                return Err(CliError::config("two_cutoff must satisfy 0 < low < high"));
            }
        }
        Ok(())
    }

    pub fn space_dim(&self) -> usize {
        match self.group {
            GroupSpec::Torus { n } => n,
            GroupSpec::Su2 => 3,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution.unwrap_or(match self.group {
            GroupSpec::Torus { .. } => (4 * self.cutoff.ceil() as usize).next_power_of_two(),
            GroupSpec::Su2 => 2 * self.cutoff.ceil() as usize + 2,
        })
    }

    pub fn frame(&self) -> Result<Arc<Frame>, CliError> {
        Frame::new(&self.group, self.cutoff, self.resolution()).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn ygrid(&self) -> Result<YGrid, CliError> {
        if self.y_resolution == 1 {
            return Ok(YGrid::origin(self.space_dim()));
        }
        YGrid::mesh(self.space_dim(), self.epsilon, self.y_resolution).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn two_cutoffs(&self) -> [f64; 2] {
        self.two_cutoff.unwrap_or([self.cutoff / 2.4, self.cutoff / 1.2])
    }

    /// The configured symbols, or defaults for the group when none are given.
    pub fn symbol_specs(&self, count: usize) -> Vec<SymbolSpec> {
        if !self.symbols.is_empty() {
            return self.symbols.clone();
        }
        let defaults = match self.group {
            GroupSpec::Torus { n } => vec![(example_symbol(n), 2.0), (decaying_exponential(n, 1.0), -1.0)],
            GroupSpec::Su2 => vec![
                (Expr::sum(vec![Expr::Casimir, Expr::real(1.0)]), 2.0),
                (Expr::Bracket { power: -1.0 }, -1.0),
            ],
        };
        defaults.into_iter().take(count).map(|(e, order)| SymbolSpec { expr: Some(e), record: None, order }).collect()
    }

    pub fn holo_symbol(&self, spec: &SymbolSpec) -> Result<HoloSymbol, CliError> {
        let expr = spec.expr.clone().ok_or_else(|| CliError::config("this command needs symbols given as expressions"))?;
        HoloSymbol::from_expr(expr, self.epsilon, spec.order).map_err(|e| CliError::config(e.to_string()))
    }

    /// The symbol on the group itself (Y = 0).
    pub fn symbol(&self, spec: &SymbolSpec, frame: &Arc<Frame>, inputs: &mut Inputs) -> Result<Symbol, CliError> {
        match (&spec.expr, &spec.record) {
            (Some(_), None) => {
                let p = self.holo_symbol(spec)?;
                Ok(p.sample(frame, &vec![0.0; self.space_dim()])?)
            }
            (None, Some(path)) => {
                let bytes = inputs.read(path)?;
                let rec: SymbolRecord =
                    serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                let p = rec.to_symbol().map_err(|e| CliError::config(e.to_string()))?;
                if !p.frame.same_layout(frame) {
                    return Err(CliError::config(format!("{}: symbol record was saved on a different frame", path.display())));
                }
                Ok(p)
            }
            _ => Err(CliError::config("a symbol needs exactly one of `expr` and `record`")),
        }
    }

    /// Default asymptotic-sum terms p_j = e^{iz₁}⟨ξ⟩^{−j}, j ≤ 4.
    pub fn asum_terms(&self) -> Vec<SymbolSpec> {
        if !self.symbols.is_empty() {
            return self.symbols.clone();
        }
        (0..=4)
            .map(|j| {
                let power = -(j as f64);
                let expr = match self.group {
                    GroupSpec::Torus { n } => decaying_exponential(n, power),
                    GroupSpec::Su2 => Expr::Bracket { power },
                };
                SymbolSpec { expr: Some(expr), record: None, order: power }
            })
            .collect()
    }
}

/// |k|² + 0.1 Σ_j e^{iz_j} k_j + 1.
pub fn example_symbol(n: usize) -> Expr {
    let mut terms = vec![Expr::Casimir, Expr::real(1.0)];
    for j in 0..n {
        let mut m = vec![0; n];
        m[j] = 1;
        let mut powers = vec![0; n];
        powers[j] = 1;
        terms.push(Expr::product(vec![Expr::real(0.1), Expr::coord_exp(m), Expr::DualMonomial { powers }]));
    }
    Expr::sum(terms)
}

fn decaying_exponential(n: usize, power: f64) -> Expr {
    let mut m = vec![0; n];
    m[0] = 1;
    Expr::product(vec![Expr::coord_exp(m), Expr::bracket(power)])
}
