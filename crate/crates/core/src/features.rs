//! Feature maps φ(s) and the basis matrix Φ.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{read_file, RalpError, Result};

/// One column of the basis.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    Constant,
    /// `max(s[dim] − center, 0)`.
    PiecewiseLinear { dim: usize, center: f64 },
    /// `exp(−‖s − center‖² / 2σ²)`.
    Gaussian { center: Vec<f64>, sigma: f64 },
    /// `Π s[d]^exponents[d]`.
    Monomial { exponents: Vec<u32> },
    /// `(sᵀcenter + 1)^degree`.
    PolynomialKernel { center: Vec<f64>, degree: u32 },
}

impl FeatureSpec {
    fn validate(&self, index: usize) -> Result<()> {
        match self {
            FeatureSpec::Gaussian { sigma, center } => {
                if !(*sigma > 0.0) {
                    return Err(RalpError::invalid(format!("feature {index}: gaussian width must be positive")));
                }
                if center.is_empty() {
                    return Err(RalpError::invalid(format!("feature {index}: empty gaussian center")));
                }
            }
            FeatureSpec::PolynomialKernel { degree, center } => {
                if *degree < 1 {
                    return Err(RalpError::invalid(format!("feature {index}: kernel degree must be at least 1")));
                }
                if center.is_empty() {
                    return Err(RalpError::invalid(format!("feature {index}: empty kernel center")));
                }
            }
            FeatureSpec::Monomial { exponents } if exponents.is_empty() => {
                return Err(RalpError::invalid(format!("feature {index}: monomial without exponents")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Required state dimension, if the feature constrains it.
    fn required_dim(&self) -> Option<usize> {
        match self {
            FeatureSpec::Constant | FeatureSpec::PiecewiseLinear { .. } => None,
            FeatureSpec::Gaussian { center, .. } | FeatureSpec::PolynomialKernel { center, .. } => Some(center.len()),
            FeatureSpec::Monomial { exponents } => Some(exponents.len()),
        }
    }

    fn eval(&self, index: usize, state: &[f64]) -> Result<f64> {
        if let Some(d) = self.required_dim() {
            if d != state.len() {
                return Err(RalpError::dim(format!("state for feature {index}"), d, state.len()));
            }
        }
        Ok(match self {
            FeatureSpec::Constant => 1.0,
            FeatureSpec::PiecewiseLinear { dim, center } => {
                let x = state
                    .get(*dim)
                    .ok_or_else(|| RalpError::dim(format!("state for feature {index}"), dim + 1, state.len()))?;
                (x - center).max(0.0)
            }
            FeatureSpec::Gaussian { center, sigma } => {
                let d2: f64 = state.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            FeatureSpec::Monomial { exponents } => {
                state.iter().zip(exponents).map(|(x, &e)| x.powi(e as i32)).product()
            }
            FeatureSpec::PolynomialKernel { center, degree } => {
                let dot: f64 = state.iter().zip(center).map(|(a, b)| a * b).sum();
                (dot + 1.0).powi(*degree as i32)
            }
        })
    }

    fn lipschitz(&self, index: usize, metric: &StateMetric) -> Result<f64> {
        let dim_factor = |d: usize| match metric.norm {
            StateNorm::Euclidean => 1.0,
            StateNorm::Sup => (d as f64).sqrt(),
        };
        match self {
            FeatureSpec::Constant => Ok(0.0),
            FeatureSpec::PiecewiseLinear { .. } => Ok(1.0),
            // |d/dr exp(−r²/2σ²)| peaks at r = σ.
            FeatureSpec::Gaussian { center, sigma } => Ok(dim_factor(center.len()) * (-0.5f64).exp() / sigma),
            FeatureSpec::Monomial { exponents } => {
                let radius = metric.box_radius.ok_or_else(|| {
                    RalpError::invalid(format!("feature {index}: monomials need a bounded domain box"))
                })?;
                let degree: u32 = exponents.iter().sum();
                if degree == 0 {
                    return Ok(0.0);
                }
                Ok(degree as f64 * radius.powi(degree as i32 - 1))
            }
            FeatureSpec::PolynomialKernel { center, degree } => {
                let radius = metric.box_radius.ok_or_else(|| {
                    RalpError::invalid(format!("feature {index}: polynomial kernels need a bounded domain box"))
                })?;
                let l1: f64 = center.iter().map(|c| c.abs()).sum();
                let grad_norm = match metric.norm {
                    StateNorm::Sup => l1,
                    StateNorm::Euclidean => center.iter().map(|c| c * c).sum::<f64>().sqrt(),
                };
                Ok(*degree as f64 * (1.0 + radius * l1).powi(*degree as i32 - 1) * grad_norm)
            }
        }
    }
}

/// Norm used on the state space when measuring Lipschitz constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateNorm {
    Euclidean,
    Sup,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMetric {
    pub norm: StateNorm,
    /// Half-width of the box `[-R, R]^d` that contains every state, when known.
    pub box_radius: Option<f64>,
}

impl StateMetric {
    pub fn euclidean() -> Self {
        Self { norm: StateNorm::Euclidean, box_radius: None }
    }

    pub fn with_box(mut self, radius: f64) -> Self {
        self.box_radius = Some(radius);
        self
    }
}

/// An ordered list of features whose first entry is the constant feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBasis {
    specs: Vec<FeatureSpec>,
}

impl FeatureBasis {
    pub fn new(specs: Vec<FeatureSpec>) -> Result<Self> {
        match specs.first() {
            Some(FeatureSpec::Constant) => {}
            _ => return Err(RalpError::invalid("the first feature of a basis must be the constant feature")),
        }
        for (i, s) in specs.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(Self { specs })
    }

    /// Constant feature plus `max(s − c, 0)` for each center.
    pub fn piecewise_linear(centers: impl IntoIterator<Item = f64>) -> Self {
        let mut specs = vec![FeatureSpec::Constant];
        specs.extend(centers.into_iter().map(|center| FeatureSpec::PiecewiseLinear { dim: 0, center }));
        Self { specs }
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Regularization weights: 0 for the constant feature, 1 elsewhere.
    pub fn reg_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| if i == 0 { 0.0 } else { 1.0 }).collect()
    }

    pub fn evaluate(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.specs.iter().enumerate().map(|(i, s)| s.eval(i, state)).collect()
    }

    /// `φ(s)ᵀw`.
    pub fn value(&self, state: &[f64], weights: &[f64]) -> Result<f64> {
        if weights.len() != self.len() {
            return Err(RalpError::dim("weight vector", self.len(), weights.len()));
        }
        let mut total = 0.0;
        for (i, (s, w)) in self.specs.iter().zip(weights).enumerate() {
            if *w != 0.0 {
                total += w * s.eval(i, state)?;
            }
        }
        Ok(total)
    }

    /// Basis matrix with one row `φ(s)ᵀ` per state.
    pub fn materialize(&self, states: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        if states.is_empty() {
            return Err(RalpError::invalid("cannot materialize a basis on an empty state list"));
        }
        let rows: Vec<Vec<f64>> = states
            .par_iter()
            .enumerate()
            .map(|(k, s)| {
                self.evaluate(s).map_err(|e| RalpError::invalid(format!("row {k}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(states.len(), self.len(), |r, c| rows[r][c]))
    }

    /// `K_φ`: the largest per-column Lipschitz constant.
    pub fn lipschitz_constant(&self, metric: &StateMetric) -> Result<f64> {
        let mut k = 0.0f64;
        for (i, s) in self.specs.iter().enumerate() {
            k = k.max(s.lipschitz(i, metric)?);
        }
        Ok(k)
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        Self::parse_config(&read_file(path)?)
    }

    /// Parses the line-oriented basis config format (see the book chapter on
    /// file formats).
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut specs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("basis line {}", lineno + 1);
            let mut words = line.split_whitespace();
            let kind = words.next().unwrap_or_default();
            let mut params = std::collections::BTreeMap::new();
            for w in words {
                let (k, v) = w
                    .split_once('=')
                    .ok_or_else(|| RalpError::parse(&loc, format!("expected key=value, found {w:?}")))?;
                params.insert(k, v);
            }
            let get = |key: &str| {
                params
                    .get(key)
                    .copied()
                    .ok_or_else(|| RalpError::parse(&loc, format!("{kind} needs {key}=")))
            };
            let num = |key: &str| -> Result<f64> {
                get(key)?.parse().map_err(|_| RalpError::parse(&loc, format!("{key} is not a number")))
            };
            let dim = match params.get("dim") {
                Some(d) => d.parse().map_err(|_| RalpError::parse(&loc, "dim is not an index"))?,
                None => 0,
            };
            match kind {
                "constant" => specs.push(FeatureSpec::Constant),
                "piecewise_linear" => specs.push(FeatureSpec::PiecewiseLinear { dim, center: num("center")? }),
                "piecewise_linear_range" => {
                    let (from, to) = (num("from")?, num("to")?);
                    let step = if params.contains_key("step") { num("step")? } else { 1.0 };
                    if !(step > 0.0) {
                        return Err(RalpError::parse(&loc, "step must be positive"));
                    }
                    let mut c = from;
                    while c <= to + 1e-9 * step {
                        specs.push(FeatureSpec::PiecewiseLinear { dim, center: c });
                        c += step;
                    }
                }
                "gaussian" => specs.push(FeatureSpec::Gaussian {
                    center: parse_list(get("center")?, &loc)?,
                    sigma: num("sigma")?,
                }),
                "monomial" => specs.push(FeatureSpec::Monomial {
                    exponents: parse_list(get("exponents")?, &loc)?,
                }),
                "poly_kernel" => specs.push(FeatureSpec::PolynomialKernel {
                    center: parse_list(get("center")?, &loc)?,
                    degree: get("degree")?.parse().map_err(|_| RalpError::parse(&loc, "bad degree"))?,
                }),
                other => return Err(RalpError::parse(&loc, format!("unknown feature kind {other:?}"))),
            }
        }
        Self::new(specs)
    }

    /// Writes the basis in the config format; parsing the output yields an
    /// identical basis.
    pub fn to_config(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        for s in &self.specs {
            let _ = match s {
                FeatureSpec::Constant => writeln!(out, "constant"),
                FeatureSpec::PiecewiseLinear { dim, center } => {
                    writeln!(out, "piecewise_linear dim={dim} center={center:?}")
                }
                FeatureSpec::Gaussian { center, sigma } => {
                    writeln!(out, "gaussian center={} sigma={sigma:?}", join(center))
                }
                FeatureSpec::Monomial { exponents } => writeln!(
                    out,
                    "monomial exponents={}",
                    exponents.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
                ),
                FeatureSpec::PolynomialKernel { center, degree } => {
                    writeln!(out, "poly_kernel center={} degree={degree}", join(center))
                }
            };
        }
        out
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, loc: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| RalpError::parse(loc, format!("bad list entry {x:?}"))))
        .collect()
}
