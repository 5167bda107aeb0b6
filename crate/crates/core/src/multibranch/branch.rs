use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }
}

/// Built-in branch functions `fᵢ(w; x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureKind {
    /// `Σ_k w_k x_k` over the first `p` inputs.
    Affine,
    /// `σ(Σ_k w_k x_k)`.
    Unit { activation: Activation },
    /// `w₁ σ(w₀ x₀)`, a two-layer stack with one unit per layer.
    Stack2 { activation: Activation },
    /// `Σ_k sin(freq·w_k) x_k`.
    Sinusoid { freq: f64 },
}

/// Convex penalty `hᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regularizer {
    /// `scale·‖w‖²`.
    SquaredNorm { scale: f64 },
    /// `scale·‖w‖`.
    Norm { scale: f64 },
}

impl Regularizer {
    pub fn eval(&self, w: &[f64]) -> f64 {
        let sq: f64 = w.iter().map(|v| v * v).sum();
        match *self {
            Regularizer::SquaredNorm { scale } => scale * sq,
            Regularizer::Norm { scale } => scale * sq.sqrt(),
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            Regularizer::SquaredNorm { scale } | Regularizer::Norm { scale } => scale,
        }
    }

    fn scaled(&self, c: f64) -> Regularizer {
        match *self {
            Regularizer::SquaredNorm { scale } => Regularizer::SquaredNorm { scale: scale * c },
            Regularizer::Norm { scale } => Regularizer::Norm { scale: scale * c },
        }
    }
}

const CONVEXITY_CHECKS: usize = 256;

/// One branch: its function, penalty, parameter box and the grid sampling it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BranchDoc", into = "BranchDoc")]
pub struct BranchSpec {
    feature: FeatureKind,
    regularizer: Regularizer,
    bounds: Vec<(f64, f64)>,
    grid: Vec<Vec<f64>>,
}

/// File form of a branch: an explicit grid, or `per_axis` points per box side.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDoc {
    pub feature: FeatureKind,
    pub regularizer: Regularizer,
    pub bounds: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_axis: Option<usize>,
}

impl TryFrom<BranchDoc> for BranchSpec {
    type Error = crate::Error;
    fn try_from(d: BranchDoc) -> Result<Self> {
        match (d.grid, d.per_axis) {
            (Some(g), None) => BranchSpec::new(d.feature, d.regularizer, d.bounds, g),
            (None, Some(n)) => BranchSpec::uniform(d.feature, d.regularizer, d.bounds, n),
            _ => Err(invalid("a branch needs exactly one of `grid` or `per_axis`")),
        }
    }
}

impl From<BranchSpec> for BranchDoc {
    fn from(b: BranchSpec) -> Self {
        BranchDoc { feature: b.feature, regularizer: b.regularizer, bounds: b.bounds, grid: Some(b.grid), per_axis: None }
    }
}

impl BranchSpec {
    pub fn new(feature: FeatureKind, regularizer: Regularizer, bounds: Vec<(f64, f64)>, grid: Vec<Vec<f64>>) -> Result<Self> {
        let p = bounds.len();
        if !(p == 1 || p == 2) {
            return Err(invalid(format!("parameter dimension {p}; branches take 1 or 2 parameters")));
        }
        if matches!(feature, FeatureKind::Stack2 { .. }) && p != 2 {
            return Err(invalid("the two-layer stack has exactly two parameters"));
        }
        if let FeatureKind::Sinusoid { freq } = feature {
            if !freq.is_finite() {
                return Err(invalid("sinusoid frequency must be finite"));
            }
        }
        for &(lo, hi) in &bounds {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(invalid(format!("bad parameter box side [{lo}, {hi}]")));
            }
        }
        if grid.is_empty() {
            return Err(invalid("parameter grid is empty"));
        }
        for w in &grid {
            if w.len() != p {
                return Err(invalid(format!("grid point {w:?} does not have {p} coordinates")));
            }
            if w.iter().zip(&bounds).any(|(v, &(lo, hi))| !(lo <= *v && *v <= hi)) {
                return Err(invalid(format!("grid point {w:?} lies outside the box {bounds:?}")));
            }
        }
        if !regularizer.scale().is_finite() {
            return Err(invalid("regularizer scale must be finite"));
        }
        let b = BranchSpec { feature, regularizer, bounds, grid };
        b.check_convexity()?;
        Ok(b)
    }

    /// Tensor grid with `per_axis` evenly spaced points per box side.
    pub fn uniform(feature: FeatureKind, regularizer: Regularizer, bounds: Vec<(f64, f64)>, per_axis: usize) -> Result<Self> {
        if per_axis == 0 {
            return Err(invalid("per_axis must be positive"));
        }
        let axis = |&(lo, hi): &(f64, f64)| -> Vec<f64> {
            if per_axis == 1 {
                return vec![0.5 * (lo + hi)];
            }
            (0..per_axis).map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64).collect()
        };
        let axes: Vec<Vec<f64>> = bounds.iter().map(axis).collect();
        let grid = match axes.len() {
            1 => axes[0].iter().map(|&a| vec![a]).collect(),
            2 => axes[0].iter().flat_map(|&a| axes[1].iter().map(move |&b| vec![a, b])).collect(),
            _ => vec![],
        };
        BranchSpec::new(feature, regularizer, bounds, grid)
    }

    /// Random midpoint checks of `h` on the box; a failure means `h` is not convex.
    fn check_convexity(&self) -> Result<()> {
        let mut r = rng::seeded(0x6b0c);
        let draw = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            self.bounds.iter().map(|&(lo, hi)| if lo == hi { lo } else { r.random_range(lo..=hi) }).collect()
        };
        for _ in 0..CONVEXITY_CHECKS {
            let a = draw(&mut r);
            let b = draw(&mut r);
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let (ha, hb, hm) = (self.regularize(&a), self.regularize(&b), self.regularize(&m));
            if hm > 0.5 * (ha + hb) + 1e-12 * (1.0 + ha.abs() + hb.abs()) {
                return Err(invalid(format!("regularizer fails the midpoint test at {a:?}, {b:?}")));
            }
        }
        Ok(())
    }

    pub fn param_dim(&self) -> usize {
        self.bounds.len()
    }
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }
    pub fn feature_kind(&self) -> &FeatureKind {
        &self.feature
    }
    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    /// Same branch with `h` multiplied by `c > 0`.
    pub fn with_regularizer_scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("scale factor {c} must be positive")));
        }
        Ok(BranchSpec { regularizer: self.regularizer.scaled(c), ..self.clone() })
    }

    pub(crate) fn check_input_dim(&self, d: usize) -> Result<()> {
        let need = match self.feature {
            FeatureKind::Stack2 { .. } => 1,
            _ => self.param_dim(),
        };
        if d < need {
            return Err(invalid(format!("branch reads {need} inputs, samples have {d}")));
        }
        Ok(())
    }

    pub fn feature(&self, w: &[f64], x: &[f64]) -> f64 {
        match self.feature {
            FeatureKind::Affine => w.iter().zip(x).map(|(a, b)| a * b).sum(),
            FeatureKind::Unit { activation } => activation.apply(w.iter().zip(x).map(|(a, b)| a * b).sum()),
            FeatureKind::Stack2 { activation } => w[1] * activation.apply(w[0] * x[0]),
            FeatureKind::Sinusoid { freq } => w.iter().zip(x).map(|(a, b)| (freq * a).sin() * b).sum(),
        }
    }

    pub fn regularize(&self, w: &[f64]) -> f64 {
        self.regularizer.eval(w)
    }
}
