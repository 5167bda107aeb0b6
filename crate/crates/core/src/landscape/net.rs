use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    Sum,
    Mean,
}

/// Shape of a multi-branch network: `branches` copies of the MLP
/// `input → hidden[0] → … → output`, ReLU after every hidden layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub branches: usize,
    pub combiner: Combiner,
}

impl Architecture {
    /// `f(x) = Σᵢ wᵢ₂ [wᵢ₁ x]₊`: one hidden unit per branch, summed.
    pub fn one_hidden_layer(input: usize, units: usize) -> Self {
        Architecture { input, hidden: vec![1], output: 1, branches: units, combiner: Combiner::Sum }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.branches == 0 {
            return Err(invalid(format!("architecture {self:?} has an empty dimension")));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden layers must have at least one unit"));
        }
        Ok(())
    }

    /// `(rows, cols)` of each weight matrix in one branch.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input];
        widths.extend(&self.hidden);
        widths.push(self.output);
        widths.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn branch_len(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c).sum()
    }

    pub fn param_count(&self) -> usize {
        self.branch_len() * self.branches
    }

    fn branch_scale(&self) -> f64 {
        match self.combiner {
            Combiner::Sum => 1.0,
            Combiner::Mean => 1.0 / self.branches as f64,
        }
    }
}

/// All weights as one vector. Branch-major, then layer, then row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatParams {
    pub arch: Architecture,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiBranchNet {
    arch: Architecture,
    /// `branches[i][l]` is layer `l` of branch `i`, row-major.
    branches: Vec<Vec<Vec<f64>>>,
}

/// Per-sample buffers for forward and backward passes.
pub(crate) struct Scratch {
    /// Activations per branch: input excluded, hidden layers after ReLU.
    acts: Vec<Vec<Vec<f64>>>,
    delta: Vec<f64>,
    next: Vec<f64>,
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    pub out: Vec<f64>,
}

impl MultiBranchNet {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let branch: Vec<Vec<f64>> = arch.layer_shapes().iter().map(|&(r, c)| vec![0.0; r * c]).collect();
        Ok(MultiBranchNet { branches: vec![branch; arch.branches], arch })
    }

    /// Entries i.i.d. `N(0, 1/fan_in)`. Under the sum combiner the last
    /// layer's fan-in counts every branch feeding the output.
    pub fn init(arch: Architecture, rng: &mut impl Rng) -> Result<Self> {
        let mut net = MultiBranchNet::zeros(arch)?;
        let shapes = net.arch.layer_shapes();
        let last = shapes.len() - 1;
        for branch in &mut net.branches {
            for (l, layer) in branch.iter_mut().enumerate() {
                let mut fan_in = shapes[l].1;
                if l == last && net.arch.combiner == Combiner::Sum {
                    fan_in *= net.arch.branches;
                }
                let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive scale");
                layer.iter_mut().for_each(|w| *w = normal.sample(rng));
            }
        }
        Ok(net)
    }

    pub fn from_branches(arch: Architecture, branches: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        if branches.len() != arch.branches {
            return Err(mismatch(format!("{} branches, architecture has {}", branches.len(), arch.branches)));
        }
        for b in &branches {
            if b.len() != shapes.len() || b.iter().zip(&shapes).any(|(w, (r, c))| w.len() != r * c) {
                return Err(mismatch("branch layers do not match the architecture"));
            }
        }
        Ok(MultiBranchNet { arch, branches })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn branches(&self) -> &[Vec<Vec<f64>>] {
        &self.branches
    }

    pub fn to_flat(&self) -> FlatParams {
        let values = self.branches.iter().flatten().flatten().copied().collect();
        FlatParams { arch: self.arch.clone(), values }
    }

    pub fn from_flat(flat: &FlatParams) -> Result<Self> {
        let mut net = MultiBranchNet::zeros(flat.arch.clone())?;
        net.load(&flat.values)?;
        Ok(net)
    }

    /// Overwrites the weights from a vector in [`FlatParams`] layout.
    pub fn load(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.arch.param_count() {
            return Err(mismatch(format!("{} values for {} parameters", values.len(), self.arch.param_count())));
        }
        let mut k = 0;
        for w in self.branches.iter_mut().flatten() {
            let len = w.len();
            w.copy_from_slice(&values[k..k + len]);
            k += len;
        }
        Ok(())
    }

    /// `θ ← θ + a·d` for `d` in flat layout.
    pub(crate) fn axpy(&mut self, a: f64, d: &[f64]) {
        for (w, dk) in self.branches.iter_mut().flatten().flatten().zip(d) {
            *w += a * dk;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.branches.iter().flatten().flatten().all(|w| w.is_finite())
    }

    pub(crate) fn scratch(&self) -> Scratch {
        let shapes = self.arch.layer_shapes();
        let acts = (0..self.arch.branches).map(|_| shapes.iter().map(|&(r, _)| vec![0.0; r]).collect()).collect();
        let widest = shapes.iter().map(|&(r, c)| r.max(c)).max().unwrap_or(1);
        let offsets = shapes
            .iter()
            .scan(0, |k, &(r, c)| {
                let o = *k;
                *k += r * c;
                Some(o)
            })
            .collect();
        Scratch { acts, delta: vec![0.0; widest], next: vec![0.0; widest], shapes, offsets, out: vec![0.0; self.arch.output] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.scratch();
        self.forward_into(x, &mut s);
        s.out
    }

    /// Fills `s.out` and the cached activations.
    pub(crate) fn forward_into(&self, x: &[f64], s: &mut Scratch) {
        let shapes = &s.shapes;
        let last = shapes.len() - 1;
        let scale = self.arch.branch_scale();
        s.out.iter_mut().for_each(|v| *v = 0.0);
        for (branch, acts) in self.branches.iter().zip(&mut s.acts) {
            for (l, (w, &(rows, cols))) in branch.iter().zip(shapes).enumerate() {
                let (before, after) = acts.split_at_mut(l);
                let input: &[f64] = if l == 0 { x } else { &before[l - 1] };
                let z = &mut after[0];
                for r in 0..rows {
                    let row = &w[r * cols..(r + 1) * cols];
                    let v: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum();
                    z[r] = if l == last { v } else { v.max(0.0) };
                }
            }
            for (o, v) in s.out.iter_mut().zip(&acts[last]) {
                *o += scale * v;
            }
        }
    }

    /// Adds `∂L/∂θ` to `grad` given `g = ∂L/∂f` at the sample last passed to
    /// [`forward_into`](Self::forward_into). ReLU has subgradient 0 at 0.
    pub(crate) fn backward_into(&self, x: &[f64], g: &[f64], s: &mut Scratch, grad: &mut [f64]) {
        let (shapes, offsets) = (&s.shapes, &s.offsets);
        let last = shapes.len() - 1;
        let scale = self.arch.branch_scale();
        let blen = self.arch.branch_len();
        for (i, branch) in self.branches.iter().enumerate() {
            let acts = &s.acts[i];
            let gb = &mut grad[i * blen..(i + 1) * blen];
            let delta = &mut s.delta;
            for (d, gv) in delta.iter_mut().zip(g) {
                *d = scale * gv;
            }
            for l in (0..=last).rev() {
                let (rows, cols) = shapes[l];
                let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
                let gw = &mut gb[offsets[l]..offsets[l] + rows * cols];
                for r in 0..rows {
                    let d = delta[r];
                    if d != 0.0 {
                        for (gk, a) in gw[r * cols..(r + 1) * cols].iter_mut().zip(input) {
                            *gk += d * a;
                        }
                    }
                }
                if l == 0 {
                    break;
                }
                let w = &branch[l];
                let next = &mut s.next;
                next[..cols].iter_mut().for_each(|v| *v = 0.0);
                for r in 0..rows {
                    let d = delta[r];
                    if d != 0.0 {
                        for (nk, wk) in next[..cols].iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                            *nk += d * wk;
                        }
                    }
                }
                for (c, a) in acts[l - 1].iter().enumerate() {
                    delta[c] = if *a > 0.0 { next[c] } else { 0.0 };
                }
            }
        }
    }
}
