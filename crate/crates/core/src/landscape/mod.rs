//! Loss-landscape experiments on multi-branch ReLU networks: teacher data,
//! SGD with hand-written backpropagation, 2-d plane projections of the loss
//! surface, a midpoint convexity-violation score, and the hitting-rate study.

mod net;
mod plane;
mod train;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::rng;

pub use net::{Architecture, Combiner, FlatParams, MultiBranchNet};
pub use plane::{convexity_violation_metric, plane_projection_grid, PlaneGrid, VIOLATION_PAIRS, VIOLATION_TOL};
pub use train::{full_loss, loss_and_grad, sgd_train, Loss, SgdConfig, TrainOutcome, DIVERGENCE_LOSS};

/// Inputs and raw targets, both row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    dim: usize,
    target_dim: usize,
    x: Vec<f64>,
    t: Vec<f64>,
}

impl TrainingSet {
    pub fn new(dim: usize, target_dim: usize, x: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if dim == 0 || target_dim == 0 || x.is_empty() {
            return Err(invalid("training set needs samples and positive dimensions"));
        }
        if x.len() % dim != 0 || t.len() != x.len() / dim * target_dim {
            return Err(mismatch(format!("{} input values and {} targets for dims {dim}, {target_dim}", x.len(), t.len())));
        }
        if x.iter().chain(&t).any(|v| !v.is_finite()) {
            return Err(invalid("training set has a non-finite entry"));
        }
        Ok(TrainingSet { dim, target_dim, x, t })
    }

    pub fn len(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.x[k * self.dim..(k + 1) * self.dim]
    }

    pub fn target(&self, k: usize) -> &[f64] {
        &self.t[k * self.target_dim..(k + 1) * self.target_dim]
    }

    pub fn scale_targets(&mut self, c: f64) {
        self.t.iter_mut().for_each(|v| *v *= c);
    }

    /// CSV with columns `x0..x{d-1},t0..t{m-1}`.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<String> =
            (0..self.dim).map(|j| format!("x{j}")).chain((0..self.target_dim).map(|j| format!("t{j}"))).collect();
        out.write_record(&header)?;
        for k in 0..self.len() {
            out.write_record(self.input(k).iter().chain(self.target(k)).map(|v| format!("{v:?}")))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherTask {
    pub data: TrainingSet,
    pub teacher: MultiBranchNet,
}

/// `n` standard-normal inputs in `ℝᵈ` labelled by a frozen one-hidden-layer
/// ReLU teacher with `hidden` units. First-layer rows are `N(0, I/d)`, output
/// weights alternate `+1, −1` so both label signs occur. The stored targets
/// are the teacher's outputs; the hinge losses read their sign.
pub fn teacher_synthetic_data(n: usize, d: usize, hidden: usize, seed: u64) -> Result<TeacherTask> {
    if n == 0 || d == 0 || hidden == 0 {
        return Err(invalid("teacher data needs n, d and hidden all positive"));
    }
    let mut r = rng::stream(seed, 0);
    let scale = (1.0 / d as f64).sqrt();
    let branches = (0..hidden)
        .map(|i| {
            let w1: Vec<f64> = (0..d).map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                scale * z
            }).collect();
            let w2 = if i % 2 == 0 { 1.0 } else { -1.0 };
            vec![w1, vec![w2]]
        })
        .collect();
    let teacher = MultiBranchNet::from_branches(Architecture::one_hidden_layer(d, hidden), branches)?;
    let mut r = rng::stream(seed, 1);
    let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
    let t: Vec<f64> = x.chunks(d).map(|xi| teacher.forward(xi)[0]).collect();
    Ok(TeacherTask { data: TrainingSet::new(d, 1, x, t)?, teacher })
}

/// Seed for run `index` of a sweep keyed by `key`.
fn run_seed(master: u64, key: u64, index: u64) -> rand_chacha::ChaCha8Rng {
    rng::stream(master, (key << 32) | index)
}

/// Trains a freshly initialized network. Initialization and batch order both
/// come from `(master, key, index)`.
pub fn train_from_seed(arch: &Architecture, data: &TrainingSet, cfg: &SgdConfig, master: u64, key: u64, index: u64) -> Result<TrainOutcome> {
    let mut r = run_seed(master, key, index);
    let net = MultiBranchNet::init(arch.clone(), &mut r)?;
    let order_seed: u64 = rand::Rng::random(&mut r);
    sgd_train(&net, data, cfg, order_seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitRow {
    pub width: usize,
    pub hits: usize,
    pub seeds: usize,
}

impl HitRow {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.seeds as f64
    }
}

/// For each width, trains one-hidden-layer students from `seeds`
/// initializations and counts those whose final loss is at most `tol`. The
/// global minimum on teacher data is zero.
pub fn hitting_rate_experiment(data: &TrainingSet, widths: &[usize], seeds: usize, tol: f64, cfg: &SgdConfig, master: u64) -> Result<Vec<HitRow>> {
    if seeds == 0 {
        return Err(invalid("seeds must be positive"));
    }
    if widths.is_empty() || widths.contains(&0) {
        return Err(invalid("widths must be a non-empty list of positive integers"));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(invalid(format!("tolerance {tol} must be non-negative")));
    }
    let jobs: Vec<(usize, usize)> = widths.iter().flat_map(|&w| (0..seeds).map(move |s| (w, s))).collect();
    let hits: Vec<bool> = jobs
        .par_iter()
        .map(|&(w, s)| {
            let arch = Architecture::one_hidden_layer(data.input_dim(), w);
            train_from_seed(&arch, data, cfg, master, w as u64, s as u64).map(|o| o.final_loss <= tol)
        })
        .collect::<Result<_>>()?;
    Ok(widths
        .iter()
        .enumerate()
        .map(|(k, &width)| HitRow { width, hits: hits[k * seeds..(k + 1) * seeds].iter().filter(|h| **h).count(), seeds })
        .collect())
}

pub fn write_hit_csv(rows: &[HitRow], w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["width", "hits", "seeds"])?;
    for r in rows {
        out.write_record([r.width.to_string(), r.hits.to_string(), r.seeds.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub branches: usize,
    pub anchor_losses: [f64; 3],
    pub grid: PlaneGrid,
    pub violation: f64,
}

/// Trains three students from the given seed indices and projects the
/// full-data loss onto the plane through their solutions.
pub fn landscape_experiment(data: &TrainingSet, arch: &Architecture, seeds: [u64; 3], cfg: &SgdConfig, resolution: usize, master: u64) -> Result<LandscapeReport> {
    let key = arch.branches as u64;
    let runs: Vec<TrainOutcome> =
        seeds.par_iter().map(|&s| train_from_seed(arch, data, cfg, master, key, s)).collect::<Result<_>>()?;
    let flats: Vec<FlatParams> = runs.iter().map(|o| o.net.to_flat()).collect();
    let loss = cfg.loss;
    let eval = |p: &[f64]| -> f64 {
        let mut net = runs[0].net.clone();
        net.load(p).expect("layout fixed by the anchors");
        full_loss(&net, data, loss).expect("shapes checked by training")
    };
    let grid = plane_projection_grid(&flats[0], &flats[1], &flats[2], eval, resolution)?;
    let violation = convexity_violation_metric(&grid.losses)?;
    Ok(LandscapeReport { branches: arch.branches, anchor_losses: [runs[0].final_loss, runs[1].final_loss, runs[2].final_loss], grid, violation })
}
