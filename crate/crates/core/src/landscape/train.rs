use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::Scratch;
use super::{MultiBranchNet, TrainingSet};
use crate::error::{invalid, mismatch, Result};
use crate::rng;

/// Each loss reads the raw targets its own way: the τ-hinge uses their sign,
/// the multiclass hinge their argmax, the squared loss the values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Loss {
    TauHinge { tau: f64 },
    MulticlassHinge,
    Squared,
}

impl Default for Loss {
    fn default() -> Self {
        Loss::TauHinge { tau: 1.0 }
    }
}

fn label(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn argmax(t: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in t.iter().enumerate() {
        if *v > t[best] {
            best = j;
        }
    }
    best
}

impl Loss {
    pub fn check(&self, output: usize, target: usize) -> Result<()> {
        if output != target {
            return Err(mismatch(format!("network has {output} outputs, targets have {target}")));
        }
        match *self {
            Loss::TauHinge { tau } if !(tau > 0.0 && tau.is_finite()) => Err(invalid(format!("tau = {tau}"))),
            Loss::TauHinge { .. } if output != 1 => Err(invalid("the τ-hinge needs a scalar output")),
            Loss::MulticlassHinge if output < 2 => Err(invalid("the multiclass hinge needs two or more outputs")),
            _ => Ok(()),
        }
    }

    pub fn value(&self, f: &[f64], t: &[f64]) -> f64 {
        match *self {
            Loss::TauHinge { tau } => (1.0 - label(t[0]) * f[0] / tau).max(0.0),
            Loss::MulticlassHinge => {
                let c = argmax(t);
                let m = f.len() as f64;
                f.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, fj)| (1.0 - f[c] + fj).max(0.0)).sum::<f64>() / m
            }
            Loss::Squared => 0.5 * f.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        }
    }

    /// Writes `∂ℓ/∂f` into `g`. Kinks take the zero branch.
    pub fn grad(&self, f: &[f64], t: &[f64], g: &mut [f64]) {
        match *self {
            Loss::TauHinge { tau } => {
                let y = label(t[0]);
                g[0] = if 1.0 - y * f[0] / tau > 0.0 { -y / tau } else { 0.0 };
            }
            Loss::MulticlassHinge => {
                let c = argmax(t);
                let m = f.len() as f64;
                g.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..f.len() {
                    if j != c && 1.0 - f[c] + f[j] > 0.0 {
                        g[j] += 1.0 / m;
                        g[c] -= 1.0 / m;
                    }
                }
            }
            Loss::Squared => {
                for ((gj, a), b) in g.iter_mut().zip(f).zip(t) {
                    *gj = a - b;
                }
            }
        }
    }
}

/// Mean loss over the whole set.
pub fn full_loss(net: &MultiBranchNet, data: &TrainingSet, loss: Loss) -> Result<f64> {
    loss.check(net.arch().output, data.target_dim())?;
    if net.arch().input != data.input_dim() {
        return Err(mismatch(format!("network reads {} inputs, data has {}", net.arch().input, data.input_dim())));
    }
    let mut s = net.scratch();
    let mut total = 0.0;
    for k in 0..data.len() {
        net.forward_into(data.input(k), &mut s);
        total += loss.value(&s.out, data.target(k));
    }
    Ok(total / data.len() as f64)
}

/// Mean loss and its gradient over the samples `idx`, in [`FlatParams`](super::FlatParams) layout.
pub fn loss_and_grad(net: &MultiBranchNet, data: &TrainingSet, loss: Loss, idx: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.arch().param_count()];
    let mut s = net.scratch();
    let mut g = vec![0.0; net.arch().output];
    let value = accumulate(net, data, loss, idx, &mut s, &mut g, &mut grad);
    (value, grad)
}

fn accumulate(net: &MultiBranchNet, data: &TrainingSet, loss: Loss, idx: &[usize], s: &mut Scratch, g: &mut [f64], grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|v| *v = 0.0);
    let mut total = 0.0;
    for &k in idx {
        let x = data.input(k);
        net.forward_into(x, s);
        total += loss.value(&s.out, data.target(k));
        loss.grad(&s.out, data.target(k), g);
        if g.iter().any(|v| *v != 0.0) {
            net.backward_into(x, g, s, grad);
        }
    }
    let n = idx.len() as f64;
    grad.iter_mut().for_each(|v| *v /= n);
    total / n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub loss: Loss,
    pub lr: f64,
    pub batch: usize,
    pub iters: usize,
    pub trace_every: usize,
    /// Stop once a traced full-data loss is exactly zero.
    pub stop_at_zero: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { loss: Loss::default(), lr: 0.05, batch: 32, iters: 20_000, trace_every: 100, stop_at_zero: true }
    }
}

/// Losses above this count as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub net: MultiBranchNet,
    /// `(step, full-data loss)` every `trace_every` steps and at the end.
    pub trace: Vec<(usize, f64)>,
    pub final_loss: f64,
    pub steps: usize,
    pub diverged: bool,
}

/// Minibatch SGD over reshuffled epochs. `seed` drives the batch order only.
pub fn sgd_train(net: &MultiBranchNet, data: &TrainingSet, cfg: &SgdConfig, seed: u64) -> Result<TrainOutcome> {
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(invalid(format!("learning rate {} must be finite and non-negative", cfg.lr)));
    }
    if cfg.batch == 0 || cfg.trace_every == 0 {
        return Err(invalid("batch and trace_every must be positive"));
    }
    let mut net = net.clone();
    let start = full_loss(&net, data, cfg.loss)?;
    let mut r = rng::seeded(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut trace = vec![(0, start)];
    let mut scratch = net.scratch();
    let mut g = vec![0.0; net.arch().output];
    let mut grad = vec![0.0; net.arch().param_count()];
    let mut batch = Vec::with_capacity(cfg.batch);
    let mut step = 0;
    let mut diverged = !start.is_finite() || start > DIVERGENCE_LOSS;
    let mut done = diverged || (cfg.stop_at_zero && start == 0.0);
    while !done && step < cfg.iters {
        batch.clear();
        while batch.len() < cfg.batch.min(order.len()) {
            if cursor == order.len() {
                order.shuffle(&mut r);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        accumulate(&net, data, cfg.loss, &batch, &mut scratch, &mut g, &mut grad);
        net.axpy(-cfg.lr, &grad);
        step += 1;
        if step % cfg.trace_every == 0 || step == cfg.iters {
            let l = full_loss(&net, data, cfg.loss)?;
            trace.push((step, l));
            if !l.is_finite() || l > DIVERGENCE_LOSS || !net.is_finite() {
                diverged = true;
                done = true;
            } else if cfg.stop_at_zero && l == 0.0 {
                done = true;
            }
        }
    }
    let final_loss = if diverged { f64::INFINITY } else { trace.last().map(|t| t.1).unwrap_or(start) };
    Ok(TrainOutcome { net, trace, final_loss, steps: step, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{Architecture, Combiner};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_set(n: usize, d: usize, m: usize, seed: u64) -> TrainingSet {
        let mut r = rng::seeded(seed);
        let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
        let t: Vec<f64> = (0..n * m).map(|_| StandardNormal.sample(&mut r)).collect();
        TrainingSet::new(d, m, x, t).unwrap()
    }

    /// Central differences of the full-data loss, coordinate by coordinate.
    fn fd_grad(net: &MultiBranchNet, data: &TrainingSet, loss: Loss) -> Vec<f64> {
        let base = net.to_flat().values;
        let mut probe = net.clone();
        let h = 1e-6;
        (0..base.len())
            .map(|k| {
                let mut p = base.clone();
                p[k] = base[k] + h;
                probe.load(&p).unwrap();
                let up = full_loss(&probe, data, loss).unwrap();
                p[k] = base[k] - h;
                probe.load(&p).unwrap();
                let down = full_loss(&probe, data, loss).unwrap();
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        diff / scale.max(1e-12)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases = [
            (Architecture::one_hidden_layer(4, 5), Loss::TauHinge { tau: 1.0 }),
            (Architecture::one_hidden_layer(4, 5), Loss::TauHinge { tau: 3.0 }),
            (Architecture::one_hidden_layer(4, 5), Loss::Squared),
            (Architecture { input: 3, hidden: vec![4], output: 3, branches: 2, combiner: Combiner::Sum }, Loss::MulticlassHinge),
            (Architecture { input: 3, hidden: vec![3, 2], output: 2, branches: 3, combiner: Combiner::Mean }, Loss::Squared),
            (Architecture { input: 3, hidden: vec![3, 2], output: 2, branches: 3, combiner: Combiner::Mean }, Loss::MulticlassHinge),
            (Architecture { input: 3, hidden: vec![], output: 2, branches: 2, combiner: Combiner::Sum }, Loss::Squared),
        ];
        let mut r = rng::seeded(11);
        for (c, (arch, loss)) in cases.iter().enumerate() {
            let data = random_set(12, arch.input, arch.output, 100 + c as u64);
            for _ in 0..10 {
                let net = MultiBranchNet::init(arch.clone(), &mut r).unwrap();
                let all: Vec<usize> = (0..data.len()).collect();
                let (_, g) = loss_and_grad(&net, &data, *loss, &all);
                let fd = fd_grad(&net, &data, *loss);
                if fd.iter().all(|v| *v == 0.0) {
                    assert!(g.iter().all(|v| *v == 0.0));
                    continue;
                }
                let e = rel_err(&g, &fd);
                assert!(e <= 1e-5, "case {c}: relative error {e:e}");
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let arch = Architecture::one_hidden_layer(3, 4);
        let net = MultiBranchNet::init(arch, &mut rng::seeded(3)).unwrap();
        let data = random_set(40, 3, 1, 4);
        let cfg = SgdConfig { lr: 0.0, iters: 50, ..SgdConfig::default() };
        let out = sgd_train(&net, &data, &cfg, 9).unwrap();
        assert_eq!(out.net, net);
        assert_eq!(out.steps, 50);
    }

    #[test]
    fn full_batch_linear_step_is_gradient_descent_on_the_quadratic() {
        // No hidden layer: f(x) = Σᵢ Wᵢ x, so the loss is ½·mean‖Wx − t‖² in W = ΣWᵢ.
        let arch = Architecture { input: 3, hidden: vec![], output: 2, branches: 2, combiner: Combiner::Sum };
        let data = random_set(15, 3, 2, 5);
        let mut r = rng::seeded(6);
        for _ in 0..10 {
            let net = MultiBranchNet::init(arch.clone(), &mut r).unwrap();
            let lr = r.random_range(0.01..0.2);
            let w: Vec<f64> = (0..6).map(|k| net.branches()[0][0][k] + net.branches()[1][0][k]).collect();
            let mut expected = vec![0.0; 6];
            for s in 0..data.len() {
                let x = data.input(s);
                for o in 0..2 {
                    let f: f64 = (0..3).map(|c| w[o * 3 + c] * x[c]).sum();
                    let resid = f - data.target(s)[o];
                    for c in 0..3 {
                        expected[o * 3 + c] += resid * x[c] / data.len() as f64;
                    }
                }
            }
            let fd = fd_grad(&net, &data, Loss::Squared);
            for b in 0..2 {
                assert!(rel_err(&fd[b * 6..(b + 1) * 6], &expected) <= 1e-5);
            }
            let cfg = SgdConfig { loss: Loss::Squared, lr, batch: data.len(), iters: 1, stop_at_zero: false, ..SgdConfig::default() };
            let out = sgd_train(&net, &data, &cfg, 0).unwrap();
            let before = net.to_flat().values;
            let after = out.net.to_flat().values;
            for k in 0..before.len() {
                assert!((after[k] - (before[k] - lr * expected[k % 6])).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let arch = Architecture::one_hidden_layer(3, 6);
        let net = MultiBranchNet::init(arch, &mut rng::seeded(8)).unwrap();
        let data = random_set(64, 3, 1, 9);
        let cfg = SgdConfig { iters: 300, ..SgdConfig::default() };
        let a = sgd_train(&net, &data, &cfg, 21).unwrap();
        let b = sgd_train(&net, &data, &cfg, 21).unwrap();
        assert_eq!(a.net.to_flat().values, b.net.to_flat().values);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace[0].0, 0);
        assert!(a.trace.iter().skip(1).all(|(s, _)| s % 100 == 0));
    }

    #[test]
    fn divergence_is_flagged() {
        let arch = Architecture::one_hidden_layer(3, 6);
        let net = MultiBranchNet::init(arch, &mut rng::seeded(8)).unwrap();
        let mut data = random_set(64, 3, 1, 9);
        data.scale_targets(1e3);
        let cfg = SgdConfig { loss: Loss::Squared, lr: 10.0, iters: 2000, ..SgdConfig::default() };
        let out = sgd_train(&net, &data, &cfg, 1).unwrap();
        assert!(out.diverged);
        assert_eq!(out.final_loss, f64::INFINITY);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let net = MultiBranchNet::init(Architecture::one_hidden_layer(3, 2), &mut rng::seeded(1)).unwrap();
        let data = random_set(8, 3, 1, 2);
        assert!(sgd_train(&net, &data, &SgdConfig { lr: -1.0, ..SgdConfig::default() }, 0).is_err());
        assert!(full_loss(&net, &data, Loss::MulticlassHinge).is_err());
        assert!(full_loss(&net, &random_set(8, 2, 1, 2), Loss::Squared).is_err());
    }

    #[test]
    fn multiclass_hinge_by_hand() {
        let f = [2.0, 1.5, -1.0];
        let t = [1.0, 0.0, 0.0];
        // (1 − 2 + 1.5)₊ + (1 − 2 − 1)₊ over three classes.
        assert!((Loss::MulticlassHinge.value(&f, &t) - 0.5 / 3.0).abs() < 1e-15);
        let mut g = [0.0; 3];
        Loss::MulticlassHinge.grad(&f, &t, &mut g);
        assert_eq!(g, [-1.0 / 3.0, 1.0 / 3.0, 0.0]);
    }
}
