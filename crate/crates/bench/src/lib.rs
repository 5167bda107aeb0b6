//! Fixed inputs shared by the benchmarks.

use dualgap_core::geometry::{PlanarSet, Point};
use dualgap_core::multibranch::{Activation, BranchSpec, Dataset, FeatureKind, Regularizer};
use dualgap_core::{rng, Matrix};
use rand::Rng;

pub fn uniform_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::seeded(seed);
    Matrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

pub fn cloud(n: usize, seed: u64) -> Vec<Point> {
    let mut r = rng::seeded(seed);
    (0..n).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect()
}

pub fn sets(count: usize, size: usize, seed: u64) -> Vec<PlanarSet> {
    (0..count).map(|k| PlanarSet::new(cloud(size, seed + k as u64)).expect("finite points")).collect()
}

/// Twenty labelled points in the plane, labels from a fixed quadratic rule.
pub fn dataset(seed: u64) -> Dataset {
    let mut r = rng::seeded(seed);
    let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).collect();
    let ys = xs.iter().map(|x| if x[0] * x[1] + 0.2 * x[0] > 0.0 { 1.0 } else { -1.0 }).collect();
    Dataset::empirical(xs, ys).expect("valid dataset")
}

pub fn relu_branch() -> BranchSpec {
    BranchSpec::uniform(
        FeatureKind::Unit { activation: Activation::Relu },
        Regularizer::SquaredNorm { scale: 1.0 },
        vec![(-2.0, 2.0); 2],
        7,
    )
    .expect("valid branch")
}
