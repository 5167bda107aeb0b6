//! Lower convex envelopes of sampled functions over one- or two-dimensional
//! parameter boxes.

use super::lp;
use crate::error::{invalid, Error, Result};

/// Evaluator for the largest convex function below a set of samples.
#[derive(Clone, Debug)]
pub enum ConvexEnvelope {
    /// Lower hull vertices `(w, f)` sorted by `w`.
    OneDim { bounds: (f64, f64), hull: Vec<[f64; 2]> },
    /// Envelope values come from a 3-row linear program whose optimal basis
    /// is the supporting facet.
    TwoDim { bounds: [(f64, f64); 2], params: Vec<[f64; 2]>, values: Vec<f64> },
}

/// Builds the envelope of `samples` (parameter point, value) inside the box
/// `bounds`; the parameter dimension is `bounds.len()`, 1 or 2.
pub fn convex_envelope(samples: &[(Vec<f64>, f64)], bounds: &[(f64, f64)]) -> Result<ConvexEnvelope> {
    let dim = bounds.len();
    if !(dim == 1 || dim == 2) {
        return Err(Error::Unsupported(format!("envelopes over {dim}-dimensional parameters")));
    }
    if samples.is_empty() {
        return Err(invalid("envelope needs at least one sample"));
    }
    for &(lo, hi) in bounds {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(invalid(format!("bad box [{lo}, {hi}]")));
        }
    }
    for (w, f) in samples {
        if w.len() != dim {
            return Err(invalid(format!("sample has {} coordinates, box has {dim}", w.len())));
        }
        if !f.is_finite() {
            return Err(invalid("non-finite sample value"));
        }
        if w.iter().zip(bounds).any(|(x, &(lo, hi))| !(lo <= *x && *x <= hi)) {
            return Err(invalid(format!("sample {w:?} lies outside the box")));
        }
    }
    if dim == 1 {
        let mut pts: Vec<[f64; 2]> = samples.iter().map(|(w, f)| [w[0], *f]).collect();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup_by(|b, a| a[0] == b[0]);
        let mut hull: Vec<[f64; 2]> = Vec::new();
        for p in pts {
            while hull.len() >= 2 && super::orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        Ok(ConvexEnvelope::OneDim { bounds: bounds[0], hull })
    } else {
        Ok(ConvexEnvelope::TwoDim {
            bounds: [bounds[0], bounds[1]],
            params: samples.iter().map(|(w, _)| [w[0], w[1]]).collect(),
            values: samples.iter().map(|(_, f)| *f).collect(),
        })
    }
}

impl ConvexEnvelope {
    pub fn dim(&self) -> usize {
        match self {
            ConvexEnvelope::OneDim { .. } => 1,
            ConvexEnvelope::TwoDim { .. } => 2,
        }
    }

    pub fn evaluate(&self, q: &[f64]) -> Result<f64> {
        Ok(self.evaluate_with_support(q)?.0)
    }

    /// Envelope value at `q` and the sample indices (1-d: hull vertex indices)
    /// whose combination attains it.
    pub fn evaluate_with_support(&self, q: &[f64]) -> Result<(f64, Vec<usize>)> {
        if q.len() != self.dim() {
            return Err(invalid(format!("query has {} coordinates, envelope has {}", q.len(), self.dim())));
        }
        let outside = || Error::Domain(format!("{q:?} lies outside the sampled parameter region"));
        match self {
            ConvexEnvelope::OneDim { bounds, hull } => {
                let x = q[0];
                if !(bounds.0 <= x && x <= bounds.1) {
                    return Err(outside());
                }
                let first = hull[0][0];
                let last = hull[hull.len() - 1][0];
                if x < first || x > last {
                    return Err(outside());
                }
                let j = hull.partition_point(|p| p[0] < x);
                if hull[j][0] == x {
                    return Ok((hull[j][1], vec![j]));
                }
                let (a, b) = (hull[j - 1], hull[j]);
                let t = (x - a[0]) / (b[0] - a[0]);
                Ok((a[1] + t * (b[1] - a[1]), vec![j - 1, j]))
            }
            ConvexEnvelope::TwoDim { bounds, params, values } => {
                if q.iter().zip(bounds.iter()).any(|(x, &(lo, hi))| !(lo <= *x && *x <= hi)) {
                    return Err(outside());
                }
                let a = vec![
                    params.iter().map(|p| p[0]).collect::<Vec<_>>(),
                    params.iter().map(|p| p[1]).collect(),
                    vec![1.0; params.len()],
                ];
                let sol = lp::solve(&a, &[q[0], q[1], 1.0], values)?.ok_or_else(outside)?;
                let support = sol.basis.iter().copied().filter(|&j| sol.x[j] > 0.0).collect();
                Ok((sol.value, support))
            }
        }
    }
}
