//! Shapley–Folkman decomposition in the plane.
//!
//! A point of `conv(Y₁ + … + Y_I)` is first written as a combination of at
//! most three vertices of the summed hull, which spreads fractional weight
//! over many summands. Weight is then shifted along null directions of the
//! 2-row system `Σ λ_{i,k} x_{i,k} = y` (the vertex-solution argument) until
//! at most two summands keep more than one support point.

use serde::{Deserialize, Serialize};

use super::{hull_indices, minkowski_hull_walk, orient, sub, Point, PlanarSet};
use crate::error::{invalid, Error, Result};

/// Tolerance for accepting a target as inside the summed hull.
const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexifiedIndex {
    pub set: usize,
    /// `(point index in the set, weight)`; weights are positive and sum to 1.
    pub support: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SFDecomposition {
    pub target: Point,
    /// At most two summands use a proper convex combination.
    pub convexified: Vec<ConvexifiedIndex>,
    /// `(set, point index)` for every remaining summand.
    pub pure_points: Vec<(usize, usize)>,
}

impl SFDecomposition {
    pub fn convexified_indices(&self) -> Vec<usize> {
        self.convexified.iter().map(|c| c.set).collect()
    }

    /// `Σ pure points + Σ weighted support points`.
    pub fn reconstruct(&self, sets: &[PlanarSet]) -> Point {
        let mut p = [0.0, 0.0];
        for &(s, k) in &self.pure_points {
            let q = sets[s].points()[k];
            p[0] += q[0];
            p[1] += q[1];
        }
        for c in &self.convexified {
            for &(k, a) in &c.support {
                let q = sets[c.set].points()[k];
                p[0] += a * q[0];
                p[1] += a * q[1];
            }
        }
        p
    }
}

/// One summand's current convex combination: `(point index, weight)`.
type Support = Vec<(usize, f64)>;

pub fn sf_decompose(y: Point, sets: &[PlanarSet]) -> Result<SFDecomposition> {
    if sets.is_empty() {
        return Err(invalid("no sets to decompose over"));
    }
    if !(y[0].is_finite() && y[1].is_finite()) {
        return Err(invalid("target must be finite"));
    }
    let hull_idx: Vec<Vec<usize>> = sets.iter().map(|s| hull_indices(s.points())).collect();
    let hull_pts: Vec<Vec<Point>> = hull_idx
        .iter()
        .zip(sets)
        .map(|(idx, s)| idx.iter().map(|&k| s.points()[k]).collect())
        .collect();
    let walk = minkowski_hull_walk(&hull_pts);

    let (verts, weights) = locate(y, &walk)?;
    let mut supports: Vec<Support> = vec![Vec::new(); sets.len()];
    for (&v, &a) in verts.iter().zip(&weights) {
        if a <= 0.0 {
            continue;
        }
        for (s, &hv) in walk[v].1.iter().enumerate() {
            let k = hull_idx[s][hv];
            match supports[s].iter_mut().find(|e| e.0 == k) {
                Some(e) => e.1 += a,
                None => supports[s].push((k, a)),
            }
        }
    }
    reduce(&mut supports, sets);

    let mut convexified = Vec::new();
    let mut pure_points = Vec::new();
    for (s, sup) in supports.into_iter().enumerate() {
        if sup.len() == 1 {
            pure_points.push((s, sup[0].0));
        } else {
            let total: f64 = sup.iter().map(|e| e.1).sum();
            convexified.push(ConvexifiedIndex {
                set: s,
                support: sup.into_iter().map(|(k, a)| (k, a / total)).collect(),
            });
        }
    }
    Ok(SFDecomposition { target: y, convexified, pure_points })
}

/// Writes `y` as a convex combination of at most three walk vertices.
fn locate(y: Point, walk: &[(Point, Vec<usize>)]) -> Result<(Vec<usize>, Vec<f64>)> {
    let pts: Vec<Point> = walk.iter().map(|w| w.0).collect();
    let hull = super::hull_indices(&pts);
    let outside = |direction: Point, excess: f64| Error::OutsideHull { direction, excess };
    match hull.len() {
        1 => {
            let d = sub(y, pts[hull[0]]);
            let dist = d[0].hypot(d[1]);
            if dist > MEMBERSHIP_TOL {
                return Err(outside([d[0] / dist, d[1] / dist], dist));
            }
            Ok((vec![hull[0]], vec![1.0]))
        }
        2 => {
            let (a, b) = (pts[hull[0]], pts[hull[1]]);
            let ab = sub(b, a);
            let t = (super::dot(sub(y, a), ab) / super::dot(ab, ab)).clamp(0.0, 1.0);
            let c = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d = sub(y, c);
            let dist = d[0].hypot(d[1]);
            if dist > MEMBERSHIP_TOL {
                return Err(outside([d[0] / dist, d[1] / dist], dist));
            }
            Ok((vec![hull[0], hull[1]], vec![1.0 - t, t]))
        }
        k => {
            let poly = super::ConvexHull2D { vertices: hull.iter().map(|&i| pts[i]).collect() };
            let (excess, normal) = poly.excess(y);
            if excess > MEMBERSHIP_TOL {
                return Err(outside(normal, excess));
            }
            // Fan from vertex 0: pick the triangle with the least negative
            // barycentric coordinate, then clamp round-off. Slivers from
            // nearly collinear hull vertices are skipped.
            let span = poly.vertices.iter().flatten().map(|c| c.abs()).fold(0.0, f64::max).max(1.0);
            let mut best: Option<(f64, usize, [f64; 3])> = None;
            for j in 1..k - 1 {
                let (a, b, c) = (poly.vertices[0], poly.vertices[j], poly.vertices[j + 1]);
                let area = orient(a, b, c);
                if area.abs() <= 1e-14 * span * span {
                    continue;
                }
                let l = [orient(b, c, y) / area, orient(c, a, y) / area, orient(a, b, y) / area];
                let worst = l.iter().copied().fold(f64::INFINITY, f64::min);
                if best.as_ref().is_none_or(|bst| worst > bst.0) {
                    best = Some((worst, j, l));
                }
            }
            let Some((_, j, l)) = best else {
                return nearest_edge(y, &poly.vertices, &hull);
            };
            let mut l = l.map(|x| x.max(0.0));
            let s: f64 = l.iter().sum();
            l.iter_mut().for_each(|x| *x /= s);
            Ok((vec![hull[0], hull[j], hull[j + 1]], l.to_vec()))
        }
    }
}

/// Closest point of the polygon boundary, as a combination of one edge's ends.
fn nearest_edge(y: Point, v: &[Point], ids: &[usize]) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut best = (f64::INFINITY, 0, 0.0);
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let ab = sub(b, a);
        let len2 = super::dot(ab, ab);
        let t = if len2 > 0.0 { (super::dot(sub(y, a), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let d = sub(y, [a[0] + t * ab[0], a[1] + t * ab[1]]);
        let dist = d[0].hypot(d[1]);
        if dist < best.0 {
            best = (dist, i, t);
        }
    }
    let (dist, i, t) = best;
    if dist > MEMBERSHIP_TOL {
        return Err(Error::Numerical(format!("degenerate hull; target is {dist:e} from its boundary")));
    }
    Ok((vec![ids[i], ids[(i + 1) % v.len()]], vec![1.0 - t, t]))
}

/// Shifts weight along null directions of the two coordinate equations until
/// at most two summands carry more than one support point.
fn reduce(supports: &mut [Support], sets: &[PlanarSet]) {
    loop {
        // Extra support points: every entry past the first of a summand.
        let mut extras: Vec<(usize, usize)> = Vec::new();
        for (s, sup) in supports.iter().enumerate() {
            for e in 1..sup.len() {
                extras.push((s, e));
                if extras.len() == 3 {
                    break;
                }
            }
            if extras.len() == 3 {
                break;
            }
        }
        if extras.is_empty() {
            return;
        }
        let d: Vec<Point> = extras
            .iter()
            .map(|&(s, e)| {
                let pts = sets[s].points();
                sub(pts[supports[s][e].0], pts[supports[s][0].0])
            })
            .collect();
        // Three directions in the plane are always dependent; fewer only when
        // parallel or zero, in which case the support can shrink further.
        let c: Vec<f64> = match d.len() {
            3 => null_combination(d[0], d[1], d[2]).to_vec(),
            2 => match parallel_combination(d[0], d[1]) {
                Some(c) => c.to_vec(),
                None => return,
            },
            _ => {
                if d[0] != [0.0, 0.0] {
                    return;
                }
                vec![1.0]
            }
        };

        // Raising extra e of summand s by t·c moves the same mass off its base
        // point, so y is unchanged. Find the largest t keeping weights ≥ 0.
        let mut delta: Vec<(usize, usize, f64)> = Vec::new();
        for (q, &(s, e)) in extras.iter().enumerate() {
            delta.push((s, e, c[q]));
            delta.push((s, 0, -c[q]));
        }
        let mut merged: Vec<(usize, usize, f64)> = Vec::new();
        for (s, e, v) in delta {
            match merged.iter_mut().find(|m| m.0 == s && m.1 == e) {
                Some(m) => m.2 += v,
                None => merged.push((s, e, v)),
            }
        }
        let mut t = f64::INFINITY;
        let mut hit = (0, 0);
        for &(s, e, v) in &merged {
            if v < 0.0 {
                let lim = supports[s][e].1 / -v;
                if lim < t {
                    t = lim;
                    hit = (s, e);
                }
            }
        }
        if !t.is_finite() {
            // Only reachable if the combination vanished numerically; the
            // directions are then parallel and merging the first extra point
            // into its base moves y by at most round-off.
            let (s, e) = extras[0];
            let moved = supports[s][e].1;
            supports[s][0].1 += moved;
            supports[s].remove(e);
            continue;
        }
        for &(s, e, v) in &merged {
            supports[s][e].1 += t * v;
        }
        supports[hit.0][hit.1].1 = 0.0;
        for sup in supports.iter_mut() {
            sup.retain(|e| e.1 > 0.0);
        }
    }
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Non-zero `c` with `c₀d₀ + c₁d₁ + c₂d₂ = 0`.
fn null_combination(d0: Point, d1: Point, d2: Point) -> [f64; 3] {
    let c = [cross(d1, d2), cross(d2, d0), cross(d0, d1)];
    let scale = c.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let size = [d0, d1, d2].iter().map(|d| d[0].hypot(d[1])).fold(0.0, f64::max);
    if scale > 1e-12 * size * size {
        return c;
    }
    match parallel_combination(d0, d1) {
        Some([a, b]) => [a, b, 0.0],
        None => unreachable!("pairwise cross products vanish, so d₀ and d₁ are parallel"),
    }
}

/// Non-zero `c` with `c₀d₀ + c₁d₁ = 0` when the two are parallel or zero.
fn parallel_combination(d0: Point, d1: Point) -> Option<[f64; 2]> {
    let size = d0[0].hypot(d0[1]).max(d1[0].hypot(d1[1]));
    if size == 0.0 {
        return Some([1.0, 0.0]);
    }
    if cross(d0, d1).abs() > 1e-12 * size * size {
        return None;
    }
    if d0 == [0.0, 0.0] {
        return Some([1.0, 0.0]);
    }
    if d1 == [0.0, 0.0] {
        return Some([0.0, 1.0]);
    }
    let s = (d1[0] * d0[0] + d1[1] * d0[1]) / (d0[0] * d0[0] + d0[1] * d0[1]);
    Some([s, -1.0])
}
