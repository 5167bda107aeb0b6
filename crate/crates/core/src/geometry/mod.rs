//! Finite planar point sets, their convex hulls and Minkowski sums.
//!
//! Points are `(r, w)` pairs: constraint value first, objective value second.

mod envelope;
mod lp;
mod shapley_folkman;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use envelope::{convex_envelope, ConvexEnvelope};
pub use shapley_folkman::{sf_decompose, ConvexifiedIndex, SFDecomposition};

pub type Point = [f64; 2];

/// Coordinates closer than this are merged when building hulls.
pub const DEDUP_TOL: f64 = 1e-12;

/// Default ceiling on the number of points a Minkowski enumeration may create.
pub const MINKOWSKI_CAP: usize = 2_000_000;

/// `(a − o) × (b − o)` with the two products combined by fused multiply-add,
/// which removes the cancellation error of the final subtraction.
#[inline]
pub fn orient(o: Point, a: Point, b: Point) -> f64 {
    let (ax, ay) = (a[0] - o[0], a[1] - o[1]);
    let (bx, by) = (b[0] - o[0], b[1] - o[1]);
    let w = ay * bx;
    let e = (-ay).mul_add(bx, w);
    let f = ax.mul_add(by, -w);
    f + e
}

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarSet {
    points: Vec<Point>,
    branch: Option<usize>,
}

impl PlanarSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("planar set must be non-empty"));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("planar set has a non-finite coordinate"));
        }
        Ok(PlanarSet { points, branch: None })
    }

    pub fn with_branch(mut self, branch: usize) -> Self {
        self.branch = Some(branch);
        self
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn branch(&self) -> Option<usize> {
        self.branch
    }

    pub fn scale(&self, s: f64) -> PlanarSet {
        PlanarSet { points: self.points.iter().map(|p| [p[0] * s, p[1] * s]).collect(), branch: self.branch }
    }

    /// Sorted copy with near-duplicates removed.
    pub fn dedup(&self) -> PlanarSet {
        let mut pts = self.points.clone();
        pts.sort_by(lex_cmp);
        pts.dedup_by(|b, a| (a[0] - b[0]).abs() <= DEDUP_TOL && (a[1] - b[1]).abs() <= DEDUP_TOL);
        PlanarSet { points: pts, branch: self.branch }
    }

    /// Header `r,w` then one point per line at 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_points_csv(&self.points, w)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<PlanarSet> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut pts = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("expected 2 columns, found {}", rec.len())));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            pts.push([parse(&rec[0])?, parse(&rec[1])?]);
        }
        PlanarSet::new(pts)
    }
}

fn write_points_csv<W: Write>(points: &[Point], mut w: W) -> Result<()> {
    writeln!(w, "r,w")?;
    for p in points {
        writeln!(w, "{:.16e},{:.16e}", p[0], p[1])?;
    }
    Ok(())
}

/// Convex polygon, vertices counter-clockwise from the lexicographically
/// smallest one. One or two vertices encode a point or a segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexHull2D {
    vertices: Vec<Point>,
}

impl ConvexHull2D {
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_points_csv(&self.vertices, w)
    }

    /// Largest signed distance of `p` beyond the hull boundary together with
    /// the outward unit normal attaining it. Non-positive means inside.
    pub fn excess(&self, p: Point) -> (f64, Point) {
        let v = &self.vertices;
        match v.len() {
            1 => {
                let d = sub(p, v[0]);
                let n = norm(d);
                (n, if n > 0.0 { [d[0] / n, d[1] / n] } else { [1.0, 0.0] })
            }
            2 => {
                let (a, b) = (v[0], v[1]);
                let ab = sub(b, a);
                let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
                let c = [a[0] + t * ab[0], a[1] + t * ab[1]];
                let d = sub(p, c);
                let n = norm(d);
                let len = norm(ab);
                (n, if n > 0.0 { [d[0] / n, d[1] / n] } else { [ab[1] / len, -ab[0] / len] })
            }
            k => {
                let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
                for i in 0..k {
                    let (a, b) = (v[i], v[(i + 1) % k]);
                    let e = sub(b, a);
                    let len = norm(e);
                    let n = [e[1] / len, -e[0] / len];
                    let s = dot(sub(p, a), n);
                    if s > best.0 {
                        best = (s, n);
                    }
                }
                best
            }
        }
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.excess(p).0 <= tol
    }

    pub fn min_r(&self) -> f64 {
        self.vertices.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Monotone-chain hull. Collinear boundary points are dropped.
pub fn convex_hull(s: &PlanarSet) -> ConvexHull2D {
    hull_of_points(s.points())
}

pub(crate) fn hull_of_points(points: &[Point]) -> ConvexHull2D {
    let pts = hull_indices(points).into_iter().map(|i| points[i]).collect();
    ConvexHull2D { vertices: pts }
}

/// Indices into `points` of the hull vertices in counter-clockwise order.
pub(crate) fn hull_indices(points: &[Point]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| lex_cmp(&points[a], &points[b]).then(a.cmp(&b)));
    idx.dedup_by(|b, a| {
        let (p, q) = (points[*a], points[*b]);
        (p[0] - q[0]).abs() <= DEDUP_TOL && (p[1] - q[1]).abs() <= DEDUP_TOL
    });
    if idx.len() <= 2 {
        return idx;
    }
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2
            && orient(points[lower[lower.len() - 2]], points[lower[lower.len() - 1]], points[i]) <= 0.0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2
            && orient(points[upper[upper.len() - 2]], points[upper[upper.len() - 1]], points[i]) <= 0.0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() == 2 && lower[0] == lower[1] {
        lower.pop();
    }
    lower
}

/// Every sum `p₁ + … + p_I` with `pᵢ ∈ Yᵢ`, enumerated with the first set
/// varying slowest. Fails once the product of the set sizes exceeds `cap`.
pub fn minkowski_sum(sets: &[PlanarSet], cap: usize) -> Result<PlanarSet> {
    if sets.is_empty() {
        return Err(invalid("Minkowski sum of no sets"));
    }
    let mut total: usize = 1;
    for s in sets {
        total = total.saturating_mul(s.len());
        if total > cap {
            return Err(Error::SizeLimit(format!(
                "Minkowski sum would hold more than {cap} points; use coarser grids"
            )));
        }
    }
    let mut acc = sets[0].points.clone();
    for s in &sets[1..] {
        let mut next = Vec::with_capacity(acc.len() * s.len());
        for a in &acc {
            for b in &s.points {
                next.push([a[0] + b[0], a[1] + b[1]]);
            }
        }
        acc = next;
    }
    PlanarSet::new(acc)
}

/// `(1/I) Σᵢ S` over `I` copies of `s`, with near-duplicates merged after
/// every addition so repeated sums stay small.
pub fn replicated_average(s: &PlanarSet, copies: usize, cap: usize) -> Result<PlanarSet> {
    if copies == 0 {
        return Err(invalid("need at least one copy"));
    }
    let base = s.dedup();
    let mut acc = base.clone();
    for _ in 1..copies {
        if acc.len().saturating_mul(base.len()) > cap {
            return Err(Error::SizeLimit(format!("replicated sum exceeds {cap} points")));
        }
        acc = minkowski_sum(&[acc, base.clone()], cap)?.dedup();
    }
    Ok(acc.scale(1.0 / copies as f64))
}

/// Edge sequence of a hull starting at its lowest vertex (min `w`, then min `r`),
/// as `(angle in [0, 2π), start index, end index)`.
fn edges_from_bottom(v: &[Point]) -> (usize, Vec<(f64, usize, usize)>) {
    let k = v.len();
    let start = (0..k)
        .min_by(|&a, &b| v[a][1].total_cmp(&v[b][1]).then(v[a][0].total_cmp(&v[b][0])))
        .expect("non-empty hull");
    if k == 1 {
        return (start, Vec::new());
    }
    let mut edges = Vec::with_capacity(k);
    for step in 0..k {
        let a = (start + step) % k;
        let b = (a + 1) % k;
        let e = sub(v[b], v[a]);
        let mut ang = e[1].atan2(e[0]);
        if ang < 0.0 {
            ang += std::f64::consts::TAU;
        }
        // The first edge leaves the lowest vertex and can only point into the
        // upper half plane; round-off near 2π belongs at 0.
        if step == 0 && ang > std::f64::consts::PI {
            ang = 0.0;
        }
        edges.push((ang, a, b));
    }
    (start, edges)
}

/// Vertices of `Σ conv(Yᵢ)` with, for each, the hull-vertex index per summand
/// that produces it. Consecutive collinear vertices may appear.
pub(crate) fn minkowski_hull_walk(hulls: &[Vec<Point>]) -> Vec<(Point, Vec<usize>)> {
    let mut cur = Vec::with_capacity(hulls.len());
    let mut events: Vec<(f64, usize, usize)> = Vec::new();
    for (h, v) in hulls.iter().enumerate() {
        let (start, edges) = edges_from_bottom(v);
        cur.push(start);
        for (ang, _, b) in edges {
            events.push((ang, h, b));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let point_of = |sel: &[usize]| -> Point {
        let mut p = [0.0, 0.0];
        for (h, &i) in sel.iter().enumerate() {
            p[0] += hulls[h][i][0];
            p[1] += hulls[h][i][1];
        }
        p
    };
    let mut out = vec![(point_of(&cur), cur.clone())];
    for (n, &(_, h, b)) in events.iter().enumerate() {
        cur[h] = b;
        if n + 1 < events.len() {
            out.push((point_of(&cur), cur.clone()));
        }
    }
    out
}

/// `conv(A₁) + … + conv(A_I)` as a strict hull.
pub fn minkowski_sum_hulls(hulls: &[ConvexHull2D]) -> Result<ConvexHull2D> {
    if hulls.is_empty() {
        return Err(invalid("Minkowski sum of no hulls"));
    }
    let verts: Vec<Vec<Point>> = hulls.iter().map(|h| h.vertices.clone()).collect();
    let walk: Vec<Point> = minkowski_hull_walk(&verts).into_iter().map(|(p, _)| p).collect();
    Ok(hull_of_points(&walk))
}

/// `min { w : (r, w) ∈ S, r ≤ K }`.
pub fn epigraph_inf_set(s: &PlanarSet, k: f64) -> Result<f64> {
    s.points
        .iter()
        .filter(|p| p[0] <= k)
        .map(|p| p[1])
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Infeasible(format!("no point has r ≤ {k}")))
}

/// `min { w : (r, w) ∈ conv, r ≤ K }`, including boundary points crossing `r = K`.
pub fn epigraph_inf_hull(h: &ConvexHull2D, k: f64) -> Result<f64> {
    let v = &h.vertices;
    let mut best = f64::INFINITY;
    for p in v.iter().filter(|p| p[0] <= k) {
        best = best.min(p[1]);
    }
    if v.len() >= 2 {
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            if (a[0] - k) * (b[0] - k) < 0.0 {
                let t = (k - a[0]) / (b[0] - a[0]);
                best = best.min(a[1] + t * (b[1] - a[1]));
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Infeasible(format!("hull has no point with r ≤ {k}")))
    }
}

/// Sampled Hausdorff distance between `s` and its hull: the largest distance
/// from a point of a barycentric lattice over the hull's fan triangulation to
/// the nearest point of `s`. Zero for convex-position sets only in the limit
/// of fine lattices; a non-convexity surrogate, not an exact distance.
pub fn hull_hausdorff(s: &PlanarSet, lattice: usize) -> f64 {
    let h = convex_hull(s);
    let v = h.vertices();
    let pts = s.points();
    let nearest = |q: Point| pts.iter().map(|p| norm(sub(*p, q))).fold(f64::INFINITY, f64::min);
    let m = lattice.max(1);
    let mut worst: f64 = 0.0;
    match v.len() {
        1 => {}
        2 => {
            for t in 0..=m {
                let a = t as f64 / m as f64;
                worst = worst.max(nearest([v[0][0] + a * (v[1][0] - v[0][0]), v[0][1] + a * (v[1][1] - v[0][1])]));
            }
        }
        k => {
            for j in 1..k - 1 {
                let (a, b, c) = (v[0], v[j], v[j + 1]);
                for i1 in 0..=m {
                    for i2 in 0..=m - i1 {
                        let (l1, l2) = (i1 as f64 / m as f64, i2 as f64 / m as f64);
                        let l0 = 1.0 - l1 - l2;
                        let q = [
                            l0 * a[0] + l1 * b[0] + l2 * c[0],
                            l0 * a[1] + l1 * b[1] + l2 * c[1],
                        ];
                        worst = worst.max(nearest(q));
                    }
                }
            }
        }
    }
    worst
}
