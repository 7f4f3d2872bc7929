//! Two-dimensional convex geometry.
//!
//! Polygons are stored as counter-clockwise vertex lists ([`Polygon2`]) and
//! converted to half-plane form ([`HalfspaceSet2`], rows `g·y <= h` with unit
//! `g`) directly from their edges. Points and segments are representable as
//! polygons but have no half-plane form; [`Polygon2::inflate`] turns them into
//! thin boxes when one is needed.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Vertices closer than this are merged.
pub const MERGE_TOL: f64 = 1e-8;

/// Default half-width used to inflate points and segments.
pub const DEFAULT_INFLATE: f64 = 1e-9;

/// Slack allowed on edge cross products when validating convexity.
const CONVEX_TOL: f64 = 1e-9;

#[inline]
fn cross(o: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2 {
    vertices: Vec<Vec2>,
}

impl Polygon2 {
    /// Wraps an ordered CCW vertex list after checking convexity and
    /// distinctness.
    pub fn from_ccw(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidInput("polygon needs at least one vertex".into()));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::InvalidInput("polygon vertices must be finite".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if (vertices[i] - vertices[j]).norm() <= MERGE_TOL {
                    return Err(Error::InvalidInput(format!(
                        "vertices {i} and {j} coincide within {MERGE_TOL:e}"
                    )));
                }
            }
        }
        if n >= 3 {
            for i in 0..n {
                let c = cross(&vertices[i], &vertices[(i + 1) % n], &vertices[(i + 2) % n]);
                if c < -CONVEX_TOL {
                    return Err(Error::InvalidInput(format!(
                        "polygon is not convex and counter-clockwise at vertex {}",
                        (i + 1) % n
                    )));
                }
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Signed shoelace area (non-negative for CCW input).
    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    /// True for points, segments and zero-area polygons.
    pub fn is_degenerate(&self) -> bool {
        if self.vertices.len() < 3 {
            return true;
        }
        let scale = self.diameter().max(f64::MIN_POSITIVE);
        self.area() <= 1e-14 * scale * scale
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        self.vertices.iter().fold(Vec2::zeros(), |acc, v| acc + v) / n
    }

    /// Support value `max_v u·v`.
    pub fn support(&self, direction: &Vec2) -> f64 {
        self.vertices
            .iter()
            .map(|v| direction.dot(v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn translated(&self, offset: &Vec2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
        }
    }

    /// Uniform scaling about the origin; `factor` must be positive.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0, "scale factor must be positive");
        Self {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
        }
    }

    /// Minkowski sum with the square `[-eps, eps]²`.
    pub fn inflate(&self, eps: f64) -> Self {
        let mut pts = Vec::with_capacity(self.vertices.len() * 4);
        for v in &self.vertices {
            for (dx, dy) in [(-eps, -eps), (eps, -eps), (eps, eps), (-eps, eps)] {
                pts.push(Vec2::new(v.x + dx, v.y + dy));
            }
        }
        // eps may sit below MERGE_TOL, so only exact duplicates are merged
        hull_with_tol(&pts, 0.0).expect("inflated point set is non-empty")
    }

    /// Part of the polygon with `normal·y <= offset`, or `None` when empty.
    pub fn clip(&self, normal: &Vec2, offset: f64) -> Option<Self> {
        let clipped = clip_ring(&self.vertices, normal, offset);
        if clipped.is_empty() {
            None
        } else {
            hull2d(&clipped).ok()
        }
    }

    /// Distance from `p` to the polygon (zero inside).
    pub fn distance_to(&self, p: &Vec2) -> f64 {
        let n = self.vertices.len();
        if n == 1 {
            return (p - self.vertices[0]).norm();
        }
        if n >= 3 && self.contains_point(p) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        let edges = if n == 2 { 1 } else { n };
        for i in 0..edges {
            best = best.min(point_segment_distance(p, &self.vertices[i], &self.vertices[(i + 1) % n]));
        }
        best
    }

    fn contains_point(&self, p: &Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % n], p) >= 0.0)
    }
}

fn shoelace(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = &vertices[i];
        let b = &vertices[(i + 1) % n];
        acc += a.x * b.y - a.y * b.x;
    }
    0.5 * acc
}

fn point_segment_distance(p: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Sutherland-Hodgman step against one half-plane.
fn clip_ring(ring: &[Vec2], normal: &Vec2, offset: f64) -> Vec<Vec2> {
    let n = ring.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return if normal.dot(&ring[0]) <= offset { ring.to_vec() } else { Vec::new() };
    }
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let cur = ring[i];
        let next = ring[(i + 1) % n];
        let dc = normal.dot(&cur) - offset;
        let dn = normal.dot(&next) - offset;
        if dc <= 0.0 {
            out.push(cur);
        }
        if (dc < 0.0 && dn > 0.0) || (dc > 0.0 && dn < 0.0) {
            let t = dc / (dc - dn);
            out.push(cur + (next - cur) * t);
        }
    }
    out
}

/// Minimal counter-clockwise convex hull (monotone chain).
///
/// Collinear points and points within [`MERGE_TOL`] of a kept vertex are
/// dropped.
pub fn hull2d(points: &[Vec2]) -> Result<Polygon2> {
    hull_with_tol(points, MERGE_TOL)
}

fn hull_with_tol(points: &[Vec2], merge_tol: f64) -> Result<Polygon2> {
    if points.is_empty() {
        return Err(Error::InvalidInput("hull of an empty point set".into()));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidInput("hull input must be finite".into()));
    }
    let mut sorted: Vec<Vec2> = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    // Near-duplicates need not be adjacent after sorting, so scan the x-window.
    let mut pts: Vec<Vec2> = Vec::with_capacity(sorted.len());
    for p in sorted {
        let dup = pts
            .iter()
            .rev()
            .take_while(|q| p.x - q.x <= merge_tol)
            .any(|q| (p - q).norm() <= merge_tol);
        if !dup {
            pts.push(p);
        }
    }

    if pts.len() <= 2 {
        return Ok(Polygon2 { vertices: pts });
    }

    let scale = pts
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let eps = 1e-14 * scale * scale;

    let mut lower: Vec<Vec2> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= eps {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vec2> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= eps {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);

    // cyclic merge of near-coincident neighbours
    let mut hull: Vec<Vec2> = Vec::with_capacity(lower.len());
    for p in lower {
        if hull.last().is_none_or(|q: &Vec2| (p - q).norm() > merge_tol) {
            hull.push(p);
        }
    }
    while hull.len() > 1 && (hull[0] - hull[hull.len() - 1]).norm() <= merge_tol {
        hull.pop();
    }
    if hull.is_empty() {
        hull.push(pts[0]);
    }
    Ok(Polygon2 { vertices: hull })
}

/// Half-plane description `{y : G y <= h}` with unit-norm rows of `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceSet2 {
    #[serde(rename = "G")]
    pub normals: Vec<[f64; 2]>,
    #[serde(rename = "h")]
    pub offsets: Vec<f64>,
}

impl HalfspaceSet2 {
    pub fn new() -> Self {
        Self {
            normals: Vec::new(),
            offsets: Vec::new(),
        }
    }

    /// Adds `normal·y <= offset`, normalising the row.
    pub fn push(&mut self, normal: Vec2, offset: f64) {
        let len = normal.norm();
        assert!(len > 0.0, "half-plane normal must be non-zero");
        self.normals.push([normal.x / len, normal.y / len]);
        self.offsets.push(offset / len);
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn normal(&self, i: usize) -> Vec2 {
        Vec2::new(self.normals[i][0], self.normals[i][1])
    }

    pub fn rows(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        (0..self.len()).map(move |i| (self.normal(i), self.offsets[i]))
    }

    /// `max_i (g_i·y - h_i)`; `-inf` for an empty set of rows.
    pub fn max_violation(&self, y: &Vec2) -> f64 {
        self.rows()
            .map(|(g, h)| g.dot(y) - h)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Multiplies every offset by `factor`.
    pub fn scale_offsets(&self, factor: f64) -> Self {
        Self {
            normals: self.normals.clone(),
            offsets: self.offsets.iter().map(|h| h * factor).collect(),
        }
    }

    /// Vertex enumeration by successive clipping of a bounding square.
    pub fn to_polygon(&self) -> Result<Polygon2> {
        if self.is_empty() {
            return Err(Error::DegenerateGeometry("no half-planes".into()));
        }
        let bound = 1e6 * (1.0 + self.offsets.iter().fold(0.0_f64, |m, h| m.max(h.abs())));
        let coarse = self.clip_box(Vec2::new(-bound, -bound), Vec2::new(bound, bound))?;
        if coarse.iter().any(|v| v.x.abs() >= 0.5 * bound || v.y.abs() >= 0.5 * bound) {
            return Err(Error::DegenerateGeometry("half-plane intersection is unbounded".into()));
        }
        // Clip again from a box fitted to the coarse result so that rounding
        // scales with the polygon rather than with the initial box.
        let (mut lo, mut hi) = (coarse[0], coarse[0]);
        for v in &coarse {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let margin = Vec2::repeat(0.5 * (hi - lo).amax() + 1e-6 * (1.0 + lo.amax().max(hi.amax())));
        let fine = self.clip_box(lo - margin, hi + margin)?;
        hull2d(&fine)
    }

    fn clip_box(&self, lo: Vec2, hi: Vec2) -> Result<Vec<Vec2>> {
        let mut ring = vec![lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
        for (g, h) in self.rows() {
            ring = clip_ring(&ring, &g, h);
            if ring.is_empty() {
                return Err(Error::DegenerateGeometry("half-plane intersection is empty".into()));
            }
        }
        Ok(ring)
    }
}

impl Default for HalfspaceSet2 {
    fn default() -> Self {
        Self::new()
    }
}

/// Half-plane form of a non-degenerate polygon, one row per edge.
pub fn to_halfspaces(polygon: &Polygon2) -> Result<HalfspaceSet2> {
    if polygon.is_degenerate() {
        return Err(Error::DegenerateGeometry(format!(
            "polygon with {} vertices and area {:.3e} has no half-plane form",
            polygon.len(),
            polygon.area()
        )));
    }
    let v = polygon.vertices();
    let n = v.len();
    let mut hs = HalfspaceSet2::new();
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        let edge = b - a;
        let normal = Vec2::new(edge.y, -edge.x);
        hs.push(normal, normal.dot(&a));
    }
    Ok(hs)
}

/// `max(G y - h) <= tol`.
pub fn contains(hs: &HalfspaceSet2, y: &Vec2, tol: f64) -> bool {
    hs.max_violation(y) <= tol
}

/// Symmetric Hausdorff distance between two non-degenerate polygons.
pub fn hausdorff(a: &Polygon2, b: &Polygon2) -> Result<f64> {
    for p in [a, b] {
        if p.is_degenerate() {
            return Err(Error::DegenerateGeometry(
                "Hausdorff distance needs non-degenerate polygons".into(),
            ));
        }
    }
    let ab = a.vertices().iter().map(|v| b.distance_to(v)).fold(0.0, f64::max);
    let ba = b.vertices().iter().map(|v| a.distance_to(v)).fold(0.0, f64::max);
    Ok(ab.max(ba))
}
