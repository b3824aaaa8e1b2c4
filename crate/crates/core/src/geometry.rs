//! Domains described by their boundary only.
//!
//! A [`BoundaryMesh`] is either an interval (1D) or a simple counterclockwise
//! polygon (2D). Points on the boundary count as inside: the domain is closed.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gauss::GaussRule;
use crate::{Point, MAX_DIM};

/// Relative epsilon (in units of the cell measure) below which a clip counts
/// as empty.
pub const DEGENERATE_REL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not counterclockwise (signed area {0})")]
    NotCounterClockwise(f64),
    #[error("boundary segments {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("interval ({0}, {1}) is empty")]
    EmptyInterval(f64, f64),
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Interval { a: f64, b: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

/// One oriented piece of the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Facet {
    /// 1D endpoint; `orientation` is the outward direction, -1 or +1.
    Endpoint { x: f64, orientation: f64 },
    /// 2D straight segment traversed with the domain on its left.
    Segment {
        a: [f64; 2],
        b: [f64; 2],
        normal: [f64; 2],
        length: f64,
    },
}

/// Quadrature node on the boundary: `sum w f(x)·n` approximates a flux integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub x: Point,
    pub normal: Point,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMesh {
    shape: Shape,
    lo: Point,
    hi: Point,
}

impl BoundaryMesh {
    pub fn interval(a: f64, b: f64) -> Result<Self, GeometryError> {
        if !(a < b) {
            return Err(GeometryError::EmptyInterval(a, b));
        }
        Ok(Self {
            shape: Shape::Interval { a, b },
            lo: [a, 0.0, 0.0],
            hi: [b, 0.0, 0.0],
        })
    }

    /// Counterclockwise simple polygon.
    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        let area = shoelace(&vertices);
        if !(area > 0.0) {
            return Err(GeometryError::NotCounterClockwise(area));
        }
        if let Some((i, j)) = find_self_intersection(&vertices) {
            return Err(GeometryError::SelfIntersecting(i, j));
        }
        let mut lo = [f64::INFINITY, f64::INFINITY, 0.0];
        let mut hi = [f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0];
        for v in &vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Ok(Self {
            shape: Shape::Polygon { vertices },
            lo,
            hi,
        })
    }

    /// Regular `sides`-gon inscribed in the circle; vertex 0 sits at angle 0.
    pub fn disk(center: [f64; 2], radius: f64, sides: usize) -> Result<Self, GeometryError> {
        let verts = (0..sides)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        Self::polygon(verts)
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Result<Self, GeometryError> {
        Self::polygon(vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]])
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Interval { .. } => 1,
            Shape::Polygon { .. } => 2,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bbox(&self) -> (Point, Point) {
        (self.lo, self.hi)
    }

    pub fn vertices(&self) -> Option<&[[f64; 2]]> {
        match &self.shape {
            Shape::Polygon { vertices } => Some(vertices),
            Shape::Interval { .. } => None,
        }
    }

    pub fn endpoints(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Interval { a, b } => Some((a, b)),
            Shape::Polygon { .. } => None,
        }
    }

    /// Length (1D) or area (2D) of the enclosed domain.
    pub fn measure(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::Polygon { vertices } => shoelace(vertices),
        }
    }

    fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|k| self.hi[k] - self.lo[k])
            .fold(0.0, f64::max)
    }

    pub fn facets(&self) -> Vec<Facet> {
        match &self.shape {
            Shape::Interval { a, b } => vec![
                Facet::Endpoint { x: *a, orientation: -1.0 },
                Facet::Endpoint { x: *b, orientation: 1.0 },
            ],
            Shape::Polygon { vertices } => (0..vertices.len())
                .map(|i| {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % vertices.len()];
                    let t = [b[0] - a[0], b[1] - a[1]];
                    let length = t[0].hypot(t[1]);
                    // outward normal: tangent rotated by -90 degrees
                    let normal = [t[1] / length, -t[0] / length];
                    Facet::Segment { a, b, normal, length }
                })
                .collect(),
        }
    }

    /// Same boundary shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        let mut out = self.clone();
        match &mut out.shape {
            Shape::Interval { a, b } => {
                *a += offset[0];
                *b += offset[0];
            }
            Shape::Polygon { vertices } => {
                for v in vertices.iter_mut() {
                    v[0] += offset[0];
                    v[1] += offset[1];
                }
            }
        }
        for k in 0..self.dim() {
            out.lo[k] += offset[k];
            out.hi[k] += offset[k];
        }
        out
    }

    /// Point classification with the default tolerance `1e-12 · diameter`.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_tol(x, 1e-12 * self.diameter())
    }

    /// Closed-domain test: points within `tol` of the boundary count as inside.
    pub fn contains_tol(&self, x: &[f64], tol: f64) -> bool {
        match &self.shape {
            Shape::Interval { a, b } => x[0] >= a - tol && x[0] <= b + tol,
            Shape::Polygon { vertices } => {
                let p = [x[0], x[1]];
                if p[0] < self.lo[0] - tol
                    || p[0] > self.hi[0] + tol
                    || p[1] < self.lo[1] - tol
                    || p[1] > self.hi[1] + tol
                {
                    return false;
                }
                let m = vertices.len();
                let mut inside = false;
                for i in 0..m {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % m];
                    if segment_distance(p, a, b) <= tol {
                        return true;
                    }
                    if (a[1] > p[1]) != (b[1] > p[1]) {
                        let xc = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                        if p[0] < xc {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }

    /// Closest boundary point to `x`.
    pub fn project_to_boundary(&self, x: &[f64]) -> Point {
        match &self.shape {
            Shape::Interval { a, b } => {
                let p = if (x[0] - a).abs() <= (x[0] - b).abs() { *a } else { *b };
                [p, 0.0, 0.0]
            }
            Shape::Polygon { vertices } => {
                let p = [x[0], x[1]];
                let m = vertices.len();
                let mut best = (f64::INFINITY, [0.0; 2]);
                for i in 0..m {
                    let q = segment_closest(p, vertices[i], vertices[(i + 1) % m]);
                    let d = (q[0] - p[0]).hypot(q[1] - p[1]);
                    if d < best.0 {
                        best = (d, q);
                    }
                }
                [best.1[0], best.1[1], 0.0]
            }
        }
    }

    /// Intersection of the domain with the axis-aligned cube `lo + [0, sigma]^d`.
    pub fn clip_cell(&self, lo: &[f64], sigma: f64) -> ClippedCell {
        let d = self.dim();
        let mut hi = [0.0; MAX_DIM];
        let mut cell_lo = [0.0; MAX_DIM];
        for k in 0..d {
            cell_lo[k] = lo[k];
            hi[k] = lo[k] + sigma;
        }
        let full = sigma.powi(d as i32);
        let (region, measure) = match &self.shape {
            Shape::Interval { a, b } => {
                let l = cell_lo[0].max(*a);
                let r = hi[0].min(*b);
                if r > l {
                    (ClipRegion::Interval(l, r), r - l)
                } else {
                    (ClipRegion::Empty, 0.0)
                }
            }
            Shape::Polygon { vertices } => {
                let blo = [cell_lo[0], cell_lo[1]];
                let bhi = [hi[0], hi[1]];
                if self.hi[0] <= blo[0]
                    || self.lo[0] >= bhi[0]
                    || self.hi[1] <= blo[1]
                    || self.lo[1] >= bhi[1]
                {
                    (ClipRegion::Empty, 0.0)
                } else {
                    let poly = clip_polygon_to_box(vertices, blo, bhi);
                    let area = shoelace(&poly);
                    if poly.len() < 3 || area <= 0.0 {
                        (ClipRegion::Empty, 0.0)
                    } else {
                        (ClipRegion::Polygon(poly), area)
                    }
                }
            }
        };
        let degenerate = measure > 0.0 && measure < DEGENERATE_REL * full;
        let (region, measure) = if degenerate || measure == 0.0 {
            (ClipRegion::Empty, 0.0)
        } else if (full - measure) < DEGENERATE_REL * full {
            (ClipRegion::Full, full)
        } else {
            (region, measure)
        };
        ClippedCell {
            dim: d,
            lo: cell_lo,
            sigma,
            measure,
            degenerate,
            region,
        }
    }

    /// Gauss rule with `points_per_facet` nodes on every facet piece inside the
    /// closed box `[lo, hi]`.
    pub fn boundary_rule(&self, lo: &[f64], hi: &[f64], points_per_facet: usize) -> Vec<BoundaryNode> {
        let mut out = Vec::new();
        match &self.shape {
            Shape::Interval { a, b } => {
                for (x, o) in [(*a, -1.0), (*b, 1.0)] {
                    if x >= lo[0] && x <= hi[0] {
                        out.push(BoundaryNode {
                            x: [x, 0.0, 0.0],
                            normal: [o, 0.0, 0.0],
                            weight: 1.0,
                        });
                    }
                }
            }
            Shape::Polygon { .. } => {
                let g = GaussRule::new(points_per_facet.max(1));
                for f in self.facets() {
                    let Facet::Segment { a, b, normal, length } = f else { continue };
                    let Some((t0, t1)) = clip_segment_to_box(a, b, [lo[0], lo[1]], [hi[0], hi[1]])
                    else {
                        continue;
                    };
                    if t1 <= t0 {
                        continue;
                    }
                    for (t, w) in g.on_interval(t0, t1) {
                        out.push(BoundaryNode {
                            x: [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), 0.0],
                            normal: [normal[0], normal[1], 0.0],
                            weight: w * length,
                        });
                    }
                }
            }
        }
        out
    }

    /// Parses the plain-text mesh format (`dim d`, then `v x y` or `interval a b`).
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let mut dim = None;
        let mut verts = Vec::new();
        let mut interval = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or("");
            let nums: Result<Vec<f64>, _> = it.map(str::parse::<f64>).collect();
            let nums = nums.map_err(|e| GeometryError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let bad = |msg: &str| GeometryError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            match key {
                "dim" => {
                    if nums.len() != 1 || !(nums[0] == 1.0 || nums[0] == 2.0) {
                        return Err(bad("expected `dim 1` or `dim 2`"));
                    }
                    dim = Some(nums[0] as usize);
                }
                "v" => {
                    if dim != Some(2) || nums.len() != 2 {
                        return Err(bad("`v x y` requires `dim 2` and two coordinates"));
                    }
                    verts.push([nums[0], nums[1]]);
                }
                "interval" => {
                    if dim != Some(1) || nums.len() != 2 {
                        return Err(bad("`interval a b` requires `dim 1` and two numbers"));
                    }
                    interval = Some((nums[0], nums[1]));
                }
                _ => return Err(bad("unknown record")),
            }
        }
        match (dim, interval) {
            (Some(1), Some((a, b))) => Self::interval(a, b),
            (Some(1), None) => Err(GeometryError::Parse {
                line: 0,
                msg: "missing `interval` record".into(),
            }),
            (Some(2), _) => Self::polygon(verts),
            _ => Err(GeometryError::Parse {
                line: 1,
                msg: "missing `dim` record".into(),
            }),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match &self.shape {
            Shape::Interval { a, b } => {
                let _ = writeln!(s, "dim 1\ninterval {a:?} {b:?}");
            }
            Shape::Polygon { vertices } => {
                s.push_str("dim 2\n");
                for v in vertices {
                    let _ = writeln!(s, "v {:?} {:?}", v[0], v[1]);
                }
            }
        }
        s
    }

    /// Hex SHA-256 of the exact text serialization; used as a cache key.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Part of a grid cell inside the domain.
#[derive(Debug, Clone, PartialEq)]
pub enum ClipRegion {
    Empty,
    /// The whole cell.
    Full,
    Interval(f64, f64),
    /// Counterclockwise polygon, possibly with degenerate (zero-width) edges
    /// when a nonconvex boundary is clipped.
    Polygon(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClippedCell {
    pub dim: usize,
    pub lo: Point,
    pub sigma: f64,
    /// Length or area of the intersection.
    pub measure: f64,
    /// A nonzero intersection smaller than `1e-12 σ^d` was discarded.
    pub degenerate: bool,
    pub region: ClipRegion,
}

impl ClippedCell {
    pub fn is_full(&self) -> bool {
        matches!(self.region, ClipRegion::Full)
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.region, ClipRegion::Empty)
    }

    /// Nonempty proper part of the cell.
    pub fn is_cut(&self) -> bool {
        !matches!(self.region, ClipRegion::Empty | ClipRegion::Full)
    }

    /// Boundary of the region as a closed polygon (2D only).
    pub fn outline(&self) -> Vec<[f64; 2]> {
        let (x0, y0, s) = (self.lo[0], self.lo[1], self.sigma);
        match &self.region {
            ClipRegion::Full => vec![[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]],
            ClipRegion::Polygon(p) => p.clone(),
            _ => Vec::new(),
        }
    }

    /// Fan triangulation from the first vertex. Triangle orientation is kept, so
    /// signed areas always sum to the region measure.
    pub fn triangles(&self) -> Vec<[[f64; 2]; 3]> {
        let p = self.outline();
        (1..p.len().saturating_sub(1))
            .map(|i| [p[0], p[i], p[i + 1]])
            .collect()
    }

    /// Interval `[a, b]` of the region (1D only).
    pub fn interval(&self) -> Option<(f64, f64)> {
        match self.region {
            ClipRegion::Full => Some((self.lo[0], self.lo[0] + self.sigma)),
            ClipRegion::Interval(a, b) => Some((a, b)),
            _ => None,
        }
    }
}

pub fn shoelace(p: &[[f64; 2]]) -> f64 {
    let m = p.len();
    if m < 3 {
        return 0.0;
    }
    // shifted to the first vertex to limit cancellation
    let o = p[0];
    let mut s = 0.0;
    for i in 1..m - 1 {
        let a = [p[i][0] - o[0], p[i][1] - o[1]];
        let b = [p[i + 1][0] - o[0], p[i + 1][1] - o[1]];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s
}

pub fn triangle_area(t: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]))
}

/// Sutherland–Hodgman against the four half-planes of an axis-aligned box.
/// Exact in area for nonconvex subjects since the clip window is convex.
pub fn clip_polygon_to_box(poly: &[[f64; 2]], lo: [f64; 2], hi: [f64; 2]) -> Vec<[f64; 2]> {
    let mut cur: Vec<[f64; 2]> = poly.to_vec();
    let planes = [(0usize, lo[0], true), (0, hi[0], false), (1, lo[1], true), (1, hi[1], false)];
    for (axis, bound, keep_above) in planes {
        if cur.is_empty() {
            break;
        }
        let inside = |p: &[f64; 2]| if keep_above { p[axis] >= bound } else { p[axis] <= bound };
        let mut next = Vec::with_capacity(cur.len() + 4);
        let m = cur.len();
        for i in 0..m {
            let a = cur[i];
            let b = cur[(i + 1) % m];
            let (ia, ib) = (inside(&a), inside(&b));
            if ia {
                next.push(a);
            }
            if ia != ib {
                let t = (bound - a[axis]) / (b[axis] - a[axis]);
                let mut p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                p[axis] = bound;
                let other = 1 - axis;
                // keep the crossing within the segment's extent
                let (mn, mx) = if a[other] < b[other] { (a[other], b[other]) } else { (b[other], a[other]) };
                p[other] = p[other].clamp(mn, mx);
                next.push(p);
            }
        }
        cur = next;
    }
    cur.dedup();
    while cur.len() > 1 && cur.first() == cur.last() {
        cur.pop();
    }
    cur
}

/// Liang–Barsky: parameter range of segment `a→b` inside the closed box.
pub fn clip_segment_to_box(a: [f64; 2], b: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for k in 0..2 {
        let d = b[k] - a[k];
        if d == 0.0 {
            if a[k] < lo[k] || a[k] > hi[k] {
                return None;
            }
            continue;
        }
        let mut ta = (lo[k] - a[k]) / d;
        let mut tb = (hi[k] - a[k]) / d;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

fn segment_closest(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    [a[0] + t * d[0], a[1] + t * d[1]]
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let q = segment_closest(p, a, b);
    (q[0] - p[0]).hypot(q[1] - p[1])
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Sweep over segments sorted by their left end; returns the first
/// intersecting pair of non-adjacent segments.
fn find_self_intersection(v: &[[f64; 2]]) -> Option<(usize, usize)> {
    let m = v.len();
    let seg = |i: usize| (v[i], v[(i + 1) % m]);
    let mut order: Vec<usize> = (0..m).collect();
    let xmin = |i: usize| seg(i).0[0].min(seg(i).1[0]);
    let xmax = |i: usize| seg(i).0[0].max(seg(i).1[0]);
    order.sort_by(|&i, &j| xmin(i).total_cmp(&xmin(j)));
    let mut active: Vec<usize> = Vec::new();
    for &i in &order {
        let x = xmin(i);
        active.retain(|&j| xmax(j) >= x);
        let (a, b) = seg(i);
        for &j in &active {
            let adjacent = (i + 1) % m == j || (j + 1) % m == i;
            if adjacent {
                // adjacent edges may only share their common vertex
                let (c, d) = seg(j);
                let (shared, far_i, far_j) = if (i + 1) % m == j { (b, a, d) } else { (a, b, c) };
                let _ = shared;
                if orient(a, b, far_j) == 0.0 && on_segment(a, b, far_j) && far_j != shared
                    || orient(c, d, far_i) == 0.0 && on_segment(c, d, far_i) && far_i != shared
                {
                    return Some((i.min(j), i.max(j)));
                }
                continue;
            }
            let (c, d) = seg(j);
            if segments_intersect(a, b, c, d) {
                return Some((i.min(j), i.max(j)));
            }
        }
        active.push(i);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_center_inside_far_point_outside() {
        let m = BoundaryMesh::disk([0.0, 0.0], 1.0, 64).unwrap();
        assert!(m.contains(&[0.0, 0.0]));
        assert!(!m.contains(&[2.0, 0.0]));
    }

    #[test]
    fn interval_endpoints_count_as_inside() {
        let m = BoundaryMesh::interval(0.0, 2.0).unwrap();
        assert!(m.contains(&[1.0]));
        assert!(m.contains(&[2.0]));
        assert!(!m.contains(&[2.1]));
    }

    #[test]
    fn clip_inside_outside_and_half() {
        let sq = BoundaryMesh::rect([-1.0, -1.0], [1.0, 1.0]).unwrap();
        let c = sq.clip_cell(&[0.0, 0.0], 0.5);
        assert!(c.is_full());
        assert_eq!(c.measure, 0.25);
        let c = sq.clip_cell(&[3.0, 3.0], 0.5);
        assert!(c.is_empty());
        assert_eq!(c.measure, 0.0);
        let sigma = 0.1;
        let half = BoundaryMesh::rect([-1.0, -1.0], [0.5 * sigma, 1.0]).unwrap();
        let c = half.clip_cell(&[0.0, 0.0], sigma);
        assert!((c.measure - 0.5 * sigma * sigma).abs() < 1e-16);
        let tri: f64 = c.triangles().iter().map(triangle_area).sum();
        assert!((tri - c.measure).abs() <= 1e-12 * c.measure);
    }

    #[test]
    fn degenerate_clip_is_flagged() {
        let sigma = 1.0;
        let sliver = BoundaryMesh::rect([-1.0, -1.0], [1e-14, 2.0]).unwrap();
        let c = sliver.clip_cell(&[0.0, 0.0], sigma);
        assert!(c.degenerate);
        assert_eq!(c.measure, 0.0);
    }

    #[test]
    fn boundary_rule_examples() {
        let m = BoundaryMesh::interval(0.0, 2.0).unwrap();
        let r = m.boundary_rule(&[0.0], &[1.0], 3);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].x[0], 0.0);
        assert_eq!(r[0].normal[0], -1.0);

        // bottom facet of the unit square, domain above it
        let sq = BoundaryMesh::rect([0.0, 0.0], [1.0, 1.0]).unwrap();
        let r = sq.boundary_rule(&[-0.5, -0.5], &[1.5, 0.0], 1);
        assert_eq!(r.len(), 1);
        assert!((r[0].x[0] - 0.5).abs() < 1e-15 && r[0].x[1] == 0.0);
        assert!((r[0].weight - 1.0).abs() < 1e-15);
        assert_eq!([r[0].normal[0], r[0].normal[1]], [0.0, -1.0]);

        let r = sq.boundary_rule(&[-0.5, -0.5], &[1.5, 0.0], 2);
        let s: f64 = r.iter().map(|n| n.weight * n.x[0] * n.x[0]).sum();
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_rule_flux_gives_area() {
        let m = BoundaryMesh::disk([0.1, -0.2], 0.9, 37).unwrap();
        let (lo, hi) = m.bbox();
        let r = m.boundary_rule(&lo, &hi, 1);
        let flux: f64 = r.iter().map(|n| n.weight * n.x[0] * n.normal[0]).sum();
        assert!((flux - m.measure()).abs() <= 1e-10 * m.measure());
    }

    #[test]
    fn parser_round_trip_and_rejections() {
        let m = BoundaryMesh::disk([0.0, 0.0], 1.0, 8).unwrap();
        let back = BoundaryMesh::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        let i = BoundaryMesh::parse("dim 1\ninterval 0 2\n").unwrap();
        assert_eq!(i.endpoints(), Some((0.0, 2.0)));
        // bow tie
        let err = BoundaryMesh::parse("dim 2\nv 0 0\nv 1 1\nv 1 0\nv 0 1\n").unwrap_err();
        assert!(matches!(err, GeometryError::SelfIntersecting(..) | GeometryError::NotCounterClockwise(_)));
        // clockwise square
        let err = BoundaryMesh::parse("dim 2\nv 0 0\nv 0 1\nv 1 1\nv 1 0\n").unwrap_err();
        assert!(matches!(err, GeometryError::NotCounterClockwise(_)));
        // self-touching but positively oriented
        let err = BoundaryMesh::parse("dim 2\nv 0 0\nv 4 0\nv 4 4\nv 2 0.0\nv 0 4\n").unwrap_err();
        assert!(matches!(err, GeometryError::SelfIntersecting(..)), "{err:?}");
        assert!(BoundaryMesh::parse("dim 3\n").is_err());
    }

    #[test]
    fn nonconvex_clip_area_matches_shoelace() {
        // L-shape
        let l = BoundaryMesh::polygon(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]])
            .unwrap();
        let s = 0.3;
        let mut total = 0.0;
        for i in -1..8 {
            for j in -1..8 {
                total += l.clip_cell(&[i as f64 * s + 0.01, j as f64 * s - 0.02], s).measure;
            }
        }
        assert!((total - 3.0).abs() < 1e-12);
    }
}
