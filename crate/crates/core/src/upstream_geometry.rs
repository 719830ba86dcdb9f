//! Upstream cells and their decomposition along the Eulerian grid.
//!
//! All geometry lives in unwrapped coordinates: an upstream cell may straddle
//! the periodic seam, and its pieces are tagged with unwrapped `(col, row)`
//! indices of the periodic extension. The wrapped [`CellId`] is only used to
//! fetch the density polynomial.
//!
//! The boundary of each upstream cell is split at every grid-line crossing.
//! Each piece belongs to the grid cell that contains it. Where the boundary
//! crosses a vertical grid line, the line enters or leaves the region; walking
//! those events in `y` order yields the inner grid-aligned segments. The same is
//! done for horizontal lines, although those never contribute to `int Q dy`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::characteristics::{NodeKind, TracePointSet};
use crate::error::{Result, SldgError};
use crate::grid::{CellId, Mesh, Point};
use crate::quadrature::LineRule;

/// Relative tolerance for treating a coordinate as lying on a grid line, and a
/// crossing parameter as coinciding with a side endpoint.
pub const SNAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpstreamMode {
    Straight,
    Qc,
}

/// Side curve `p(s) = a + b s + c s^2`, `s in [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideCurve {
    pub a: Point,
    pub b: Point,
    pub c: Point,
}

impl SideCurve {
    pub fn straight(p0: Point, p1: Point) -> Self {
        SideCurve { a: p0, b: p1 - p0, c: Point::default() }
    }

    /// Lagrange quadratic through `p0` (s=0), `pm` (s=1/2), `p1` (s=1).
    pub fn quadratic(p0: Point, pm: Point, p1: Point) -> Self {
        SideCurve {
            a: p0,
            b: p0 * -3.0 + pm * 4.0 - p1,
            c: p0 * 2.0 - pm * 4.0 + p1 * 2.0,
        }
    }

    pub fn is_straight(&self) -> bool {
        self.c == Point::default()
    }

    #[inline]
    pub fn eval(&self, s: f64) -> Point {
        Point::new(
            self.a.x + s * (self.b.x + s * self.c.x),
            self.a.y + s * (self.b.y + s * self.c.y),
        )
    }

    #[inline]
    pub fn deriv(&self, s: f64) -> Point {
        Point::new(self.b.x + 2.0 * s * self.c.x, self.b.y + 2.0 * s * self.c.y)
    }

    /// Polynomial degree of the parametrization.
    pub fn degree(&self) -> usize {
        if self.is_straight() {
            1
        } else {
            2
        }
    }

    /// Parameters in `(0, 1)` where the coordinate `(a, b, c)` equals `v`.
    fn roots(a: f64, b: f64, c: f64, v: f64, out: &mut Vec<f64>) {
        let a = a - v;
        let scale = a.abs().max(b.abs()).max(c.abs());
        if scale == 0.0 {
            return;
        }
        let mut push = |s: f64| {
            if s > SNAP_TOL && s < 1.0 - SNAP_TOL {
                out.push(s);
            }
        };
        if c.abs() <= 1e-14 * scale {
            if b != 0.0 {
                push(-a / b);
            }
            return;
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            if disc > -1e-14 * b * b {
                push(-b / (2.0 * c));
            }
            return;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        if q != 0.0 {
            push(q / c);
            push(a / q);
        } else {
            push(0.0);
        }
    }

    /// Range of one coordinate over `[0, 1]`.
    fn range(a: f64, b: f64, c: f64) -> (f64, f64) {
        let e = a + b + c;
        let (mut lo, mut hi) = (a.min(e), a.max(e));
        if c != 0.0 {
            let s = -b / (2.0 * c);
            if s > 0.0 && s < 1.0 {
                let v = a + s * (b + s * c);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

/// Approximate upstream cell of an Eulerian cell.
#[derive(Debug, Clone, PartialEq)]
pub struct UpstreamCell {
    pub cell: CellId,
    pub mode: UpstreamMode,
    /// Feet of the lower-left, lower-right, upper-right, upper-left vertices.
    pub vertices: [Point; 4],
    /// Feet of the bottom, right, top and left edge midpoints, when traced.
    pub midnodes: Option<[Point; 4]>,
    pub sides: [SideCurve; 4],
}

impl UpstreamCell {
    /// Mean of the four vertices, the origin of the reconstruction coordinates.
    pub fn center(&self) -> Point {
        let s = self.vertices.iter().fold(Point::default(), |acc, p| acc + *p);
        s * 0.25
    }

    /// Signed area `int x dy` along the boundary (exact for quadratic sides).
    pub fn area(&self) -> f64 {
        let rule = LineRule::new(2);
        let o = self.center();
        self.sides
            .iter()
            .map(|side| rule.integrate(0.0, 1.0, |s| (side.eval(s).x - o.x) * side.deriv(s).y))
            .sum()
    }
}

fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let orient = |a: Point, b: Point, c: Point| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Closed polygon is free of crossings between non-adjacent edges.
fn polygon_is_simple(pts: &[Point]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Piece of a side over `[s0, s1]` as Bezier control points.
#[derive(Clone, Copy)]
struct BezierPiece {
    p0: Point,
    p1: Point,
    p2: Point,
}

impl BezierPiece {
    fn new(c: &SideCurve, s0: f64, s1: f64) -> Self {
        let p0 = c.eval(s0);
        BezierPiece { p0, p1: p0 + c.deriv(s0) * (0.5 * (s1 - s0)), p2: c.eval(s1) }
    }

    fn bbox(&self) -> (Point, Point) {
        let lo = Point::new(self.p0.x.min(self.p1.x).min(self.p2.x), self.p0.y.min(self.p1.y).min(self.p2.y));
        let hi = Point::new(self.p0.x.max(self.p1.x).max(self.p2.x), self.p0.y.max(self.p1.y).max(self.p2.y));
        (lo, hi)
    }

    /// Distance of the middle control point from the chord, squared, times the chord length squared.
    fn bulge(&self) -> f64 {
        let (d, e) = (self.p2 - self.p0, self.p1 - self.p0);
        let cross = d.x * e.y - d.y * e.x;
        cross * cross
    }
}

/// Whether two quadratic sides cross, by recursive subdivision; the control-point hull
/// bounds each piece. `shared` holds the parameters of a common vertex on `a` and `b`.
fn sides_cross(a: &SideCurve, b: &SideCurve, shared: Option<(f64, f64)>, scale: f64) -> bool {
    let flat = (1e-12 * scale * scale).powi(2);
    let mut stack = vec![(0.0, 1.0, 0.0, 1.0, 0u32)];
    while let Some((a0, a1, b0, b1, depth)) = stack.pop() {
        let (pa, pb) = (BezierPiece::new(a, a0, a1), BezierPiece::new(b, b0, b1));
        let ((alo, ahi), (blo, bhi)) = (pa.bbox(), pb.bbox());
        if alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y {
            continue;
        }
        if depth >= 48 || (pa.bulge() <= flat && pb.bulge() <= flat) {
            // Two nearly straight pieces meeting at the common vertex cannot cross elsewhere.
            let at_vertex = shared.is_some_and(|(sa, sb)| (sa == a0 || sa == a1) && (sb == b0 || sb == b1));
            if !at_vertex && segments_cross(pa.p0, pa.p2, pb.p0, pb.p2) {
                return true;
            }
            continue;
        }
        let (am, bm) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
        let (sa, sb) = (pa.bulge() > flat, pb.bulge() > flat);
        match (sa, sb) {
            (true, true) => {
                stack.extend([(a0, am, b0, bm, depth + 1), (a0, am, bm, b1, depth + 1)]);
                stack.extend([(am, a1, b0, bm, depth + 1), (am, a1, bm, b1, depth + 1)]);
            }
            (true, false) => stack.extend([(a0, am, b0, b1, depth + 1), (am, a1, b0, b1, depth + 1)]),
            _ => stack.extend([(a0, a1, b0, bm, depth + 1), (a0, a1, bm, b1, depth + 1)]),
        }
    }
    false
}

/// Curved boundary is free of crossings between distinct sides.
fn curved_boundary_is_simple(sides: &[SideCurve; 4]) -> bool {
    let scale = sides.iter().map(|c| (c.eval(1.0) - c.a).norm()).fold(0.0, f64::max);
    (0..4).all(|i| {
        (i + 1..4).all(|j| {
            let shared = match j - i {
                1 => Some((1.0, 0.0)),
                3 => Some((0.0, 1.0)),
                _ => None,
            };
            !sides_cross(&sides[i], &sides[j], shared, scale)
        })
    })
}

/// Assemble the upstream cell of `cell` from the traced feet.
pub fn build_upstream(mesh: &Mesh, cell: CellId, traces: &TracePointSet, mode: UpstreamMode) -> Result<UpstreamCell> {
    let (i, j) = (cell.ix as i64, cell.iy as i64);
    let v = |a, b| traces.foot(mesh, NodeKind::Vertex, a, b);
    let vertices = [v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)];
    let midnodes = traces.nodes.midpoints.then(|| {
        [
            traces.foot(mesh, NodeKind::HorizontalMid, i, j),
            traces.foot(mesh, NodeKind::VerticalMid, i + 1, j),
            traces.foot(mesh, NodeKind::HorizontalMid, i, j + 1),
            traces.foot(mesh, NodeKind::VerticalMid, i, j),
        ]
    });
    build_from_points(cell, vertices, midnodes, mode)
}

/// Assemble an upstream cell from explicit points (vertices counterclockwise).
pub fn build_from_points(
    cell: CellId,
    vertices: [Point; 4],
    midnodes: Option<[Point; 4]>,
    mode: UpstreamMode,
) -> Result<UpstreamCell> {
    let degenerate = |reason: &str| SldgError::DegenerateUpstream { cell, reason: reason.to_string() };
    if !vertices.iter().chain(midnodes.iter().flatten()).all(|p| p.x.is_finite() && p.y.is_finite()) {
        return Err(degenerate("non-finite traced point"));
    }
    let sides: [SideCurve; 4] = std::array::from_fn(|k| {
        let (p0, p1) = (vertices[k], vertices[(k + 1) % 4]);
        match (mode, midnodes) {
            (UpstreamMode::Qc, Some(m)) => SideCurve::quadratic(p0, m[k], p1),
            _ => SideCurve::straight(p0, p1),
        }
    });
    if mode == UpstreamMode::Qc && midnodes.is_none() {
        return Err(SldgError::InvalidArgument("curved upstream cells need traced edge midpoints".into()));
    }
    let uc = UpstreamCell { cell, mode, vertices, midnodes, sides };
    if uc.area() <= 0.0 {
        return Err(degenerate("non-positive oriented area"));
    }
    let simple = match (mode, midnodes) {
        // The control octagon can be simple while the parabolas cross.
        (UpstreamMode::Qc, Some(_)) => curved_boundary_is_simple(&uc.sides),
        _ => polygon_is_simple(&vertices),
    };
    if !simple {
        return Err(degenerate("self-intersecting boundary"));
    }
    Ok(uc)
}

/// `max_j |area_j - |A_j|| / |A_j|`.
pub fn area_deviation(cells: &[UpstreamCell], mesh: &Mesh) -> f64 {
    let a0 = mesh.cell_area();
    cells.iter().map(|c| (c.area() - a0).abs() / a0).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    /// Piece of the upstream boundary.
    Outer,
    /// Grid-aligned piece inside the upstream cell.
    Inner,
}

/// Oriented piece `curve(s)` for `s` from `s0` to `s1`, owned by the unwrapped cell `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub curve: SideCurve,
    pub s0: f64,
    pub s1: f64,
    pub col: i64,
    pub row: i64,
    pub owner: CellId,
}

impl Segment {
    pub fn start(&self) -> Point {
        self.curve.eval(self.s0)
    }

    pub fn end(&self) -> Point {
        self.curve.eval(self.s1)
    }

    /// Whether the segment is grid-aligned and vertical.
    pub fn is_vertical_inner(&self) -> bool {
        self.kind == SegmentKind::Inner && self.curve.b.x == 0.0
    }

    /// `int f(x, y) dy` along the segment with an `n`-point Gauss rule in the parameter.
    pub fn integrate_dy(&self, rule: &LineRule, mut f: impl FnMut(Point) -> f64) -> f64 {
        rule.integrate(self.s0, self.s1, |s| f(self.curve.eval(s)) * self.curve.deriv(s).y)
    }
}

/// Decomposition of one upstream cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub cell: CellId,
    pub outer: Vec<Segment>,
    pub inner: Vec<Segment>,
    /// Distinct Eulerian cells overlapped by the upstream cell.
    pub covered: Vec<CellId>,
}

/// Grid-line index a coordinate falls in, treating near-line values as on the line.
fn classify(v: f64, origin: f64, h: f64) -> i64 {
    let t = (v - origin) / h;
    let r = t.round();
    if (t - r).abs() < 1e-10 {
        r as i64
    } else {
        t.floor() as i64
    }
}

/// Like [`classify`], but a piece running along a grid line is given to the cell
/// on its interior side; `inward` is the component of the inward normal across the line.
fn classify_piece(v: f64, inward: f64, origin: f64, h: f64) -> i64 {
    let t = (v - origin) / h;
    let r = t.round();
    if (t - r).abs() < 1e-10 {
        if inward < 0.0 {
            r as i64 - 1
        } else {
            r as i64
        }
    } else {
        t.floor() as i64
    }
}

struct Piece {
    side: usize,
    s0: f64,
    s1: f64,
    col: i64,
    row: i64,
}

/// An event where the boundary crosses a grid line, with +1 opening and -1 closing an inner interval.
struct Crossing {
    line: i64,
    at: f64,
    sign: i32,
}

/// Split the boundary and find the inner segments.
pub fn clip(uc: &UpstreamCell, mesh: &Mesh) -> Result<SegmentSet> {
    let (x0, y0) = (mesh.domain.x_min, mesh.domain.y_min);
    let (dx, dy) = (mesh.dx, mesh.dy);
    let fail = |reason: String| SldgError::ClipFailure { cell: uc.cell, reason };

    let mut pieces: Vec<Piece> = Vec::with_capacity(16);
    let mut params = Vec::with_capacity(12);
    for (k, side) in uc.sides.iter().enumerate() {
        params.clear();
        let (xl, xh) = SideCurve::range(side.a.x, side.b.x, side.c.x);
        for i in classify(xl, x0, dx)..=classify(xh, x0, dx) {
            SideCurve::roots(side.a.x, side.b.x, side.c.x, x0 + i as f64 * dx, &mut params);
        }
        let (yl, yh) = SideCurve::range(side.a.y, side.b.y, side.c.y);
        for j in classify(yl, y0, dy)..=classify(yh, y0, dy) {
            SideCurve::roots(side.a.y, side.b.y, side.c.y, y0 + j as f64 * dy, &mut params);
        }
        params.push(0.0);
        params.push(1.0);
        params.sort_by(|a, b| a.partial_cmp(b).unwrap());
        params.dedup_by(|a, b| (*a - *b).abs() <= SNAP_TOL);
        if *params.last().unwrap() != 1.0 {
            *params.last_mut().unwrap() = 1.0;
        }
        for w in params.windows(2) {
            let sm = 0.5 * (w[0] + w[1]);
            let (mid, dir) = (side.eval(sm), side.deriv(sm));
            pieces.push(Piece {
                side: k,
                s0: w[0],
                s1: w[1],
                col: classify_piece(mid.x, -dir.y, x0, dx),
                row: classify_piece(mid.y, dir.x, y0, dy),
            });
        }
    }

    // Events at class changes between consecutive pieces (cyclically).
    let mut vertical = Vec::new();
    let mut horizontal = Vec::new();
    let n = pieces.len();
    for p in 0..n {
        let (a, b) = (&pieces[p], &pieces[(p + 1) % n]);
        let at = uc.sides[a.side].eval(a.s1);
        if a.col != b.col {
            let (lo, hi, sign) = if b.col > a.col { (a.col, b.col, 1) } else { (b.col, a.col, -1) };
            for line in lo + 1..=hi {
                vertical.push(Crossing { line, at: at.y, sign });
            }
        }
        if a.row != b.row {
            // Moving up closes an interval (interior on the left, i.e. at smaller x).
            let (lo, hi, sign) = if b.row > a.row { (a.row, b.row, -1) } else { (b.row, a.row, 1) };
            for line in lo + 1..=hi {
                horizontal.push(Crossing { line, at: at.x, sign });
            }
        }
    }

    let wrap = |col: i64, row: i64| mesh.wrap_index(col, row);
    let outer: Vec<Segment> = pieces
        .iter()
        .map(|p| Segment {
            kind: SegmentKind::Outer,
            curve: uc.sides[p.side],
            s0: p.s0,
            s1: p.s1,
            col: p.col,
            row: p.row,
            owner: wrap(p.col, p.row),
        })
        .collect();

    let mut inner = Vec::new();
    let intervals = |events: &mut Vec<Crossing>, h: f64| -> Result<Vec<(i64, f64, f64)>> {
        events.sort_by(|a, b| a.line.cmp(&b.line).then(a.at.partial_cmp(&b.at).unwrap()));
        let mut out = Vec::new();
        let mut start = 0;
        while start < events.len() {
            let line = events[start].line;
            let mut end = start;
            while end < events.len() && events[end].line == line {
                end += 1;
            }
            let mut w = 0;
            for e in start..end {
                w += events[e].sign;
                if e + 1 < end {
                    let (lo, hi) = (events[e].at, events[e + 1].at);
                    if w != 0 && w != 1 && hi - lo > 1e-9 * h {
                        return Err(fail(format!("winding number {w} along grid line {line}")));
                    }
                    if w == 1 && hi > lo {
                        out.push((line, lo, hi));
                    }
                }
            }
            if w != 0 {
                return Err(fail(format!("unbalanced crossings on grid line {line}")));
            }
            start = end;
        }
        Ok(out)
    };

    for (line, lo, hi) in intervals(&mut vertical, dy)? {
        let x = x0 + line as f64 * dx;
        for r in classify(lo, y0, dy)..=classify(hi, y0, dy) {
            let a = lo.max(y0 + r as f64 * dy);
            let b = hi.min(y0 + (r + 1) as f64 * dy);
            if b <= a {
                continue;
            }
            // Partners share one curve with reversed parameter ranges, so their endpoints agree bitwise.
            let up = SideCurve::straight(Point::new(x, a), Point::new(x, b));
            let seg = |s0, s1, col| Segment { kind: SegmentKind::Inner, curve: up, s0, s1, col, row: r, owner: wrap(col, r) };
            inner.push(seg(0.0, 1.0, line - 1));
            inner.push(seg(1.0, 0.0, line));
        }
    }
    for (line, lo, hi) in intervals(&mut horizontal, dx)? {
        let y = y0 + line as f64 * dy;
        for c in classify(lo, x0, dx)..=classify(hi, x0, dx) {
            let a = lo.max(x0 + c as f64 * dx);
            let b = hi.min(x0 + (c + 1) as f64 * dx);
            if b <= a {
                continue;
            }
            // Cell below traverses right to left along its top edge, the cell above left to right.
            let right = SideCurve::straight(Point::new(a, y), Point::new(b, y));
            let seg = |s0, s1, row| Segment { kind: SegmentKind::Inner, curve: right, s0, s1, col: c, row, owner: wrap(c, row) };
            inner.push(seg(1.0, 0.0, line - 1));
            inner.push(seg(0.0, 1.0, line));
        }
    }

    let mut covered: Vec<CellId> = outer.iter().chain(&inner).map(|s| s.owner).collect();
    covered.sort();
    covered.dedup();
    let set = SegmentSet { cell: uc.cell, outer, inner, covered };

    // Every sub-region must have non-negative area.
    let tol = 1e-9 * mesh.cell_area();
    for (&(c, r), &a) in &set.sub_areas(mesh) {
        if a < -tol {
            return Err(fail(format!("negative sub-area {a:.3e} in cell ({c}, {r})")));
        }
    }
    Ok(set)
}

impl SegmentSet {
    /// Area of each sub-region, keyed by unwrapped `(col, row)`, from `int (x - x_l) dy`.
    pub fn sub_areas(&self, mesh: &Mesh) -> BTreeMap<(i64, i64), f64> {
        let rule = LineRule::new(2);
        let mut out = BTreeMap::new();
        for s in self.outer.iter().chain(&self.inner) {
            let xl = mesh.domain.x_min + s.col as f64 * mesh.dx;
            let v = s.integrate_dy(&rule, |p| p.x - xl);
            *out.entry((s.col, s.row)).or_insert(0.0) += v;
        }
        out
    }

    /// Plain-text dump: one line per segment with kind, owner and endpoints.
    pub fn to_debug_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# upstream cell {} {}", self.cell.ix, self.cell.iy);
        for seg in self.outer.iter().chain(&self.inner) {
            let (a, b) = (seg.start(), seg.end());
            let kind = match seg.kind {
                SegmentKind::Outer => "outer",
                SegmentKind::Inner => "inner",
            };
            let _ = writeln!(
                s,
                "{kind} {} {} {:.15e} {:.15e} {:.15e} {:.15e}",
                seg.owner.ix, seg.owner.iy, a.x, a.y, b.x, b.y
            );
        }
        s
    }
}
