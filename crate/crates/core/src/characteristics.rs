//! Backward tracing of grid nodes along `dx/dt = E2, dy/dt = -E1`.
//!
//! Nodes are mesh vertices and, when curved upstream sides or the eight-node
//! reconstruction need them, edge midpoints. Each node is traced once and
//! stored as a displacement, so neighbouring upstream cells share their
//! traced points bit for bit even across the periodic seam.

use rayon::prelude::*;

use crate::dg_space::DGField;
use crate::error::{Result, SldgError};
use crate::grid::{CellId, Mesh, Point};
use crate::ldg_poisson::VectorField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceOrder {
    First = 1,
    Second = 2,
    Third = 3,
}

impl TraceOrder {
    pub fn from_int(tau: usize) -> Result<Self> {
        match tau {
            1 => Ok(TraceOrder::First),
            2 => Ok(TraceOrder::Second),
            3 => Ok(TraceOrder::Third),
            _ => Err(SldgError::InvalidArgument(format!("time order must be 1, 2 or 3, got {tau}"))),
        }
    }

    pub fn as_int(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStep {
    pub dt: f64,
    pub cfl: f64,
    /// `max |E2|`
    pub a: f64,
    /// `max |E1|`
    pub b: f64,
}

/// `dt = cfl / (a/dx + b/dy)` with `a = max|E2|`, `b = max|E1|` over quadrature points.
pub fn compute_dt(e: &VectorField, cfl: f64) -> Result<TimeStep> {
    if !(cfl > 0.0 && cfl.is_finite()) {
        return Err(SldgError::InvalidArgument(format!("cfl must be positive, got {cfl}")));
    }
    let (a, b) = e.max_abs_components();
    let m = &e.e1.mesh;
    let rate = a / m.dx + b / m.dy;
    if rate == 0.0 {
        return Err(SldgError::StationaryField);
    }
    Ok(TimeStep { dt: cfl / rate, cfl, a, b })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Vertex,
    /// Midpoint of a horizontal edge, `(x_i + dx/2, y_j)`.
    HorizontalMid,
    /// Midpoint of a vertical edge, `(x_i, y_j + dy/2)`.
    VerticalMid,
}

/// Periodic set of traced nodes: `nx * ny` vertices, optionally followed by the
/// horizontal and vertical edge midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceNodes {
    pub nx: usize,
    pub ny: usize,
    pub midpoints: bool,
}

impl TraceNodes {
    pub fn new(mesh: &Mesh, midpoints: bool) -> Self {
        TraceNodes { nx: mesh.nx, ny: mesh.ny, midpoints }
    }

    pub fn len(&self) -> usize {
        let n = self.nx * self.ny;
        if self.midpoints {
            3 * n
        } else {
            n
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, kind: NodeKind, i: i64, j: i64) -> usize {
        let n = self.nx * self.ny;
        let ii = i.rem_euclid(self.nx as i64) as usize;
        let jj = j.rem_euclid(self.ny as i64) as usize;
        let base = match kind {
            NodeKind::Vertex => 0,
            NodeKind::HorizontalMid => n,
            NodeKind::VerticalMid => 2 * n,
        };
        base + jj * self.nx + ii
    }

    pub fn node(&self, idx: usize) -> (NodeKind, usize, usize) {
        let n = self.nx * self.ny;
        let kind = match idx / n {
            0 => NodeKind::Vertex,
            1 => NodeKind::HorizontalMid,
            _ => NodeKind::VerticalMid,
        };
        let r = idx % n;
        (kind, r % self.nx, r / self.nx)
    }

    /// Eulerian position of a node, with unwrapped indices.
    pub fn position(mesh: &Mesh, kind: NodeKind, i: i64, j: i64) -> Point {
        let v = mesh.vertex(i, j);
        match kind {
            NodeKind::Vertex => v,
            NodeKind::HorizontalMid => Point::new(v.x + 0.5 * mesh.dx, v.y),
            NodeKind::VerticalMid => Point::new(v.x, v.y + 0.5 * mesh.dy),
        }
    }

    /// Cells sharing the node and the node's reference coordinates in each of them.
    fn adjacent(&self, kind: NodeKind, i: usize, j: usize) -> ([(CellId, f64, f64); 4], usize) {
        let (nx, ny) = (self.nx, self.ny);
        let l = (i + nx - 1) % nx;
        let d = (j + ny - 1) % ny;
        let c = |a, b| CellId::new(a, b);
        match kind {
            NodeKind::Vertex => (
                [(c(i, j), -1.0, -1.0), (c(l, j), 1.0, -1.0), (c(i, d), -1.0, 1.0), (c(l, d), 1.0, 1.0)],
                4,
            ),
            NodeKind::HorizontalMid => {
                ([(c(i, j), 0.0, -1.0), (c(i, d), 0.0, 1.0), (c(i, j), 0.0, -1.0), (c(i, j), 0.0, -1.0)], 2)
            }
            NodeKind::VerticalMid => {
                ([(c(i, j), -1.0, 0.0), (c(l, j), 1.0, 0.0), (c(i, j), -1.0, 0.0), (c(i, j), -1.0, 0.0)], 2)
            }
        }
    }

    /// Mean of the one-sided limits of `f` at node `idx`.
    pub fn average(&self, f: &DGField, idx: usize) -> f64 {
        let (kind, i, j) = self.node(idx);
        let (cells, n) = self.adjacent(kind, i, j);
        cells[..n].iter().map(|&(c, xi, eta)| f.evaluate_reference(c, xi, eta)).sum::<f64>() / n as f64
    }

    /// Mean of the one-sided limits of `f` and of its gradient at node `idx`.
    pub fn average_with_gradient(&self, f: &DGField, idx: usize) -> (f64, f64, f64) {
        let (kind, i, j) = self.node(idx);
        let (cells, n) = self.adjacent(kind, i, j);
        let mut s = (0.0, 0.0, 0.0);
        for &(c, xi, eta) in &cells[..n] {
            let (v, gx, gy) = f.value_and_gradient(c, xi, eta);
            s.0 += v;
            s.1 += gx;
            s.2 += gy;
        }
        let w = 1.0 / n as f64;
        (s.0 * w, s.1 * w, s.2 * w)
    }
}

/// Upstream feet of all nodes, stored as displacements from the Eulerian nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePointSet {
    pub nodes: TraceNodes,
    pub disp: Vec<Point>,
}

impl TracePointSet {
    pub fn identity(nodes: TraceNodes) -> Self {
        TracePointSet { nodes, disp: vec![Point::default(); nodes.len()] }
    }

    /// Same displacement for every node.
    pub fn uniform(nodes: TraceNodes, d: Point) -> Self {
        TracePointSet { nodes, disp: vec![d; nodes.len()] }
    }

    /// Build from a map `Eulerian position -> foot` evaluated at every node.
    pub fn from_map(mesh: &Mesh, nodes: TraceNodes, f: impl Fn(Point) -> Point + Sync) -> Self {
        let disp = (0..nodes.len())
            .into_par_iter()
            .map(|idx| {
                let (k, i, j) = nodes.node(idx);
                let p = TraceNodes::position(mesh, k, i as i64, j as i64);
                f(p) - p
            })
            .collect();
        TracePointSet { nodes, disp }
    }

    /// Foot of node `(kind, i, j)` for unwrapped indices (consistent across the periodic seam).
    pub fn foot(&self, mesh: &Mesh, kind: NodeKind, i: i64, j: i64) -> Point {
        TraceNodes::position(mesh, kind, i, j) + self.disp[self.nodes.index(kind, i, j)]
    }

    fn foot_of(&self, mesh: &Mesh, idx: usize) -> Point {
        let (k, i, j) = self.nodes.node(idx);
        TraceNodes::position(mesh, k, i as i64, j as i64) + self.disp[idx]
    }

    pub fn is_finite(&self) -> bool {
        self.disp.iter().all(|d| d.x.is_finite() && d.y.is_finite())
    }
}

/// Value and physical gradient of `f` at an arbitrary point, from the owning cell.
fn value_gradient_at(f: &DGField, p: Point) -> (f64, f64, f64) {
    let m = &f.mesh;
    let c = m.locate_cell(p);
    let (xi, eta) = m.to_reference(c, m.wrap_point(p));
    f.value_and_gradient(c, xi, eta)
}

/// First-order feet: `x* = x - E2 dt`, `y* = y + E1 dt` with node-averaged `E` at `t^n`.
pub fn trace_order1(nodes: TraceNodes, e_n: &VectorField, dt: f64) -> TracePointSet {
    let disp = (0..nodes.len())
        .into_par_iter()
        .map(|q| {
            let e1 = nodes.average(&e_n.e1, q);
            let e2 = nodes.average(&e_n.e2, q);
            Point::new(-e2 * dt, e1 * dt)
        })
        .collect();
    TracePointSet { nodes, disp }
}

/// Second-order feet: trapezoid of the predicted node field at `t^{n+1}` and the
/// `t^n` field at the first-order foot.
pub fn trace_order2(
    e_n: &VectorField,
    e_np1_pred: &VectorField,
    trace1: &TracePointSet,
    dt: f64,
) -> TracePointSet {
    let nodes = trace1.nodes;
    let mesh = &e_n.e1.mesh;
    let disp = (0..nodes.len())
        .into_par_iter()
        .map(|q| {
            let p1 = trace1.foot_of(mesh, q);
            let e1 = nodes.average(&e_np1_pred.e1, q) + e_n.e1.evaluate_at(p1);
            let e2 = nodes.average(&e_np1_pred.e2, q) + e_n.e2.evaluate_at(p1);
            Point::new(-0.5 * e2 * dt, 0.5 * e1 * dt)
        })
        .collect();
    TracePointSet { nodes, disp }
}

/// Fields needed by the third-order corrector.
#[derive(Debug, Clone, Copy)]
pub struct ThirdOrderInputs<'a> {
    pub e_n: &'a VectorField,
    pub de_dt_n: &'a VectorField,
    /// Field of the second-order predicted solution at `t^{n+1}`.
    pub e_np1: &'a VectorField,
    pub de_dt_np1: &'a VectorField,
}

/// Material derivative `dE_s/dt = E_s,t + E_s,x E2 - E_s,y E1` from sampled ingredients.
fn material(dt_s: f64, grad_s: (f64, f64), e1: f64, e2: f64) -> f64 {
    dt_s + grad_s.0 * e2 - grad_s.1 * e1
}

/// Third-order feet from the second-order prediction.
pub fn trace_order3(inp: ThirdOrderInputs<'_>, trace2: &TracePointSet, dt: f64) -> TracePointSet {
    let nodes = trace2.nodes;
    let mesh = &inp.e_n.e1.mesh;
    let disp = (0..nodes.len())
        .into_par_iter()
        .map(|q| {
            // At the Eulerian node, t^{n+1}, second-order prediction.
            let (a1, a1x, a1y) = nodes.average_with_gradient(&inp.e_np1.e1, q);
            let (a2, a2x, a2y) = nodes.average_with_gradient(&inp.e_np1.e2, q);
            let t1 = nodes.average(&inp.de_dt_np1.e1, q);
            let t2 = nodes.average(&inp.de_dt_np1.e2, q);
            let d1_new = material(t1, (a1x, a1y), a1, a2);
            let d2_new = material(t2, (a2x, a2y), a1, a2);
            // At the second-order foot, t^n.
            let p2 = trace2.foot_of(mesh, q);
            let (b1, b1x, b1y) = value_gradient_at(&inp.e_n.e1, p2);
            let (b2, b2x, b2y) = value_gradient_at(&inp.e_n.e2, p2);
            let s1 = inp.de_dt_n.e1.evaluate_at(p2);
            let s2 = inp.de_dt_n.e2.evaluate_at(p2);
            let d1_old = material(s1, (b1x, b1y), b1, b2);
            let d2_old = material(s2, (b2x, b2y), b1, b2);
            let h = 0.5 * dt * dt;
            Point::new(
                -a2 * dt + h * (2.0 / 3.0 * d2_new + 1.0 / 3.0 * d2_old),
                a1 * dt - h * (2.0 / 3.0 * d1_new + 1.0 / 3.0 * d1_old),
            )
        })
        .collect();
    TracePointSet { nodes, disp }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg_space::Basis;
    use crate::grid::Domain;
    use std::f64::consts::PI;

    fn mesh(n: usize) -> Mesh {
        Mesh::new(Domain::new(0.0, 2.0 * PI, 0.0, 2.0 * PI).unwrap(), n, n).unwrap()
    }

    fn field(m: &Mesh, k: usize, e1: impl Fn(Point) -> f64, e2: impl Fn(Point) -> f64) -> VectorField {
        let b = Basis::new(k);
        VectorField { e1: DGField::project(m, &b, e1), e2: DGField::project(m, &b, e2) }
    }

    #[test]
    fn dt_formula() {
        let m = mesh(100);
        let e = field(&m, 1, |_| 1.0, |_| -1.0);
        let ts = compute_dt(&e, 1.0).unwrap();
        assert!((ts.dt - PI / 100.0).abs() < 1e-14);
        let ts2 = compute_dt(&e, 2.0).unwrap();
        assert!((ts2.dt - 2.0 * ts.dt).abs() < 1e-15);
        let z = field(&m, 1, |_| 0.0, |_| 0.0);
        assert_eq!(compute_dt(&z, 1.0), Err(SldgError::StationaryField));
        assert!(compute_dt(&e, 0.0).is_err());
    }

    #[test]
    fn dt_for_stationary_example_field() {
        // u = (-sin x cos y, cos x sin y) = (E2, -E1)
        let m = mesh(40);
        let e = field(&m, 3, |p| -p.x.cos() * p.y.sin(), |p| -p.x.sin() * p.y.cos());
        let ts = compute_dt(&e, 1.0).unwrap();
        assert!((ts.a - 1.0).abs() < 0.02 && (ts.b - 1.0).abs() < 0.02, "{ts:?}");
    }

    #[test]
    fn zero_field_is_identity_for_all_orders() {
        let m = mesh(8);
        let nodes = TraceNodes::new(&m, true);
        let z = field(&m, 2, |_| 0.0, |_| 0.0);
        let t1 = trace_order1(nodes, &z, 0.3);
        let t2 = trace_order2(&z, &z, &t1, 0.3);
        let t3 = trace_order3(ThirdOrderInputs { e_n: &z, de_dt_n: &z, e_np1: &z, de_dt_np1: &z }, &t2, 0.3);
        for t in [&t1, &t2, &t3] {
            assert!(t.disp.iter().all(|d| *d == Point::default()));
        }
    }

    #[test]
    fn constant_fields_give_straight_lines() {
        let m = mesh(8);
        let nodes = TraceNodes::new(&m, false);
        let e = field(&m, 1, |_| 0.0, |_| 1.0);
        let t1 = trace_order1(nodes, &e, 0.1);
        let f = t1.foot(&m, NodeKind::Vertex, 3, 2);
        let v = m.vertex(3, 2);
        assert!((f.x - (v.x - 0.1)).abs() < 1e-14 && (f.y - v.y).abs() < 1e-14);
        let e = field(&m, 1, |_| 1.0, |_| 0.0);
        let t1 = trace_order1(nodes, &e, 0.1);
        let f = t1.foot(&m, NodeKind::Vertex, 3, 2);
        assert!((f.y - (v.y + 0.1)).abs() < 1e-14 && (f.x - v.x).abs() < 1e-14);
        let t2 = trace_order2(&e, &e, &t1, 0.1);
        let zero = field(&m, 1, |_| 0.0, |_| 0.0);
        let t3 = trace_order3(ThirdOrderInputs { e_n: &e, de_dt_n: &zero, e_np1: &e, de_dt_np1: &zero }, &t2, 0.1);
        for (a, b) in t1.disp.iter().zip(&t2.disp).chain(t1.disp.iter().zip(&t3.disp)) {
            assert!((a.x - b.x).abs() < 1e-14 && (a.y - b.y).abs() < 1e-14);
        }
    }

    #[test]
    fn feet_are_consistent_across_the_seam() {
        let m = mesh(6);
        let nodes = TraceNodes::new(&m, true);
        let e = field(&m, 2, |p| p.x.sin(), |p| p.y.cos());
        let t = trace_order1(nodes, &e, 0.2);
        let a = t.foot(&m, NodeKind::Vertex, 6, 2);
        let b = t.foot(&m, NodeKind::Vertex, 0, 2);
        assert!((a.x - b.x - 2.0 * PI).abs() < 1e-13 && a.y == b.y);
    }

    /// Rigid rotation about (pi, pi) with unit angular speed: u = (-(y - pi), x - pi).
    fn rotation(m: &Mesh) -> VectorField {
        // u = (E2, -E1) so E1 = -(x - pi), E2 = -(y - pi).
        field(m, 3, |p| -(p.x - PI), |p| -(p.y - PI))
    }

    fn exact_rotation_foot(p: Point, dt: f64) -> Point {
        let (s, c) = (-dt).sin_cos();
        let (x, y) = (p.x - PI, p.y - PI);
        Point::new(PI + c * x - s * y, PI + s * x + c * y)
    }

    fn max_error(t: &TracePointSet, m: &Mesh, dt: f64, probes: &[(i64, i64)]) -> f64 {
        probes
            .iter()
            .map(|&(i, j)| {
                let f = t.foot(m, NodeKind::Vertex, i, j);
                let want = exact_rotation_foot(m.vertex(i, j), dt);
                (f - want).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn second_order_decay_on_rotation() {
        let m = mesh(32);
        let nodes = TraceNodes::new(&m, false);
        let e = rotation(&m);
        let probes = [(12, 14), (16, 20), (19, 13)];
        let mut errs = Vec::new();
        for dt in [0.2, 0.1, 0.05] {
            let t1 = trace_order1(nodes, &e, dt);
            let t2 = trace_order2(&e, &e, &t1, dt);
            errs.push(max_error(&t2, &m, dt, &probes));
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "order {order} from {errs:?}");
        }
    }

    #[test]
    fn third_order_decay_on_steady_swirl() {
        // Steady cellular flow u = (-sin x cos y, cos x sin y); reference feet by RK4 with tiny steps.
        let m = mesh(64);
        let nodes = TraceNodes::new(&m, false);
        let e = field(&m, 3, |p| -p.x.cos() * p.y.sin(), |p| -p.x.sin() * p.y.cos());
        let zero = field(&m, 3, |_| 0.0, |_| 0.0);
        let vel = |p: Point| Point::new(-p.x.sin() * p.y.cos(), p.x.cos() * p.y.sin());
        let reference = |p: Point, dt: f64| {
            let n = 2000;
            let h = -dt / n as f64;
            let mut q = p;
            for _ in 0..n {
                let k1 = vel(q);
                let k2 = vel(q + k1 * (0.5 * h));
                let k3 = vel(q + k2 * (0.5 * h));
                let k4 = vel(q + k3 * h);
                q = q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
            q
        };
        let probes = [(10i64, 20i64), (40, 13), (25, 50)];
        let mut errs = Vec::new();
        for dt in [0.4, 0.2, 0.1] {
            let t1 = trace_order1(nodes, &e, dt);
            let t2 = trace_order2(&e, &e, &t1, dt);
            let t3 = trace_order3(ThirdOrderInputs { e_n: &e, de_dt_n: &zero, e_np1: &e, de_dt_np1: &zero }, &t2, dt);
            let err = probes
                .iter()
                .map(|&(i, j)| (t3.foot(&m, NodeKind::Vertex, i, j) - reference(m.vertex(i, j), dt)).norm())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 2.6, "order {order} from {errs:?}");
        }
    }

    #[test]
    fn continuous_in_dt() {
        let m = mesh(16);
        let nodes = TraceNodes::new(&m, true);
        let e = field(&m, 3, |p| -p.x.cos() * p.y.sin(), |p| -p.x.sin() * p.y.cos());
        let a = trace_order2(&e, &e, &trace_order1(nodes, &e, 0.3), 0.3);
        let b = trace_order2(&e, &e, &trace_order1(nodes, &e, 0.3 + 1e-9), 0.3 + 1e-9);
        let diff = a.disp.iter().zip(&b.disp).map(|(p, q)| (*p - *q).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-7);
    }

    #[test]
    fn midpoint_averages_use_two_limits() {
        let m = mesh(4);
        let nodes = TraceNodes::new(&m, true);
        let b = Basis::new(1);
        let mut f = DGField::zeros(&m, &b);
        f.cell_coeffs_mut(CellId::new(1, 1))[0] = 2.0;
        f.cell_coeffs_mut(CellId::new(1, 0))[0] = 4.0;
        assert!((nodes.average(&f, nodes.index(NodeKind::HorizontalMid, 1, 1)) - 3.0).abs() < 1e-15);
        f.cell_coeffs_mut(CellId::new(0, 1))[0] = 6.0;
        assert!((nodes.average(&f, nodes.index(NodeKind::VerticalMid, 1, 1)) - 4.0).abs() < 1e-15);
    }
}
