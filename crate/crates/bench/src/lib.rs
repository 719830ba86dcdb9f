//! Shared inputs for the benchmarks.

use std::f64::consts::PI;

use sldg_core::characteristics::{TraceNodes, TracePointSet};
use sldg_core::sldg_update::needs_midpoints;
use sldg_core::{Basis, DGField, Domain, Mesh, Point, UpstreamMode};

pub fn periodic_mesh(n: usize) -> Mesh {
    Mesh::new(Domain::new(0.0, 2.0 * PI, 0.0, 2.0 * PI).unwrap(), n, n).unwrap()
}

/// The stationary vorticity `-2 sin x sin y` projected onto degree `k`.
pub fn accuracy_field(mesh: &Mesh, k: usize) -> DGField {
    DGField::project(mesh, &Basis::new(k), |p| -2.0 * p.x.sin() * p.y.sin())
}

/// Feet of the cellular flow `u = (-sin x cos y, cos x sin y)` after one explicit step `dt`,
/// which gives curved, area-changing upstream cells.
pub fn cellular_traces(mesh: &Mesh, mode: UpstreamMode, degree: usize, dt: f64) -> TracePointSet {
    let nodes = TraceNodes::new(mesh, needs_midpoints(mode, degree));
    TracePointSet::from_map(mesh, nodes, |p| {
        p - Point::new(-p.x.sin() * p.y.cos(), p.x.cos() * p.y.sin()) * dt
    })
}
