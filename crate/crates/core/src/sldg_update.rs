//! Conservative remap of a DG field onto the Eulerian mesh.
//!
//! For each Eulerian cell `A_j` and basis function `Psi_m`,
//! `|A_j| c_m = int over A_j* of rho^n psi_m*`, where `psi_m*` is the least-squares
//! polynomial matching `Psi_m` at the traced nodes. The integral is split over
//! the sub-regions `A_j* ∩ A_l` and turned into line integrals of
//! `Q_l(x, y) = int_{x_l}^{x} rho_l psi* dx'` with `x_l` the left edge of `A_l`.

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use crate::characteristics::TracePointSet;
use crate::dg_space::{Basis, DGField};
use crate::error::{Result, SldgError};
use crate::grid::{CellId, Mesh, Point};
use crate::quadrature::LineRule;
use crate::upstream_geometry::{area_deviation, build_upstream, clip, Segment, SegmentSet, UpstreamCell, UpstreamMode};

#[inline]
fn eval_monomials(k: usize, x: f64, y: f64, out: &mut [f64]) {
    let mut px = [1.0; 4];
    let mut py = [1.0; 4];
    for i in 1..=k {
        px[i] = px[i - 1] * x;
        py[i] = py[i - 1] * y;
    }
    let mut n = 0;
    for total in 0..=k {
        for q in 0..=total {
            out[n] = px[total - q] * py[q];
            n += 1;
        }
    }
}

/// Upstream approximations `psi_m*` of every basis function of one Eulerian cell.
///
/// Polynomials are expanded in monomials of `X = (x - xc)/dx`, `Y = (y - yc)/dy`
/// where `(xc, yc)` is the mean of the traced vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionRecon {
    pub degree: usize,
    pub center: Point,
    pub dx: f64,
    pub dy: f64,
    /// Row `m` holds the monomial coefficients of `psi_m*`.
    pub coeffs: Vec<f64>,
    /// Sum over basis functions of the squared misfit at the constraint nodes.
    pub residual: f64,
}

impl TestFunctionRecon {
    pub fn dim(&self) -> usize {
        Basis::dim_of(self.degree)
    }

    /// Values of all `psi_m*` at a point.
    #[inline]
    pub fn eval_all(&self, p: Point, out: &mut [f64]) {
        let d = self.dim();
        let mut mono = [0.0; 10];
        eval_monomials(self.degree, (p.x - self.center.x) / self.dx, (p.y - self.center.y) / self.dy, &mut mono);
        for (m, o) in out.iter_mut().enumerate().take(d) {
            let row = &self.coeffs[m * d..(m + 1) * d];
            *o = row.iter().zip(&mono[..d]).map(|(a, b)| a * b).sum();
        }
    }

    pub fn eval(&self, m: usize, p: Point) -> f64 {
        let mut v = [0.0; 10];
        self.eval_all(p, &mut v);
        v[m]
    }
}

/// Reference positions of the constraint nodes: vertices, then edge midpoints.
const NODE_REF: [(f64, f64); 8] = [
    (-1.0, -1.0),
    (1.0, -1.0),
    (1.0, 1.0),
    (-1.0, 1.0),
    (0.0, -1.0),
    (1.0, 0.0),
    (0.0, 1.0),
    (-1.0, 0.0),
];

/// Least-squares fit of every basis function of degree `basis.degree`: four
/// vertex constraints for `P1`, vertices plus edge midpoints for `P2`.
pub fn reconstruct_test_function(uc: &UpstreamCell, mesh: &Mesh, basis: &Basis) -> Result<TestFunctionRecon> {
    let k = basis.degree;
    let d = basis.dim();
    let feet: Vec<Point> = match (k, uc.midnodes) {
        (0 | 1, _) => uc.vertices.to_vec(),
        (_, Some(m)) => uc.vertices.iter().chain(m.iter()).copied().collect(),
        (_, None) => {
            return Err(SldgError::InvalidArgument(format!(
                "degree {k} reconstruction needs traced edge midpoints"
            )))
        }
    };
    let nq = feet.len();
    let center = uc.center();
    let (dx, dy) = (mesh.dx, mesh.dy);
    let mut a = DMatrix::<f64>::zeros(nq, d);
    let mut mono = [0.0; 10];
    for (q, p) in feet.iter().enumerate() {
        eval_monomials(k, (p.x - center.x) / dx, (p.y - center.y) / dy, &mut mono);
        for j in 0..d {
            a[(q, j)] = mono[j];
        }
    }
    let mut b = DMatrix::<f64>::zeros(nq, d);
    let mut phi = [0.0; 10];
    for (q, &(xi, eta)) in NODE_REF.iter().take(nq).enumerate() {
        basis.eval(xi, eta, &mut phi[..d]);
        for m in 0..d {
            b[(q, m)] = phi[m];
        }
    }
    // Column scaling keeps the normal equations well conditioned.
    let scale: Vec<f64> = (0..d).map(|j| a.column(j).norm().max(1e-300)).collect();
    for j in 0..d {
        let s = scale[j];
        a.column_mut(j).iter_mut().for_each(|v| *v /= s);
    }
    let ata = a.transpose() * &a;
    let degenerate = |reason: String| SldgError::DegenerateUpstream { cell: uc.cell, reason };
    let chol = Cholesky::new(ata.clone()).ok_or_else(|| degenerate("rank-deficient constraint nodes".into()))?;
    let diag_ratio = {
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for j in 0..d {
            lo = lo.min(l[(j, j)].abs());
            hi = hi.max(l[(j, j)].abs());
        }
        lo / hi
    };
    if !(diag_ratio > 1e-7) {
        return Err(degenerate(format!("ill-conditioned constraint nodes (pivot ratio {diag_ratio:.2e})")));
    }
    let sol = chol.solve(&(a.transpose() * &b));
    let fit = &a * &sol;
    let residual = (&fit - &b).norm_squared();
    let mut coeffs = vec![0.0; d * d];
    for m in 0..d {
        for j in 0..d {
            coeffs[m * d + j] = sol[(j, m)] / scale[j];
        }
    }
    // The constant mode is reproduced exactly.
    coeffs[..d].iter_mut().for_each(|c| *c = 0.0);
    coeffs[0] = 1.0;
    Ok(TestFunctionRecon { degree: k, center, dx, dy, coeffs, residual })
}

/// `Q(x, y) = int_{x_l}^{x} rho(x', y) psi(x', y) dx'` for one owner cell and one test function.
pub struct LineIntegralKernel<'a> {
    pub rho: &'a DGField,
    pub col: i64,
    pub row: i64,
    pub psi: &'a dyn Fn(Point) -> f64,
}

impl LineIntegralKernel<'_> {
    pub fn left_edge(&self) -> f64 {
        self.rho.mesh.domain.x_min + self.col as f64 * self.rho.mesh.dx
    }

    pub fn q(&self, p: Point) -> f64 {
        let m = &self.rho.mesh;
        let owner = m.wrap_index(self.col, self.row);
        let n = self.rho.degree() + (self.rho.degree() + 2) / 2 + 2;
        LineRule::new(n).integrate(self.left_edge(), p.x, |x| {
            let q = Point::new(x, p.y);
            let (xi, eta) = m.to_reference_unwrapped(self.col, self.row, q);
            self.rho.evaluate_reference(owner, xi, eta) * (self.psi)(q)
        })
    }
}

/// Reusable quadrature rules for the remap of one degree.
#[derive(Debug, Clone)]
struct Rules {
    straight: LineRule,
    curved: LineRule,
    inner_x: LineRule,
}

impl Rules {
    fn new(k: usize) -> Self {
        // Q is of degree 2k + 1; along a quadratic arc Q dy has degree 4k + 3.
        Rules { straight: LineRule::new(k + 1), curved: LineRule::new(2 * k + 2), inner_x: LineRule::new(k + 1) }
    }
}

fn accumulate_segment(seg: &Segment, rules: &Rules, rho: &DGField, recon: &TestFunctionRecon, rhs: &mut [f64]) {
    let mesh = &rho.mesh;
    let xl = mesh.domain.x_min + seg.col as f64 * mesh.dx;
    // Inner copies on the owner's left edge and horizontal pieces carry no `Q dy`.
    let (p0, p1) = (seg.start(), seg.end());
    if seg.curve.is_straight() && (p0.y == p1.y || (p0.x == xl && p1.x == xl)) {
        return;
    }
    let rule = if seg.curve.is_straight() { &rules.straight } else { &rules.curved };
    let d = rho.dim();
    let coeffs = rho.cell_coeffs(seg.owner);
    let cx = mesh.domain.x_min + (seg.col as f64 + 0.5) * mesh.dx;
    let cy = mesh.domain.y_min + (seg.row as f64 + 0.5) * mesh.dy;
    let half_s = 0.5 * (seg.s1 - seg.s0);
    let mid_s = 0.5 * (seg.s1 + seg.s0);
    let mut psi = [0.0; 10];
    let mut acc = [0.0; 10];
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let s = mid_s + half_s * t;
        let p = seg.curve.eval(s);
        let ydot = seg.curve.deriv(s).y;
        let half_x = 0.5 * (p.x - xl);
        let mid_x = 0.5 * (p.x + xl);
        let eta = 2.0 * (p.y - cy) / mesh.dy;
        let outer_w = w * half_s * ydot * half_x;
        for (&u, &v) in rules.inner_x.nodes.iter().zip(&rules.inner_x.weights) {
            let x = mid_x + half_x * u;
            let xi = 2.0 * (x - cx) / mesh.dx;
            let r = rho.basis.eval_poly(coeffs, xi, eta);
            recon.eval_all(Point::new(x, p.y), &mut psi);
            let f = outer_w * v * r;
            for m in 0..d {
                acc[m] += f * psi[m];
            }
        }
    }
    for m in 0..d {
        rhs[m] += acc[m];
    }
}

/// `int over the upstream cell of rho psi_m*` for every basis function.
pub fn remap_rhs(segments: &SegmentSet, rho: &DGField, recon: &TestFunctionRecon) -> Vec<f64> {
    let rules = Rules::new(rho.degree());
    let mut rhs = vec![0.0; rho.dim()];
    for seg in segments.outer.iter().chain(&segments.inner) {
        accumulate_segment(seg, &rules, rho, recon, &mut rhs);
    }
    rhs
}

/// Upstream cells of every Eulerian cell.
pub fn build_all_upstream(mesh: &Mesh, traces: &TracePointSet, mode: UpstreamMode) -> Result<Vec<UpstreamCell>> {
    (0..mesh.n_cells())
        .into_par_iter()
        .map(|j| build_upstream(mesh, mesh.cell(j), traces, mode))
        .collect()
}

/// New coefficients of every cell from the upstream cells.
pub fn step(rho_n: &DGField, upstream: &[UpstreamCell]) -> Result<DGField> {
    let mesh = &rho_n.mesh;
    let d = rho_n.dim();
    let rules = Rules::new(rho_n.degree());
    let inv_area = 1.0 / mesh.cell_area();
    let blocks: Result<Vec<Vec<f64>>> = upstream
        .par_iter()
        .map(|uc| {
            let segs = clip(uc, mesh)?;
            let recon = reconstruct_test_function(uc, mesh, &rho_n.basis)?;
            let mut rhs = vec![0.0; d];
            for seg in segs.outer.iter().chain(&segs.inner) {
                accumulate_segment(seg, &rules, rho_n, &recon, &mut rhs);
            }
            rhs.iter_mut().for_each(|v| *v *= inv_area);
            Ok(rhs)
        })
        .collect();
    let mut out = DGField::zeros(mesh, &rho_n.basis);
    for (uc, block) in upstream.iter().zip(blocks?) {
        out.cell_coeffs_mut(uc.cell).copy_from_slice(&block);
    }
    Ok(out)
}

/// Outcome of building and remapping one stage.
#[derive(Debug, Clone)]
pub struct RemapResult {
    pub rho: DGField,
    pub theta: f64,
}

/// Build upstream cells from the traced nodes and return them with their area deviation.
pub fn upstream_with_theta(mesh: &Mesh, traces: &TracePointSet, mode: UpstreamMode) -> Result<(Vec<UpstreamCell>, f64)> {
    let cells = build_all_upstream(mesh, traces, mode)?;
    let theta = area_deviation(&cells, mesh);
    Ok((cells, theta))
}

/// Whether a mode and degree need traced edge midpoints.
pub fn needs_midpoints(mode: UpstreamMode, degree: usize) -> bool {
    mode == UpstreamMode::Qc || degree >= 2
}

/// Remap `rho_n` through the given traces in one call.
pub fn remap(rho_n: &DGField, traces: &TracePointSet, mode: UpstreamMode) -> Result<RemapResult> {
    let (cells, theta) = upstream_with_theta(&rho_n.mesh, traces, mode)?;
    Ok(RemapResult { rho: step(rho_n, &cells)?, theta })
}

/// Cell ids in the order the remap writes them (row-major).
pub fn cell_order(mesh: &Mesh) -> Vec<CellId> {
    mesh.cells().collect()
}
