//! Modal discontinuous Galerkin space on the periodic mesh.
//!
//! Each cell carries a polynomial of total degree at most `k`, expanded in
//! tensor products of normalized Legendre polynomials
//! `phi_(a,b)(xi, eta) = sqrt(2a+1) P_a(xi) sqrt(2b+1) P_b(eta)`, `a + b <= k`.
//! The basis is orthonormal for the mean over the reference square, so on a
//! physical cell `K` the mass matrix is `|K| I` and the constant coefficient is
//! the cell average.

use std::fmt::Write as _;

use crate::grid::{CellId, Mesh, Point};
use crate::quadrature::QuadratureRule;

/// Highest polynomial degree the basis supports.
pub const MAX_DEGREE: usize = 4;
const MAX_DIM: usize = (MAX_DEGREE + 1) * (MAX_DEGREE + 2) / 2;

/// Normalized Legendre values `sqrt(2n+1) P_n(x)` for `n = 0..=degree`.
#[inline]
pub fn scaled_legendre(degree: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if degree == 0 {
        return;
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    out[1] = 3f64.sqrt() * x;
    for n in 2..=degree {
        let nf = n as f64;
        let p2 = ((2.0 * nf - 1.0) * x * p1 - (nf - 1.0) * p0) / nf;
        p0 = p1;
        p1 = p2;
        out[n] = (2.0 * nf + 1.0).sqrt() * p2;
    }
}

/// Values and first derivatives of the normalized Legendre polynomials.
#[inline]
fn scaled_legendre_d(degree: usize, x: f64, val: &mut [f64], der: &mut [f64]) {
    // P_n' = sum over m = n-1, n-3, ... of (2m+1) P_m
    let mut p = [0.0; MAX_DEGREE + 1];
    p[0] = 1.0;
    if degree >= 1 {
        p[1] = x;
    }
    for n in 2..=degree {
        let nf = n as f64;
        p[n] = ((2.0 * nf - 1.0) * x * p[n - 1] - (nf - 1.0) * p[n - 2]) / nf;
    }
    for n in 0..=degree {
        let s = (2.0 * n as f64 + 1.0).sqrt();
        val[n] = s * p[n];
        let mut d = 0.0;
        let mut m = n as i64 - 1;
        while m >= 0 {
            d += (2 * m + 1) as f64 * p[m as usize];
            m -= 2;
        }
        der[n] = s * d;
    }
}

/// Total-degree orthonormal basis on the reference square.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub degree: usize,
    /// `(a, b)` exponents, ordered by total degree then decreasing `a`.
    pub modes: Vec<(usize, usize)>,
    /// Cell rule exact for degree `2k + 2`.
    pub quad: QuadratureRule,
}

impl Basis {
    pub fn new(degree: usize) -> Self {
        assert!(degree <= MAX_DEGREE, "degree {degree} exceeds supported maximum {MAX_DEGREE}");
        let mut modes = Vec::new();
        for total in 0..=degree {
            for b in 0..=total {
                modes.push((total - b, b));
            }
        }
        Basis { degree, modes, quad: QuadratureRule::tensor(degree + 2) }
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    /// Number of modes of total degree at most `k`.
    pub fn dim_of(k: usize) -> usize {
        (k + 1) * (k + 2) / 2
    }

    #[inline]
    pub fn eval(&self, xi: f64, eta: f64, out: &mut [f64]) {
        let mut lx = [0.0; MAX_DEGREE + 1];
        let mut ly = [0.0; MAX_DEGREE + 1];
        scaled_legendre(self.degree, xi, &mut lx);
        scaled_legendre(self.degree, eta, &mut ly);
        for (o, &(a, b)) in out.iter_mut().zip(&self.modes) {
            *o = lx[a] * ly[b];
        }
    }

    /// Values and reference-coordinate derivatives of every mode.
    pub fn eval_with_grad(&self, xi: f64, eta: f64, val: &mut [f64], dxi: &mut [f64], deta: &mut [f64]) {
        let mut lx = [0.0; MAX_DEGREE + 1];
        let mut ly = [0.0; MAX_DEGREE + 1];
        let mut dx = [0.0; MAX_DEGREE + 1];
        let mut dy = [0.0; MAX_DEGREE + 1];
        scaled_legendre_d(self.degree, xi, &mut lx, &mut dx);
        scaled_legendre_d(self.degree, eta, &mut ly, &mut dy);
        for (m, &(a, b)) in self.modes.iter().enumerate() {
            val[m] = lx[a] * ly[b];
            dxi[m] = dx[a] * ly[b];
            deta[m] = lx[a] * dy[b];
        }
    }

    /// Evaluate the polynomial with coefficients `c` at a reference point.
    #[inline]
    pub fn eval_poly(&self, c: &[f64], xi: f64, eta: f64) -> f64 {
        let mut v = [0.0; MAX_DIM];
        self.eval(xi, eta, &mut v);
        c.iter().zip(&v).map(|(a, b)| a * b).sum()
    }
}

/// Piecewise polynomial field, one coefficient block of length `dim` per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DGField {
    pub mesh: Mesh,
    pub basis: Basis,
    pub coeffs: Vec<f64>,
}

/// Error norms normalized by the domain area; `linf` is the maximum over quadrature points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl DGField {
    pub fn zeros(mesh: &Mesh, basis: &Basis) -> Self {
        DGField {
            mesh: mesh.clone(),
            basis: basis.clone(),
            coeffs: vec![0.0; mesh.n_cells() * basis.dim()],
        }
    }

    /// L2 projection of a pointwise function.
    pub fn project(mesh: &Mesh, basis: &Basis, f: impl Fn(Point) -> f64) -> Self {
        let mut field = Self::zeros(mesh, basis);
        let dim = basis.dim();
        let q = &basis.quad;
        let phis: Vec<Vec<f64>> = q
            .points
            .iter()
            .map(|&(xi, eta)| {
                let mut v = vec![0.0; dim];
                basis.eval(xi, eta, &mut v);
                v
            })
            .collect();
        for c in mesh.cells() {
            let j = mesh.index(c);
            let block = &mut field.coeffs[j * dim..(j + 1) * dim];
            for ((&(xi, eta), &w), phi) in q.points.iter().zip(&q.weights).zip(&phis) {
                let fv = f(mesh.from_reference(c, xi, eta));
                for (b, p) in block.iter_mut().zip(phi) {
                    *b += 0.25 * w * fv * p;
                }
            }
        }
        field
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn cell_coeffs(&self, c: CellId) -> &[f64] {
        let d = self.dim();
        let j = self.mesh.index(c);
        &self.coeffs[j * d..(j + 1) * d]
    }

    pub fn cell_coeffs_mut(&mut self, c: CellId) -> &mut [f64] {
        let d = self.dim();
        let j = self.mesh.index(c);
        &mut self.coeffs[j * d..(j + 1) * d]
    }

    pub fn cell_average(&self, c: CellId) -> f64 {
        self.cell_coeffs(c)[0]
    }

    /// Value of the cell's polynomial at `p` (extrapolated if `p` lies outside the cell).
    pub fn evaluate(&self, c: CellId, p: Point) -> f64 {
        let (xi, eta) = self.mesh.to_reference(c, p);
        self.basis.eval_poly(self.cell_coeffs(c), xi, eta)
    }

    pub fn evaluate_reference(&self, c: CellId, xi: f64, eta: f64) -> f64 {
        self.basis.eval_poly(self.cell_coeffs(c), xi, eta)
    }

    /// Evaluate at an arbitrary point using the owning cell's polynomial.
    pub fn evaluate_at(&self, p: Point) -> f64 {
        let c = self.mesh.locate_cell(p);
        let q = self.mesh.wrap_point(p);
        self.evaluate(c, q)
    }

    /// Value and physical gradient of the cell polynomial at a reference point.
    pub fn value_and_gradient(&self, c: CellId, xi: f64, eta: f64) -> (f64, f64, f64) {
        let d = self.dim();
        let mut v = [0.0; MAX_DIM];
        let mut gx = [0.0; MAX_DIM];
        let mut gy = [0.0; MAX_DIM];
        self.basis.eval_with_grad(xi, eta, &mut v[..d], &mut gx[..d], &mut gy[..d]);
        let cc = self.cell_coeffs(c);
        let mut out = (0.0, 0.0, 0.0);
        for m in 0..d {
            out.0 += cc[m] * v[m];
            out.1 += cc[m] * gx[m];
            out.2 += cc[m] * gy[m];
        }
        (out.0, out.1 * 2.0 / self.mesh.dx, out.2 * 2.0 / self.mesh.dy)
    }

    /// Total integral over the domain.
    pub fn integrate(&self) -> f64 {
        let d = self.dim();
        self.coeffs.iter().step_by(d).sum::<f64>() * self.mesh.cell_area()
    }

    /// `integral |field|` by cell quadrature; the mass scale of zero-mean data.
    pub fn abs_integral(&self) -> f64 {
        self.error_norms(|_| 0.0).l1 * self.mesh.domain.area()
    }

    /// `integral of field^2`, exact by orthonormality.
    pub fn l2_norm_squared(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>() * self.mesh.cell_area()
    }

    /// Maximum and minimum over the cell quadrature points.
    pub fn extrema(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let d = self.dim();
        let phis = self.quad_basis_table();
        for j in 0..self.mesh.n_cells() {
            let cc = &self.coeffs[j * d..(j + 1) * d];
            for phi in &phis {
                let v: f64 = cc.iter().zip(phi).map(|(a, b)| a * b).sum();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    fn quad_basis_table(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        self.basis
            .quad
            .points
            .iter()
            .map(|&(xi, eta)| {
                let mut v = vec![0.0; d];
                self.basis.eval(xi, eta, &mut v);
                v
            })
            .collect()
    }

    /// L1, L2 (normalized by the domain area) and max-norm errors against `exact`.
    pub fn error_norms(&self, exact: impl Fn(Point) -> f64) -> ErrorNorms {
        let d = self.dim();
        let q = &self.basis.quad;
        let phis = self.quad_basis_table();
        let (mut l1, mut l2, mut linf) = (0.0, 0.0, 0.0f64);
        for c in self.mesh.cells() {
            let cc = self.cell_coeffs(c);
            for ((&(xi, eta), &w), phi) in q.points.iter().zip(&q.weights).zip(&phis) {
                let v: f64 = cc[..d].iter().zip(phi).map(|(a, b)| a * b).sum();
                let e = (v - exact(self.mesh.from_reference(c, xi, eta))).abs();
                l1 += 0.25 * w * e;
                l2 += 0.25 * w * e * e;
                linf = linf.max(e);
            }
        }
        let n = self.mesh.n_cells() as f64;
        ErrorNorms { l1: l1 / n, l2: (l2 / n).sqrt(), linf }
    }

    /// Copy into a space of another degree; truncation is the L2 projection because
    /// the basis is hierarchical.
    pub fn to_degree(&self, basis: &Basis) -> DGField {
        let mut out = DGField::zeros(&self.mesh, basis);
        let (ds, dt) = (self.dim(), basis.dim());
        let n = ds.min(dt);
        for j in 0..self.mesh.n_cells() {
            out.coeffs[j * dt..j * dt + n].copy_from_slice(&self.coeffs[j * ds..j * ds + n]);
        }
        out
    }

    /// Snapshot at cell centers, one text row per mesh row (bottom row first).
    pub fn to_grid_text(&self) -> String {
        let mut s = String::new();
        for iy in 0..self.mesh.ny {
            let row: Vec<String> = (0..self.mesh.nx)
                .map(|ix| format!("{:.15e}", self.evaluate_reference(CellId::new(ix, iy), 0.0, 0.0)))
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Long-format `x y value` snapshot at cell centers with a metadata header.
    pub fn to_long_text(&self, time: f64) -> String {
        let m = &self.mesh;
        let mut s = String::new();
        let _ = writeln!(s, "# mesh {} {}", m.nx, m.ny);
        let _ = writeln!(
            s,
            "# domain {:.17e} {:.17e} {:.17e} {:.17e}",
            m.domain.x_min, m.domain.x_max, m.domain.y_min, m.domain.y_max
        );
        let _ = writeln!(s, "# degree {}", self.degree());
        let _ = writeln!(s, "# time {:.17e}", time);
        let _ = writeln!(s, "# x y value");
        for c in m.cells() {
            let p = m.cell_center(c);
            let _ = writeln!(s, "{:.15e} {:.15e} {:.15e}", p.x, p.y, self.evaluate_reference(c, 0.0, 0.0));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use std::f64::consts::PI;

    fn mesh(n: usize) -> Mesh {
        Mesh::new(Domain::new(0.0, 2.0 * PI, 0.0, 2.0 * PI).unwrap(), n, n).unwrap()
    }

    #[test]
    fn dimensions() {
        assert_eq!(Basis::new(1).dim(), 3);
        assert_eq!(Basis::new(2).dim(), 6);
        assert_eq!(Basis::new(3).dim(), 10);
    }

    #[test]
    fn gram_matrix_is_identity() {
        for k in 0..=MAX_DEGREE {
            let b = Basis::new(k);
            let q = QuadratureRule::exact_for(2 * k);
            let d = b.dim();
            let mut gram = vec![0.0; d * d];
            let mut v = vec![0.0; d];
            for (&(x, y), &w) in q.points.iter().zip(&q.weights) {
                b.eval(x, y, &mut v);
                for i in 0..d {
                    for j in 0..d {
                        gram[i * d + j] += 0.25 * w * v[i] * v[j];
                    }
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[i * d + j] - want).abs() < 1e-13, "k={k} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = Basis::new(3);
        let d = b.dim();
        let (mut v, mut gx, mut gy) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let (mut vp, mut vm) = (vec![0.0; d], vec![0.0; d]);
        let (x, y, h) = (0.3, -0.7, 1e-6);
        b.eval_with_grad(x, y, &mut v, &mut gx, &mut gy);
        b.eval(x + h, y, &mut vp);
        b.eval(x - h, y, &mut vm);
        for m in 0..d {
            assert!(((vp[m] - vm[m]) / (2.0 * h) - gx[m]).abs() < 1e-7);
        }
        b.eval(x, y + h, &mut vp);
        b.eval(x, y - h, &mut vm);
        for m in 0..d {
            assert!(((vp[m] - vm[m]) / (2.0 * h) - gy[m]).abs() < 1e-7);
        }
    }

    #[test]
    fn constants_and_linears_reproduced() {
        let m = mesh(8);
        let f = DGField::project(&m, &Basis::new(2), |_| 3.5);
        for c in m.cells() {
            assert!((f.evaluate(c, m.cell_center(c) + Point::new(0.1, -0.05)) - 3.5).abs() < 1e-13);
        }
        let lin = |p: Point| 2.0 * p.x - 0.5 * p.y + 1.0;
        let g = DGField::project(&m, &Basis::new(1), lin);
        for c in m.cells() {
            let p = m.cell_center(c) + Point::new(0.2 * m.dx, 0.3 * m.dy);
            assert!((g.evaluate(c, p) - lin(p)).abs() < 1e-12);
            assert!((g.cell_average(c) - lin(m.cell_center(c))).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        use rand::{Rng, SeedableRng};
        let m = mesh(6);
        let b = Basis::new(2);
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let mut f = DGField::zeros(&m, &b);
        f.coeffs.iter_mut().for_each(|c| *c = rng.random_range(-1.0..1.0));
        let g = DGField::project(&m, &b, |p| f.evaluate_at(p));
        for (a, b) in f.coeffs.iter().zip(&g.coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
        let e = f.error_norms(|p| f.evaluate_at(p));
        assert!(e.l1 < 1e-12 && e.l2 < 1e-12 && e.linf < 1e-11);
    }

    #[test]
    fn evaluation_matches_monomial_oracle() {
        // phi_(a,b) = sqrt(2a+1)(2b+1) P_a P_b with explicit low-degree Legendre formulas.
        let p = |n: usize, x: f64| match n {
            0 => 1.0,
            1 => x,
            2 => 1.5 * x * x - 0.5,
            3 => 2.5 * x * x * x - 1.5 * x,
            _ => unreachable!(),
        };
        let b = Basis::new(3);
        let c: Vec<f64> = (0..b.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        for &(x, y) in &[(0.1, 0.2), (-0.9, 0.4), (1.0, -1.0)] {
            let want: f64 = b
                .modes
                .iter()
                .zip(&c)
                .map(|(&(a, bb), ci)| ci * ((2 * a + 1) as f64).sqrt() * p(a, x) * ((2 * bb + 1) as f64).sqrt() * p(bb, y))
                .sum();
            assert!((b.eval_poly(&c, x, y) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_converges_at_order_k_plus_one() {
        let f = |p: Point| -2.0 * p.x.sin() * p.y.sin();
        for k in 1..=2 {
            let b = Basis::new(k);
            let e20 = DGField::project(&mesh(20), &b, f).error_norms(f);
            let e40 = DGField::project(&mesh(40), &b, f).error_norms(f);
            let order = (e20.l1 / e40.l1).log2();
            assert!((order - (k + 1) as f64).abs() < 0.15, "k={k} order={order}");
            let order2 = (e20.l2 / e40.l2).log2();
            assert!((order2 - (k + 1) as f64).abs() < 0.15);
        }
        // The P1 projection floor sits below the 20^2 solver error of the P1/P1-LDG run (1.62e-2).
        let e = DGField::project(&mesh(20), &Basis::new(1), f).error_norms(f);
        assert!(e.l1 < 1.62e-2, "{e:?}");
    }

    #[test]
    fn integrals() {
        let m = mesh(10);
        let c = DGField::project(&m, &Basis::new(2), |_| 2.0);
        assert!((c.integrate() - 2.0 * 4.0 * PI * PI).abs() < 1e-12);
        let kh = Mesh::new(Domain::new(0.0, 4.0 * PI, 0.0, 2.0 * PI).unwrap(), 16, 16).unwrap();
        let rho = DGField::project(&kh, &Basis::new(2), |p| p.y.sin() + 0.015 * (0.5 * p.x).cos());
        assert!(rho.integrate().abs() < 1e-12);
        // Smooth, non-periodic-symmetric integrand with known integral.
        let g = |p: Point| (p.x / 3.0).exp() * (1.0 + p.y * p.y);
        let want = 3.0 * ((2.0 * PI / 3.0).exp() - 1.0) * (2.0 * PI + (2.0 * PI).powi(3) / 3.0);
        let f = DGField::project(&mesh(40), &Basis::new(2), g);
        assert!((f.integrate() - want).abs() < 1e-10 * want);
    }

    #[test]
    fn snapshot_formats() {
        let m = mesh(3);
        let f = DGField::project(&m, &Basis::new(1), |p| p.x);
        let grid = f.to_grid_text();
        assert_eq!(grid.lines().count(), 3);
        assert_eq!(grid.lines().next().unwrap().split_whitespace().count(), 3);
        let long = f.to_long_text(0.5);
        let data: Vec<&str> = long.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 9);
        let cols: Vec<f64> = data[1].split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert!((cols[0] - cols[2]).abs() < 1e-12);
    }
}
