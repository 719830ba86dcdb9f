//! Local DG discretization of the periodic Poisson problems.
//!
//! With `q = grad(phi)` and alternating fluxes (`phi_hat` from the left/bottom
//! cell, `q_hat` from the right/top cell), the discrete gradient `g` couples a
//! cell only to its left and lower neighbours, and the weak divergence is
//! exactly `-g^T`. The potential therefore solves the symmetric positive
//! semidefinite system `g^T g phi = f`, singular only on global constants.
//!
//! Both models are written as `-lap(phi) = s * rho` with `s = +1` for the
//! guiding-center model and `s = -1` for vorticity (`lap(phi) = omega`). The
//! field is `E = -grad(phi)` in both cases, and the transport velocity is
//! `(E2, -E1) = (-phi_y, phi_x)`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::dg_space::{Basis, DGField};
use crate::error::{Result, SldgError};
use crate::grid::{CellId, Mesh, Point};
use crate::quadrature::LineRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// `lap(phi) = omega`, velocity `u = (-phi_y, phi_x)`.
    Euler,
    /// `-lap(phi) = rho`, drift `E_perp = (-phi_y, phi_x)`.
    Vlasov,
}

impl Model {
    /// Factor `s` in `-lap(phi) = s * rho`.
    pub fn source_sign(self) -> f64 {
        match self {
            Model::Euler => -1.0,
            Model::Vlasov => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Exact block-circulant solve via 2D FFT (uniform periodic meshes only).
    Spectral,
    /// Conjugate gradient on the deflated system with a block-Jacobi preconditioner.
    ConjugateGradient { rel_tol: f64, max_iter: usize },
}

impl LinearSolver {
    pub fn cg_default() -> Self {
        LinearSolver::ConjugateGradient { rel_tol: 1e-11, max_iter: 20_000 }
    }
}

/// `(E1, E2)` as DG fields, optionally with their time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub e1: DGField,
    pub e2: DGField,
}

impl VectorField {
    pub fn zeros(mesh: &Mesh, basis: &Basis) -> Self {
        VectorField { e1: DGField::zeros(mesh, basis), e2: DGField::zeros(mesh, basis) }
    }

    /// Transport velocity `(E2, -E1)` at a point, using the owning cell.
    pub fn velocity_at(&self, p: Point) -> Point {
        Point::new(self.e2.evaluate_at(p), -self.e1.evaluate_at(p))
    }

    /// `integral of E . E`.
    pub fn energy(&self) -> f64 {
        self.e1.l2_norm_squared() + self.e2.l2_norm_squared()
    }

    /// Maxima of `|E2|` and `|E1|` over the cell quadrature points.
    pub fn max_abs_components(&self) -> (f64, f64) {
        let (lo2, hi2) = self.e2.extrema();
        let (lo1, hi1) = self.e1.extrema();
        (lo2.abs().max(hi2.abs()), lo1.abs().max(hi1.abs()))
    }
}

/// Averaged field values at the mesh vertices (periodic, `nx * ny` of them).
#[derive(Debug, Clone, PartialEq)]
pub struct VertexVelocity {
    pub nx: usize,
    pub ny: usize,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
}

impl VertexVelocity {
    pub fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let k = (j % self.ny) * self.nx + (i % self.nx);
        (self.e1[k], self.e2[k])
    }
}

/// Mean of the four one-sided limits of a field at vertex `(i, j)`.
pub fn vertex_limit_average(f: &DGField, i: usize, j: usize) -> f64 {
    let m = &f.mesh;
    let (nx, ny) = (m.nx, m.ny);
    let left = (i + nx - 1) % nx;
    let down = (j + ny - 1) % ny;
    let ii = i % nx;
    let jj = j % ny;
    0.25 * (f.evaluate_reference(CellId::new(ii, jj), -1.0, -1.0)
        + f.evaluate_reference(CellId::new(left, jj), 1.0, -1.0)
        + f.evaluate_reference(CellId::new(ii, down), -1.0, 1.0)
        + f.evaluate_reference(CellId::new(left, down), 1.0, 1.0))
}

pub fn vertex_average(e: &VectorField) -> VertexVelocity {
    let m = &e.e1.mesh;
    let mut out = VertexVelocity { nx: m.nx, ny: m.ny, e1: vec![0.0; m.n_cells()], e2: vec![0.0; m.n_cells()] };
    for j in 0..m.ny {
        for i in 0..m.nx {
            out.e1[j * m.nx + i] = vertex_limit_average(&e.e1, i, j);
            out.e2[j * m.nx + i] = vertex_limit_average(&e.e2, i, j);
        }
    }
    out
}

/// Dense row-major `dim x dim` block.
type Block = Vec<f64>;

fn block_mul_add(b: &[f64], dim: usize, x: &[f64], y: &mut [f64]) {
    for r in 0..dim {
        let row = &b[r * dim..(r + 1) * dim];
        y[r] += row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

fn block_t_mul_add(b: &[f64], dim: usize, x: &[f64], y: &mut [f64]) {
    for r in 0..dim {
        let xr = x[r];
        if xr != 0.0 {
            for c in 0..dim {
                y[c] += b[r * dim + c] * xr;
            }
        }
    }
}

struct SpectralFactor {
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    /// Cholesky factor per frequency (`ky * nx + kx`); the zero frequency omits the constant mode.
    factors: Vec<Cholesky<Complex64, Dyn>>,
}

impl std::fmt::Debug for SpectralFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralFactor").field("frequencies", &self.factors.len()).finish()
    }
}

/// Assembled LDG operator for one mesh, degree and model.
#[derive(Debug)]
pub struct LdgOperator {
    pub mesh: Mesh,
    pub basis: Basis,
    pub model: Model,
    pub solver: LinearSolver,
    // q_x[i] = gx_self * phi[i] + gx_left * phi[i-1]; likewise in y.
    gx_self: Block,
    gx_left: Block,
    gy_self: Block,
    gy_down: Block,
    jacobi: Vec<f64>,
    spectral: Option<SpectralFactor>,
}

impl LdgOperator {
    /// Assemble with the spectral direct solver.
    pub fn assemble(mesh: &Mesh, degree: usize, model: Model) -> Result<Self> {
        Self::with_solver(mesh, degree, model, LinearSolver::Spectral)
    }

    pub fn with_solver(mesh: &Mesh, degree: usize, model: Model, solver: LinearSolver) -> Result<Self> {
        if !(1..=3).contains(&degree) {
            return Err(SldgError::InvalidArgument(format!("LDG degree must be 1, 2 or 3, got {degree}")));
        }
        let basis = Basis::new(degree);
        let dim = basis.dim();
        let rule = LineRule::new(degree + 2);
        let q2 = crate::quadrature::QuadratureRule::tensor(degree + 2);

        // Reference integrals: V[m][n] = int phi_n d(phi_m)/dxi, faces at xi = +-1.
        let mut vx = vec![0.0; dim * dim];
        let mut vy = vec![0.0; dim * dim];
        let (mut v, mut dxi, mut deta) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        for (&(xi, eta), &w) in q2.points.iter().zip(&q2.weights) {
            basis.eval_with_grad(xi, eta, &mut v, &mut dxi, &mut deta);
            for m in 0..dim {
                for n in 0..dim {
                    vx[m * dim + n] += w * v[n] * dxi[m];
                    vy[m * dim + n] += w * v[n] * deta[m];
                }
            }
        }
        let face = |a: (f64, Option<f64>), b: (f64, Option<f64>)| -> Block {
            // a: side of the test function, b: side of the trial function.
            let mut out = vec![0.0; dim * dim];
            let (mut pa, mut pb) = (vec![0.0; dim], vec![0.0; dim]);
            for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
                match (a.1, b.1) {
                    (None, None) => {
                        basis.eval(a.0, t, &mut pa);
                        basis.eval(b.0, t, &mut pb);
                    }
                    _ => {
                        basis.eval(t, a.0, &mut pa);
                        basis.eval(t, b.0, &mut pb);
                    }
                }
                for m in 0..dim {
                    for n in 0..dim {
                        out[m * dim + n] += w * pa[m] * pb[n];
                    }
                }
            }
            out
        };
        let rx = face((1.0, None), (1.0, None));
        let lx = face((-1.0, None), (1.0, None));
        let ry = face((1.0, Some(0.0)), (1.0, Some(0.0)));
        let ly = face((-1.0, Some(0.0)), (1.0, Some(0.0)));

        let sx = 0.5 / mesh.dx;
        let sy = 0.5 / mesh.dy;
        let gx_self: Block = (0..dim * dim).map(|i| sx * (rx[i] - vx[i])).collect();
        let gx_left: Block = lx.iter().map(|v| -sx * v).collect();
        let gy_self: Block = (0..dim * dim).map(|i| sy * (ry[i] - vy[i])).collect();
        let gy_down: Block = ly.iter().map(|v| -sy * v).collect();

        let mut op = LdgOperator {
            mesh: mesh.clone(),
            basis,
            model,
            solver,
            gx_self,
            gx_left,
            gy_self,
            gy_down,
            jacobi: Vec::new(),
            spectral: None,
        };
        match solver {
            LinearSolver::Spectral => op.spectral = Some(op.factor_spectral()?),
            LinearSolver::ConjugateGradient { .. } => op.jacobi = op.jacobi_inverse(),
        }
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Diagonal block of `g^T g`, inverted.
    fn jacobi_inverse(&self) -> Vec<f64> {
        let d = self.dim();
        let mut a = DMatrix::<f64>::zeros(d, d);
        for blk in [&self.gx_self, &self.gx_left, &self.gy_self, &self.gy_down] {
            let b = DMatrix::from_row_slice(d, d, blk);
            a += b.transpose() * &b;
        }
        let inv = a.clone().try_inverse().unwrap_or_else(|| a.pseudo_inverse(1e-14).unwrap());
        let mut out = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = inv[(r, c)];
            }
        }
        out
    }

    fn symbol(&self, theta_x: f64, theta_y: f64) -> DMatrix<Complex64> {
        let d = self.dim();
        let ex = Complex64::from_polar(1.0, -theta_x);
        let ey = Complex64::from_polar(1.0, -theta_y);
        let gx = DMatrix::from_fn(d, d, |r, c| self.gx_self[r * d + c] + ex * self.gx_left[r * d + c]);
        let gy = DMatrix::from_fn(d, d, |r, c| self.gy_self[r * d + c] + ey * self.gy_down[r * d + c]);
        gx.adjoint() * &gx + gy.adjoint() * &gy
    }

    fn factor_spectral(&self) -> Result<SpectralFactor> {
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        let mut planner = FftPlanner::<f64>::new();
        let two_pi = std::f64::consts::TAU;
        let factors: Result<Vec<_>> = (0..nx * ny)
            .into_par_iter()
            .map(|f| {
                let (kx, ky) = (f % nx, f / nx);
                let a = self.symbol(two_pi * kx as f64 / nx as f64, two_pi * ky as f64 / ny as f64);
                let a = if f == 0 { a.view((1, 1), (a.nrows() - 1, a.ncols() - 1)).into_owned() } else { a };
                Cholesky::new(a).ok_or_else(|| {
                    SldgError::InvalidArgument(format!("LDG symbol not positive definite at frequency ({kx}, {ky})"))
                })
            })
            .collect();
        Ok(SpectralFactor {
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
            factors: factors?,
        })
    }

    /// Discrete gradient `q = g phi` (the LDG auxiliary variable).
    pub fn gradient(&self, phi: &DGField) -> (DGField, DGField) {
        let d = self.dim();
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        let mut qx = DGField::zeros(&self.mesh, &self.basis);
        let mut qy = DGField::zeros(&self.mesh, &self.basis);
        qx.coeffs.par_chunks_mut(d).zip(qy.coeffs.par_chunks_mut(d)).enumerate().for_each(|(j, (bx, by))| {
            let (ix, iy) = (j % nx, j / nx);
            let left = iy * nx + (ix + nx - 1) % nx;
            let down = ((iy + ny - 1) % ny) * nx + ix;
            let p = &phi.coeffs[j * d..(j + 1) * d];
            block_mul_add(&self.gx_self, d, p, bx);
            block_mul_add(&self.gx_left, d, &phi.coeffs[left * d..(left + 1) * d], bx);
            block_mul_add(&self.gy_self, d, p, by);
            block_mul_add(&self.gy_down, d, &phi.coeffs[down * d..(down + 1) * d], by);
        });
        (qx, qy)
    }

    /// `g^T (fx, fy)`: coefficients of the weak form of `-div F` divided by the cell area.
    pub fn weak_neg_divergence(&self, fx: &DGField, fy: &DGField) -> DGField {
        let d = self.dim();
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        let mut out = DGField::zeros(&self.mesh, &self.basis);
        out.coeffs.par_chunks_mut(d).enumerate().for_each(|(j, o)| {
            let (ix, iy) = (j % nx, j / nx);
            let right = iy * nx + (ix + 1) % nx;
            let up = ((iy + 1) % ny) * nx + ix;
            block_t_mul_add(&self.gx_self, d, &fx.coeffs[j * d..(j + 1) * d], o);
            block_t_mul_add(&self.gx_left, d, &fx.coeffs[right * d..(right + 1) * d], o);
            block_t_mul_add(&self.gy_self, d, &fy.coeffs[j * d..(j + 1) * d], o);
            block_t_mul_add(&self.gy_down, d, &fy.coeffs[up * d..(up + 1) * d], o);
        });
        out
    }

    /// Apply the discrete `-lap = g^T g`.
    pub fn apply(&self, phi: &DGField) -> DGField {
        let (qx, qy) = self.gradient(phi);
        self.weak_neg_divergence(&qx, &qy)
    }

    /// Solve `-lap(phi) = f` for a right-hand side already in this operator's space;
    /// the mean of `f` is discarded and `phi` has zero mean.
    pub fn solve_raw(&self, f: &DGField) -> Result<DGField> {
        let mut rhs = f.clone();
        let d = self.dim();
        let mean = rhs.coeffs.iter().step_by(d).sum::<f64>() / self.mesh.n_cells() as f64;
        rhs.coeffs.iter_mut().step_by(d).for_each(|c| *c -= mean);
        match self.solver {
            LinearSolver::Spectral => Ok(self.solve_spectral(&rhs)),
            LinearSolver::ConjugateGradient { rel_tol, max_iter } => self.solve_cg(&rhs, rel_tol, max_iter),
        }
    }

    /// Potential for the transported quantity `rho` (vorticity or density).
    pub fn solve_potential(&self, rho: &DGField) -> Result<DGField> {
        let mut f = rho.to_degree(&self.basis);
        let s = self.model.source_sign();
        f.coeffs.iter_mut().for_each(|c| *c *= s);
        self.solve_raw(&f)
    }

    /// `E = -grad(phi)` through the LDG auxiliary variable.
    pub fn compute_velocity(&self, phi: &DGField) -> VectorField {
        let (mut qx, mut qy) = self.gradient(phi);
        qx.coeffs.iter_mut().for_each(|c| *c = -*c);
        qy.coeffs.iter_mut().for_each(|c| *c = -*c);
        VectorField { e1: qx, e2: qy }
    }

    /// Potential and field in one call.
    pub fn solve_field(&self, rho: &DGField) -> Result<(DGField, VectorField)> {
        let phi = self.solve_potential(rho)?;
        let e = self.compute_velocity(&phi);
        Ok((phi, e))
    }

    /// `dE/dt` from the time-differentiated Poisson equation: with `rho_t = -div(u rho)`,
    /// `-lap(phi_t) = s rho_t` is discretized as `g^T g phi_t = s g^T F` where `F` is the
    /// L2 projection of `u rho` (so `g^T F` stands for `-div(u rho)`), and `dE/dt = -g phi_t`.
    pub fn solve_field_time_derivative(&self, rho: &DGField, e: &VectorField) -> Result<VectorField> {
        let basis = &self.basis;
        let mesh = &self.mesh;
        let d = basis.dim();
        let quad = crate::quadrature::QuadratureRule::tensor(basis.degree + 2);
        let mut fx = DGField::zeros(mesh, basis);
        let mut fy = DGField::zeros(mesh, basis);
        let phis: Vec<Vec<f64>> = quad
            .points
            .iter()
            .map(|&(x, y)| {
                let mut v = vec![0.0; d];
                basis.eval(x, y, &mut v);
                v
            })
            .collect();
        fx.coeffs.par_chunks_mut(d).zip(fy.coeffs.par_chunks_mut(d)).enumerate().for_each(|(j, (bx, by))| {
            let c = mesh.cell(j);
            for ((&(xi, eta), &w), phi) in quad.points.iter().zip(&quad.weights).zip(&phis) {
                let r = rho.evaluate_reference(c, xi, eta);
                let ux = e.e2.evaluate_reference(c, xi, eta);
                let uy = -e.e1.evaluate_reference(c, xi, eta);
                for m in 0..d {
                    bx[m] += 0.25 * w * ux * r * phi[m];
                    by[m] += 0.25 * w * uy * r * phi[m];
                }
            }
        });
        let mut f = self.weak_neg_divergence(&fx, &fy);
        let s = self.model.source_sign();
        f.coeffs.iter_mut().for_each(|c| *c *= s);
        let phi_t = self.solve_raw(&f)?;
        Ok(self.compute_velocity(&phi_t))
    }

    fn solve_spectral(&self, rhs: &DGField) -> DGField {
        let sp = self.spectral.as_ref().expect("spectral factorization missing");
        let d = self.dim();
        let (nx, ny) = (self.mesh.nx, self.mesh.ny);
        let n = nx * ny;
        // One 2D transform per mode.
        let mut hat: Vec<Vec<Complex64>> = (0..d)
            .into_par_iter()
            .map(|m| {
                let mut buf: Vec<Complex64> = (0..n).map(|j| Complex64::new(rhs.coeffs[j * d + m], 0.0)).collect();
                fft2(&mut buf, nx, ny, &sp.fft_x, &sp.fft_y);
                buf
            })
            .collect();
        let solved: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|f| {
                if f == 0 {
                    let b = DVector::from_iterator(d - 1, (1..d).map(|m| hat[m][0]));
                    let x = sp.factors[0].solve(&b);
                    std::iter::once(Complex64::new(0.0, 0.0)).chain(x.iter().copied()).collect()
                } else {
                    let b = DVector::from_iterator(d, (0..d).map(|m| hat[m][f]));
                    sp.factors[f].solve(&b).iter().copied().collect()
                }
            })
            .collect();
        for (f, x) in solved.iter().enumerate() {
            for m in 0..d {
                hat[m][f] = x[m];
            }
        }
        let mut out = DGField::zeros(&self.mesh, &self.basis);
        let scale = 1.0 / n as f64;
        let modes: Vec<Vec<f64>> = hat
            .into_par_iter()
            .map(|mut buf| {
                fft2(&mut buf, nx, ny, &sp.ifft_x, &sp.ifft_y);
                buf.iter().map(|z| z.re * scale).collect()
            })
            .collect();
        for (m, vals) in modes.iter().enumerate() {
            for j in 0..n {
                out.coeffs[j * d + m] = vals[j];
            }
        }
        out
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let d = self.dim();
        z.par_chunks_mut(d).zip(r.par_chunks(d)).for_each(|(zb, rb)| {
            zb.iter_mut().for_each(|v| *v = 0.0);
            block_mul_add(&self.jacobi, d, rb, zb);
        });
        deflate(z, d);
    }

    fn solve_cg(&self, rhs: &DGField, rel_tol: f64, max_iter: usize) -> Result<DGField> {
        let d = self.dim();
        let n = rhs.coeffs.len();
        let mut x = DGField::zeros(&self.mesh, &self.basis);
        let b_norm = norm(&rhs.coeffs);
        if b_norm == 0.0 {
            return Ok(x);
        }
        let mut r = rhs.coeffs.clone();
        let mut z = vec![0.0; n];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut history = Vec::new();
        let mut pf = DGField::zeros(&self.mesh, &self.basis);
        for it in 0..max_iter {
            pf.coeffs.copy_from_slice(&p);
            let ap = self.apply(&pf).coeffs;
            let alpha = rz / dot(&p, &ap);
            x.coeffs.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
            let res = norm(&r) / b_norm;
            history.push(res);
            if res <= rel_tol {
                deflate(&mut x.coeffs, d);
                return Ok(x);
            }
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            if !res.is_finite() {
                return Err(SldgError::SolverDiverged { iterations: it + 1, residual: res, history });
            }
        }
        let residual = *history.last().unwrap_or(&f64::NAN);
        Err(SldgError::SolverDiverged { iterations: max_iter, residual, history })
    }

    /// Dense matrix of `g^T g` (tests and diagnostics on small meshes).
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let n = self.mesh.n_cells() * self.dim();
        let mut a = DMatrix::zeros(n, n);
        let mut e = DGField::zeros(&self.mesh, &self.basis);
        for c in 0..n {
            e.coeffs.iter_mut().for_each(|v| *v = 0.0);
            e.coeffs[c] = 1.0;
            let col = self.apply(&e);
            for r in 0..n {
                a[(r, c)] = col.coeffs[r];
            }
        }
        a
    }
}

/// Remove the mean of the constant mode (projection onto the complement of the kernel).
fn deflate(v: &mut [f64], d: usize) {
    let cells = v.len() / d;
    let mean = v.iter().step_by(d).sum::<f64>() / cells as f64;
    v.iter_mut().step_by(d).for_each(|c| *c -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// In-place 2D transform of a row-major `ny x nx` array.
fn fft2(buf: &mut [Complex64], nx: usize, ny: usize, fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
    fx.process(buf);
    let mut t = vec![Complex64::new(0.0, 0.0); nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            t[i * ny + j] = buf[j * nx + i];
        }
    }
    fy.process(&mut t);
    for j in 0..ny {
        for i in 0..nx {
            buf[j * nx + i] = t[i * ny + j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn mesh(n: usize) -> Mesh {
        Mesh::new(Domain::new(0.0, 2.0 * PI, 0.0, 2.0 * PI).unwrap(), n, n).unwrap()
    }

    fn random_field(m: &Mesh, b: &Basis, seed: u64) -> DGField {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut f = DGField::zeros(m, b);
        f.coeffs.iter_mut().for_each(|c| *c = rng.random_range(-1.0..1.0));
        f
    }

    #[test]
    fn constants_in_kernel() {
        for k in 1..=3 {
            let op = LdgOperator::assemble(&mesh(6), k, Model::Vlasov).unwrap();
            let c = DGField::project(&op.mesh, &op.basis, |_| 2.5);
            let r = op.apply(&c);
            assert!(r.coeffs.iter().all(|v| v.abs() < 1e-11), "k={k}");
        }
    }

    #[test]
    fn operator_is_symmetric_psd_with_one_dim_kernel() {
        for k in 1..=3 {
            let op = LdgOperator::assemble(&mesh(8), k, Model::Euler).unwrap();
            let a = op.dense_matrix();
            let asym = (&a - a.transpose()).abs().max();
            assert!(asym < 1e-9 * a.abs().max(), "k={k} asym={asym}");
            let eig = nalgebra::SymmetricEigen::new(a.clone()).eigenvalues;
            let mut ev: Vec<f64> = eig.iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let scale = ev.last().unwrap().abs();
            assert!(ev[0] > -1e-10 * scale, "negative eigenvalue {}", ev[0]);
            assert!(ev[0].abs() < 1e-10 * scale);
            assert!(ev[1] > 1e-8 * scale, "second eigenvalue {} too small", ev[1]);
        }
    }

    #[test]
    fn adjointness_on_random_vectors() {
        let op = LdgOperator::assemble(&mesh(8), 2, Model::Vlasov).unwrap();
        let u = random_field(&op.mesh, &op.basis, 1);
        let v = random_field(&op.mesh, &op.basis, 2);
        let lu = op.apply(&u);
        let lv = op.apply(&v);
        let a = dot(&lu.coeffs, &v.coeffs);
        let b = dot(&u.coeffs, &lv.coeffs);
        assert!((a - b).abs() < 1e-11 * a.abs().max(1.0));
    }

    #[test]
    fn spectral_and_cg_agree_and_satisfy_system() {
        let m = mesh(12);
        for k in 1..=3 {
            let rho = random_field(&m, &Basis::new(2), 5 + k as u64);
            let sp = LdgOperator::assemble(&m, k, Model::Vlasov).unwrap();
            let cg = LdgOperator::with_solver(&m, k, Model::Vlasov, LinearSolver::cg_default()).unwrap();
            let a = sp.solve_potential(&rho).unwrap();
            let b = cg.solve_potential(&rho).unwrap();
            let scale = a.coeffs.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let diff = a.coeffs.iter().zip(&b.coeffs).fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
            assert!(diff < 1e-8 * scale, "k={k} diff={diff}");
            // Applying the operator reproduces the mean-free right-hand side.
            let mut f = rho.to_degree(&sp.basis);
            deflate(&mut f.coeffs, sp.dim());
            let r = sp.apply(&a);
            let res = r.coeffs.iter().zip(&f.coeffs).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-10 * norm(&f.coeffs), "k={k} res={res}");
            assert!(a.integrate().abs() < 1e-10);
        }
    }

    #[test]
    fn zero_and_shifted_rhs() {
        let m = mesh(10);
        let op = LdgOperator::assemble(&m, 2, Model::Euler).unwrap();
        let z = op.solve_potential(&DGField::zeros(&m, &Basis::new(1))).unwrap();
        assert!(z.coeffs.iter().all(|v| *v == 0.0));
        let f = DGField::project(&m, &Basis::new(2), |p| p.x.sin() * (2.0 * p.y).cos());
        let mut g = f.clone();
        g.coeffs.iter_mut().step_by(6).for_each(|c| *c += 3.0);
        let a = op.solve_potential(&f).unwrap();
        let b = op.solve_potential(&g).unwrap();
        assert!(a.coeffs.iter().zip(&b.coeffs).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let m = mesh(8);
        let op = LdgOperator::with_solver(
            &m,
            2,
            Model::Vlasov,
            LinearSolver::ConjugateGradient { rel_tol: 1e-14, max_iter: 2 },
        )
        .unwrap();
        let rho = random_field(&m, &Basis::new(2), 9);
        match op.solve_potential(&rho) {
            Err(SldgError::SolverDiverged { iterations, history, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(history.len(), 2);
            }
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn potential_converges_for_analytic_solution() {
        // lap(sin x sin y) = -2 sin x sin y.
        let exact = |p: Point| p.x.sin() * p.y.sin();
        for k in 1..=3 {
            let mut errs = Vec::new();
            for n in [16, 32] {
                let m = mesh(n);
                let op = LdgOperator::assemble(&m, k, Model::Euler).unwrap();
                let w = DGField::project(&m, &op.basis, |p| -2.0 * p.x.sin() * p.y.sin());
                errs.push(op.solve_potential(&w).unwrap().error_norms(exact).l2);
            }
            let order = (errs[0] / errs[1]).log2();
            assert!(order > k as f64 + 0.8, "k={k} order={order}");
        }
    }

    #[test]
    fn velocity_converges_at_ldg_degree() {
        let ux = |p: Point| -p.x.sin() * p.y.cos();
        let uy = |p: Point| p.x.cos() * p.y.sin();
        for k in 1..=3 {
            let mut errs = Vec::new();
            for n in [20, 40] {
                let m = mesh(n);
                let op = LdgOperator::assemble(&m, k, Model::Euler).unwrap();
                let w = DGField::project(&m, &op.basis, |p| -2.0 * p.x.sin() * p.y.sin());
                let (_, e) = op.solve_field(&w).unwrap();
                // velocity = (E2, -E1)
                let ex = e.e2.error_norms(ux).l1;
                let mut neg = e.e1.clone();
                neg.coeffs.iter_mut().for_each(|c| *c = -*c);
                let ey = neg.error_norms(uy).l1;
                errs.push(ex + ey);
            }
            let order = (errs[0] / errs[1]).log2();
            assert!((order - k as f64).abs() < 0.35 || order > k as f64, "k={k} order={order}");
        }
    }

    #[test]
    fn field_time_derivative_matches_analytic_rate() {
        // rho = sin x sin y + 0.5 cos(2x + y) with potential phi = a sin x sin y + b cos(2x + y),
        // where -lap(phi) = s rho gives a = s/2, b = s/10. Then rho_t = -u . grad(rho) with
        // u = (-phi_y, phi_x), and by linearity dE/dt is the field of rho_t.
        let m = mesh(32);
        for model in [Model::Euler, Model::Vlasov] {
            let s = model.source_sign();
            let (a, b) = (0.5 * s, 0.1 * s);
            let rho_t = move |p: Point| {
                let (sx, cx, sy, cy) = (p.x.sin(), p.x.cos(), p.y.sin(), p.y.cos());
                let sw = (2.0 * p.x + p.y).sin();
                let phi_x = a * cx * sy - 2.0 * b * sw;
                let phi_y = a * sx * cy - b * sw;
                let rho_x = cx * sy - sw;
                let rho_y = sx * cy - 0.5 * sw;
                -(-phi_y * rho_x + phi_x * rho_y)
            };
            let op = LdgOperator::assemble(&m, 3, model).unwrap();
            let rho = DGField::project(&m, &Basis::new(2), |p| p.x.sin() * p.y.sin() + 0.5 * (2.0 * p.x + p.y).cos());
            let (_, e) = op.solve_field(&rho).unwrap();
            let et = op.solve_field_time_derivative(&rho, &e).unwrap();
            let (_, want) = op.solve_field(&DGField::project(&m, &op.basis, rho_t)).unwrap();
            let diff: f64 = et.e1.coeffs.iter().chain(&et.e2.coeffs)
                .zip(want.e1.coeffs.iter().chain(&want.e2.coeffs))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let norm: f64 = want.e1.coeffs.iter().chain(&want.e2.coeffs).map(|y| y * y).sum();
            assert!((diff / norm).sqrt() < 1e-3, "{model:?}: relative difference {}", (diff / norm).sqrt());
        }
    }

    #[test]
    fn zero_potential_gives_zero_field() {
        let m = mesh(6);
        let op = LdgOperator::assemble(&m, 2, Model::Vlasov).unwrap();
        let e = op.compute_velocity(&DGField::zeros(&m, &op.basis));
        assert_eq!(e.energy(), 0.0);
    }

    #[test]
    fn translation_equivariance() {
        let m = mesh(10);
        let op = LdgOperator::assemble(&m, 2, Model::Vlasov).unwrap();
        let rho = random_field(&m, &Basis::new(2), 11);
        let mut shifted = rho.clone();
        let d = rho.dim();
        for c in m.cells() {
            let src = CellId::new((c.ix + m.nx - 3) % m.nx, (c.iy + m.ny - 1) % m.ny);
            shifted.cell_coeffs_mut(c).copy_from_slice(&rho.coeffs[m.index(src) * d..(m.index(src) + 1) * d]);
        }
        let a = op.solve_potential(&rho).unwrap();
        let b = op.solve_potential(&shifted).unwrap();
        let dp = op.dim();
        for c in m.cells() {
            let src = CellId::new((c.ix + m.nx - 3) % m.nx, (c.iy + m.ny - 1) % m.ny);
            for q in 0..dp {
                assert!((b.cell_coeffs(c)[q] - a.coeffs[m.index(src) * dp + q]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn vertex_average_cases() {
        let m = mesh(4);
        let b = Basis::new(1);
        // Piecewise constants 1, 2, 3, 4 around vertex (1, 1).
        let mut f = DGField::zeros(&m, &b);
        f.cell_coeffs_mut(CellId::new(0, 0))[0] = 1.0;
        f.cell_coeffs_mut(CellId::new(1, 0))[0] = 2.0;
        f.cell_coeffs_mut(CellId::new(0, 1))[0] = 3.0;
        f.cell_coeffs_mut(CellId::new(1, 1))[0] = 4.0;
        assert!((vertex_limit_average(&f, 1, 1) - 2.5).abs() < 1e-15);
        // Continuous field: average equals point value.
        let g = DGField::project(&m, &b, |p| 1.0 + 2.0 * p.x - p.y);
        let vv = vertex_average(&VectorField { e1: g.clone(), e2: g.clone() });
        let (a, _) = vv.at(2, 3);
        let p = m.vertex(2, 3);
        assert!((a - (1.0 + 2.0 * p.x - p.y)).abs() < 1e-12);
        // Random field vs explicit evaluation of each neighbour at the shared corner.
        let r = random_field(&m, &Basis::new(2), 4);
        for (i, j) in [(0usize, 0usize), (3, 1), (2, 2)] {
            let cells = [
                (CellId::new(i % 4, j % 4), 0.0, 0.0),
                (CellId::new((i + 3) % 4, j % 4), m.dx, 0.0),
                (CellId::new(i % 4, (j + 3) % 4), 0.0, m.dy),
                (CellId::new((i + 3) % 4, (j + 3) % 4), m.dx, m.dy),
            ];
            let want: f64 = cells
                .iter()
                .map(|&(c, ox, oy)| {
                    let o = m.cell_origin(c);
                    0.25 * r.evaluate(c, Point::new(o.x + ox, o.y + oy))
                })
                .sum();
            assert!((vertex_limit_average(&r, i, j) - want).abs() < 1e-14);
        }
    }
}
