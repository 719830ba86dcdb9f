//! TVB troubled-cell detection and the simple WENO limiter on edge neighbours.

use rayon::prelude::*;

use crate::dg_space::{Basis, DGField};
use crate::grid::{CellId, Mesh};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterConfig {
    pub enabled: bool,
    /// TVB constant `M`; deviations below `M h^2` are left alone.
    pub tvb_m: f64,
    /// Linear weight of the cell's own polynomial; the four neighbours share the rest.
    pub central_weight: f64,
    pub epsilon: f64,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        LimiterConfig { enabled: false, tvb_m: 0.01, central_weight: 0.996, epsilon: 1e-6 }
    }
}

impl LimiterConfig {
    pub fn weno(tvb_m: f64) -> Self {
        LimiterConfig { enabled: true, tvb_m, ..Default::default() }
    }

    fn neighbour_weight(&self) -> f64 {
        0.25 * (1.0 - self.central_weight)
    }
}

fn minmod(a: f64, b: f64, c: f64) -> f64 {
    if a > 0.0 && b > 0.0 && c > 0.0 {
        a.min(b).min(c)
    } else if a < 0.0 && b < 0.0 && c < 0.0 {
        a.max(b).max(c)
    } else {
        0.0
    }
}

fn tvb_minmod(a: f64, b: f64, c: f64, threshold: f64) -> f64 {
    if a.abs() <= threshold {
        a
    } else {
        minmod(a, b, c)
    }
}

fn neighbours(mesh: &Mesh, c: CellId) -> [CellId; 4] {
    let (i, j) = (c.ix as i64, c.iy as i64);
    [mesh.wrap_index(i - 1, j), mesh.wrap_index(i + 1, j), mesh.wrap_index(i, j - 1), mesh.wrap_index(i, j + 1)]
}

fn is_troubled(rho: &DGField, c: CellId, m: f64) -> bool {
    let mesh = &rho.mesh;
    let [l, r, d, u] = neighbours(mesh, c);
    let avg = rho.cell_average(c);
    let checks = [
        (rho.evaluate_reference(c, 1.0, 0.0) - avg, rho.cell_average(r) - avg, avg - rho.cell_average(l), mesh.dx),
        (avg - rho.evaluate_reference(c, -1.0, 0.0), rho.cell_average(r) - avg, avg - rho.cell_average(l), mesh.dx),
        (rho.evaluate_reference(c, 0.0, 1.0) - avg, rho.cell_average(u) - avg, avg - rho.cell_average(d), mesh.dy),
        (avg - rho.evaluate_reference(c, 0.0, -1.0), rho.cell_average(u) - avg, avg - rho.cell_average(d), mesh.dy),
    ];
    checks.iter().any(|&(dev, fwd, bwd, h)| tvb_minmod(dev, fwd, bwd, m * h * h) != dev)
}

/// Cells whose edge deviations are altered by the TVB-modified minmod in either direction.
pub fn detect_troubled(rho: &DGField, cfg: &LimiterConfig) -> Vec<CellId> {
    let mesh = &rho.mesh;
    (0..mesh.n_cells())
        .into_par_iter()
        .map(|j| mesh.cell(j))
        .filter(|&c| is_troubled(rho, c, cfg.tvb_m))
        .collect()
}

/// Legendre `P_n` as monomial coefficients (ascending powers).
const LEGENDRE: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [-0.5, 0.0, 1.5, 0.0, 0.0],
    [0.0, -1.5, 0.0, 2.5, 0.0],
    [0.375, 0.0, -3.75, 0.0, 4.375],
];

/// Monomial coefficients `a[p][q]` of `xi^p eta^q` for a cell polynomial.
fn to_monomials(basis: &Basis, coeffs: &[f64]) -> [[f64; 5]; 5] {
    let mut out = [[0.0; 5]; 5];
    for (&(a, b), &c) in basis.modes.iter().zip(coeffs) {
        let s = c * ((2 * a + 1) as f64).sqrt() * ((2 * b + 1) as f64).sqrt();
        for p in 0..=a {
            for q in 0..=b {
                out[p][q] += s * LEGENDRE[a][p] * LEGENDRE[b][q];
            }
        }
    }
    out
}

/// `sum_{1 <= |alpha| <= k} |K|^{|alpha|-1} int_K (D^alpha p)^2` for a polynomial given in reference monomials.
fn smoothness(basis: &Basis, mono: &[[f64; 5]; 5], mesh: &Mesh) -> f64 {
    let k = basis.degree;
    let area = mesh.cell_area();
    let (sx, sy) = (2.0 / mesh.dx, 2.0 / mesh.dy);
    let q = &basis.quad;
    let mut beta = 0.0;
    for order in 1..=k {
        for ay in 0..=order {
            let ax = order - ay;
            // D^alpha in reference coordinates, then scaled to physical ones.
            let mut d = [[0.0; 5]; 5];
            for p in ax..5 {
                for r in ay..5 {
                    let mut f = mono[p][r];
                    for t in 0..ax {
                        f *= (p - t) as f64;
                    }
                    for t in 0..ay {
                        f *= (r - t) as f64;
                    }
                    d[p - ax][r - ay] = f;
                }
            }
            let scale = sx.powi(ax as i32) * sy.powi(ay as i32);
            let mut integral = 0.0;
            for (&(xi, eta), &w) in q.points.iter().zip(&q.weights) {
                let mut v = 0.0;
                let mut xp = 1.0;
                for row in d.iter() {
                    let mut yp = 1.0;
                    for &c in row.iter() {
                        v += c * xp * yp;
                        yp *= eta;
                    }
                    xp *= xi;
                }
                integral += 0.25 * w * (scale * v).powi(2);
            }
            beta += area.powi(order as i32 - 1) * area * integral;
        }
    }
    beta
}

/// Coefficients on cell `c` of the neighbour `n`'s polynomial extended to `c`, with `c`'s mean.
fn extended_neighbour(rho: &DGField, c: CellId, n: CellId, di: f64, dj: f64) -> Vec<f64> {
    let basis = &rho.basis;
    let d = basis.dim();
    let q = &basis.quad;
    let mut out = vec![0.0; d];
    let mut phi = vec![0.0; d];
    for (&(xi, eta), &w) in q.points.iter().zip(&q.weights) {
        // The neighbour's reference frame is shifted by two units per cell.
        let v = rho.evaluate_reference(n, xi - 2.0 * di, eta - 2.0 * dj);
        basis.eval(xi, eta, &mut phi);
        for m in 0..d {
            out[m] += 0.25 * w * v * phi[m];
        }
    }
    out[0] = rho.cell_average(c);
    out
}

fn limit_cell(rho: &DGField, c: CellId, cfg: &LimiterConfig) -> Vec<f64> {
    let basis = &rho.basis;
    let mesh = &rho.mesh;
    let [l, r, d, u] = neighbours(mesh, c);
    let mut candidates = vec![rho.cell_coeffs(c).to_vec()];
    for (n, di, dj) in [(l, -1.0, 0.0), (r, 1.0, 0.0), (d, 0.0, -1.0), (u, 0.0, 1.0)] {
        candidates.push(extended_neighbour(rho, c, n, di, dj));
    }
    let gammas = [cfg.central_weight, cfg.neighbour_weight(), cfg.neighbour_weight(), cfg.neighbour_weight(), cfg.neighbour_weight()];
    let raw: Vec<f64> = candidates
        .iter()
        .zip(&gammas)
        .map(|(cand, g)| {
            let beta = smoothness(basis, &to_monomials(basis, cand), mesh);
            g / (cfg.epsilon + beta).powi(2)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let dim = basis.dim();
    let mut out = vec![0.0; dim];
    for (cand, w) in candidates.iter().zip(&raw) {
        let w = w / total;
        for m in 1..dim {
            out[m] += w * cand[m];
        }
    }
    out[0] = rho.cell_average(c);
    out
}

/// Replace the polynomial on each troubled cell by the WENO combination; other cells are copied.
pub fn apply_limiter(rho: &DGField, troubled: &[CellId], cfg: &LimiterConfig) -> DGField {
    let mut out = rho.clone();
    let limited: Vec<(CellId, Vec<f64>)> = troubled.par_iter().map(|&c| (c, limit_cell(rho, c, cfg))).collect();
    for (c, coeffs) in limited {
        out.cell_coeffs_mut(c).copy_from_slice(&coeffs);
    }
    out
}

/// Detect and limit in one pass; returns the limited field and the number of troubled cells.
pub fn limit(rho: &DGField, cfg: &LimiterConfig) -> (DGField, usize) {
    if !cfg.enabled || rho.degree() == 0 {
        return (rho.clone(), 0);
    }
    let troubled = detect_troubled(rho, cfg);
    let n = troubled.len();
    (apply_limiter(rho, &troubled, cfg), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, Point};
    use std::f64::consts::PI;

    fn mesh(n: usize) -> Mesh {
        Mesh::new(Domain::new(0.0, 2.0 * PI, 0.0, 2.0 * PI).unwrap(), n, n).unwrap()
    }

    #[test]
    fn monomial_conversion_roundtrip() {
        let b = Basis::new(3);
        let c: Vec<f64> = (0..b.dim()).map(|i| (i as f64 + 1.0).sqrt().sin()).collect();
        let mono = to_monomials(&b, &c);
        for &(x, y) in &[(0.2, -0.4), (0.9, 0.1)] {
            let mut v = 0.0;
            for p in 0..5 {
                for q in 0..5 {
                    v += mono[p][q] * f64::powi(x, p as i32) * f64::powi(y, q as i32);
                }
            }
            assert!((v - b.eval_poly(&c, x, y)).abs() < 1e-13);
        }
    }

    #[test]
    fn smoothness_of_linear_function() {
        // p = 2x + 3y: beta = |K| (4 + 9).
        let m = mesh(10);
        let f = DGField::project(&m, &Basis::new(2), |p| 2.0 * p.x + 3.0 * p.y);
        let c = CellId::new(4, 4);
        let beta = smoothness(&f.basis, &to_monomials(&f.basis, f.cell_coeffs(c)), &m);
        assert!((beta - 13.0 * m.cell_area()).abs() < 1e-12);
    }

    #[test]
    fn linear_field_not_troubled() {
        // Linear in the interior of a periodic sawtooth-free setting: use a slowly varying cosine.
        let m = mesh(40);
        let f = DGField::project(&m, &Basis::new(1), |p| 0.01 * p.x.cos() + 0.02 * p.y.sin());
        assert!(detect_troubled(&f, &LimiterConfig::weno(0.01)).len() < m.n_cells());
        let g = DGField::project(&m, &Basis::new(2), |p| p.y.sin());
        let cfg = LimiterConfig::weno(1e6);
        assert!(detect_troubled(&g, &cfg).is_empty());
    }

    #[test]
    fn step_flags_cells_at_the_jump() {
        let m = mesh(16);
        // The jump at x = 3 sits inside column 7; the periodic jump lies on a cell edge.
        let f = DGField::project(&m, &Basis::new(1), |p| if p.x < 3.0 { 1.0 } else { 0.0 });
        let t = detect_troubled(&f, &LimiterConfig::weno(0.01));
        for c in &t {
            assert!([6, 7, 8].contains(&c.ix), "{c:?}");
        }
        assert!(t.iter().any(|c| c.ix == 7));
    }

    #[test]
    fn step_with_projected_overshoot_is_flagged() {
        let m = mesh(16);
        let mut f = DGField::project(&m, &Basis::new(1), |p| if p.x < PI { 1.0 } else { 0.0 });
        // Give the cell left of the jump a steep slope that overshoots.
        let c = CellId::new(7, 3);
        f.cell_coeffs_mut(c)[1] = 0.5;
        let t = detect_troubled(&f, &LimiterConfig::weno(0.01));
        assert!(t.contains(&c));
    }

    #[test]
    fn untouched_when_nothing_troubled() {
        let m = mesh(8);
        let f = DGField::project(&m, &Basis::new(2), |p| p.x.sin());
        let g = apply_limiter(&f, &[], &LimiterConfig::weno(0.01));
        assert_eq!(f, g);
    }

    #[test]
    fn constant_surroundings_flatten_cell() {
        let m = mesh(8);
        let mut f = DGField::project(&m, &Basis::new(2), |_| 2.0);
        let c = CellId::new(3, 3);
        f.cell_coeffs_mut(c).copy_from_slice(&[2.5, 0.3, -0.2, 0.1, 0.05, -0.04]);
        let g = apply_limiter(&f, &[c], &LimiterConfig::weno(0.01));
        let cc = g.cell_coeffs(c);
        assert_eq!(cc[0], 2.5);
        // Neighbour candidates are constant 2.5 with zero smoothness, so they dominate.
        assert!(cc[1..].iter().all(|v| v.abs() < 1e-3), "{cc:?}");
        for other in m.cells().filter(|&o| o != c) {
            assert_eq!(g.cell_coeffs(other), f.cell_coeffs(other));
        }
    }

    #[test]
    fn limiting_preserves_mass() {
        let m = mesh(20);
        let f = DGField::project(&m, &Basis::new(2), |p| {
            if (p.x - PI).abs() < 1.0 && (p.y - PI).abs() < 0.7 {
                1.0
            } else {
                -0.3
            }
        });
        let (g, n) = limit(&f, &LimiterConfig::weno(0.01));
        assert!(n > 0);
        assert!((f.integrate() - g.integrate()).abs() <= 1e-13 * f.integrate().abs().max(1.0));
        for c in m.cells() {
            assert_eq!(f.cell_average(c), g.cell_average(c));
        }
    }

    #[test]
    fn second_application_changes_little() {
        let m = mesh(20);
        let f = DGField::project(&m, &Basis::new(1), |p| (p.x - PI).tanh() * 0.5 + (2.0 * p.y).sin() * 0.1);
        let cfg = LimiterConfig::weno(0.01);
        let (g, _) = limit(&f, &cfg);
        let t = detect_troubled(&f, &cfg);
        let h = apply_limiter(&g, &t, &cfg);
        let diff = g.coeffs.iter().zip(&h.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = g.coeffs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 0.05 * scale, "diff {diff}");
        let _ = Point::default();
    }

    #[test]
    fn disabled_is_identity() {
        let m = mesh(6);
        let f = DGField::project(&m, &Basis::new(2), |p| if p.x < 1.0 { 5.0 } else { 0.0 });
        let (g, n) = limit(&f, &LimiterConfig::default());
        assert_eq!(n, 0);
        assert_eq!(f, g);
    }
}
