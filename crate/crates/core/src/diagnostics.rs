//! Conserved quantities and geometry health over a run.

use std::fmt::Write as _;

use crate::dg_space::DGField;
use crate::ldg_poisson::VectorField;

pub const CSV_HEADER: &str = "time,mass,energy,enstrophy,theta,cfl";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub theta: f64,
    pub cfl: f64,
}

pub fn record(rho: &DGField, e: &VectorField, theta: f64, cfl: f64, time: f64) -> DiagnosticsRecord {
    DiagnosticsRecord { time, mass: rho.integrate(), energy: e.energy(), enstrophy: rho.l2_norm_squared(), theta, cfl }
}

/// Plain decimal with 17 significant digits.
pub fn format_decimal(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i64;
    let prec = (16 - mag).clamp(0, 340) as usize;
    format!("{v:.prec$}")
}

/// Ordered records of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsLog {
    pub records: Vec<DiagnosticsRecord>,
}

impl DiagnosticsLog {
    pub fn push(&mut self, r: DiagnosticsRecord) {
        self.records.push(r);
    }

    /// `max |q(t) - q(0)| / |q(0)|`, falling back to the absolute deviation when `q(0)` is negligible.
    fn max_relative(&self, q: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
        let Some(first) = self.records.first() else { return 0.0 };
        let q0 = q(first);
        let scale = if q0.abs() > 1e-300 { q0.abs() } else { 1.0 };
        self.records.iter().map(|r| (q(r) - q0).abs() / scale).fold(0.0, f64::max)
    }

    /// Mass deviation relative to the larger of `|mass(0)|` and `mass_scale`; zero-mean
    /// data need a scale such as the total variation `integral |rho|`.
    pub fn max_mass_deviation(&self, mass_scale: f64) -> f64 {
        let Some(first) = self.records.first() else { return 0.0 };
        let scale = first.mass.abs().max(mass_scale);
        self.records.iter().map(|r| (r.mass - first.mass).abs() / scale).fold(0.0, f64::max)
    }

    pub fn max_relative_energy_deviation(&self) -> f64 {
        self.max_relative(|r| r.energy)
    }

    pub fn max_relative_enstrophy_deviation(&self) -> f64 {
        self.max_relative(|r| r.enstrophy)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let cols = [r.time, r.mass, r.energy, r.enstrophy, r.theta, r.cfl].map(format_decimal);
            let _ = writeln!(s, "{}", cols.join(","));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg_space::Basis;
    use crate::grid::{Domain, Mesh};
    use crate::ldg_poisson::{LdgOperator, Model};
    use std::f64::consts::PI;

    fn mesh(n: usize) -> Mesh {
        Mesh::new(Domain::new(0.0, 2.0 * PI, 0.0, 2.0 * PI).unwrap(), n, n).unwrap()
    }

    #[test]
    fn zero_field() {
        let m = mesh(4);
        let b = Basis::new(1);
        let r = record(&DGField::zeros(&m, &b), &VectorField::zeros(&m, &b), 0.0, 1.0, 0.0);
        assert_eq!((r.mass, r.energy, r.enstrophy), (0.0, 0.0, 0.0));
    }

    #[test]
    fn accuracy_enstrophy_and_energy() {
        let m = mesh(16);
        let rho = DGField::project(&m, &Basis::new(2), |p| -2.0 * p.x.sin() * p.y.sin());
        let op = LdgOperator::assemble(&m, 3, Model::Euler).unwrap();
        let (_, e) = op.solve_field(&rho).unwrap();
        let r = record(&rho, &e, 0.0, 1.0, 0.0);
        // Enstrophy 4 pi^2 up to projection error; u = (-sin x cos y, cos x sin y) gives energy 2 pi^2.
        assert!((r.enstrophy - 4.0 * PI * PI).abs() < 1e-3);
        assert!((r.energy - 2.0 * PI * PI).abs() < 1e-2);
        assert!(r.mass.abs() < 1e-13);
    }

    #[test]
    fn csv_layout_and_precision() {
        let mut log = DiagnosticsLog::default();
        log.push(DiagnosticsRecord { time: 0.0, mass: 1.0 / 3.0, energy: 2.5e-7, enstrophy: 12345.678, theta: 0.0, cfl: 3.0 });
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row[1], 1.0 / 3.0);
        assert_eq!(row[2], 2.5e-7);
        assert!(!csv.contains('e') || !csv.lines().nth(1).unwrap().contains('e'));
        assert!(format_decimal(1.0 / 3.0).len() >= 17);
    }

    #[test]
    fn deviations() {
        let mut log = DiagnosticsLog::default();
        for (m, e) in [(0.0, 2.0), (1e-14, 1.9), (-2e-14, 2.1)] {
            log.push(DiagnosticsRecord { time: 0.0, mass: m, energy: e, enstrophy: 1.0, theta: 0.0, cfl: 1.0 });
        }
        assert!((log.max_mass_deviation(4.0) - 5e-15).abs() < 1e-20);
        assert!((log.max_relative_energy_deviation() - 0.05).abs() < 1e-12);
        assert_eq!(log.max_relative_enstrophy_deviation(), 0.0);
    }
}
