//! Built-in benchmarks: initial data, model, domain and final time.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::dg_space::{Basis, DGField};
use crate::error::{Result, SldgError};
use crate::grid::{Domain, Mesh, Point};
use crate::ldg_poisson::{LdgOperator, LinearSolver, Model};
use crate::solver::{FieldSource, SchemeConfig, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Accuracy,
    KelvinHelmholtz,
    VortexPatch,
    ShearFlow,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] =
        [ProblemKind::Accuracy, ProblemKind::KelvinHelmholtz, ProblemKind::VortexPatch, ProblemKind::ShearFlow];

    pub fn spec(self) -> ProblemSpec {
        match self {
            ProblemKind::Accuracy => accuracy_test(),
            ProblemKind::KelvinHelmholtz => kelvin_helmholtz(),
            ProblemKind::VortexPatch => vortex_patch(),
            ProblemKind::ShearFlow => shear_flow(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Accuracy => "accuracy",
            ProblemKind::KelvinHelmholtz => "kh",
            ProblemKind::VortexPatch => "vortex",
            ProblemKind::ShearFlow => "shear",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = SldgError;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| SldgError::InvalidArgument(format!("unknown problem '{s}' (accuracy, kh, vortex, shear)")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub model: Model,
    pub domain: Domain,
    pub initial: fn(Point) -> f64,
    /// Exact solution `(point, time)` where one is known.
    pub exact: Option<fn(Point, f64) -> f64>,
    pub t_final: f64,
}

/// Numerical choices for building a solver on one of the problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub nx: usize,
    pub ny: usize,
    pub degree: usize,
    pub ldg_degree: usize,
    pub solver: LinearSolver,
}

impl ProblemSpec {
    pub fn mesh(&self, nx: usize, ny: usize) -> Result<Mesh> {
        Mesh::new(self.domain, nx, ny)
    }

    pub fn project_initial(&self, mesh: &Mesh, degree: usize) -> DGField {
        DGField::project(mesh, &Basis::new(degree), self.initial)
    }

    pub fn build_solver(&self, disc: &Discretization, scheme: SchemeConfig, cfl: f64) -> Result<Solver> {
        if !(1..=2).contains(&disc.degree) {
            return Err(SldgError::InvalidArgument(format!("degree must be 1 or 2, got {}", disc.degree)));
        }
        let mesh = self.mesh(disc.nx, disc.ny)?;
        let rho = self.project_initial(&mesh, disc.degree);
        let op = LdgOperator::with_solver(&mesh, disc.ldg_degree, self.model, disc.solver)?;
        Solver::new(rho, FieldSource::Ldg(Box::new(op)), scheme, cfl)
    }
}

fn accuracy_initial(p: Point) -> f64 {
    -2.0 * p.x.sin() * p.y.sin()
}

fn accuracy_exact(p: Point, _t: f64) -> f64 {
    accuracy_initial(p)
}

/// Stationary vorticity `-2 sin x sin y` on `[0, 2pi]^2`.
pub fn accuracy_test() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::Accuracy,
        model: Model::Euler,
        domain: Domain::new(0.0, 2.0 * PI, 0.0, 2.0 * PI).unwrap(),
        initial: accuracy_initial,
        exact: Some(accuracy_exact),
        t_final: 1.0,
    }
}

pub const KH_WAVENUMBER: f64 = 0.5;

fn kh_initial(p: Point) -> f64 {
    p.y.sin() + 0.015 * (KH_WAVENUMBER * p.x).cos()
}

/// Guiding-center density `sin y + 0.015 cos(kx)` on `[0, 4pi] x [0, 2pi]`.
pub fn kelvin_helmholtz() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::KelvinHelmholtz,
        model: Model::Vlasov,
        domain: Domain::new(0.0, 4.0 * PI, 0.0, 2.0 * PI).unwrap(),
        initial: kh_initial,
        exact: None,
        t_final: 40.0,
    }
}

fn vortex_initial(p: Point) -> f64 {
    let in_x = (0.5 * PI..=1.5 * PI).contains(&p.x);
    if in_x && (0.25 * PI..=0.75 * PI).contains(&p.y) {
        -1.0
    } else if in_x && (1.25 * PI..=1.75 * PI).contains(&p.y) {
        1.0
    } else {
        0.0
    }
}

/// Two opposite rectangular vortex patches.
pub fn vortex_patch() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::VortexPatch,
        model: Model::Euler,
        domain: Domain::new(0.0, 2.0 * PI, 0.0, 2.0 * PI).unwrap(),
        initial: vortex_initial,
        exact: None,
        t_final: 10.0,
    }
}

pub const SHEAR_DELTA: f64 = 0.05;
/// Width of the two shear layers.
pub const SHEAR_THICKNESS: f64 = PI / 15.0;

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

fn shear_initial(p: Point) -> f64 {
    let r = SHEAR_THICKNESS;
    if p.y <= PI {
        SHEAR_DELTA * p.x.cos() - sech2((p.y - 0.5 * PI) / r) / r
    } else {
        SHEAR_DELTA * p.x.cos() + sech2((1.5 * PI - p.y) / r) / r
    }
}

/// Double shear layer.
pub fn shear_flow() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::ShearFlow,
        model: Model::Euler,
        domain: Domain::new(0.0, 2.0 * PI, 0.0, 2.0 * PI).unwrap(),
        initial: shear_initial,
        exact: None,
        t_final: 8.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_values() {
        assert_eq!((accuracy_test().initial)(Point::new(PI / 2.0, PI / 2.0)), -2.0);
        assert!(((kelvin_helmholtz().initial)(Point::new(0.0, PI / 2.0)) - 1.015).abs() < 1e-15);
        assert_eq!((vortex_patch().initial)(Point::new(PI, PI / 2.0)), -1.0);
        assert_eq!((vortex_patch().initial)(Point::new(PI, 1.5 * PI)), 1.0);
        assert_eq!((vortex_patch().initial)(Point::new(PI, PI)), 0.0);
        assert!(((shear_flow().initial)(Point::new(0.0, PI / 2.0)) - (0.05 - 15.0 / PI)).abs() < 1e-13);
    }

    #[test]
    fn shear_branches_meet_symmetrically() {
        let f = shear_flow().initial;
        // Both layers sit pi/2 from the branch switch; values there are tiny and opposite.
        let below = f(Point::new(PI / 2.0, PI)) - SHEAR_DELTA * (PI / 2.0).cos();
        let above = f(Point::new(PI / 2.0, PI + 1e-12)) - SHEAR_DELTA * (PI / 2.0).cos();
        assert!((below + above).abs() < 1e-9);
        // 15 sech^2(7.5) / pi is about 5.9e-6.
        assert!(below.abs() < 1e-5);
    }

    #[test]
    fn exact_is_stationary() {
        let e = accuracy_test().exact.unwrap();
        let p = Point::new(0.3, 1.7);
        assert_eq!(e(p, 0.0), e(p, 5.0));
    }

    #[test]
    fn zero_mean_after_projection() {
        for kind in ProblemKind::ALL {
            let s = kind.spec();
            // Meshes that align the vortex-patch edges with cell edges.
            let m = s.mesh(32, 32).unwrap();
            let f = s.project_initial(&m, 2);
            assert!(f.integrate().abs() < 1e-12, "{kind}: {}", f.integrate());
        }
    }

    #[test]
    fn names_roundtrip() {
        for kind in ProblemKind::ALL {
            assert_eq!(kind.name().parse::<ProblemKind>().unwrap(), kind);
        }
        assert!("nope".parse::<ProblemKind>().is_err());
    }

    #[test]
    fn build_rejects_bad_degree() {
        let d = Discretization { nx: 4, ny: 4, degree: 3, ldg_degree: 2, solver: LinearSolver::Spectral };
        assert!(accuracy_test().build_solver(&d, SchemeConfig::default(), 1.0).is_err());
    }
}
