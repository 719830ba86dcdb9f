//! Run configuration: command-line flags layered over an optional key=value file.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use sldg_core::{
    AdaptiveConfig, Discretization, LimiterConfig, LinearSolver, ProblemKind, SchemeConfig, TraceOrder, UpstreamMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LimiterKind {
    None,
    Weno,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Spectral,
    Cg,
}

/// Every setting is optional here so that the file and the flags can be merged.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// accuracy, kh, vortex or shear.
    #[arg(long)]
    pub problem: Option<ProblemKind>,
    #[arg(long)]
    pub nx: Option<usize>,
    /// Defaults to nx.
    #[arg(long)]
    pub ny: Option<usize>,
    /// Transport degree k (1 or 2).
    #[arg(long)]
    pub degree: Option<usize>,
    /// Quadratic-curved upstream sides.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub qc: Option<bool>,
    /// Poisson degree k_p (1 to 3); defaults to degree + 1.
    #[arg(long)]
    pub ldg_degree: Option<usize>,
    /// Characteristics tracing order (1 to 3).
    #[arg(long)]
    pub time_order: Option<usize>,
    /// Initial CFL number.
    #[arg(long)]
    pub cfl: Option<f64>,
    /// Cap for the adaptive controller; defaults to the initial CFL.
    #[arg(long)]
    pub cfl_max: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub adaptive: Option<bool>,
    #[arg(long)]
    pub delta_m: Option<f64>,
    #[arg(long = "delta-M")]
    pub delta_big_m: Option<f64>,
    #[arg(long, value_enum)]
    pub limiter: Option<LimiterKind>,
    #[arg(long)]
    pub tvb_m: Option<f64>,
    /// Final time; defaults to the problem's.
    #[arg(long)]
    pub tfinal: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Snapshot every N steps (0: final only).
    #[arg(long)]
    pub snap_every: Option<usize>,
    /// Diagnostics row every N steps.
    #[arg(long)]
    pub diag_every: Option<usize>,
    /// Worker threads (0: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Poisson linear solver.
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("bad value '{v}' for {key}: {e}"))
}

fn parse_enum<T: ValueEnum>(key: &str, v: &str) -> Result<T> {
    T::from_str(v, true).map_err(|e| anyhow!("bad value '{v}' for {key}: {e}"))
}

impl Overrides {
    /// Read `key = value` lines; `#` starts a comment. Keys use the flag names.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_text(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut o = Overrides::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            o.set(k.trim(), v.trim()).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(o)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = key.trim_start_matches("--").replace('_', "-");
        match k.as_str() {
            "problem" => self.problem = Some(parse(key, v)?),
            "nx" => self.nx = Some(parse(key, v)?),
            "ny" => self.ny = Some(parse(key, v)?),
            "degree" => self.degree = Some(parse(key, v)?),
            "qc" => self.qc = Some(parse(key, v)?),
            "ldg-degree" => self.ldg_degree = Some(parse(key, v)?),
            "time-order" => self.time_order = Some(parse(key, v)?),
            "cfl" => self.cfl = Some(parse(key, v)?),
            "cfl-max" => self.cfl_max = Some(parse(key, v)?),
            "adaptive" => self.adaptive = Some(parse(key, v)?),
            "delta-m" => self.delta_m = Some(parse(key, v)?),
            "delta-M" => self.delta_big_m = Some(parse(key, v)?),
            "limiter" => self.limiter = Some(parse_enum(key, v)?),
            "tvb-m" => self.tvb_m = Some(parse(key, v)?),
            "tfinal" => self.tfinal = Some(parse(key, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "snap-every" => self.snap_every = Some(parse(key, v)?),
            "diag-every" => self.diag_every = Some(parse(key, v)?),
            "threads" => self.threads = Some(parse(key, v)?),
            "solver" => self.solver = Some(parse_enum(key, v)?),
            _ => bail!("unknown key '{key}'"),
        }
        Ok(())
    }

    /// Fields set in `self` win over `base`.
    pub fn layered_over(self, base: Overrides) -> Overrides {
        macro_rules! pick {
            ($($f:ident),*) => { Overrides { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            problem, nx, ny, degree, qc, ldg_degree, time_order, cfl, cfl_max, adaptive, delta_m, delta_big_m, limiter,
            tvb_m, tfinal, out, snap_every, diag_every, threads, solver
        )
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub nx: usize,
    pub ny: usize,
    pub degree: usize,
    pub qc: bool,
    pub ldg_degree: usize,
    pub time_order: usize,
    pub cfl: f64,
    pub cfl_max: f64,
    pub adaptive: bool,
    pub delta_m: f64,
    pub delta_big_m: f64,
    pub limiter: LimiterKind,
    pub tvb_m: f64,
    pub tfinal: f64,
    pub out: PathBuf,
    pub snap_every: usize,
    pub diag_every: usize,
    pub threads: usize,
    pub solver: SolverKind,
}

impl RunConfig {
    /// Fill unset fields with defaults and check ranges.
    pub fn resolve(o: Overrides) -> Result<Self> {
        let problem = o.problem.unwrap_or(ProblemKind::Accuracy);
        let nx = o.nx.unwrap_or(64);
        let degree = o.degree.unwrap_or(2);
        let cfl = o.cfl.unwrap_or(1.0);
        let cfg = RunConfig {
            problem,
            nx,
            ny: o.ny.unwrap_or(nx),
            degree,
            qc: o.qc.unwrap_or(false),
            ldg_degree: o.ldg_degree.unwrap_or(degree + 1),
            time_order: o.time_order.unwrap_or(2),
            cfl,
            cfl_max: o.cfl_max.unwrap_or(cfl),
            adaptive: o.adaptive.unwrap_or(false),
            delta_m: o.delta_m.unwrap_or(0.003),
            delta_big_m: o.delta_big_m.unwrap_or(0.01),
            limiter: o.limiter.unwrap_or(LimiterKind::None),
            tvb_m: o.tvb_m.unwrap_or(LimiterConfig::default().tvb_m),
            tfinal: o.tfinal.unwrap_or(problem.spec().t_final),
            out: o.out.unwrap_or_else(|| PathBuf::from(format!("sldg-{problem}"))),
            snap_every: o.snap_every.unwrap_or(0),
            diag_every: o.diag_every.unwrap_or(1),
            threads: o.threads.unwrap_or(0),
            solver: o.solver.unwrap_or(SolverKind::Spectral),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            bail!("mesh must have at least 2 cells per direction, got {}x{}", self.nx, self.ny);
        }
        if !(1..=2).contains(&self.degree) {
            bail!("degree must be 1 or 2, got {}", self.degree);
        }
        if !(1..=3).contains(&self.ldg_degree) {
            bail!("ldg degree must be 1, 2 or 3, got {}", self.ldg_degree);
        }
        TraceOrder::from_int(self.time_order)?;
        if !(self.cfl > 0.0 && self.cfl.is_finite()) {
            bail!("cfl must be positive, got {}", self.cfl);
        }
        if !(self.tfinal > 0.0 && self.tfinal.is_finite()) {
            bail!("tfinal must be positive, got {}", self.tfinal);
        }
        if self.diag_every == 0 {
            bail!("diag-every must be at least 1");
        }
        if !(self.tvb_m >= 0.0) {
            bail!("tvb-m must be non-negative, got {}", self.tvb_m);
        }
        if self.adaptive {
            self.adaptive_config()?;
            if self.cfl > self.cfl_max {
                bail!("initial cfl {} exceeds cfl-max {}", self.cfl, self.cfl_max);
            }
        }
        Ok(())
    }

    fn adaptive_config(&self) -> Result<AdaptiveConfig> {
        Ok(AdaptiveConfig::with_thresholds(self.cfl_max, self.delta_m, self.delta_big_m)?)
    }

    pub fn scheme(&self) -> Result<SchemeConfig> {
        Ok(SchemeConfig {
            mode: if self.qc { UpstreamMode::Qc } else { UpstreamMode::Straight },
            time_order: TraceOrder::from_int(self.time_order)?,
            limiter: match self.limiter {
                LimiterKind::None => LimiterConfig::default(),
                LimiterKind::Weno => LimiterConfig::weno(self.tvb_m),
            },
            adaptive: if self.adaptive { Some(self.adaptive_config()?) } else { None },
        })
    }

    pub fn discretization(&self) -> Discretization {
        Discretization {
            nx: self.nx,
            ny: self.ny,
            degree: self.degree,
            ldg_degree: self.ldg_degree,
            solver: match self.solver {
                SolverKind::Spectral => LinearSolver::Spectral,
                SolverKind::Cg => LinearSolver::cg_default(),
            },
        }
    }

    /// Short scheme name such as `P2 SLDG-QC + P3 LDG + time3 + CFL3`.
    pub fn label(&self) -> String {
        format!(
            "P{} SLDG{} + P{} LDG + time{}{} + CFL{}",
            self.degree,
            if self.qc { "-QC" } else { "" },
            self.ldg_degree,
            self.time_order,
            if self.limiter == LimiterKind::Weno { " + WL" } else { "" },
            if self.adaptive { self.cfl_max } else { self.cfl }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_parsing_and_layering() {
        let file = Overrides::from_text("# run\nproblem = vortex\nnx=16 # coarse\nqc = true\ndelta-M = 0.02\n").unwrap();
        let flags = Overrides { nx: Some(8), ..Default::default() };
        let cfg = RunConfig::resolve(flags.layered_over(file)).unwrap();
        assert_eq!(cfg.problem, ProblemKind::VortexPatch);
        assert_eq!((cfg.nx, cfg.ny), (8, 8));
        assert!(cfg.qc);
        assert_eq!(cfg.delta_big_m, 0.02);
        assert_eq!(cfg.ldg_degree, 3);
        assert_eq!(cfg.tfinal, 10.0);
    }

    #[test]
    fn underscores_and_dashes_both_work() {
        let o = Overrides::from_text("time_order = 3\nsnap-every = 5\nlimiter = weno").unwrap();
        assert_eq!(o.time_order, Some(3));
        assert_eq!(o.snap_every, Some(5));
        assert_eq!(o.limiter, Some(LimiterKind::Weno));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Overrides::from_text("colour = red").is_err());
        assert!(Overrides::from_text("nx 12").is_err());
        assert!(Overrides::from_text("nx = -3").is_err());
        for o in [
            Overrides { degree: Some(3), ..Default::default() },
            Overrides { ldg_degree: Some(4), ..Default::default() },
            Overrides { time_order: Some(0), ..Default::default() },
            Overrides { cfl: Some(0.0), ..Default::default() },
            Overrides { adaptive: Some(true), cfl: Some(4.0), cfl_max: Some(3.0), ..Default::default() },
            Overrides { adaptive: Some(true), delta_m: Some(0.1), ..Default::default() },
        ] {
            assert!(RunConfig::resolve(o).is_err());
        }
    }

    #[test]
    fn label_follows_naming_scheme() {
        let o = Overrides::from_text("qc = true\ntime-order = 3\nlimiter = weno\nadaptive = true\ncfl = 3\n").unwrap();
        assert_eq!(RunConfig::resolve(o).unwrap().label(), "P2 SLDG-QC + P3 LDG + time3 + WL + CFL3");
    }
}
