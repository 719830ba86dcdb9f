//! The time loop and the convergence suite.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use sldg_core::convergence::{convergence_table, table_to_csv, ConvergenceRow, ConvergenceRun};
use sldg_core::diagnostics::{record, DiagnosticsLog};
use sldg_core::{DGField, ErrorNorms, Solver, StepReport};

use crate::config::RunConfig;
use crate::output::{snapshot_name, write_atomic, RunLog};

/// What a finished run reports back.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub time: f64,
    pub diagnostics: DiagnosticsLog,
    pub errors: Option<ErrorNorms>,
    pub max_mass_deviation: f64,
    pub seconds: f64,
    pub rho: DGField,
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().context("building thread pool")
}

fn build(cfg: &RunConfig) -> Result<Solver> {
    Ok(cfg.problem.spec().build_solver(&cfg.discretization(), cfg.scheme()?, cfg.cfl)?)
}

/// Advance to `cfg.tfinal`, calling `on_step` after every accepted step. Returns the step count.
fn advance_to(
    solver: &mut Solver,
    cfg: &RunConfig,
    log: &mut RunLog,
    mut on_step: impl FnMut(&mut Solver, &StepReport, usize) -> Result<()>,
) -> Result<usize> {
    let mut steps = 0;
    while solver.time < cfg.tfinal {
        let report = match solver.advance(cfg.tfinal) {
            Ok(r) => r,
            Err(e) => {
                log.error(format!("step {} at t = {}: {e}", steps + 1, solver.time));
                return Err(e).context(format!("aborted at t = {}", solver.time));
            }
        };
        steps += 1;
        if report.shrinks + report.grows > 0 {
            log.info(format!(
                "step {steps} at t = {:.6}: cfl {} after {} shrink(s), {} grow(s)",
                solver.time, report.cfl, report.shrinks, report.grows
            ));
        }
        on_step(solver, &report, steps)?;
    }
    Ok(steps)
}

fn run_inner(cfg: &RunConfig, log: &mut RunLog) -> Result<RunSummary> {
    let spec = cfg.problem.spec();
    let start = Instant::now();
    let mut solver = build(cfg)?;
    let scale = solver.rho.abs_integral();
    let mut diagnostics = DiagnosticsLog::default();
    let e0 = solver.current_field()?.clone();
    diagnostics.push(record(&solver.rho, &e0, 0.0, solver.current_cfl(), 0.0));
    if cfg.snap_every > 0 {
        write_atomic(&cfg.out.join(snapshot_name(0.0)), &solver.rho.to_long_text(0.0))?;
    }

    let steps = advance_to(&mut solver, cfg, log, |s, report, steps| {
        let last = s.time >= cfg.tfinal;
        if steps % cfg.diag_every == 0 || last {
            // Cached and reused by the next step.
            let e = s.current_field()?.clone();
            diagnostics.push(record(&s.rho, &e, report.theta, report.cfl, s.time));
        }
        if cfg.snap_every > 0 && steps % cfg.snap_every == 0 && !last {
            write_atomic(&cfg.out.join(snapshot_name(s.time)), &s.rho.to_long_text(s.time))?;
        }
        Ok(())
    })?;
    let seconds = start.elapsed().as_secs_f64();

    let t = solver.time;
    write_atomic(&cfg.out.join(snapshot_name(t)), &solver.rho.to_long_text(t))?;
    write_atomic(&cfg.out.join("diag.csv"), &diagnostics.to_csv())?;
    let errors = spec.exact.map(|exact| solver.rho.error_norms(|p| exact(p, t)));
    if let Some(e) = errors {
        let csv = format!(
            "nx,ny,l1,l2,linf,seconds\n{},{},{:.6e},{:.6e},{:.6e},{seconds:.3}\n",
            cfg.nx, cfg.ny, e.l1, e.l2, e.linf
        );
        write_atomic(&cfg.out.join("errors.csv"), &csv)?;
        log.info(format!("errors: L1 {:.4e}  L2 {:.4e}  Linf {:.4e}", e.l1, e.l2, e.linf));
    }
    let max_mass_deviation = diagnostics.max_mass_deviation(scale);
    let (lo, hi) = solver.rho.extrema();
    log.info(format!("finished {steps} steps at t = {t} in {seconds:.2} s"));
    log.info(format!("relative mass deviation {max_mass_deviation:.3e}"));
    log.info(format!("extrema [{lo:.6}, {hi:.6}]"));
    log.info(format!(
        "poisson {:.2} s ({} solves), remap {:.2} s",
        solver.timings.poisson.as_secs_f64(),
        solver.poisson_solves,
        solver.timings.remap.as_secs_f64()
    ));
    Ok(RunSummary { steps, time: t, diagnostics, errors, max_mass_deviation, seconds, rho: solver.rho })
}

/// Run one configuration and write `diag.csv`, snapshots, `errors.csv` (when an exact
/// solution exists) and `run.log` into `cfg.out`. The log is written on failure too.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let mut log = RunLog::default();
    log.info(format!("{} on {}x{} for {} up to t = {}", cfg.label(), cfg.nx, cfg.ny, cfg.problem, cfg.tfinal));
    let out = thread_pool(cfg.threads)?.install(|| run_inner(cfg, &mut log));
    if let Err(e) = &out {
        log.error(format!("{e:#}"));
    }
    write_atomic(&cfg.out.join("run.log"), &log.text())?;
    out
}

/// The refinement axis of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Square meshes `n x n` at the template CFL.
    Meshes(Vec<usize>),
    /// CFL numbers on the template mesh.
    Cfls(Vec<f64>),
}

/// Error table over a sweep; written to `convergence.csv` in the template's output directory.
pub fn convergence_suite(template: &RunConfig, sweep: &Sweep) -> Result<Vec<ConvergenceRow>> {
    let Some(exact) = template.problem.spec().exact else {
        bail!("problem {} has no exact solution", template.problem);
    };
    let configs: Vec<(f64, f64, RunConfig)> = match sweep {
        Sweep::Meshes(ns) => ns
            .iter()
            .map(|&n| (n as f64, n as f64, RunConfig { nx: n, ny: n, ..template.clone() }))
            .collect(),
        Sweep::Cfls(cs) => cs
            .iter()
            .map(|&c| (c, 1.0 / c, RunConfig { cfl: c, cfl_max: c.max(template.cfl_max), ..template.clone() }))
            .collect(),
    };
    if configs.is_empty() {
        bail!("empty sweep");
    }
    let pool = thread_pool(template.threads)?;
    let mut log = RunLog::default();
    let mut runs = Vec::new();
    for (label, refinement, cfg) in configs {
        let start = Instant::now();
        let solver = pool.install(|| -> Result<Solver> {
            let mut s = build(&cfg)?;
            advance_to(&mut s, &cfg, &mut log, |_, _, _| Ok(()))?;
            Ok(s)
        })?;
        let seconds = start.elapsed().as_secs_f64();
        let t = solver.time;
        let errors = solver.rho.error_norms(|p| exact(p, t));
        log.info(format!("{label}: L1 {:.4e} in {seconds:.2} s", errors.l1));
        runs.push(ConvergenceRun { label, refinement, errors, seconds });
    }
    let rows = convergence_table(&runs);
    let label = match sweep {
        Sweep::Meshes(_) => "n",
        Sweep::Cfls(_) => "cfl",
    };
    write_atomic(&template.out.join("convergence.csv"), &table_to_csv(label, &rows))?;
    Ok(rows)
}
