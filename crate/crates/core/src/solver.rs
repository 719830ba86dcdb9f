//! Time stepping: the predictor-corrector cascade with optional CFL control and limiting.

use std::time::{Duration, Instant};

use log::debug;

use crate::adaptive_control::{decide, AdaptiveConfig, ControllerState, Decision};
use crate::characteristics::{
    compute_dt, trace_order1, trace_order2, trace_order3, ThirdOrderInputs, TraceNodes, TraceOrder, TracePointSet,
};
use crate::dg_space::DGField;
use crate::error::{Result, SldgError};
use crate::ldg_poisson::{LdgOperator, VectorField};
use crate::limiter::{limit, LimiterConfig};
use crate::sldg_update::{needs_midpoints, step, upstream_with_theta};
use crate::upstream_geometry::{UpstreamCell, UpstreamMode};

/// Where the transport field comes from.
#[derive(Debug)]
pub enum FieldSource {
    /// Solve the Poisson problem for every stage.
    Ldg(Box<LdgOperator>),
    /// A fixed field used for every stage; its time derivative is zero.
    Frozen(VectorField),
}

impl FieldSource {
    fn field(&self, rho: &DGField) -> Result<VectorField> {
        match self {
            FieldSource::Ldg(op) => Ok(op.solve_field(rho)?.1),
            FieldSource::Frozen(e) => Ok(e.clone()),
        }
    }

    fn time_derivative(&self, rho: &DGField, e: &VectorField) -> Result<VectorField> {
        match self {
            FieldSource::Ldg(op) => op.solve_field_time_derivative(rho, e),
            FieldSource::Frozen(e) => Ok(VectorField::zeros(&e.e1.mesh, &e.e1.basis)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub mode: UpstreamMode,
    pub time_order: TraceOrder,
    pub limiter: LimiterConfig,
    /// `None` keeps the CFL fixed.
    pub adaptive: Option<AdaptiveConfig>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            mode: UpstreamMode::Straight,
            time_order: TraceOrder::Second,
            limiter: LimiterConfig::default(),
            adaptive: None,
        }
    }
}

/// Wall time split between field solves and remaps.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub poisson: Duration,
    pub remap: Duration,
}

/// Summary of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub dt: f64,
    pub cfl: f64,
    /// Largest area deviation over the accepted stages.
    pub theta: f64,
    pub stage_thetas: Vec<f64>,
    pub shrinks: usize,
    pub grows: usize,
    pub troubled: usize,
}

enum Stages {
    Done(DGField, Vec<f64>),
    Restart(Decision),
}

/// Solution state plus everything needed to advance it.
#[derive(Debug)]
pub struct Solver {
    pub config: SchemeConfig,
    pub source: FieldSource,
    pub nodes: TraceNodes,
    pub rho: DGField,
    pub time: f64,
    pub cfl: f64,
    pub control: Option<ControllerState>,
    pub timings: Timings,
    pub poisson_solves: usize,
    field: Option<VectorField>,
}

impl Solver {
    pub fn new(rho0: DGField, source: FieldSource, config: SchemeConfig, cfl: f64) -> Result<Self> {
        if !(cfl > 0.0 && cfl.is_finite()) {
            return Err(SldgError::InvalidArgument(format!("cfl must be positive, got {cfl}")));
        }
        if config.mode == UpstreamMode::Qc && rho0.degree() < 2 {
            debug!("curved upstream sides with degree {} behave like straight ones", rho0.degree());
        }
        let control = config.adaptive.map(|a| ControllerState::new(cfl, &a)).transpose()?;
        let nodes = TraceNodes::new(&rho0.mesh, needs_midpoints(config.mode, rho0.degree()));
        Ok(Solver {
            config,
            source,
            nodes,
            rho: rho0,
            time: 0.0,
            cfl,
            control,
            timings: Timings::default(),
            poisson_solves: 0,
            field: None,
        })
    }

    fn solve(&mut self, rho: &DGField) -> Result<VectorField> {
        let t0 = Instant::now();
        let e = self.source.field(rho)?;
        self.timings.poisson += t0.elapsed();
        if matches!(self.source, FieldSource::Ldg(_)) {
            self.poisson_solves += 1;
        }
        Ok(e)
    }

    fn solve_dt(&mut self, rho: &DGField, e: &VectorField) -> Result<VectorField> {
        let t0 = Instant::now();
        let d = self.source.time_derivative(rho, e)?;
        self.timings.poisson += t0.elapsed();
        if matches!(self.source, FieldSource::Ldg(_)) {
            self.poisson_solves += 1;
        }
        Ok(d)
    }

    /// Field of the current solution, solved once and cached until the next step.
    pub fn current_field(&mut self) -> Result<&VectorField> {
        if self.field.is_none() {
            let rho = self.rho.clone();
            self.field = Some(self.solve(&rho)?);
        }
        Ok(self.field.as_ref().unwrap())
    }

    pub fn current_cfl(&self) -> f64 {
        self.control.map_or(self.cfl, |c| c.cfl)
    }

    fn remap_stage(&mut self, traces: &TracePointSet) -> Result<(Vec<UpstreamCell>, f64)> {
        let t0 = Instant::now();
        let out = upstream_with_theta(&self.rho.mesh, traces, self.config.mode);
        self.timings.remap += t0.elapsed();
        out
    }

    fn evolve(&mut self, cells: &[UpstreamCell]) -> Result<DGField> {
        let t0 = Instant::now();
        let out = step(&self.rho, cells);
        self.timings.remap += t0.elapsed();
        out
    }

    /// Build the upstream cells of one stage and consult the controller.
    /// An inner `Err(decision)` asks the caller to restart the cascade with the updated cfl.
    fn checked_stage(&mut self, traces: &TracePointSet) -> Result<std::result::Result<(DGField, f64), Decision>> {
        let built = self.remap_stage(traces);
        let Some(adaptive) = self.config.adaptive else {
            let (cells, theta) = built?;
            return Ok(Ok((self.evolve(&cells)?, theta)));
        };
        let state = self.control.as_mut().expect("controller state exists when adaptive");
        let (cells, theta) = match built {
            Ok(v) => v,
            Err(e) if e.is_geometric() => {
                debug!("geometry failure treated as oversized step: {e}");
                return Ok(Err(decide(f64::INFINITY, state, &adaptive)?));
            }
            Err(e) => return Err(e),
        };
        match decide(theta, state, &adaptive)? {
            Decision::Accept => {}
            d => return Ok(Err(d)),
        }
        match self.evolve(&cells) {
            Ok(rho) => Ok(Ok((rho, theta))),
            Err(e) if e.is_geometric() => {
                let state = self.control.as_mut().unwrap();
                Ok(Err(decide(f64::INFINITY, state, &adaptive)?))
            }
            Err(e) => Err(e),
        }
    }

    fn run_stages(&mut self, e_n: &VectorField, de_dt_n: &mut Option<VectorField>, dt: f64) -> Result<Stages> {
        let order = self.config.time_order;
        let mut thetas = Vec::with_capacity(3);

        let trace1 = trace_order1(self.nodes, e_n, dt);
        let (rho1, th) = match self.checked_stage(&trace1)? {
            Ok(v) => v,
            Err(d) => return Ok(Stages::Restart(d)),
        };
        thetas.push(th);
        if order == TraceOrder::First {
            return Ok(Stages::Done(rho1, thetas));
        }

        let e1 = self.solve(&rho1)?;
        let trace2 = trace_order2(e_n, &e1, &trace1, dt);
        let (rho2, th) = match self.checked_stage(&trace2)? {
            Ok(v) => v,
            Err(d) => return Ok(Stages::Restart(d)),
        };
        thetas.push(th);
        if order == TraceOrder::Second {
            return Ok(Stages::Done(rho2, thetas));
        }

        let e2 = self.solve(&rho2)?;
        if de_dt_n.is_none() {
            let rho = self.rho.clone();
            *de_dt_n = Some(self.solve_dt(&rho, e_n)?);
        }
        let de_dt_2 = self.solve_dt(&rho2, &e2)?;
        let inputs = ThirdOrderInputs {
            e_n,
            de_dt_n: de_dt_n.as_ref().unwrap(),
            e_np1: &e2,
            de_dt_np1: &de_dt_2,
        };
        let trace3 = trace_order3(inputs, &trace2, dt);
        let (rho3, th) = match self.checked_stage(&trace3)? {
            Ok(v) => v,
            Err(d) => return Ok(Stages::Restart(d)),
        };
        thetas.push(th);
        Ok(Stages::Done(rho3, thetas))
    }

    fn finish(&mut self, rho: DGField, dt: f64) -> usize {
        let (rho, troubled) = limit(&rho, &self.config.limiter);
        self.rho = rho;
        self.time += dt;
        self.field = None;
        troubled
    }

    /// One step with `dt = cfl / (a/dx + b/dy)`, clipped so `time` does not pass `t_final`.
    pub fn advance(&mut self, t_final: f64) -> Result<StepReport> {
        let remaining = t_final - self.time;
        if !(remaining > 0.0) {
            return Err(SldgError::InvalidArgument(format!("final time {t_final} already reached at {}", self.time)));
        }
        let e_n = self.current_field()?.clone();
        let mut de_dt_n = None;
        if let Some(c) = self.control.as_mut() {
            c.begin_step();
        }
        let (mut shrinks, mut grows) = (0, 0);
        loop {
            let cfl = self.current_cfl();
            let ts = compute_dt(&e_n, cfl)?;
            let clipped = ts.dt >= remaining;
            let dt = if clipped { remaining } else { ts.dt };
            match self.run_stages(&e_n, &mut de_dt_n, dt)? {
                Stages::Restart(Decision::Shrink(c)) => {
                    shrinks += 1;
                    debug!("t = {:.6}: shrink cfl to {c}", self.time);
                }
                Stages::Restart(Decision::Grow(c)) => {
                    grows += 1;
                    debug!("t = {:.6}: grow cfl to {c}", self.time);
                }
                Stages::Restart(Decision::Accept) => unreachable!("accepted stages do not restart"),
                Stages::Done(rho, stage_thetas) => {
                    let troubled = self.finish(rho, dt);
                    if clipped {
                        // Land exactly on the requested time.
                        self.time = t_final;
                    }
                    let theta = stage_thetas.iter().cloned().fold(0.0, f64::max);
                    return Ok(StepReport { dt, cfl, theta, stage_thetas, shrinks, grows, troubled });
                }
            }
        }
    }

    /// One step of a prescribed size, bypassing the CFL rule and the controller.
    pub fn advance_fixed_dt(&mut self, dt: f64) -> Result<StepReport> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SldgError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let e_n = self.current_field()?.clone();
        let saved = self.config.adaptive.take();
        let out = self.run_stages(&e_n, &mut None, dt);
        self.config.adaptive = saved;
        match out? {
            Stages::Done(rho, stage_thetas) => {
                let troubled = self.finish(rho, dt);
                let theta = stage_thetas.iter().cloned().fold(0.0, f64::max);
                Ok(StepReport { dt, cfl: f64::NAN, theta, stage_thetas, shrinks: 0, grows: 0, troubled })
            }
            Stages::Restart(_) => unreachable!("no controller without adaptive config"),
        }
    }

    /// Advance to `t_final`, calling `on_step` after each accepted step.
    pub fn run_until(&mut self, t_final: f64, mut on_step: impl FnMut(&mut Solver, &StepReport) -> Result<()>) -> Result<()> {
        while self.time < t_final {
            let report = self.advance(t_final)?;
            on_step(self, &report)?;
        }
        Ok(())
    }
}
