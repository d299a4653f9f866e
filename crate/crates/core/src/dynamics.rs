//! Time integration: Strang splitting, a Picard/Duhamel fixed-point
//! integrator built on the linear propagator `exp(itA)`, and the global gauge
//! linking the three equivalent formulations.
//!
//! Sign convention throughout: `i u_t = -1/2 Delta u + Phi u`, so the free
//! step multiplies `u^` by `exp(-i dt |k|^2 / 2)` and a potential step
//! multiplies `u` by `exp(-i dt Phi)`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad_norm_squared, l2_norm_squared, Field, Grid};
use crate::observables::{Diagnostics, ObservableRecord, Outcome};
use crate::potential::{linear_profile, ModelParams, NonlocalPotential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Strang,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    #[serde(default = "default_threshold")]
    pub blowup_threshold: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_iterations")]
    pub picard_iterations: usize,
    #[serde(default = "default_substeps")]
    pub picard_substeps: usize,
}

fn default_stride() -> usize {
    10
}
fn default_threshold() -> f64 {
    1e3
}
fn default_iterations() -> usize {
    4
}
fn default_substeps() -> usize {
    8
}

/// Longest window accepted by [`picard_iterate`].
pub const PICARD_MAX_WINDOW: f64 = 0.1;

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            output_stride: default_stride(),
            blowup_threshold: default_threshold(),
            integrator: Integrator::Strang,
            picard_iterations: default_iterations(),
            picard_substeps: default_substeps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", "must be positive"));
        }
        if self.dt >= self.t_end {
            return Err(Error::param("dt", "must be smaller than t_end"));
        }
        if self.output_stride == 0 {
            return Err(Error::param("output_stride", "must be at least 1"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::param("blowup_threshold", "must be positive"));
        }
        if self.integrator == Integrator::Picard {
            if self.picard_iterations == 0 || self.picard_substeps == 0 {
                return Err(Error::param("picard_iterations", "iterations and substeps must be at least 1"));
            }
            if self.dt > PICARD_MAX_WINDOW {
                return Err(Error::param("dt", format!("Picard windows must not exceed {PICARD_MAX_WINDOW}")));
            }
        }
        Ok(())
    }

    /// Number of steps of size `dt` covering `[0, t_end]`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

/// Solution state together with its recorded observables.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    pub params: ModelParams,
    /// `||u_0||_2^2`, fixed at construction.
    pub initial_mass: f64,
    pub history: Vec<ObservableRecord>,
}

impl SimState {
    pub fn new(u: Field, params: ModelParams) -> Result<Self> {
        if u.grid().dimension() != params.dimension {
            return Err(Error::DimensionMismatch {
                expected: params.dimension,
                actual: u.grid().dimension(),
            });
        }
        if !u.is_finite() {
            return Err(Error::NonFinite { t: 0.0 });
        }
        Ok(Self {
            t: 0.0,
            initial_mass: params.initial_mass,
            u,
            params,
            history: Vec::new(),
        })
    }
}

/// `exp(-i dt |k|^2 / 2)` for every wavevector.
fn kinetic_multiplier(grid: &Grid, dt: f64) -> Vec<Complex64> {
    grid.k_squared()
        .into_iter()
        .map(|k2| Complex64::from_polar(1.0, -0.5 * dt * k2))
        .collect()
}

fn apply_phase(values: &mut [Complex64], phi: &[f64], tau: f64) {
    for (z, v) in values.iter_mut().zip(phi) {
        *z *= Complex64::from_polar(1.0, -tau * v);
    }
}

fn free_step(grid: &Grid, values: &mut [Complex64], multiplier: &[Complex64]) {
    grid.forward(values);
    values.iter_mut().zip(multiplier).for_each(|(z, m)| *z *= m);
    grid.inverse(values);
}

fn check_dt(dt: f64) -> Result<()> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::param("dt", format!("must be finite and nonzero, got {dt}")));
    }
    Ok(())
}

fn hamiltonian_from(pot: &NonlocalPotential, u: &Field, conv: Option<&[f64]>) -> Vec<f64> {
    let mut phi = pot.power_potential(u);
    if let Some(conv) = conv {
        let split = pot.split_from_convolution(conv, l2_norm_squared(u));
        for ((v, l), r) in phi.iter_mut().zip(&split.linear).zip(&split.remainder) {
            *v += l + r;
        }
    }
    phi
}

/// One Strang step `V(dt/2) T(dt) V(dt/2)` without caching; a negative `dt`
/// steps backward.
pub fn strang_step(pot: &NonlocalPotential, u: &Field, dt: f64) -> Result<Field> {
    check_dt(dt)?;
    let lambda = pot.params().lambda;
    let conv = |f: &Field| -> Result<Option<Vec<f64>>> {
        Ok(if lambda == 0.0 { None } else { Some(pot.kernel_convolution(f)?) })
    };
    let mut out = u.clone();
    let phi = hamiltonian_from(pot, &out, conv(&out)?.as_deref());
    apply_phase(out.values_mut(), &phi, 0.5 * dt);
    let grid = out.grid().clone();
    free_step(&grid, out.values_mut(), &kinetic_multiplier(&grid, dt));
    let phi = hamiltonian_from(pot, &out, conv(&out)?.as_deref());
    apply_phase(out.values_mut(), &phi, 0.5 * dt);
    if !out.is_finite() {
        return Err(Error::NonFinite { t: dt });
    }
    Ok(out)
}

/// Linear propagator `exp(i dt A)`, `A = 1/2 Delta - m g(x)`, by Strang
/// splitting; `g` is `log<x>` in 2D and `|x|` in 1D.
pub struct LinearPropagator {
    grid: Arc<Grid>,
    half_phase: Vec<Complex64>,
    kinetic: Vec<Complex64>,
}

impl LinearPropagator {
    pub fn new(grid: Arc<Grid>, m: f64, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let half_phase = linear_profile(&grid)
            .into_iter()
            .map(|g| Complex64::from_polar(1.0, -0.5 * dt * m * g))
            .collect();
        let kinetic = kinetic_multiplier(&grid, dt);
        Ok(Self {
            grid,
            half_phase,
            kinetic,
        })
    }

    pub fn apply(&self, values: &mut [Complex64]) {
        let mul = |v: &mut [Complex64]| v.iter_mut().zip(&self.half_phase).for_each(|(z, p)| *z *= p);
        mul(values);
        free_step(&self.grid, values, &self.kinetic);
        mul(values);
    }

    pub fn step(&self, u: &Field) -> Field {
        let mut out = u.clone();
        self.apply(out.values_mut());
        out
    }
}

pub fn linear_propagator_step(u: &Field, m: f64, dt: f64) -> Result<Field> {
    Ok(LinearPropagator::new(u.grid().clone(), m, dt)?.step(u))
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    /// The last iterate at `t = T_short`.
    pub field: Field,
    /// `sup_j ||u^(k+1)(s_j) - u^(k)(s_j)||_2` for each iteration `k`.
    pub distances: Vec<f64>,
}

/// Fixed-point iteration of the Duhamel map
/// `Q[u](t) = U(t) u_0 - i int_0^t U(t - s) N[u(s)] ds`, with `U` the linear
/// propagator, `N` the remainder and power nonlinearity, and the time integral
/// discretized by the trapezoid rule on `n_substeps` panels. The first
/// iterate is the linear evolution `U(t) u_0`.
pub fn picard_iterate(
    pot: &NonlocalPotential,
    u0: &Field,
    t_short: f64,
    n_iter: usize,
    n_substeps: usize,
) -> Result<PicardResult> {
    if !(t_short > 0.0 && t_short <= PICARD_MAX_WINDOW) {
        return Err(Error::param("t_short", format!("must lie in (0, {PICARD_MAX_WINDOW}]")));
    }
    if n_iter == 0 {
        return Err(Error::param("n_iter", "must be at least 1"));
    }
    if n_substeps == 0 {
        return Err(Error::param("n_substeps", "must be at least 1"));
    }
    let delta = t_short / n_substeps as f64;
    let prop = LinearPropagator::new(u0.grid().clone(), pot.params().m(), delta)?;

    let mut free = Vec::with_capacity(n_substeps + 1);
    free.push(u0.clone());
    for j in 0..n_substeps {
        free.push(prop.step(&free[j]));
    }
    let limit = 10.0 * l2_norm_squared(u0).sqrt();
    let mut current = free.clone();
    let mut distances = Vec::with_capacity(n_iter);
    let minus_i = Complex64::new(0.0, -1.0);

    for k in 0..n_iter {
        let forcing: Vec<Vec<Complex64>> = current
            .iter()
            .map(|u| {
                let phi = pot.nonlinear_potential(u)?;
                Ok(u.values().iter().zip(&phi).map(|(z, v)| z * v).collect())
            })
            .collect::<Result<_>>()?;
        let mut next = Vec::with_capacity(n_substeps + 1);
        next.push(u0.clone());
        // acc_j = 1/2 U(s_j) N_0 + sum_{0<l<j} U(s_j - s_l) N_l
        let mut acc: Vec<Complex64> = forcing[0].iter().map(|z| 0.5 * z).collect();
        let mut distance: f64 = 0.0;
        for j in 1..=n_substeps {
            prop.apply(&mut acc);
            let values: Vec<Complex64> = free[j]
                .values()
                .iter()
                .zip(&acc)
                .zip(&forcing[j])
                .map(|((f, a), n)| f + minus_i * delta * (a + 0.5 * n))
                .collect();
            let field = Field::new(u0.grid().clone(), values)
                .map_err(|_| Error::ContractionFailure { iterate: k + 1, norm: f64::NAN })?;
            let norm = l2_norm_squared(&field).sqrt();
            if norm > limit {
                return Err(Error::ContractionFailure { iterate: k + 1, norm });
            }
            distance = distance.max(field.l2_distance(&current[j])?);
            next.push(field);
            if j < n_substeps {
                acc.iter_mut().zip(&forcing[j]).for_each(|(a, n)| *a += n);
            }
        }
        distances.push(distance);
        current = next;
    }
    Ok(PicardResult {
        field: current.pop().expect("at least one time node"),
        distances,
    })
}

/// `v = u exp(i phase)`.
pub fn gauge_transform(u: &Field, accumulated_phase: f64) -> Field {
    let mut v = u.clone();
    if accumulated_phase != 0.0 {
        let w = Complex64::from_polar(1.0, accumulated_phase);
        v.values_mut().iter_mut().for_each(|z| *z *= w);
    }
    v
}

/// Gauge phase `lambda c int_0^t M(s) ds`, `M = int G(y)|u(s,y)|^2 dy`, by the
/// trapezoid rule over the recorded times.
pub fn phase_accumulator(history: &[ObservableRecord], params: &ModelParams) -> Result<f64> {
    let first = history
        .first()
        .ok_or_else(|| Error::MissingHistory("no records".into()))?;
    if first.t != 0.0 {
        return Err(Error::MissingHistory(format!("history starts at t = {}, not 0", first.t)));
    }
    let mut integral = 0.0;
    for w in history.windows(2) {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) {
            return Err(Error::MissingHistory(format!("times not increasing at t = {}", w[1].t)));
        }
        integral += 0.5 * dt * (w[0].origin_moment + w[1].origin_moment);
    }
    Ok(params.lambda * params.kernel_normalization() * integral)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formulation {
    /// `i u_t + 1/2 Delta u = lambda P u + eta |u|^{p-1} u`.
    #[serde(rename = "oSP")]
    OSP,
    /// The same with `lambda P` split into `m g(x)` plus the remainder.
    #[serde(rename = "SP")]
    SP,
    /// Gauged form with kernel `G(x - y) - G(y)`.
    #[serde(rename = "SPp")]
    SPp,
}

/// `||i (u_+ - u_-)/(2 dt) + 1/2 Delta u - F(u)||_2 / ||u||_2` at the middle
/// state, `F` the right-hand side of `formulation`.
pub fn pde_residual(
    pot: &NonlocalPotential,
    states: [(f64, &Field); 3],
    formulation: Formulation,
) -> Result<f64> {
    let [(t0, a), (t1, b), (t2, c)] = states;
    if !(a.same_grid(b) && b.same_grid(c)) {
        return Err(Error::GridMismatch);
    }
    let (d1, d2) = (t1 - t0, t2 - t1);
    if !(d1 > 0.0 && (d1 - d2).abs() <= 1e-9 * d1) {
        return Err(Error::NonUniformStates(format!("times {t0}, {t1}, {t2}")));
    }
    let dt = 0.5 * (t2 - t0);
    let grid = b.grid().clone();
    let mut lap = b.values().to_vec();
    grid.forward(&mut lap);
    lap.iter_mut().zip(grid.k_squared()).for_each(|(z, k2)| *z *= -k2);
    grid.inverse(&mut lap);

    let mut phi = pot.power_potential(b);
    let params = pot.params();
    if params.lambda != 0.0 {
        let conv = pot.kernel_convolution(b)?;
        let lc = params.lambda * params.kernel_normalization();
        match formulation {
            Formulation::OSP => phi.iter_mut().zip(&conv).for_each(|(v, c)| *v += lc * c),
            Formulation::SP => {
                let split = pot.split_from_convolution(&conv, l2_norm_squared(b));
                for ((v, l), r) in phi.iter_mut().zip(&split.linear).zip(&split.remainder) {
                    *v += l + r;
                }
            }
            Formulation::SPp => {
                let m = pot.origin_moment(b)?;
                phi.iter_mut().zip(&conv).for_each(|(v, c)| *v += lc * (c - m));
            }
        }
    }
    let i = Complex64::new(0.0, 1.0);
    let sum: f64 = (0..grid.len())
        .map(|n| {
            let dudt = (c.values()[n] - a.values()[n]) / (2.0 * dt);
            (i * dudt + 0.5 * lap[n] - phi[n] * b.values()[n]).norm_sqr()
        })
        .sum();
    let norm = l2_norm_squared(b).sqrt();
    Ok((sum * grid.cell_volume()).sqrt() / norm)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub steps: usize,
    pub t_final: f64,
    /// Time at which the gradient norm first exceeded the threshold.
    pub halted_at: Option<f64>,
    pub max_grad_norm: f64,
}

/// A simulation owning its state, with the Hamiltonian potential cached
/// between consecutive potential substeps.
pub struct Simulation {
    pot: NonlocalPotential,
    diagnostics: Diagnostics,
    config: SimConfig,
    state: SimState,
    kinetic: Vec<Complex64>,
    /// `G * |u|^2` for the current state (absent when `lambda = 0`).
    conv: Option<Vec<f64>>,
    phi: Vec<f64>,
    gauge_phase: f64,
    steps: usize,
}

impl Simulation {
    pub fn new(pot: NonlocalPotential, u0: Field, config: SimConfig) -> Result<Self> {
        config.validate()?;
        if **u0.grid() != **pot.grid() {
            return Err(Error::GridMismatch);
        }
        let state = SimState::new(u0, *pot.params())?;
        let g0 = grad_norm_squared(&state.u).sqrt();
        if !(config.blowup_threshold > g0) {
            return Err(Error::param(
                "blowup_threshold",
                format!("must exceed the initial gradient norm {g0}"),
            ));
        }
        let kinetic = kinetic_multiplier(pot.grid(), config.dt);
        let diagnostics = Diagnostics::new(&pot);
        let mut sim = Self {
            pot,
            diagnostics,
            config,
            state,
            kinetic,
            conv: None,
            phi: Vec::new(),
            gauge_phase: 0.0,
            steps: 0,
        };
        sim.refresh()?;
        Ok(sim)
    }

    fn refresh(&mut self) -> Result<()> {
        self.conv = if self.pot.params().lambda == 0.0 {
            None
        } else {
            Some(self.pot.kernel_convolution(&self.state.u)?)
        };
        self.phi = hamiltonian_from(&self.pot, &self.state.u, self.conv.as_deref());
        Ok(())
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn potential(&self) -> &NonlocalPotential {
        &self.pot
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Gauge phase accumulated step by step (trapezoid rule at the step size).
    pub fn gauge_phase(&self) -> f64 {
        self.gauge_phase
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    fn origin_moment(&self) -> f64 {
        match &self.conv {
            Some(conv) => conv[self.pot.grid().origin_index()],
            None => 0.0,
        }
    }

    /// Advance by one step of size `config.dt`. On a non-finite result the
    /// state is left unchanged.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.config.dt;
        let m_before = self.origin_moment();
        let next = match self.config.integrator {
            Integrator::Strang => {
                let mut v = self.state.u.values().to_vec();
                apply_phase(&mut v, &self.phi, 0.5 * dt);
                free_step(self.pot.grid(), &mut v, &self.kinetic);
                Field::new(self.pot.grid().clone(), v)
                    .map_err(|_| Error::NonFinite { t: self.state.t + dt })?
            }
            Integrator::Picard => {
                picard_iterate(
                    &self.pot,
                    &self.state.u,
                    dt,
                    self.config.picard_iterations,
                    self.config.picard_substeps,
                )?
                .field
            }
        };
        let previous = std::mem::replace(&mut self.state.u, next);
        if let Err(e) = self.refresh() {
            self.state.u = previous;
            self.refresh()?;
            return Err(e);
        }
        if self.config.integrator == Integrator::Strang {
            apply_phase(self.state.u.values_mut(), &self.phi, 0.5 * dt);
            if !self.state.u.is_finite() {
                self.state.u = previous;
                self.refresh()?;
                return Err(Error::NonFinite { t: self.state.t + dt });
            }
            // |u| is unchanged by the phase, so the cached potential stays valid.
        }
        let params = self.pot.params();
        let lc = params.lambda * params.kernel_normalization();
        self.gauge_phase += lc * 0.5 * dt * (m_before + self.origin_moment());
        self.steps += 1;
        self.state.t = self.steps as f64 * dt;
        Ok(())
    }

    /// Evaluate observables at the current state.
    pub fn observe(&self) -> Result<ObservableRecord> {
        self.diagnostics
            .record(&self.pot, &self.state.u, self.state.t, self.conv.as_deref())
    }

    /// Evaluate and append a record to the history.
    pub fn record(&mut self) -> Result<ObservableRecord> {
        let r = self.observe()?;
        self.state.history.push(r.clone());
        Ok(r)
    }

    /// Run to `t_end`, recording every `output_stride` steps and calling
    /// `on_record` after each record. Halts early, with outcome
    /// `SuspectedBlowup`, once the gradient norm exceeds the threshold.
    pub fn run(&mut self, mut on_record: impl FnMut(&Simulation, &ObservableRecord) -> Result<()>) -> Result<RunSummary> {
        let total = self.config.steps();
        if self.state.history.is_empty() {
            let r = self.record()?;
            on_record(self, &r)?;
        }
        let mut max_grad = self.state.history.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
        let threshold = self.config.blowup_threshold;
        let mut halted_at = None;
        while self.steps < total {
            self.step()?;
            let grad = grad_norm_squared(&self.state.u).sqrt();
            max_grad = max_grad.max(grad);
            let exceeded = !(grad <= threshold);
            if exceeded || self.steps % self.config.output_stride == 0 || self.steps == total {
                let r = self.record()?;
                on_record(self, &r)?;
            }
            if exceeded {
                halted_at = Some(self.state.t);
                break;
            }
        }
        Ok(RunSummary {
            outcome: if halted_at.is_some() { Outcome::SuspectedBlowup } else { Outcome::Bounded },
            steps: self.steps,
            t_final: self.state.t,
            halted_at,
            max_grad_norm: max_grad,
        })
    }
}
