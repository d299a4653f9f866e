//! Scenario configuration, presets and the runners behind the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Integrator, RunSummary, SimConfig, Simulation};
use crate::error::{Error, Result};
use crate::grid::{make_grid, Field, Grid};
use crate::kernels::{check_k_bound, kernel_1d_report, Kernel1dReport, KernelBoundReport, Sample1dSpec, SampleSpec};
use crate::observables::{
    apriori_bound_check, concentration_check, format_float, log_moment_growth_check, write_csv, AprioriReport,
    ConcentrationReport, GrowthReport, ObservableRecord, Outcome,
};
use crate::potential::{KernelQuadrature, ModelParams, NonlocalPotential};
use crate::snapshot::write_snapshot;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest `|u_0|` allowed on the boundary of the box.
pub const BOUNDARY_DECAY: f64 = 1e-10;

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "LOGSP_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dimension: usize,
    pub lambda: f64,
    pub eta: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "is_default_quadrature")]
    pub quadrature: KernelQuadrature,
}

fn is_default_quadrature(q: &KernelQuadrature) -> bool {
    *q == KernelQuadrature::default()
}

/// Initial datum. Centers are given per axis; an empty list means the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Datum {
    /// `A exp(-|x - c|^2 / (2 w^2))`.
    Gaussian {
        #[serde(default)]
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    /// Two Gaussians at `x_1 = +-separation/2`.
    DoubleBump {
        separation: f64,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `A exp(-|x|^2 / (2 w^2)) exp(i k0 x_1)`.
    PlaneModulated {
        k0: f64,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Datum {
    pub fn amplitude(&self) -> f64 {
        match self {
            Datum::Gaussian { amplitude, .. }
            | Datum::DoubleBump { amplitude, .. }
            | Datum::PlaneModulated { amplitude, .. } => *amplitude,
        }
    }

    pub fn with_amplitude(&self, a: f64) -> Datum {
        let mut d = self.clone();
        match &mut d {
            Datum::Gaussian { amplitude, .. }
            | Datum::DoubleBump { amplitude, .. }
            | Datum::PlaneModulated { amplitude, .. } => *amplitude = a,
        }
        d
    }

    fn validate(&self, dimension: usize) -> Result<()> {
        let (width, amplitude) = match self {
            Datum::Gaussian { center, width, amplitude } => {
                if !(center.is_empty() || center.len() == dimension) {
                    return Err(Error::Config(format!(
                        "datum center has {} entries for a {dimension}D grid",
                        center.len()
                    )));
                }
                (*width, *amplitude)
            }
            Datum::DoubleBump { width, amplitude, .. } | Datum::PlaneModulated { width, amplitude, .. } => {
                (*width, *amplitude)
            }
        };
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Config(format!("datum width must be positive, got {width}")));
        }
        if !amplitude.is_finite() {
            return Err(Error::Config("datum amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Value at a point.
    pub fn eval(&self, [x, y]: [f64; 2]) -> Complex64 {
        let bump = |dx: f64, dy: f64, w: f64| (-(dx * dx + dy * dy) / (2.0 * w * w)).exp();
        match self {
            Datum::Gaussian { center, width, amplitude } => {
                let cx = center.first().copied().unwrap_or(0.0);
                let cy = center.get(1).copied().unwrap_or(0.0);
                Complex64::new(amplitude * bump(x - cx, y - cy, *width), 0.0)
            }
            Datum::DoubleBump { separation, width, amplitude } => {
                let s = 0.5 * separation;
                Complex64::new(amplitude * (bump(x - s, y, *width) + bump(x + s, y, *width)), 0.0)
            }
            Datum::PlaneModulated { k0, width, amplitude } => {
                Complex64::from_polar(amplitude * bump(x, y, *width), k0 * x)
            }
        }
    }

    pub fn sample(&self, grid: &std::sync::Arc<Grid>) -> Field {
        Field::from_fn(grid.clone(), |pt| self.eval(pt))
    }

    /// Largest `|u_0|` on the boundary `|x_i| = L` of the box.
    pub fn boundary_max(&self, dimension: usize, half_width: f64) -> f64 {
        let samples = 2001;
        let mut max = 0.0f64;
        for sign in [-1.0, 1.0] {
            let edge = sign * half_width;
            if dimension == 1 {
                max = max.max(self.eval([edge, 0.0]).norm());
                continue;
            }
            for i in 0..samples {
                let s = -half_width + 2.0 * half_width * i as f64 / (samples - 1) as f64;
                max = max.max(self.eval([edge, s]).norm()).max(self.eval([s, edge]).norm());
            }
        }
        max
    }
}

/// Diagnostic checks evaluated after a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Mass and energy drift against the tolerances.
    Conservation,
    /// Quadratic a priori gradient bound.
    AprioriBound,
    /// Log-moment growth inequality.
    LogMomentGrowth,
    /// Mass inside `|x| < r` at the final time (2D only).
    Concentration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_mass_tol")]
    pub mass_drift: f64,
    #[serde(default = "default_energy_tol")]
    pub energy_drift: f64,
}

fn default_mass_tol() -> f64 {
    1e-10
}
fn default_energy_tol() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass_drift: default_mass_tol(),
            energy_drift: default_energy_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Write a field snapshot every this many records (never when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub model: ModelSection,
    pub grid: GridSection,
    pub datum: Datum,
    pub sim: SimConfig,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSection,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::Config(format!("invalid scenario name {:?}", self.name)));
        }
        let m = &self.model;
        ModelParams::new(m.dimension, m.lambda, m.eta, m.p, 0.0)?;
        Grid::new(m.dimension, self.grid.half_width, self.grid.points)?;
        self.datum.validate(m.dimension)?;
        self.sim.validate()?;
        let edge = self.datum.boundary_max(m.dimension, self.grid.half_width);
        if !(edge < BOUNDARY_DECAY) {
            return Err(Error::Config(format!(
                "initial datum reaches {edge:.3e} on the boundary; widen the box (|u0| must stay below {BOUNDARY_DECAY:e})"
            )));
        }
        for c in &self.checks {
            match c {
                Check::Concentration if m.dimension != 2 => {
                    return Err(Error::Config("the concentration check needs a 2D grid".into()))
                }
                Check::AprioriBound if m.lambda == 0.0 => {
                    return Err(Error::Config("the a priori bound check needs lambda != 0".into()))
                }
                _ => {}
            }
        }
        if self.output.snapshot_every == Some(0) {
            return Err(Error::Config("output.snapshot_every must be positive".into()));
        }
        Ok(())
    }

    /// Sample the datum and assemble the potential.
    pub fn build(&self) -> Result<(NonlocalPotential, Field)> {
        let grid = make_grid(self.model.dimension, self.grid.half_width, self.grid.points)?;
        let u0 = self.datum.sample(&grid);
        let m = &self.model;
        let params = ModelParams::for_datum(m.lambda, m.eta, m.p, &u0)?;
        let pot = NonlocalPotential::new(grid, params, self.grid.quadrature)?;
        Ok((pot, u0))
    }
}

fn gaussian(width: f64, amplitude: f64) -> Datum {
    Datum::Gaussian {
        center: Vec::new(),
        width,
        amplitude,
    }
}

#[allow(clippy::too_many_arguments)]
fn preset(
    name: &str,
    description: &str,
    model: (usize, f64, f64, f64),
    grid: (f64, usize),
    datum: Datum,
    sim: SimConfig,
    checks: &[Check],
    tolerances: Tolerances,
) -> Scenario {
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        description: description.into(),
        model: ModelSection {
            dimension: model.0,
            lambda: model.1,
            eta: model.2,
            p: model.3,
        },
        grid: GridSection {
            half_width: grid.0,
            points: grid.1,
            quadrature: KernelQuadrature::Spectral,
        },
        datum,
        sim,
        checks: checks.to_vec(),
        tolerances,
        output: OutputSection::default(),
    }
}

fn sim(dt: f64, t_end: f64, stride: usize, threshold: f64) -> SimConfig {
    SimConfig {
        output_stride: stride,
        blowup_threshold: threshold,
        ..SimConfig::new(dt, t_end)
    }
}

/// All shipped scenarios.
pub fn presets() -> Vec<Scenario> {
    use Check::*;
    let all2d = [Conservation, AprioriBound, LogMomentGrowth, Concentration];
    let all1d = [Conservation, AprioriBound, LogMomentGrowth];
    let tol = Tolerances::default();
    let loose = Tolerances {
        mass_drift: 1e-10,
        energy_drift: 1e-4,
    };
    let mut out = vec![
        preset(
            "defocusing-2d",
            "2D Hartree, lambda < 0 (confining linear part), Gaussian datum",
            (2, -1.0, 0.0, 3.0),
            (16.0, 256),
            gaussian(1.0, 1.0),
            sim(1e-3, 5.0, 10, 1e3),
            &all2d,
            tol,
        ),
        preset(
            "repulsive-2d",
            "2D Hartree, lambda > 0 (log potential pushing outward)",
            (2, 1.0, 0.0, 3.0),
            (24.0, 256),
            gaussian(1.0, 1.0),
            sim(2e-3, 2.0, 10, 1e3),
            &all2d,
            tol,
        ),
        preset(
            "withpower-2d-defocusing",
            "2D Hartree plus defocusing cubic power term",
            (2, -1.0, 1.0, 3.0),
            (16.0, 128),
            gaussian(1.0, 1.0),
            sim(2e-3, 2.0, 10, 1e3),
            &all2d,
            loose,
        ),
        preset(
            "withpower-2d-focusing-subcritical",
            "2D Hartree plus focusing power term with 2 <= p < 3",
            (2, -1.0, -1.0, 2.5),
            (16.0, 128),
            gaussian(1.0, 1.0),
            sim(2e-3, 2.0, 10, 1e3),
            &all2d,
            loose,
        ),
        preset(
            "withpower-2d-critical-small",
            "2D Hartree plus focusing cubic term, small datum",
            (2, 1.0, -1.0, 3.0),
            (16.0, 128),
            gaussian(1.0, 0.5),
            sim(2e-3, 2.0, 10, 1e3),
            &all2d,
            loose,
        ),
        preset(
            "lowpower-2d",
            "2D Hartree plus focusing power term with 1 < p < 2",
            (2, -1.0, -1.0, 1.5),
            (16.0, 128),
            gaussian(1.0, 1.0),
            sim(2e-3, 2.0, 10, 1e3),
            &[Conservation, AprioriBound, LogMomentGrowth, Concentration],
            loose,
        ),
        preset(
            "hartree-1d",
            "1D Hartree with kernel |x|, lambda < 0 (confining)",
            (1, -1.0, 0.0, 3.0),
            (24.0, 512),
            gaussian(1.0, 1.0),
            sim(1e-3, 5.0, 10, 1e3),
            &all1d,
            tol,
        ),
        preset(
            "hartree-1d-repulsive",
            "1D Hartree with kernel |x|, lambda > 0",
            (1, 1.0, 0.0, 3.0),
            (32.0, 1024),
            gaussian(1.0, 1.0),
            sim(1e-3, 2.0, 10, 1e3),
            &all1d,
            tol,
        ),
        preset(
            "power-1d-subcritical",
            "1D Hartree plus focusing power term with 2 <= p < 5",
            (1, -1.0, -1.0, 4.0),
            (24.0, 1024),
            gaussian(1.0, 1.0),
            sim(1e-4, 1.0, 50, 1e3),
            &all1d,
            loose,
        ),
        preset(
            "focusing-1d-supercritical-small",
            "1D focusing power term with p = 6, small datum",
            (1, 0.0, -1.0, 6.0),
            (24.0, 1024),
            gaussian(1.0, 0.1),
            sim(1e-4, 1.0, 50, 1e2),
            &[Conservation, LogMomentGrowth],
            loose,
        ),
        preset(
            "focusing-1d-supercritical-large",
            "1D focusing power term with p = 6, large datum (expected to blow up)",
            (1, 0.0, -1.0, 6.0),
            (24.0, 1024),
            gaussian(1.0, 3.0),
            sim(1e-4, 1.0, 50, 1e2),
            &[Conservation, LogMomentGrowth],
            loose,
        ),
        preset(
            "lowpower-1d",
            "1D Hartree plus focusing power term with 1 < p < 2",
            (1, -1.0, -1.0, 1.5),
            (24.0, 1024),
            gaussian(1.0, 1.0),
            sim(1e-4, 1.0, 50, 1e3),
            &all1d,
            loose,
        ),
    ];
    let mut picard = preset(
        "picard-smoke-1d",
        "Short 1D run with the Picard/Duhamel integrator",
        (1, 1.0, -1.0, 3.0),
        (24.0, 512),
        gaussian(1.0, 1.0),
        sim(0.05, 0.5, 1, 1e3),
        &[Conservation, LogMomentGrowth],
        Tolerances {
            mass_drift: 1e-6,
            energy_drift: 1e-4,
        },
    );
    picard.sim.integrator = Integrator::Picard;
    picard.sim.picard_iterations = 4;
    picard.sim.picard_substeps = 50;
    out.push(picard);
    out[0].output.snapshot_every = Some(250);
    out
}

pub fn find_preset(name: &str) -> Option<Scenario> {
    presets().into_iter().find(|s| s.name == name)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConservationReport {
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub mass_tolerance: f64,
    pub energy_tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CheckResults {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservation: Option<ConservationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apriori_bound: Option<AprioriReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_moment_growth: Option<GrowthReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentration: Option<ConcentrationReport>,
}

impl CheckResults {
    pub fn all_hold(&self) -> bool {
        self.conservation.as_ref().is_none_or(|c| c.holds)
            && self.apriori_bound.as_ref().is_none_or(|c| c.holds)
            && self.log_moment_growth.as_ref().is_none_or(|c| c.holds)
            && self
                .concentration
                .as_ref()
                .is_none_or(|c| c.inconclusive || (c.upper_holds && c.lower_holds))
    }
}

/// Largest relative deviation of a recorded quantity from its initial value.
pub fn relative_drift(records: &[ObservableRecord], f: impl Fn(&ObservableRecord) -> f64) -> f64 {
    let Some(first) = records.first() else { return 0.0 };
    let v0 = f(first);
    let scale = if v0.abs() > 1e-300 { v0.abs() } else { 1.0 };
    records.iter().map(|r| (f(r) - v0).abs() / scale).fold(0.0, f64::max)
}

/// Everything produced by one run, in memory.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub summary: RunSummary,
    pub records: Vec<ObservableRecord>,
    pub checks: CheckResults,
    pub final_field: Field,
    pub wall_seconds: f64,
}

impl ScenarioRun {
    /// 0 bounded with every check holding, 2 suspected blow-up, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.summary.outcome {
            Outcome::SuspectedBlowup => 2,
            Outcome::Bounded if self.checks.all_hold() => 0,
            Outcome::Bounded => 1,
        }
    }
}

/// Integrate a scenario and evaluate its checks; `on_record` sees every
/// recorded state.
pub fn simulate(
    scenario: &Scenario,
    mut on_record: impl FnMut(&Simulation, &ObservableRecord) -> Result<()>,
) -> Result<ScenarioRun> {
    scenario.validate()?;
    let start = Instant::now();
    let (pot, u0) = scenario.build()?;
    let mut sim = Simulation::new(pot, u0, scenario.sim)?;
    let summary = sim.run(&mut on_record)?;
    let records = sim.state().history.clone();
    let mut checks = CheckResults::default();
    for check in &scenario.checks {
        match check {
            Check::Conservation => {
                let mass_drift = relative_drift(&records, |r| r.mass);
                let energy_drift = relative_drift(&records, |r| r.total_energy);
                checks.conservation = Some(ConservationReport {
                    mass_drift,
                    energy_drift,
                    mass_tolerance: scenario.tolerances.mass_drift,
                    energy_tolerance: scenario.tolerances.energy_drift,
                    holds: mass_drift <= scenario.tolerances.mass_drift
                        && energy_drift <= scenario.tolerances.energy_drift,
                })
            }
            Check::AprioriBound => {
                let e0 = records[0].total_energy;
                checks.apriori_bound = Some(apriori_bound_check(
                    &records,
                    sim.potential().params(),
                    e0,
                    Some(scenario.sim.blowup_threshold),
                )?)
            }
            Check::LogMomentGrowth => checks.log_moment_growth = Some(log_moment_growth_check(&records, None)),
            Check::Concentration => checks.concentration = Some(concentration_check(&sim.state().u)?),
        }
    }
    Ok(ScenarioRun {
        summary,
        records,
        checks,
        final_field: sim.state().u.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    name: &'a str,
    schema_version: u32,
    outcome: Outcome,
    exit_code: i32,
    steps: usize,
    t_final: f64,
    halted_at: Option<f64>,
    max_grad_norm: f64,
    initial: &'a ObservableRecord,
    #[serde(rename = "final")]
    last: &'a ObservableRecord,
    checks: &'a CheckResults,
    all_checks_passed: bool,
    snapshots: Vec<String>,
    timing: Timing,
}

#[derive(Debug, Serialize)]
struct Timing {
    wall_seconds: f64,
}

/// Outcome of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run: ScenarioRun,
    pub dir: PathBuf,
    pub exit_code: i32,
}

/// Run a scenario and write `observables.csv`, `summary.json`, `plot.py` and
/// optional snapshots into `<out_root>/<name>/`.
pub fn run_scenario(scenario: &Scenario, out_root: &Path) -> Result<RunArtifacts> {
    scenario.validate()?;
    let dir = out_root.join(&scenario.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let every = scenario.output.snapshot_every;
    let mut snapshots = Vec::new();
    let mut count = 0usize;
    let run = simulate(scenario, |sim, rec| {
        if let Some(every) = every {
            if count % every == 0 {
                let path = write_snapshot(&dir, &sim.state().u, rec.t)?;
                snapshots.push(path.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
        count += 1;
        Ok(())
    })?;
    let csv_path = dir.join("observables.csv");
    let mut buf = Vec::new();
    write_csv(&run.records, &mut buf)?;
    write_atomic(&csv_path, &buf)?;

    let exit_code = run.exit_code();
    let summary = Summary {
        name: &scenario.name,
        schema_version: SCHEMA_VERSION,
        outcome: run.summary.outcome,
        exit_code,
        steps: run.summary.steps,
        t_final: run.summary.t_final,
        halted_at: run.summary.halted_at,
        max_grad_norm: run.summary.max_grad_norm,
        initial: &run.records[0],
        last: run.records.last().unwrap(),
        checks: &run.checks,
        all_checks_passed: run.checks.all_hold(),
        snapshots,
        timing: Timing {
            wall_seconds: run.wall_seconds,
        },
    };
    write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    write_atomic(&dir.join("plot.py"), plot_script(&scenario.name).as_bytes())?;
    Ok(RunArtifacts { run, dir, exit_code })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn plot_script(name: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
"""Plot the observables of scenario {name}. Run from this directory."""
import csv

import matplotlib.pyplot as plt

with open("observables.csv") as f:
    rows = list(csv.DictReader(f))
t = [float(r["t"]) for r in rows]
series = ["mass", "total_energy", "grad_norm", "log_moment"]
fig, axes = plt.subplots(len(series), 1, sharex=True, figsize=(7, 9))
for ax, key in zip(axes, series):
    ax.plot(t, [float(r[key]) for r in rows])
    ax.set_ylabel(key)
axes[-1].set_xlabel("t")
fig.suptitle("{name}")
fig.tight_layout()
fig.savefig("observables.png", dpi=120)
"#
    )
}

/// Axes of a sweep; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub amplitude: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub axes: SweepAxes,
    pub base: Scenario,
}

impl Sweep {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Sweep = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", s.schema_version)));
        }
        if s.name.is_empty() || s.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid sweep name {:?}", s.name)));
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Cell scenarios in row order (lambda slowest, amplitude fastest).
    pub fn cells(&self) -> Vec<Scenario> {
        let axis = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
        let b = &self.base;
        let mut out = Vec::new();
        for &lambda in &axis(&self.axes.lambda, b.model.lambda) {
            for &eta in &axis(&self.axes.eta, b.model.eta) {
                for &p in &axis(&self.axes.p, b.model.p) {
                    for &a in &axis(&self.axes.amplitude, b.datum.amplitude()) {
                        let mut s = b.clone();
                        s.name = format!("{}-{}", self.name, out.len());
                        s.model.lambda = lambda;
                        s.model.eta = eta;
                        s.model.p = p;
                        s.datum = b.datum.with_amplitude(a);
                        s.checks.retain(|c| !(lambda == 0.0 && *c == Check::AprioriBound));
                        out.push(s);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellOutcome {
    Bounded,
    SuspectedBlowup,
    /// The cell could not be run (invalid configuration or integration error).
    Failed,
}

impl CellOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellOutcome::Bounded => "bounded",
            CellOutcome::SuspectedBlowup => "suspected_blowup",
            CellOutcome::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub lambda: f64,
    pub eta: f64,
    pub p: f64,
    pub amplitude: f64,
    pub outcome: CellOutcome,
    pub max_grad_norm: f64,
    pub final_energy_drift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const PHASE_COLUMNS: [&str; 7] = [
    "lambda",
    "eta",
    "p",
    "amplitude",
    "outcome",
    "max_grad_norm",
    "final_energy_drift",
];

pub fn run_cell(s: &Scenario) -> PhaseRow {
    let mut row = PhaseRow {
        lambda: s.model.lambda,
        eta: s.model.eta,
        p: s.model.p,
        amplitude: s.datum.amplitude(),
        outcome: CellOutcome::Failed,
        max_grad_norm: f64::NAN,
        final_energy_drift: f64::NAN,
        error: None,
    };
    let mut cell = s.clone();
    cell.checks.clear();
    match simulate(&cell, |_, _| Ok(())) {
        Ok(run) => {
            let first = &run.records[0];
            let last = run.records.last().unwrap();
            let scale = if first.total_energy.abs() > 1e-300 { first.total_energy.abs() } else { 1.0 };
            row.outcome = match run.summary.outcome {
                Outcome::Bounded => CellOutcome::Bounded,
                Outcome::SuspectedBlowup => CellOutcome::SuspectedBlowup,
            };
            row.max_grad_norm = run.summary.max_grad_norm;
            row.final_energy_drift = (last.total_energy - first.total_energy).abs() / scale;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Run every cell on a worker pool, write each cell's row atomically to
/// `<out_root>/<name>/cells/`, then assemble `phase.csv`.
pub fn sweep(sweep: &Sweep, out_root: &Path, workers: usize) -> Result<Vec<PhaseRow>> {
    let dir = out_root.join(&sweep.name);
    let cells_dir = dir.join("cells");
    fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    let cells = sweep.cells();
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<PhaseRow>>> = Mutex::new(vec![None; cells.len()]);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let row = run_cell(&cells[i]);
                let path = cells_dir.join(format!("cell_{i:04}.json"));
                let written = serde_json::to_vec_pretty(&row)
                    .map_err(Error::from)
                    .and_then(|bytes| write_atomic(&path, &bytes));
                if let Err(e) = written {
                    first_error.lock().unwrap().get_or_insert(e);
                }
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let rows: Vec<PhaseRow> = rows.into_inner().unwrap().into_iter().map(|r| r.unwrap()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PHASE_COLUMNS)?;
    for r in &rows {
        w.write_record([
            format_float(r.lambda),
            format_float(r.eta),
            format_float(r.p),
            format_float(r.amplitude),
            r.outcome.as_str().to_string(),
            format_float(r.max_grad_norm),
            format_float(r.final_energy_drift),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&dir.join("phase.csv"), &bytes)?;
    Ok(rows)
}

/// Documented phase-diagram sweeps in 2D and 1D.
pub fn sweep_presets() -> Vec<Sweep> {
    let mut base2 = find_preset("withpower-2d-defocusing").unwrap();
    base2.sim = sim(2e-3, 1.0, 10, 1e2);
    base2.checks.clear();
    let mut base1 = find_preset("power-1d-subcritical").unwrap();
    base1.sim = sim(1e-4, 1.0, 50, 1e2);
    base1.checks.clear();
    vec![
        Sweep {
            schema_version: SCHEMA_VERSION,
            name: "phase-2d".into(),
            description: "2D: sign of lambda, sign of eta, p in {2, 2.5, 3}, small datum".into(),
            axes: SweepAxes {
                lambda: vec![-1.0, 1.0],
                eta: vec![1.0, -1.0],
                p: vec![2.0, 2.5, 3.0],
                amplitude: vec![0.5],
            },
            base: base2,
        },
        Sweep {
            schema_version: SCHEMA_VERSION,
            name: "phase-1d".into(),
            description: "1D: sign of lambda, sign of eta, p in {2, 4, 5, 6}, small and large data".into(),
            axes: SweepAxes {
                lambda: vec![-1.0, 1.0],
                eta: vec![1.0, -1.0],
                p: vec![2.0, 4.0, 5.0, 6.0],
                amplitude: vec![0.1, 3.0],
            },
            base: base1,
        },
    ]
}

pub fn find_sweep_preset(name: &str) -> Option<Sweep> {
    sweep_presets().into_iter().find(|s| s.name == name)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelVerification {
    pub k_bound: KernelBoundReport,
    pub one_dimensional: Kernel1dReport,
    pub passed: bool,
}

/// Sample both kernel bounds at the default density.
pub fn verify_kernels(eta: f64, p: f64) -> Result<KernelVerification> {
    let k_bound = check_k_bound(eta, p, &SampleSpec::default())?;
    let one_dimensional = kernel_1d_report(&Sample1dSpec::default());
    let passed = k_bound.holds && one_dimensional.holds;
    Ok(KernelVerification {
        k_bound,
        one_dimensional,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for s in presets() {
            s.validate().unwrap_or_else(|e| panic!("{}: {e}", s.name));
            let text = s.to_toml();
            let back = Scenario::from_toml(&text).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.to_toml(), text);
        }
        for s in sweep_presets() {
            let back = Sweep::from_toml(&s.to_toml()).unwrap();
            assert_eq!(back, s);
            for c in s.cells() {
                c.validate().unwrap_or_else(|e| panic!("{}: {e}", c.name));
            }
        }
    }

    #[test]
    fn preset_names_are_unique() {
        let names: Vec<String> = presets().into_iter().map(|s| s.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut s = find_preset("hartree-1d").unwrap();
        s.schema_version = 99;
        assert!(s.validate().is_err());

        let mut s = find_preset("hartree-1d").unwrap();
        s.datum = gaussian(8.0, 1.0);
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("boundary"), "{err}");

        let mut s = find_preset("hartree-1d").unwrap();
        s.checks.push(Check::Concentration);
        assert!(s.validate().is_err());

        let text = find_preset("hartree-1d").unwrap().to_toml().replace("[sim]", "[sim]\nbogus = 1");
        assert!(Scenario::from_toml(&text).is_err());
        assert!(Scenario::from_toml("schema_version = 1").is_err());
    }

    #[test]
    fn datum_kinds() {
        let d = Datum::DoubleBump {
            separation: 4.0,
            width: 0.5,
            amplitude: 2.0,
        };
        assert!((d.eval([2.0, 0.0]).re - 2.0).abs() < 1e-12);
        assert!(d.eval([0.0, 0.0]).re < 2e-3);
        let w = Datum::PlaneModulated {
            k0: 2.0,
            width: 1.0,
            amplitude: 1.0,
        };
        let z = w.eval([0.5, 0.0]);
        assert!((z.arg() - 1.0).abs() < 1e-12);
        assert_eq!(w.with_amplitude(3.0).amplitude(), 3.0);
        let toml_text = "kind = \"double_bump\"\nseparation = 3.0\nwidth = 0.5\n";
        let parsed: Datum = toml::from_str(toml_text).unwrap();
        assert_eq!(parsed.amplitude(), 1.0);
    }

    #[test]
    fn sweep_cells_cover_axes() {
        let s = find_sweep_preset("phase-1d").unwrap();
        let cells = s.cells();
        assert_eq!(cells.len(), 2 * 2 * 4 * 2);
        assert_eq!(cells[1].datum.amplitude(), 3.0);
        assert_eq!(cells[0].model.lambda, -1.0);
        let mut empty = s.clone();
        empty.axes = SweepAxes::default();
        assert_eq!(empty.cells().len(), 1);
    }

    #[test]
    fn verify_kernels_rejects_large_eta() {
        assert!(verify_kernels(2.0, 2.0).is_err());
    }

    #[test]
    fn short_run_writes_artifacts() {
        let mut s = find_preset("hartree-1d").unwrap();
        s.grid.points = 256;
        s.sim = sim(1e-2, 0.2, 5, 1e3);
        s.output.snapshot_every = Some(2);
        let dir = tempfile::tempdir().unwrap();
        let art = run_scenario(&s, dir.path()).unwrap();
        assert_eq!(art.exit_code, 0);
        let csv_text = fs::read_to_string(art.dir.join("observables.csv")).unwrap();
        assert_eq!(csv_text.lines().count(), 1 + 5);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(art.dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["outcome"], "bounded");
        assert_eq!(summary["snapshots"].as_array().unwrap().len(), 3);
        assert!(art.dir.join("plot.py").exists());
        assert!(art.dir.join("field_0.000000.bin").exists());

        let again = tempfile::tempdir().unwrap();
        run_scenario(&s, again.path()).unwrap();
        let csv2 = fs::read_to_string(again.path().join(&s.name).join("observables.csv")).unwrap();
        assert_eq!(csv_text, csv2);
    }

    #[test]
    fn small_sweep_writes_phase_table() {
        let mut base = find_preset("power-1d-subcritical").unwrap();
        base.grid.points = 256;
        base.sim = sim(1e-3, 0.05, 10, 1e2);
        let sweep_cfg = Sweep {
            schema_version: SCHEMA_VERSION,
            name: "tiny".into(),
            description: String::new(),
            axes: SweepAxes {
                lambda: vec![],
                eta: vec![1.0, -1.0],
                p: vec![],
                amplitude: vec![0.5, 200.0],
            },
            base,
        };
        let dir = tempfile::tempdir().unwrap();
        let rows = sweep(&sweep_cfg, dir.path(), 2).unwrap();
        assert_eq!(rows.len(), 4);
        let text = fs::read_to_string(dir.path().join("tiny/phase.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), PHASE_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(fs::read_dir(dir.path().join("tiny/cells")).unwrap().count(), 4);
        assert_eq!(rows[0].outcome, CellOutcome::Bounded, "{:?}", rows[0]);
        // amplitude 200 starts above the gradient threshold: the cell fails, the sweep continues
        assert_eq!(rows[1].outcome, CellOutcome::Failed);
        assert!(rows[1].error.is_some());
    }
}
