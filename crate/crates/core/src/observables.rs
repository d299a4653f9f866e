//! Conserved quantities, weighted moments and runtime checks of the a priori
//! inequalities along a run.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bracket, grad_norm_squared, l2_norm_squared, Field};
use crate::potential::{ModelParams, NonlocalPotential};

/// Column order of the observables CSV.
pub const CSV_COLUMNS: [&str; 10] = [
    "t",
    "mass",
    "kinetic",
    "hartree",
    "power",
    "total_energy",
    "log_moment",
    "h12_moment",
    "sigma_moment",
    "grad_norm",
];

/// Absolute tolerance of the log-moment growth inequality.
pub const GROWTH_TOLERANCE: f64 = 1e-8;

/// Mass of the ground state of `-Q + Delta Q + Q^3 = 0` in the plane; it fixes
/// the sharp constant `2 / ||Q||_2^2` of `||u||_4^4 <= C ||u||_2^2 ||grad u||_2^2`.
pub const GROUND_STATE_MASS_2D: f64 = 11.700896;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: f64,
    pub mass: f64,
    /// `1/2 ||grad u||^2`.
    pub kinetic: f64,
    /// `1/2 <lambda P, |u|^2>`.
    pub hartree: f64,
    /// `2 eta/(p+1) ||u||_{p+1}^{p+1}`, the functional whose variation is `eta |u|^{p-1} u`.
    pub power: f64,
    pub total_energy: f64,
    /// `||sqrt(log<x>) u||^2`.
    pub log_moment: f64,
    /// `||log<x> u||^2`.
    pub h12_moment: f64,
    /// 1D only: `||sqrt|x| u||^2`.
    pub sigma_moment: Option<f64>,
    /// 1D only: `||x u||^2`.
    pub sigma_second_moment: Option<f64>,
    pub grad_norm: f64,
    /// `int G(y) |u(y)|^2 dy` (`log|y|` in 2D, `|y|` in 1D), the integrand of the gauge phase.
    pub origin_moment: f64,
}

/// Shortest round-tripping text for a CSV cell, in scientific notation for
/// very small or very large magnitudes.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

impl ObservableRecord {
    pub fn csv_row(&self) -> Vec<String> {
        let f = format_float;
        vec![
            f(self.t),
            f(self.mass),
            f(self.kinetic),
            f(self.hartree),
            f(self.power),
            f(self.total_energy),
            f(self.log_moment),
            f(self.h12_moment),
            self.sigma_moment.map(f).unwrap_or_default(),
            f(self.grad_norm),
        ]
    }
}

/// Write records as CSV with the columns of [`CSV_COLUMNS`].
pub fn write_csv<W: Write>(records: &[ObservableRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Precomputed weights for evaluating [`ObservableRecord`]s on one grid.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    log_weight: Vec<f64>,
    log_sq_weight: Vec<f64>,
    abs_weight: Option<Vec<f64>>,
    origin_weight: Vec<f64>,
}

impl Diagnostics {
    pub fn new(pot: &NonlocalPotential) -> Self {
        let grid = pot.grid();
        let log_weight = grid.map_points(|[x, y]| bracket(x.hypot(y)).ln());
        let log_sq_weight = log_weight.iter().map(|w| w * w).collect();
        let abs_weight = (grid.dimension() == 1).then(|| grid.map_points(|[x, _]| x.abs()));
        Self {
            log_weight,
            log_sq_weight,
            abs_weight,
            origin_weight: pot.convolver().origin_weights(),
        }
    }

    pub fn log_weight(&self) -> &[f64] {
        &self.log_weight
    }

    fn moment(u: &Field, w: &[f64]) -> f64 {
        u.values()
            .iter()
            .zip(w)
            .map(|(z, w)| z.norm_sqr() * w)
            .sum::<f64>()
            * u.grid().cell_volume()
    }

    /// Evaluate every observable; `convolution` may pass a cached `G * |u|^2`.
    pub fn record(
        &self,
        pot: &NonlocalPotential,
        u: &Field,
        t: f64,
        convolution: Option<&[f64]>,
    ) -> Result<ObservableRecord> {
        let params = pot.params();
        let mass = l2_norm_squared(u);
        let grad_sq = grad_norm_squared(u);
        let hartree = if params.lambda == 0.0 {
            0.0
        } else {
            let owned;
            let conv = match convolution {
                Some(c) => c,
                None => {
                    owned = pot.kernel_convolution(u)?;
                    &owned
                }
            };
            hartree_from_convolution(params, u, conv)
        };
        let power = power_energy(params, u);
        let kinetic = 0.5 * grad_sq;
        let sigma_moment = self.abs_weight.as_ref().map(|w| Self::moment(u, w));
        let sigma_second_moment = self.abs_weight.as_ref().map(|w| {
            let sq: Vec<f64> = w.iter().map(|x| x * x).collect();
            Self::moment(u, &sq)
        });
        Ok(ObservableRecord {
            t,
            mass,
            kinetic,
            hartree,
            power,
            total_energy: kinetic + hartree + power,
            log_moment: Self::moment(u, &self.log_weight),
            h12_moment: Self::moment(u, &self.log_sq_weight),
            sigma_moment,
            sigma_second_moment,
            grad_norm: grad_sq.sqrt(),
            origin_moment: Self::moment(u, &self.origin_weight),
        })
    }
}

fn hartree_from_convolution(params: &ModelParams, u: &Field, conv: &[f64]) -> f64 {
    let lc = params.lambda * params.kernel_normalization();
    0.5 * lc
        * u.values()
            .iter()
            .zip(conv)
            .map(|(z, c)| z.norm_sqr() * c)
            .sum::<f64>()
        * u.grid().cell_volume()
}

fn power_energy(params: &ModelParams, u: &Field) -> f64 {
    if params.eta == 0.0 {
        return 0.0;
    }
    let q = params.p + 1.0;
    2.0 * params.eta / q
        * u.values().iter().map(|z| z.norm().powf(q)).sum::<f64>()
        * u.grid().cell_volume()
}

fn require_dimension(pot: &NonlocalPotential, u: &Field, dim: usize) -> Result<()> {
    for actual in [pot.params().dimension, u.grid().dimension()] {
        if actual != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual,
            });
        }
    }
    Ok(())
}

/// `1/2 ||grad u||^2 - lambda/(4 pi) iint log|x - y| |u(x)|^2 |u(y)|^2`.
pub fn energy_2d(u: &Field, pot: &NonlocalPotential) -> Result<f64> {
    require_dimension(pot, u, 2)?;
    let conv = pot.kernel_convolution(u)?;
    Ok(0.5 * grad_norm_squared(u) + hartree_from_convolution(pot.params(), u, &conv))
}

/// [`energy_2d`] plus `2 eta/(p+1) ||u||_{p+1}^{p+1}`.
pub fn energy_p_2d(u: &Field, pot: &NonlocalPotential) -> Result<f64> {
    Ok(energy_2d(u, pot)? + power_energy(pot.params(), u))
}

/// 1D energy `1/2 ||u_x||^2 - lambda/4 iint |x - y| |u(x)|^2 |u(y)|^2 + 2 eta/(p+1) ||u||_{p+1}^{p+1}`.
pub fn energy_1d(u: &Field, pot: &NonlocalPotential) -> Result<f64> {
    require_dimension(pot, u, 1)?;
    let conv = pot.kernel_convolution(u)?;
    Ok(0.5 * grad_norm_squared(u)
        + hartree_from_convolution(pot.params(), u, &conv)
        + power_energy(pot.params(), u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Bounded,
    SuspectedBlowup,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Bounded => "bounded",
            Outcome::SuspectedBlowup => "suspected_blowup",
        }
    }
}

/// Index of the first record whose gradient norm exceeds `threshold`.
pub fn first_exceedance(records: &[ObservableRecord], threshold: f64) -> Option<usize> {
    records.iter().position(|r| !(r.grad_norm <= threshold))
}

pub fn blow_up_monitor(records: &[ObservableRecord], threshold: f64) -> Outcome {
    match first_exceedance(records, threshold) {
        Some(_) => Outcome::SuspectedBlowup,
        None => Outcome::Bounded,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthReport {
    /// Smallest `rhs - lhs` over all record pairs; `>= -tol` means the inequality holds.
    pub worst_slack: f64,
    pub grad_sup: f64,
    pub pairs: usize,
    pub holds: bool,
}

/// Check `M(t2) <= M(t1) + (t2 - t1) grad_sup ||u_0||_2` for every recorded
/// pair `t1 < t2`, with `M` the log moment. `grad_sup` defaults to the largest
/// recorded gradient norm.
pub fn log_moment_growth_check(records: &[ObservableRecord], grad_sup: Option<f64>) -> GrowthReport {
    let grad_sup = grad_sup.unwrap_or_else(|| records.iter().map(|r| r.grad_norm).fold(0.0, f64::max));
    let root_mass = records.first().map(|r| r.mass.sqrt()).unwrap_or(0.0);
    let mut worst = f64::INFINITY;
    let mut pairs = 0;
    for (i, a) in records.iter().enumerate() {
        for b in &records[i + 1..] {
            let rhs = a.log_moment + (b.t - a.t) * grad_sup * root_mass;
            worst = worst.min(rhs - b.log_moment);
            pairs += 1;
        }
    }
    if pairs == 0 {
        worst = 0.0;
    }
    GrowthReport {
        worst_slack: worst,
        grad_sup,
        pairs,
        holds: worst >= -GROWTH_TOLERANCE,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AprioriReport {
    pub lambda: f64,
    pub initial_energy: f64,
    /// Smallest `C >= 0` with `g^2 <= 2 E_0 + C g` on every record (lambda < 0).
    pub fitted_c: Option<f64>,
    /// Larger root of `g^2 - C g - 2 E_0 = 0` (lambda < 0).
    pub bound_root: Option<f64>,
    pub sup_grad_norm: f64,
    pub holds: bool,
}

/// Instantiate the a priori gradient bound on a run.
///
/// For `lambda < 0` the quadratic relation `g^2 <= 2 E_0 + C g` is fitted and
/// every `g` is compared with its larger root; for `lambda > 0` the sup of the
/// gradient norm must be finite and below `threshold` (when given).
pub fn apriori_bound_check(
    records: &[ObservableRecord],
    params: &ModelParams,
    initial_energy: f64,
    threshold: Option<f64>,
) -> Result<AprioriReport> {
    if params.lambda == 0.0 {
        return Err(Error::param("lambda", "a priori bounds need lambda != 0"));
    }
    let sup = records.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
    if params.lambda > 0.0 {
        let holds = sup.is_finite() && threshold.is_none_or(|th| sup <= th);
        return Ok(AprioriReport {
            lambda: params.lambda,
            initial_energy,
            fitted_c: None,
            bound_root: None,
            sup_grad_norm: sup,
            holds,
        });
    }
    let two_e0 = 2.0 * initial_energy;
    let c = records
        .iter()
        .filter(|r| r.grad_norm > 0.0)
        .map(|r| (r.grad_norm * r.grad_norm - two_e0) / r.grad_norm)
        .fold(0.0, f64::max);
    let disc = c * c + 4.0 * two_e0;
    let root = 0.5 * (c + disc.max(0.0).sqrt());
    let holds = records
        .iter()
        .all(|r| r.grad_norm <= root * (1.0 + 1e-12) + 1e-300);
    Ok(AprioriReport {
        lambda: params.lambda,
        initial_energy,
        fitted_c: Some(c),
        bound_root: Some(root),
        sup_grad_norm: sup,
        holds,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// `r = ||sqrt(log<x>) u||_2`.
    pub r: f64,
    pub inconclusive: bool,
    /// `||u||_{L^2(|x| < r)}` by masked quadrature.
    pub restricted_norm: f64,
    /// `||1||_{L^4(|x| < r)} ||u||_4`.
    pub holder_bound: f64,
    /// `(pi r^2 C ||u||^2 ||grad u||^2)^{1/4}` with the sharp constant `C`.
    pub upper_bound: f64,
    /// Measured `||u||_4^4 / (||u||_2^2 ||grad u||_2^2)`.
    pub measured_gn_constant: f64,
    pub sharp_gn_constant: f64,
    /// `||u||_2 - (log_moment / log<r>)^{1/2}`.
    pub lower_bound: f64,
    pub upper_holds: bool,
    pub lower_holds: bool,
}

/// Check the two-sided control of the mass inside `|x| < r`, `r` the square
/// root of the log moment.
pub fn concentration_check(u: &Field) -> Result<ConcentrationReport> {
    let grid = u.grid();
    if grid.dimension() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: grid.dimension(),
        });
    }
    let vol = grid.cell_volume();
    let mass = l2_norm_squared(u);
    let log_moment = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, z)| z.norm_sqr() * bracket(grid.radius(i)).ln())
        .sum::<f64>()
        * vol;
    let r = log_moment.sqrt();
    let grad_sq = grad_norm_squared(u);
    let l4 = (u.values().iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() * vol).powf(0.25);
    let restricted = (u
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| grid.radius(*i) < r)
        .map(|(_, z)| z.norm_sqr())
        .sum::<f64>()
        * vol)
        .sqrt();
    let disc = PI * r * r;
    let sharp = 2.0 / GROUND_STATE_MASS_2D;
    let holder_bound = disc.powf(0.25) * l4;
    let upper_bound = (disc * sharp * mass * grad_sq).powf(0.25);
    let measured = if mass * grad_sq > 0.0 {
        l4.powi(4) / (mass * grad_sq)
    } else {
        0.0
    };
    let log_r = bracket(r).ln();
    let lower_bound = if log_r > 0.0 {
        mass.sqrt() - (log_moment / log_r).sqrt()
    } else {
        f64::NEG_INFINITY
    };
    let inconclusive = r < grid.spacing();
    Ok(ConcentrationReport {
        r,
        inconclusive,
        restricted_norm: restricted,
        holder_bound,
        upper_bound,
        measured_gn_constant: measured,
        sharp_gn_constant: sharp,
        lower_bound,
        upper_holds: restricted <= holder_bound * (1.0 + 1e-12) && holder_bound <= upper_bound * (1.0 + 1e-12),
        lower_holds: restricted >= lower_bound,
    })
}
