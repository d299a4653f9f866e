//! Newtonian kernels, their split into a position-only part plus a bounded
//! remainder, and sampled checks of the remainder bounds.
//!
//! In 2D the kernel is `log|x - y|`, split as
//! `log(|x - y| / <x>) + log<x>`; in 1D it is `|x - y|`, split as
//! `(|x - y| - |x|) + |x|`. The normalized remainder
//! `K(x, y) = log(|x - y| / <x>) / (1 + log<y>)` is bounded by
//! `1 + log(sqrt(3) / eta)` away from the diagonal `|x - y| >= eta` and is
//! locally `L^p` near it; the 1D remainder satisfies
//! `||x - y| - |x|| <= 1 + |y|`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::bracket;
use crate::quadrature::integrate_graded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Full,
    Remainder,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub dimension: usize,
    pub kind: KernelKind,
    /// Factor turning the kernel convolution into the potential `P`:
    /// `-1/(2 pi)` in 2D, `-1/2` in 1D.
    pub normalization: f64,
}

impl KernelSpec {
    pub fn newtonian(dimension: usize, kind: KernelKind) -> Self {
        let normalization = if dimension == 2 { -0.5 / PI } else { -0.5 };
        Self {
            dimension,
            kind,
            normalization,
        }
    }

    /// Unnormalized kernel value. Only `Full` and `Remainder` depend on `y`.
    pub fn raw(&self, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
        let dist = (x[0] - y[0]).hypot(x[1] - y[1]);
        let rx = x[0].hypot(x[1]);
        match (self.dimension, self.kind) {
            (2, KernelKind::Linear) => Ok(bracket(rx).ln()),
            (2, _) if dist == 0.0 => Err(Error::CoincidentPoints),
            (2, KernelKind::Full) => Ok(dist.ln()),
            (2, KernelKind::Remainder) => Ok((dist / bracket(rx)).ln()),
            (_, KernelKind::Linear) => Ok(x[0].abs()),
            (_, KernelKind::Full) => Ok((x[0] - y[0]).abs()),
            (_, KernelKind::Remainder) => Ok(remainder_kernel_1d(x[0], y[0])),
        }
    }
}

/// `K(x, y) = log(|x - y| / <x>) / (1 + log<y>)` for `x != y` in the plane.
pub fn k_function(x: [f64; 2], y: [f64; 2]) -> Result<f64> {
    let dist = (x[0] - y[0]).hypot(x[1] - y[1]);
    if dist == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let (rx, ry) = (x[0].hypot(x[1]), y[0].hypot(y[1]));
    Ok((dist / bracket(rx)).ln() / (1.0 + bracket(ry).ln()))
}

/// Far-region bound `1 + log(sqrt(3) / eta)`.
pub fn far_bound(eta: f64) -> f64 {
    1.0 + (3f64.sqrt() / eta).ln()
}

/// Sampling density for [`check_k_bound`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSpec {
    /// Smallest nonzero radius of the log-spaced lattice.
    pub min_radius: f64,
    /// Largest radius of the lattice.
    pub max_radius: f64,
    /// Log-spaced radii per point (the origin is always added).
    pub radii: usize,
    /// Angles of `y` relative to `x` over `[0, pi]`.
    pub angles: usize,
    /// Dyadic levels of the graded radial rule in the near region.
    pub near_levels: usize,
    /// Gauss–Legendre order per dyadic level.
    pub near_order: usize,
    /// Trapezoid angles around `y` in the near region.
    pub near_angles: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            min_radius: 1e-3,
            max_radius: 1e6,
            radii: 160,
            angles: 181,
            near_levels: 50,
            near_order: 10,
            near_angles: 64,
        }
    }
}

impl SampleSpec {
    fn radii_lattice(&self) -> Vec<f64> {
        let n = self.radii.max(2);
        let (lo, hi) = (self.min_radius.ln(), self.max_radius.ln());
        std::iter::once(0.0)
            .chain((0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub eta: f64,
    pub p: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    /// Sup of `|K|` over sampled pairs with `|x - y| >= eta`.
    pub sampled_sup_far: f64,
    /// Max over sampled `y` of `||K(., y) 1_{|x - y| <= eta}||_{L^p}`.
    pub lp_norm_near: f64,
    pub far_pairs: usize,
    pub holds: bool,
}

/// Sample `|K|` away from the diagonal and its `L^p` norm near it.
pub fn check_k_bound(eta: f64, p: f64, spec: &SampleSpec) -> Result<KernelBoundReport> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param("eta", format!("must lie in (0, 1], got {eta}")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::param("p", format!("must lie in [1, inf), got {p}")));
    }
    let radii = spec.radii_lattice();
    let angles = spec.angles.max(2);

    // K is invariant under joint rotations, so x stays on the positive axis.
    let mut sup_far = 0.0f64;
    let mut far_pairs = 0usize;
    for &rx in &radii {
        let x = [rx, 0.0];
        for &ry in &radii {
            for a in 0..angles {
                let phi = PI * a as f64 / (angles - 1) as f64;
                let y = [ry * phi.cos(), ry * phi.sin()];
                let dist = (x[0] - y[0]).hypot(x[1] - y[1]);
                if dist >= eta {
                    sup_far = sup_far.max(k_function(x, y)?.abs());
                    far_pairs += 1;
                }
            }
        }
    }

    let lp_norm_near = radii
        .iter()
        .map(|&ry| near_lp_norm([ry, 0.0], eta, p, spec))
        .fold(0.0, f64::max);

    let c0 = far_bound(eta);
    Ok(KernelBoundReport {
        eta,
        p,
        c0,
        sampled_sup_far: sup_far,
        lp_norm_near,
        far_pairs,
        holds: sup_far <= c0,
    })
}

/// `||K(., y)||_{L^p(|x - y| <= eta)}` by polar quadrature centred at `y`.
fn near_lp_norm(y: [f64; 2], eta: f64, p: f64, spec: &SampleSpec) -> f64 {
    let n_phi = spec.near_angles.max(4);
    let denom = 1.0 + bracket(y[0].hypot(y[1])).ln();
    let integral: f64 = (0..n_phi)
        .map(|a| {
            let phi = 2.0 * PI * a as f64 / n_phi as f64;
            let (c, s) = (phi.cos(), phi.sin());
            let radial = |rho: f64| {
                let x = [y[0] + rho * c, y[1] + rho * s];
                let k = (rho / bracket(x[0].hypot(x[1]))).ln() / denom;
                k.abs().powf(p) * rho
            };
            integrate_graded(radial, eta, spec.near_levels, spec.near_order)
        })
        .sum::<f64>()
        * (2.0 * PI / n_phi as f64);
    integral.powf(1.0 / p)
}

/// 1D remainder kernel `|x - y| - |x|`.
pub fn remainder_kernel_1d(x: f64, y: f64) -> f64 {
    (x - y).abs() - x.abs()
}

/// Uniform sampling of `[-extent, extent]^2` for [`check_1d_bound`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample1dSpec {
    pub extent: f64,
    pub points: usize,
}

impl Default for Sample1dSpec {
    fn default() -> Self {
        Self {
            extent: 50.0,
            points: 2001,
        }
    }
}

/// Sup over sampled pairs of `||x - y| - |x|| / (1 + |y|)`.
pub fn check_1d_bound(spec: &Sample1dSpec) -> f64 {
    let n = spec.points.max(2);
    let coord = |i: usize| -spec.extent + 2.0 * spec.extent * i as f64 / (n - 1) as f64;
    let mut sup = 0.0f64;
    for i in 0..n {
        let x = coord(i);
        for j in 0..n {
            let y = coord(j);
            sup = sup.max(remainder_kernel_1d(x, y).abs() / (1.0 + y.abs()));
        }
    }
    sup
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kernel1dReport {
    pub extent: f64,
    pub points: usize,
    pub sampled_sup: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn kernel_1d_report(spec: &Sample1dSpec) -> Kernel1dReport {
    let sampled_sup = check_1d_bound(spec);
    Kernel1dReport {
        extent: spec.extent,
        points: spec.points,
        sampled_sup,
        bound: 1.0,
        holds: sampled_sup <= 1.0 + 1e-12,
    }
}
