//! Nonlocal potential evaluation by free-space FFT convolution.
//!
//! The Newtonian potential is `P = c (G * |u|^2)` with `G = log|x|`,
//! `c = -1/(2 pi)` in 2D and `G = |x|`, `c = -1/2` in 1D. The Hartree term in
//! the Hamiltonian is `lambda P`, which splits into a position-only part
//! `lambda c ||u_0||^2 g(x)` (with `g = log<x>` or `|x|`) and a remainder
//! `lambda c (G * |u|^2 - ||u||^2 g)`. The position-only part freezes the mass
//! at `t = 0`, so the two forms agree exactly while the mass is conserved.
//!
//! Convolutions are aperiodic: the density is zero-padded to `pad * N` points
//! per axis and multiplied in frequency space by the transform of a kernel
//! table holding `G` at every node offset `|m_i| <= N - 1`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{transpose_square, Transform};
use crate::grid::{bracket, l2_norm_squared, Field, Grid};
use crate::kernels::{KernelKind, KernelSpec};

/// Largest `N` accepted by [`direct_convolution_oracle`].
pub const DIRECT_SUM_LIMIT: usize = 64;

/// How kernel table entries are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelQuadrature {
    /// Band-limited kernel: inverse transform of the Fourier transform of `G`
    /// truncated at the box diameter, sampled on a 4x oversampled grid. Exact
    /// for the trigonometric interpolant of the density.
    #[default]
    Spectral,
    /// Point values of `G`, with the singular 2D diagonal cell replaced by the
    /// exact cell average of `log|z|`.
    CellAverage,
}

/// Exact mean of `log|z|` over the square `[-h/2, h/2]^2`.
pub fn log_cell_average(h: f64) -> f64 {
    (0.5 * h).ln() + 0.5 * (2f64.ln() - 3.0 + 0.5 * PI)
}

/// Cached kernel table plus its transform on the padded grid.
#[derive(Debug, Clone)]
pub struct Convolver {
    grid: Arc<Grid>,
    quadrature: KernelQuadrature,
    pad: usize,
    padded: usize,
    table: Vec<f64>,
    kernel_hat: Vec<f64>,
    transform: Transform,
}

impl Convolver {
    pub fn new(grid: Arc<Grid>, quadrature: KernelQuadrature) -> Self {
        Self::with_padding(grid, quadrature, 2).expect("padding factor 2 is valid")
    }

    pub fn with_padding(grid: Arc<Grid>, quadrature: KernelQuadrature, pad: usize) -> Result<Self> {
        if pad < 2 {
            return Err(Error::param("pad", format!("must be >= 2, got {pad}")));
        }
        let n = grid.points_per_axis();
        let dim = grid.dimension();
        let padded = pad * n;
        let offsets = match quadrature {
            KernelQuadrature::Spectral => spectral_offsets(&grid),
            KernelQuadrature::CellAverage => cell_average_offsets(&grid),
        };
        // offsets[a][b] holds G at offset (a - (n-1), b - (n-1)) * h.
        let width = 2 * n - 1;
        let wrap = |m: usize| -> Option<usize> {
            // padded index -> signed offset index in 0..width, if used.
            if m < n {
                Some(m + n - 1)
            } else if m > padded - n {
                Some(m + n - 1 - padded)
            } else {
                None
            }
        };
        let mut table = vec![0.0; padded.pow(dim as u32)];
        match dim {
            1 => {
                for (a, slot) in table.iter_mut().enumerate() {
                    if let Some(i) = wrap(a) {
                        *slot = offsets[i];
                    }
                }
            }
            _ => {
                for a in 0..padded {
                    let Some(i) = wrap(a) else { continue };
                    for b in 0..padded {
                        if let Some(j) = wrap(b) {
                            table[a * padded + b] = offsets[i * width + j];
                        }
                    }
                }
            }
        }

        let transform = Transform::new(padded, dim);
        let mut hat: Vec<Complex64> = table.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        transform.forward_rows(&mut hat, 0..padded.pow(dim as u32 - 1));
        if dim == 2 {
            transpose_square(&mut hat, padded);
            transform.forward_rows(&mut hat, 0..padded);
        }
        // Even table, so the transform is real.
        let kernel_hat = hat.iter().map(|z| z.re).collect();

        Ok(Self {
            grid,
            quadrature,
            pad,
            padded,
            table,
            kernel_hat,
            transform,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn quadrature(&self) -> KernelQuadrature {
        self.quadrature
    }

    pub fn padding(&self) -> usize {
        self.pad
    }

    /// Tabulated `G` at node offset `offset` (second entry ignored in 1D).
    pub fn kernel_value(&self, offset: [i64; 2]) -> f64 {
        let m = self.padded as i64;
        let a = offset[0].rem_euclid(m) as usize;
        match self.grid.dimension() {
            1 => self.table[a],
            _ => self.table[a * self.padded + offset[1].rem_euclid(m) as usize],
        }
    }

    /// `sum_j G(x_i - x_j) rho_j h^d` for every node `i`.
    pub fn convolve(&self, density: &[f64]) -> Vec<f64> {
        let n = self.grid.points_per_axis();
        let m = self.padded;
        let scale = self.grid.cell_volume() / self.transform.len() as f64;
        match self.grid.dimension() {
            1 => {
                let mut buf = vec![Complex64::default(); m];
                for (b, r) in buf.iter_mut().zip(density) {
                    b.re = *r;
                }
                self.transform.forward_rows(&mut buf, 0..1);
                buf.iter_mut()
                    .zip(&self.kernel_hat)
                    .for_each(|(z, k)| *z *= k);
                self.transform.inverse_rows(&mut buf, 0..1);
                buf[..n].iter().map(|z| z.re * scale).collect()
            }
            _ => {
                let mut buf = vec![Complex64::default(); m * m];
                for i in 0..n {
                    for j in 0..n {
                        buf[i * m + j].re = density[i * n + j];
                    }
                }
                // Rows beyond n are zero, so only the first n need a transform.
                self.transform.forward_rows(&mut buf, 0..n);
                transpose_square(&mut buf, m);
                self.transform.forward_rows(&mut buf, 0..m);
                buf.iter_mut()
                    .zip(&self.kernel_hat)
                    .for_each(|(z, k)| *z *= k);
                self.transform.inverse_rows(&mut buf, 0..m);
                transpose_square(&mut buf, m);
                self.transform.inverse_rows(&mut buf, 0..n);
                let mut out = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = buf[i * m + j].re * scale;
                    }
                }
                out
            }
        }
    }

    /// `G(x_j - 0)` at every node: the weight `log|y|` (2D) or `|y|` (1D)
    /// with the same singular-cell treatment as the convolution.
    pub fn origin_weights(&self) -> Vec<f64> {
        let c = (self.grid.points_per_axis() / 2) as i64;
        (0..self.grid.len())
            .map(|idx| {
                let [i, j] = self.grid.axis_indices(idx);
                let dj = if self.grid.dimension() == 2 { j as i64 - c } else { 0 };
                self.kernel_value([i as i64 - c, dj])
            })
            .collect()
    }
}

/// Band-limited kernel values on offsets `-(n-1)..=(n-1)` per axis.
fn spectral_offsets(grid: &Grid) -> Vec<f64> {
    let n = grid.points_per_axis();
    let h = grid.spacing();
    let dim = grid.dimension();
    let over = 4 * n;
    let dk = 2.0 * PI / (over as f64 * h);
    let freq = |i: usize| -> f64 {
        let s = if i < over / 2 { i as f64 } else { i as f64 - over as f64 };
        s * dk
    };
    let width = 2 * n - 1;
    let signed = |m: usize| -> usize {
        // offset index 0..width -> index on the oversampled periodic grid
        let off = m as i64 - (n as i64 - 1);
        off.rem_euclid(over as i64) as usize
    };
    let transform = Transform::new(over, dim);
    match dim {
        1 => {
            let r = 2.0 * grid.half_width();
            let mut data: Vec<Complex64> = (0..over)
                .map(|i| Complex64::new(abs_truncated_hat(freq(i), r), 0.0))
                .collect();
            transform.inverse(&mut data);
            (0..width).map(|m| data[signed(m)].re / h).collect()
        }
        _ => {
            let r = 2.0 * 2f64.sqrt() * grid.half_width();
            let mut data = vec![Complex64::default(); over * over];
            for a in 0..over {
                for b in 0..over {
                    let k = freq(a).hypot(freq(b));
                    data[a * over + b].re = log_truncated_hat(k, r);
                }
            }
            transform.inverse(&mut data);
            let mut out = vec![0.0; width * width];
            for a in 0..width {
                for b in 0..width {
                    out[a * width + b] = data[signed(a) * over + signed(b)].re / (h * h);
                }
            }
            out
        }
    }
}

/// Fourier transform of `log|x| 1_{|x| < r}` in the plane.
fn log_truncated_hat(k: f64, r: f64) -> f64 {
    if k == 0.0 {
        2.0 * PI * (0.5 * r * r * r.ln() - 0.25 * r * r)
    } else {
        let kr = k * r;
        2.0 * PI * (r * r.ln() * libm::j1(kr) / k - (1.0 - libm::j0(kr)) / (k * k))
    }
}

/// Fourier transform of `|x| 1_{|x| < r}` on the line.
fn abs_truncated_hat(k: f64, r: f64) -> f64 {
    if k == 0.0 {
        r * r
    } else {
        let kr = k * r;
        2.0 * (r * kr.sin() / k + (kr.cos() - 1.0) / (k * k))
    }
}

fn cell_average_offsets(grid: &Grid) -> Vec<f64> {
    let n = grid.points_per_axis() as i64;
    let h = grid.spacing();
    let range = -(n - 1)..=(n - 1);
    match grid.dimension() {
        1 => range.map(|m| (m as f64 * h).abs()).collect(),
        _ => {
            let mut out = Vec::with_capacity(((2 * n - 1) * (2 * n - 1)) as usize);
            for a in range.clone() {
                for b in range.clone() {
                    out.push(if a == 0 && b == 0 {
                        log_cell_average(h)
                    } else {
                        (a as f64 * h).hypot(b as f64 * h).ln()
                    });
                }
            }
            out
        }
    }
}

/// Equation parameters: `dimension`, Hartree coupling `lambda`, power
/// coupling `eta` with exponent `p`, and the mass `||u_0||_2^2` that fixes
/// the position-only part of the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dimension: usize,
    pub lambda: f64,
    pub eta: f64,
    pub p: f64,
    pub initial_mass: f64,
}

impl ModelParams {
    pub fn new(dimension: usize, lambda: f64, eta: f64, p: f64, initial_mass: f64) -> Result<Self> {
        if !(dimension == 1 || dimension == 2) {
            return Err(Error::param("dimension", format!("must be 1 or 2, got {dimension}")));
        }
        for (name, v) in [("lambda", lambda), ("eta", eta), ("initial_mass", initial_mass)] {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::param("p", format!("must lie in [1, inf), got {p}")));
        }
        if initial_mass < 0.0 {
            return Err(Error::param("initial_mass", "must be nonnegative"));
        }
        Ok(Self {
            dimension,
            lambda,
            eta,
            p,
            initial_mass,
        })
    }

    /// Parameters with the initial mass taken from `u0`.
    pub fn for_datum(lambda: f64, eta: f64, p: f64, u0: &Field) -> Result<Self> {
        Self::new(u0.grid().dimension(), lambda, eta, p, l2_norm_squared(u0))
    }

    /// Normalization `c` of `P = c (G * |u|^2)`.
    pub fn kernel_normalization(&self) -> f64 {
        KernelSpec::newtonian(self.dimension, KernelKind::Full).normalization
    }

    /// Coefficient of the position-only potential: `m = -lambda ||u_0||^2 / (2 pi)`
    /// multiplying `log<x>` in 2D, `-lambda ||u_0||^2 / 2` multiplying `|x|` in 1D.
    pub fn m(&self) -> f64 {
        self.lambda * self.kernel_normalization() * self.initial_mass
    }
}

/// The position-only profile `log<x>` (2D) or `|x|` (1D) on the grid.
pub fn linear_profile(grid: &Grid) -> Vec<f64> {
    match grid.dimension() {
        1 => grid.map_points(|[x, _]| x.abs()),
        _ => grid.map_points(|[x, y]| bracket(x.hypot(y)).ln()),
    }
}

/// The two pieces of `lambda P`, stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSplit {
    /// `m log<x>` (2D) or `-(lambda ||u_0||^2 / 2) |x|` (1D); depends only on
    /// the grid, `lambda` and the initial mass.
    pub linear: Vec<f64>,
    /// `lambda c (G * |u|^2 - ||u||^2 g)`.
    pub remainder: Vec<f64>,
    pub initial_mass: f64,
}

impl PotentialSplit {
    pub fn total(&self) -> Vec<f64> {
        self.linear
            .iter()
            .zip(&self.remainder)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Everything needed to evaluate the potentials of one model on one grid.
#[derive(Debug, Clone)]
pub struct NonlocalPotential {
    params: ModelParams,
    convolver: Convolver,
    profile: Vec<f64>,
    linear: Vec<f64>,
}

impl NonlocalPotential {
    pub fn new(grid: Arc<Grid>, params: ModelParams, quadrature: KernelQuadrature) -> Result<Self> {
        Self::with_convolver(Convolver::new(grid, quadrature), params)
    }

    pub fn with_convolver(convolver: Convolver, params: ModelParams) -> Result<Self> {
        let dim = convolver.grid().dimension();
        if dim != params.dimension {
            return Err(Error::DimensionMismatch {
                expected: params.dimension,
                actual: dim,
            });
        }
        let profile = linear_profile(convolver.grid());
        let m = params.m();
        let linear = profile.iter().map(|g| m * g).collect();
        Ok(Self {
            params,
            convolver,
            profile,
            linear,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn convolver(&self) -> &Convolver {
        &self.convolver
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.convolver.grid()
    }

    /// `g(x)`: `log<x>` in 2D, `|x|` in 1D.
    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    /// Position-only part of the Hamiltonian potential.
    pub fn linear_potential(&self) -> &[f64] {
        &self.linear
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.grid().dimension() != self.params.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.params.dimension,
                actual: u.grid().dimension(),
            });
        }
        if **u.grid() != **self.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `G * |u|^2` on the grid.
    pub fn kernel_convolution(&self, u: &Field) -> Result<Vec<f64>> {
        self.check(u)?;
        Ok(self.convolver.convolve(&u.density()))
    }

    /// Newtonian potential `P = c (G * |u|^2)`.
    pub fn full_newtonian(&self, u: &Field) -> Result<Vec<f64>> {
        let c = self.params.kernel_normalization();
        Ok(self.kernel_convolution(u)?.into_iter().map(|v| c * v).collect())
    }

    /// `lambda P` split into its position-only part and remainder.
    pub fn decomposed_potential(&self, u: &Field) -> Result<PotentialSplit> {
        let conv = self.kernel_convolution(u)?;
        Ok(self.split_from_convolution(&conv, l2_norm_squared(u)))
    }

    pub(crate) fn split_from_convolution(&self, conv: &[f64], mass: f64) -> PotentialSplit {
        let lc = self.params.lambda * self.params.kernel_normalization();
        let remainder = conv
            .iter()
            .zip(&self.profile)
            .map(|(c, g)| lc * (c - mass * g))
            .collect();
        PotentialSplit {
            linear: self.linear.clone(),
            remainder,
            initial_mass: self.params.initial_mass,
        }
    }

    /// `eta |u|^{p-1}` at every node.
    pub fn power_potential(&self, u: &Field) -> Vec<f64> {
        let (eta, p) = (self.params.eta, self.params.p);
        u.values()
            .iter()
            .map(|z| if eta == 0.0 { 0.0 } else { eta * z.norm().powf(p - 1.0) })
            .collect()
    }

    /// Full Hamiltonian potential: linear part + remainder + power term.
    pub fn hamiltonian_potential(&self, u: &Field) -> Result<Vec<f64>> {
        let mut phi = self.nonlinear_potential(u)?;
        phi.iter_mut()
            .zip(&self.linear)
            .for_each(|(v, l)| *v += l);
        Ok(phi)
    }

    /// Remainder + power term (the part treated as nonlinearity in Duhamel form).
    pub fn nonlinear_potential(&self, u: &Field) -> Result<Vec<f64>> {
        let split = if self.params.lambda == 0.0 {
            PotentialSplit {
                linear: Vec::new(),
                remainder: vec![0.0; u.values().len()],
                initial_mass: self.params.initial_mass,
            }
        } else {
            self.decomposed_potential(u)?
        };
        let power = self.power_potential(u);
        Ok(split
            .remainder
            .iter()
            .zip(&power)
            .map(|(r, q)| r + q)
            .collect())
    }

    /// `int G(y) |u(y)|^2 dy`: `int log|y| |u|^2` in 2D, `int |y| |u|^2` in 1D.
    pub fn origin_moment(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        let w = self.convolver.origin_weights();
        Ok(u.values()
            .iter()
            .zip(&w)
            .map(|(z, w)| z.norm_sqr() * w)
            .sum::<f64>()
            * u.grid().cell_volume())
    }
}

/// Newtonian potential `P` of `u` with a freshly built spectral convolver.
pub fn full_newtonian(u: &Field) -> Result<Vec<f64>> {
    let params = ModelParams::new(u.grid().dimension(), 1.0, 0.0, 3.0, 0.0)?;
    NonlocalPotential::new(u.grid().clone(), params, KernelQuadrature::Spectral)?.full_newtonian(u)
}

/// Split `lambda P` of `u` with a freshly built spectral convolver.
pub fn decomposed_potential(u: &Field, params: &ModelParams) -> Result<PotentialSplit> {
    NonlocalPotential::new(u.grid().clone(), *params, KernelQuadrature::Spectral)?
        .decomposed_potential(u)
}

/// O(N^{2d}) direct sum of `kernel` against `|u|^2`, using the same table
/// entries as `convolver` for the translation-invariant part.
pub fn direct_convolution_oracle(
    u: &Field,
    kernel: KernelSpec,
    convolver: &Convolver,
) -> Result<Vec<f64>> {
    let grid = u.grid();
    let n = grid.points_per_axis();
    if n > DIRECT_SUM_LIMIT {
        return Err(Error::GridTooLarge {
            n,
            limit: DIRECT_SUM_LIMIT,
        });
    }
    if kernel.dimension != grid.dimension() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dimension,
            actual: grid.dimension(),
        });
    }
    if **grid != **convolver.grid() {
        return Err(Error::GridMismatch);
    }
    let rho = u.density();
    let profile = linear_profile(grid);
    let vol = grid.cell_volume();
    let out = (0..grid.len())
        .map(|i| {
            let [ia, ib] = grid.axis_indices(i);
            let sum: f64 = (0..grid.len())
                .map(|j| {
                    let [ja, jb] = grid.axis_indices(j);
                    let full = convolver.kernel_value([ia as i64 - ja as i64, ib as i64 - jb as i64]);
                    let value = match kernel.kind {
                        KernelKind::Full => full,
                        KernelKind::Remainder => full - profile[i],
                        KernelKind::Linear => profile[i],
                    };
                    value * rho[j]
                })
                .sum();
            kernel.normalization * sum * vol
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::quadrature::{gauss_legendre, integrate};

    fn gaussian_field(grid: &Arc<Grid>, center: [f64; 2], width: f64) -> Field {
        Field::from_fn(grid.clone(), |[x, y]| {
            let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
            Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
        })
    }

    #[test]
    fn cell_average_matches_quadrature() {
        let h = 0.3;
        // mean of log|z| over [-h/2,h/2]^2 = 4/h^2 * int_0^{h/2} int_0^{h/2}, split
        // along the diagonal so each triangle is integrated in polar form.
        let a = 0.5 * h;
        let (nodes, weights) = gauss_legendre(20);
        let mut total = 0.0;
        for (t, wt) in nodes.iter().zip(&weights) {
            let theta = 0.25 * PI * (t + 1.0) * 0.5;
            let rmax = a / theta.cos();
            // int_0^rmax log(r) r dr
            let radial = 0.5 * rmax * rmax * (rmax.ln() - 0.5);
            total += wt * radial * 0.125 * PI;
        }
        let avg = 2.0 * total * 4.0 / (h * h);
        assert!((avg - log_cell_average(h)).abs() < 1e-13, "{avg} vs {}", log_cell_average(h));
    }

    #[test]
    fn zero_field_gives_zero_potential() {
        let g = make_grid(2, 4.0, 16).unwrap();
        let p = full_newtonian(&Field::zeros(g)).unwrap();
        assert!(p.iter().all(|v| *v == 0.0));
    }

    fn radial_oracle(r: f64) -> f64 {
        // P(r) = -int_0^inf log(max(r, s)) e^{-s^2} s ds
        let f = |s: f64| r.max(s).ln() * (-s * s).exp() * s;
        let inner = if r > 0.0 {
            integrate(f, 0.0, r, 8, 16)
        } else {
            0.0
        };
        let outer = integrate(f, r, r + 12.0, 48, 16);
        -(inner + outer)
    }

    #[test]
    fn radial_gaussian_matches_radial_oracle() {
        let g = make_grid(2, 8.0, 128).unwrap();
        // |u|^2 = e^{-|x|^2}
        let u = gaussian_field(&g, [0.0, 0.0], 1.0);
        let p = full_newtonian(&u).unwrap();
        let (mut worst, mut scale) = (0.0f64, 0.0f64);
        for idx in 0..g.len() {
            let r = g.radius(idx);
            if r > 6.0 {
                continue;
            }
            let oracle = radial_oracle(r);
            worst = worst.max((p[idx] - oracle).abs());
            scale = scale.max(oracle.abs());
        }
        // P changes sign near r = 1, so the error is relative to max |P|.
        assert!(worst < 1e-6 * scale, "worst error {worst}, scale {scale}");
    }

    #[test]
    fn cell_average_is_only_second_order() {
        let err = |n: usize| {
            let g = make_grid(2, 8.0, n).unwrap();
            let u = gaussian_field(&g, [0.0, 0.0], 1.0);
            let params = ModelParams::new(2, 1.0, 0.0, 3.0, 0.0).unwrap();
            let pot = NonlocalPotential::new(g.clone(), params, KernelQuadrature::CellAverage).unwrap();
            let p = pot.full_newtonian(&u).unwrap();
            (p[g.origin_index()] - radial_oracle(0.0)).abs()
        };
        let (coarse, fine) = (err(64), err(128));
        let ratio = coarse / fine;
        assert!(fine > 1e-5, "{fine}");
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn delta_density_returns_kernel_column() {
        let g = make_grid(1, 4.0, 16).unwrap();
        let conv = Convolver::new(g.clone(), KernelQuadrature::CellAverage);
        let j0 = 5;
        let mut values = vec![Complex64::default(); 16];
        values[j0] = Complex64::new((1.0 / g.spacing()).sqrt(), 0.0);
        let u = Field::new(g.clone(), values).unwrap();
        let spec = KernelSpec::newtonian(1, KernelKind::Full);
        let out = direct_convolution_oracle(&u, spec, &conv).unwrap();
        for (i, v) in out.iter().enumerate() {
            let expected = spec.normalization * conv.kernel_value([i as i64 - j0 as i64, 0]);
            assert!((v - expected).abs() < 1e-13);
            assert!((conv.kernel_value([i as i64 - j0 as i64, 0]) - (g.coordinates()[i] - g.coordinates()[j0]).abs()).abs() < 1e-13);
        }
    }

    #[test]
    fn direct_sum_refuses_large_grids() {
        let g = make_grid(1, 4.0, 128).unwrap();
        let conv = Convolver::new(g.clone(), KernelQuadrature::Spectral);
        let u = gaussian_field(&g, [0.0, 0.0], 1.0);
        let spec = KernelSpec::newtonian(1, KernelKind::Full);
        assert!(matches!(
            direct_convolution_oracle(&u, spec, &conv),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn symmetric_density_gives_symmetric_potential() {
        let g = make_grid(2, 4.0, 32).unwrap();
        let conv = Convolver::new(g.clone(), KernelQuadrature::Spectral);
        // symmetric under x -> -x about the node grid (x_j -> x_{N-j})
        let u = gaussian_field(&g, [0.0, 0.0], 0.5);
        let spec = KernelSpec::newtonian(2, KernelKind::Full);
        let out = direct_convolution_oracle(&u, spec, &conv).unwrap();
        let n = 32;
        for i in 1..n {
            for j in 1..n {
                let a = out[i * n + j];
                let b = out[(n - i) * n + (n - j)];
                let c = out[j * n + i];
                assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
                assert!((a - c).abs() < 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn padding_three_matches_padding_two() {
        for dim in [1, 2] {
            let g = make_grid(dim, 8.0, 64).unwrap();
            let u = gaussian_field(&g, [1.0, -0.5], 0.7);
            let c2 = Convolver::with_padding(g.clone(), KernelQuadrature::Spectral, 2).unwrap();
            let c3 = Convolver::with_padding(g.clone(), KernelQuadrature::Spectral, 3).unwrap();
            let (a, b) = (c2.convolve(&u.density()), c3.convolve(&u.density()));
            let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-10, "dim {dim}: {worst}");
        }
    }

    #[test]
    fn mismatched_dimension_rejected() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let params = ModelParams::new(2, 1.0, 0.0, 3.0, 1.0).unwrap();
        assert!(matches!(
            NonlocalPotential::new(g, params, KernelQuadrature::Spectral),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ModelParams::new(2, 1.0, 0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn zero_field_split_has_zero_remainder() {
        let g = make_grid(2, 8.0, 32).unwrap();
        let params = ModelParams::new(2, -1.0, 0.0, 3.0, 2.0).unwrap();
        let split = decomposed_potential(&Field::zeros(g.clone()), &params).unwrap();
        assert!(split.remainder.iter().all(|v| *v == 0.0));
        let m = params.m();
        assert!((m - 1.0 / PI).abs() < 1e-15);
        for (idx, l) in split.linear.iter().enumerate() {
            assert!((l - m * bracket(g.radius(idx)).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn narrow_bump_1d_remainder_matches_point_mass() {
        // Unit-mass narrow Gaussian at y0: remainder -> -(lambda/2)(|x - y0| - |x|).
        let g = make_grid(1, 20.0, 4096).unwrap();
        let (y0, w) = (3.0, 0.05);
        let norm = (1.0 / (PI.sqrt() * w)).sqrt();
        let u = Field::from_fn(g.clone(), |[x, _]| {
            Complex64::new(norm * (-(x - y0).powi(2) / (2.0 * w * w)).exp(), 0.0)
        });
        let lambda = 1.5;
        let params = ModelParams::for_datum(lambda, 0.0, 3.0, &u).unwrap();
        assert!((params.initial_mass - 1.0).abs() < 1e-10);
        let split = decomposed_potential(&u, &params).unwrap();
        for idx in 0..g.len() {
            let x = g.point(idx)[0];
            let point = -0.5 * lambda * ((x - y0).abs() - x.abs());
            let tol = if (x - y0).abs() < 10.0 * w { 0.05 } else { 1e-6 };
            assert!((split.remainder[idx] - point).abs() < tol, "x={x}");
            assert!(split.remainder[idx].abs() <= 0.5 * lambda * (1.0 + y0) + 1e-9);
        }
    }
}
