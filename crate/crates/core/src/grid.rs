//! Uniform truncated-box discretization shared by the 1D and 2D solvers.
//!
//! The box is `[-L, L)^d` with `N` nodes per axis, `x_j = -L + j h`, `h = 2L / N`.
//! Fields are stored row-major (axis 0 outermost). Spectral operations use the
//! periodic DFT on the box; wavenumbers follow the standard FFT ordering
//! `k_j = pi j / L` for `j < N/2` and `k_j = pi (j - N) / L` otherwise.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Transform;

/// Japanese bracket `<r> = (1 + r^2)^{1/2}`.
pub fn bracket(r: f64) -> f64 {
    r.hypot(1.0)
}

#[derive(Clone)]
pub struct Grid {
    dimension: usize,
    half_width: f64,
    n: usize,
    spacing: f64,
    coordinates: Vec<f64>,
    wavenumbers: Vec<f64>,
    transform: Transform,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dimension", &self.dimension)
            .field("half_width", &self.half_width)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension
            && self.n == other.n
            && self.half_width == other.half_width
    }
}

/// Build a grid on `[-L, L)^dimension` with `n` points per axis.
pub fn make_grid(dimension: usize, half_width: f64, n: usize) -> Result<Arc<Grid>> {
    Grid::new(dimension, half_width, n).map(Arc::new)
}

impl Grid {
    pub fn new(dimension: usize, half_width: f64, n: usize) -> Result<Self> {
        if !(dimension == 1 || dimension == 2) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dimension}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half-width must be positive, got {half_width}"
            )));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {n}"
            )));
        }
        let spacing = 2.0 * half_width / n as f64;
        let coordinates = (0..n).map(|j| -half_width + j as f64 * spacing).collect();
        let wavenumbers = (0..n)
            .map(|j| {
                let signed = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                PI * signed / half_width
            })
            .collect();
        Ok(Self {
            dimension,
            half_width,
            n,
            spacing,
            coordinates,
            wavenumbers,
            transform: Transform::new(n, dimension),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.coordinates
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Total number of nodes, `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d` of every node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dimension as i32)
    }

    /// Per-axis indices of flat node `idx`; the second entry is 0 in 1D.
    pub fn axis_indices(&self, idx: usize) -> [usize; 2] {
        match self.dimension {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    /// Position of flat node `idx`; the second component is 0 in 1D.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.axis_indices(idx);
        match self.dimension {
            1 => [self.coordinates[i], 0.0],
            _ => [self.coordinates[i], self.coordinates[j]],
        }
    }

    /// `|x|` at flat node `idx`.
    pub fn radius(&self, idx: usize) -> f64 {
        let [x, y] = self.point(idx);
        x.hypot(y)
    }

    /// Wavevector of flat mode `idx`; the second component is 0 in 1D.
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.axis_indices(idx);
        match self.dimension {
            1 => [self.wavenumbers[i], 0.0],
            _ => [self.wavenumbers[i], self.wavenumbers[j]],
        }
    }

    /// Tabulate a real function of position on the nodes.
    pub fn map_points(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|idx| f(self.point(idx))).collect()
    }

    /// `|k|^2` for every mode, in transform layout.
    pub fn k_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let [a, b] = self.wavevector(idx);
                a * a + b * b
            })
            .collect()
    }

    /// Flat index of the node at the origin (`x_{N/2} = 0` on every axis).
    pub fn origin_index(&self) -> usize {
        let c = self.n / 2;
        match self.dimension {
            1 => c,
            _ => c * self.n + c,
        }
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.transform.forward(data);
    }

    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.transform.inverse(data);
    }
}

/// Complex wavefunction sampled on a grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite { t: f64::NAN });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![Complex64::default(); grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.point(idx))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `|u|^2` at every node.
    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// `a*self + b*other`.
    pub fn lincomb(&self, a: Complex64, other: &Field, b: Complex64) -> Result<Field> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Field {
            grid: self.grid.clone(),
            values,
        })
    }

    /// L2 distance `||self - other||_2` by rectangle quadrature.
    pub fn l2_distance(&self, other: &Field) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum();
        Ok((sum * self.grid.cell_volume()).sqrt())
    }

    /// Unnormalized DFT of the samples.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut data = self.values.clone();
        self.grid.forward(&mut data);
        data
    }

    pub(crate) fn from_spectrum(grid: Arc<Grid>, mut spectrum: Vec<Complex64>) -> Field {
        grid.inverse(&mut spectrum);
        Field {
            grid,
            values: spectrum,
        }
    }
}

/// Per-axis derivatives, each computed as `i k` times the spectrum.
pub fn spectral_gradient(u: &Field) -> Vec<Field> {
    let grid = u.grid();
    let spectrum = u.spectrum();
    (0..grid.dimension())
        .map(|axis| {
            let data = spectrum
                .iter()
                .enumerate()
                .map(|(idx, c)| Complex64::new(0.0, grid.wavevector(idx)[axis]) * c)
                .collect();
            Field::from_spectrum(grid.clone(), data)
        })
        .collect()
}

/// `||u||_2^2 = sum |u|^2 h^d`.
pub fn l2_norm_squared(u: &Field) -> f64 {
    u.values().iter().map(|z| z.norm_sqr()).sum::<f64>() * u.grid().cell_volume()
}

/// `sum |u|^2 w h^d` for a nonnegative weight `w`.
pub fn weighted_l2(u: &Field, weight: &[f64]) -> Result<f64> {
    if weight.len() != u.values().len() {
        return Err(Error::ShapeMismatch {
            expected: u.values().len(),
            actual: weight.len(),
        });
    }
    if let Some(w) = weight.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::param("weight", format!("must be nonnegative, found {w}")));
    }
    Ok(u.values()
        .iter()
        .zip(weight)
        .map(|(z, w)| z.norm_sqr() * w)
        .sum::<f64>()
        * u.grid().cell_volume())
}

/// `||u||_2^2` evaluated on the spectrum (Parseval).
pub fn fourier_l2_norm_squared(u: &Field) -> f64 {
    let grid = u.grid();
    let sum: f64 = u.spectrum().iter().map(|c| c.norm_sqr()).sum();
    sum * grid.cell_volume() / grid.len() as f64
}

/// `||grad u||_2^2` in Parseval form `sum |k|^2 |u_hat|^2`, scaled to the continuum norm.
pub fn grad_norm_squared(u: &Field) -> f64 {
    let grid = u.grid();
    let sum: f64 = u
        .spectrum()
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let [a, b] = grid.wavevector(idx);
            (a * a + b * b) * c.norm_sqr()
        })
        .sum();
    sum * grid.cell_volume() / grid.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(grid: &Arc<Grid>) -> Field {
        Field::from_fn(grid.clone(), |[x, y]| {
            Complex64::new((-(x * x + y * y) / 2.0).exp(), 0.0)
        })
    }

    #[test]
    fn make_grid_spacing_and_origin() {
        let g = make_grid(1, 8.0, 16).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.coordinates()[0], -8.0);
        assert_eq!(g.spacing() * g.points_per_axis() as f64, 2.0 * g.half_width());
        assert_eq!(g.coordinates()[g.origin_index()], 0.0);
    }

    #[test]
    fn make_grid_2d_wavenumber_range() {
        let g = make_grid(2, 16.0, 64).unwrap();
        assert_eq!(g.spacing(), 0.5);
        let kmax = g.wavenumbers().iter().fold(0.0f64, |m, k| m.max(k.abs()));
        assert!((kmax - 2.0 * PI).abs() < 1e-14);
        let n = g.points_per_axis();
        for j in 1..n / 2 {
            assert_eq!(g.wavenumbers()[n - j], -g.wavenumbers()[j]);
        }
        for (j, x) in g.coordinates().iter().enumerate() {
            assert_eq!(*x, -16.0 + j as f64 * 0.5);
        }
    }

    #[test]
    fn make_grid_rejects_bad_input() {
        assert!(make_grid(1, 8.0, 15).is_err());
        assert!(make_grid(1, 8.0, 6).is_err());
        assert!(make_grid(1, 0.0, 16).is_err());
        assert!(make_grid(1, -1.0, 16).is_err());
        assert!(make_grid(3, 1.0, 16).is_err());
    }

    #[test]
    fn field_rejects_wrong_shape_and_nan() {
        let g = make_grid(1, 8.0, 16).unwrap();
        assert!(Field::new(g.clone(), vec![Complex64::default(); 15]).is_err());
        let mut v = vec![Complex64::default(); 16];
        v[3] = Complex64::new(f64::NAN, 0.0);
        assert!(Field::new(g, v).is_err());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = make_grid(2, 4.0, 16).unwrap();
        let u = Field::from_fn(g, |_| Complex64::new(2.5, -1.0));
        for d in spectral_gradient(&u) {
            assert!(d.values().iter().all(|z| z.norm() < 1e-13));
        }
    }

    #[test]
    fn gradient_of_plane_wave_is_exact() {
        let g = make_grid(1, 8.0, 64).unwrap();
        let k0 = g.wavenumbers()[5];
        let u = Field::from_fn(g, |[x, _]| Complex64::new(0.0, k0 * x).exp());
        let du = &spectral_gradient(&u)[0];
        for (d, z) in du.values().iter().zip(u.values()) {
            assert!((d - Complex64::new(0.0, k0) * z).norm() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_gaussian_matches_analytic() {
        let g = make_grid(1, 12.0, 256).unwrap();
        let u = gaussian(&g);
        let du = &spectral_gradient(&u)[0];
        let worst = (0..g.len())
            .map(|i| {
                let x = g.point(i)[0];
                (du.values()[i] - (-x * u.values()[i])).norm()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "max deviation {worst}");
    }

    #[test]
    fn gaussian_l2_norm_2d() {
        let g = make_grid(2, 12.0, 256).unwrap();
        let u = gaussian(&g);
        let rel = (l2_norm_squared(&u) - PI).abs() / PI;
        assert!(rel < 1e-8, "relative error {rel}");
    }

    #[test]
    fn quadrature_of_ones_and_zero() {
        let g = make_grid(1, 8.0, 16).unwrap();
        let ones = Field::from_fn(g.clone(), |_| Complex64::new(1.0, 0.0));
        assert_eq!(l2_norm_squared(&ones), 16.0);
        assert_eq!(weighted_l2(&ones, &vec![1.0; 16]).unwrap(), 16.0);
        assert_eq!(l2_norm_squared(&Field::zeros(g)), 0.0);
    }

    #[test]
    fn weighted_l2_rejects_bad_weights() {
        let g = make_grid(1, 8.0, 16).unwrap();
        let u = gaussian(&g);
        assert!(matches!(
            weighted_l2(&u, &[1.0; 8]),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut w = vec![1.0; 16];
        w[2] = -0.5;
        assert!(weighted_l2(&u, &w).is_err());
    }

    #[test]
    fn gaussian_gradient_norm_2d() {
        // ||grad e^{-|x|^2/2}||^2 = pi in 2D
        let g = make_grid(2, 12.0, 128).unwrap();
        let u = gaussian(&g);
        assert!((grad_norm_squared(&u) - PI).abs() / PI < 1e-10);
        let direct: f64 = spectral_gradient(&u).iter().map(l2_norm_squared).sum();
        assert!((direct - grad_norm_squared(&u)).abs() < 1e-10);
    }

    fn random_field(dim: usize, seed: &[f64]) -> Field {
        let g = make_grid(dim, 3.0, 16).unwrap();
        let n = g.len();
        let values = (0..n)
            .map(|i| Complex64::new(seed[i % seed.len()] * (i as f64).sin(), seed[(i * 7) % seed.len()]))
            .collect();
        Field::new(g, values).unwrap()
    }

    proptest! {
        #[test]
        fn parseval_holds(dim in 1usize..=2, seed in prop::collection::vec(-3.0f64..3.0, 17)) {
            let u = random_field(dim, &seed);
            let a = l2_norm_squared(&u);
            let b = fourier_l2_norm_squared(&u);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }

        #[test]
        fn gradient_is_linear(
            seed in prop::collection::vec(-2.0f64..2.0, 11),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let u = random_field(2, &seed);
            let v = random_field(2, &seed.iter().rev().cloned().collect::<Vec<_>>());
            let (ca, cb) = (Complex64::new(a, 0.0), Complex64::new(0.0, b));
            let lhs = spectral_gradient(&u.lincomb(ca, &v, cb).unwrap());
            let (gu, gv) = (spectral_gradient(&u), spectral_gradient(&v));
            for axis in 0..2 {
                let rhs = gu[axis].lincomb(ca, &gv[axis], cb).unwrap();
                let scale = l2_norm_squared(&rhs).sqrt().max(1.0);
                prop_assert!(lhs[axis].l2_distance(&rhs).unwrap() <= 1e-12 * scale);
            }
        }

        #[test]
        fn weighted_l2_is_monotone(
            seed in prop::collection::vec(-2.0f64..2.0, 13),
            w1 in prop::collection::vec(0.0f64..5.0, 16),
            bump in prop::collection::vec(0.0f64..5.0, 16),
        ) {
            let u = random_field(1, &seed);
            let w2: Vec<f64> = w1.iter().zip(&bump).map(|(a, b)| a + b).collect();
            prop_assert!(weighted_l2(&u, &w1).unwrap() <= weighted_l2(&u, &w2).unwrap());
        }
    }
}
