//! Periodic coefficient fields `A0(y)` (symmetric matrix) and `ρ0(y)` (scalar)
//! on the unit torus, their Fourier coefficients, and characteristic speeds.
//!
//! Three representations are supported:
//!
//! * homogeneous media, with a single nonzero Fourier coefficient;
//! * 1D layered (piecewise-constant) media whose coefficients come from the
//!   closed-form step integrals, or from the sample DFT when `exact_steps` is
//!   off;
//! * sampled grids, identified with their band-limited trigonometric
//!   interpolant.

mod file;
pub(crate) mod fourier;

use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{BlochError, Result};
pub use file::{MatrixEntry, MediumDescriptor};

pub const MAX_DIMENSION: usize = 2;

/// Refinement factor of the grid on which interpolants are certified.
pub const REFINEMENT: usize = 4;

/// Default sample count for layered media.
pub const DEFAULT_LAYERED_GRID: usize = 256;

/// Coefficients below this fraction of the largest one are exact zeros.
const FLUSH_RELATIVE: f64 = 1e-14;

/// `N×N` complex coefficient block, padded to 2×2.
pub type CoefBlock = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Layer {
    pub width: f64,
    pub a: f64,
    pub rho: f64,
}

impl Layer {
    pub fn new(width: f64, a: f64, rho: f64) -> Self {
        Layer { width, a, rho }
    }

    pub fn speed(&self) -> f64 {
        (self.a / self.rho).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayeredOptions {
    pub exact_steps: bool,
    pub grid: usize,
}

impl Default for LayeredOptions {
    fn default() -> Self {
        LayeredOptions {
            exact_steps: true,
            grid: DEFAULT_LAYERED_GRID,
        }
    }
}

/// Maximal characteristic speed together with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedBound {
    pub c_max: f64,
    /// Refined evaluation grid, or `None` when the value is exact.
    pub resolution: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
enum Coefficients {
    Homogeneous {
        a: [[f64; 2]; 2],
        rho: f64,
    },
    Layered {
        layers: Vec<Layer>,
        starts: Vec<f64>,
    },
    Sampled {
        /// DFT per matrix component, indexed `[i][j]` for `i ≤ j`.
        a_dft: Vec<Vec<Vec<Complex64>>>,
        rho_dft: Vec<Complex64>,
    },
}

#[derive(Debug, Clone)]
pub struct PeriodicMedium {
    dimension: usize,
    grid_shape: Vec<usize>,
    a_samples: Vec<f64>,
    rho_samples: Vec<f64>,
    coercivity: f64,
    rho_min: f64,
    coefficients: Coefficients,
    speed: SpeedBound,
    descriptor: MediumDescriptor,
}

/// Extreme eigenvalues of a symmetric `n×n` (n ≤ 2) row-major matrix.
pub(crate) fn sym_eig_extremes(a: &[f64], n: usize) -> (f64, f64) {
    if n == 1 {
        return (a[0], a[0]);
    }
    let mean = 0.5 * (a[0] + a[3]);
    let half = 0.5 * (a[0] - a[3]);
    let r = half.hypot(a[1]);
    (mean - r, mean + r)
}

fn check_dimension(dimension: usize) -> Result<()> {
    if dimension == 0 || dimension > MAX_DIMENSION {
        return Err(BlochError::InvalidMedium(format!(
            "dimension {dimension} not supported (1 or 2)"
        )));
    }
    Ok(())
}

fn check_point(a: &[f64], rho: f64, n: usize) -> std::result::Result<f64, String> {
    if a.iter().any(|v| !v.is_finite()) || !rho.is_finite() {
        return Err("non-finite coefficient".into());
    }
    for i in 0..n {
        for j in 0..i {
            if a[i * n + j] != a[j * n + i] {
                return Err(format!(
                    "A0 not symmetric: entry ({i},{j}) = {} vs ({j},{i}) = {}",
                    a[i * n + j],
                    a[j * n + i]
                ));
            }
        }
    }
    let (lo, _) = sym_eig_extremes(a, n);
    if lo <= 0.0 {
        return Err(format!("A0 not positive definite (smallest eigenvalue {lo:e})"));
    }
    if rho <= 0.0 {
        return Err(format!("non-positive density {rho:e}"));
    }
    Ok(lo)
}

fn flush(values: &mut [Complex64]) {
    let max = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for v in values.iter_mut() {
        if v.norm() <= FLUSH_RELATIVE * max {
            *v = ZERO;
        }
    }
}

impl PeriodicMedium {
    /// Constant-coefficient medium; `a_matrix` is `N×N` row-major.
    pub fn homogeneous(dimension: usize, a_matrix: &[f64], rho: f64) -> Result<Self> {
        check_dimension(dimension)?;
        if a_matrix.len() != dimension * dimension {
            return Err(BlochError::DimensionMismatch {
                expected: dimension * dimension,
                got: a_matrix.len(),
            });
        }
        let alpha = check_point(a_matrix, rho, dimension).map_err(BlochError::InvalidMedium)?;
        let mut a = [[0.0; 2]; 2];
        for i in 0..dimension {
            for j in 0..dimension {
                a[i][j] = a_matrix[i * dimension + j];
            }
        }
        let grid_shape = vec![2; dimension];
        let points: usize = grid_shape.iter().product();
        let (_, hi) = sym_eig_extremes(a_matrix, dimension);
        let descriptor = MediumDescriptor::Homogeneous {
            dimension,
            a: MatrixEntry::from_flat(a_matrix),
            rho,
        };
        Ok(PeriodicMedium {
            dimension,
            a_samples: a_matrix.repeat(points),
            rho_samples: vec![rho; points],
            grid_shape,
            coercivity: alpha,
            rho_min: rho,
            coefficients: Coefficients::Homogeneous { a, rho },
            speed: SpeedBound {
                c_max: (hi / rho).sqrt(),
                resolution: None,
            },
            descriptor,
        })
    }

    /// Isotropic constant medium `A0 = a·I`.
    pub fn isotropic(dimension: usize, a: f64, rho: f64) -> Result<Self> {
        let mut m = vec![0.0; dimension * dimension];
        for i in 0..dimension {
            m[i * dimension + i] = a;
        }
        Self::homogeneous(dimension, &m, rho)
    }

    /// 1D piecewise-constant medium, layers laid out from `y = 0`.
    pub fn layered(layers: &[Layer], options: LayeredOptions) -> Result<Self> {
        if layers.is_empty() {
            return Err(BlochError::InvalidMedium("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if !(l.width > 0.0) || !l.width.is_finite() {
                return Err(BlochError::InvalidMedium(format!(
                    "layer {i}: non-positive width {}",
                    l.width
                )));
            }
            if !(l.a > 0.0 && l.rho > 0.0) || !l.a.is_finite() || !l.rho.is_finite() {
                return Err(BlochError::InvalidMedium(format!(
                    "layer {i}: non-positive phase values (a = {}, rho = {})",
                    l.a, l.rho
                )));
            }
        }
        let total: f64 = layers.iter().map(|l| l.width).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(BlochError::InvalidMedium(format!(
                "layer widths sum to {total}, not 1"
            )));
        }
        let m = options.grid;
        if m == 0 || m % 2 != 0 {
            return Err(BlochError::InvalidMedium(format!(
                "grid size {m} must be a positive even integer"
            )));
        }
        let mut starts = Vec::with_capacity(layers.len());
        let mut acc = 0.0;
        for l in layers {
            starts.push(acc);
            acc += l.width;
        }
        let phase_at = |y: f64| -> usize { starts.iter().rposition(|&s| s <= y).unwrap_or(0) };
        let mut a_samples = Vec::with_capacity(m);
        let mut rho_samples = Vec::with_capacity(m);
        for i in 0..m {
            let l = &layers[phase_at(i as f64 / m as f64)];
            a_samples.push(l.a);
            rho_samples.push(l.rho);
        }
        let descriptor = MediumDescriptor::Layered {
            layers: layers.to_vec(),
            exact_steps: options.exact_steps,
            grid: Some(m),
        };
        if !options.exact_steps {
            let mut medium = Self::from_grid(1, vec![m], a_samples, rho_samples)?;
            medium.descriptor = descriptor;
            return Ok(medium);
        }
        let coercivity = layers.iter().map(|l| l.a).fold(f64::INFINITY, f64::min);
        let rho_min = layers.iter().map(|l| l.rho).fold(f64::INFINITY, f64::min);
        let c_max = layers.iter().map(Layer::speed).fold(0.0, f64::max);
        Ok(PeriodicMedium {
            dimension: 1,
            grid_shape: vec![m],
            a_samples,
            rho_samples,
            coercivity,
            rho_min,
            coefficients: Coefficients::Layered {
                layers: layers.to_vec(),
                starts,
            },
            speed: SpeedBound {
                c_max,
                resolution: None,
            },
            descriptor,
        })
    }

    /// Medium given by samples on a uniform grid `y_i = i/m` (row-major,
    /// first axis slowest). `a_samples` holds one row-major `N×N` matrix per
    /// point.
    pub fn from_grid(
        dimension: usize,
        grid_shape: Vec<usize>,
        a_samples: Vec<f64>,
        rho_samples: Vec<f64>,
    ) -> Result<Self> {
        check_dimension(dimension)?;
        if grid_shape.len() != dimension {
            return Err(BlochError::DimensionMismatch {
                expected: dimension,
                got: grid_shape.len(),
            });
        }
        if let Some(&m) = grid_shape.iter().find(|&&m| m == 0 || m % 2 != 0) {
            return Err(BlochError::InvalidMedium(format!(
                "grid size {m} must be a positive even integer"
            )));
        }
        let points: usize = grid_shape.iter().product();
        let nn = dimension * dimension;
        if a_samples.len() != points * nn {
            return Err(BlochError::DimensionMismatch {
                expected: points * nn,
                got: a_samples.len(),
            });
        }
        if rho_samples.len() != points {
            return Err(BlochError::DimensionMismatch {
                expected: points,
                got: rho_samples.len(),
            });
        }
        for p in 0..points {
            check_point(&a_samples[p * nn..(p + 1) * nn], rho_samples[p], dimension)
                .map_err(|reason| BlochError::InvalidSample { index: p, reason })?;
        }

        // Certify on the refined grid: the interpolant may undershoot.
        let component = |i: usize, j: usize| -> Vec<f64> {
            (0..points).map(|p| a_samples[p * nn + i * dimension + j]).collect()
        };
        let fine_shape: Vec<usize> = grid_shape.iter().map(|m| m * REFINEMENT).collect();
        let fine_points: usize = fine_shape.iter().product();
        let mut fine_a = vec![vec![Vec::new(); dimension]; dimension];
        for i in 0..dimension {
            for j in i..dimension {
                fine_a[i][j] = fourier::refine(&component(i, j), &grid_shape, REFINEMENT);
            }
        }
        let fine_rho = fourier::refine(&rho_samples, &grid_shape, REFINEMENT);
        let mut coercivity = f64::INFINITY;
        let mut rho_min = f64::INFINITY;
        let mut c_max: f64 = 0.0;
        let mut local = vec![0.0; nn];
        for q in 0..fine_points {
            for i in 0..dimension {
                for j in i..dimension {
                    local[i * dimension + j] = fine_a[i][j][q];
                    local[j * dimension + i] = fine_a[i][j][q];
                }
            }
            let (lo, hi) = sym_eig_extremes(&local, dimension);
            let rho = fine_rho[q];
            if lo <= 0.0 || rho <= 0.0 {
                return Err(BlochError::InvalidMedium(format!(
                    "interpolant loses positivity at refined point {q} of grid {fine_shape:?} \
                     (min eig A0 = {lo:e}, rho = {rho:e})"
                )));
            }
            coercivity = coercivity.min(lo);
            rho_min = rho_min.min(rho);
            c_max = c_max.max((hi / rho).sqrt());
        }

        let mut a_dft = vec![vec![Vec::new(); dimension]; dimension];
        for i in 0..dimension {
            for j in i..dimension {
                let mut d = fourier::forward(&component(i, j), &grid_shape);
                flush(&mut d);
                a_dft[i][j] = d;
            }
        }
        let mut rho_dft = fourier::forward(&rho_samples, &grid_shape);
        flush(&mut rho_dft);

        let descriptor = MediumDescriptor::Grid {
            dimension,
            grid: grid_shape.clone(),
            a: (0..points)
                .map(|p| MatrixEntry::from_flat(&a_samples[p * nn..(p + 1) * nn]))
                .collect(),
            rho: rho_samples.clone(),
        };
        Ok(PeriodicMedium {
            dimension,
            grid_shape,
            a_samples,
            rho_samples,
            coercivity,
            rho_min,
            coefficients: Coefficients::Sampled { a_dft, rho_dft },
            speed: SpeedBound {
                c_max,
                resolution: Some(fine_shape),
            },
            descriptor,
        })
    }

    /// Sample `field(y) -> (A0(y) row-major, ρ0(y))` at `y_i = i/m`.
    pub fn sampled<F>(grid_shape: Vec<usize>, field: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> (Vec<f64>, f64),
    {
        let dimension = grid_shape.len();
        check_dimension(dimension)?;
        let hi: Vec<i64> = grid_shape.iter().map(|&m| m as i64 - 1).collect();
        let mut a = Vec::new();
        let mut rho = Vec::new();
        for idx in fourier::box_points(&vec![0; dimension], &hi) {
            let y: Vec<f64> = idx
                .iter()
                .zip(&grid_shape)
                .map(|(&i, &m)| i as f64 / m as f64)
                .collect();
            let (av, r) = field(&y);
            a.extend(av);
            rho.push(r);
        }
        Self::from_grid(dimension, grid_shape, a, rho)
    }

    pub fn from_descriptor(descriptor: &MediumDescriptor) -> Result<Self> {
        match descriptor {
            MediumDescriptor::Homogeneous { dimension, a, rho } => {
                Self::homogeneous(*dimension, &a.flat(), *rho)
            }
            MediumDescriptor::Layered {
                layers,
                exact_steps,
                grid,
            } => Self::layered(
                layers,
                LayeredOptions {
                    exact_steps: *exact_steps,
                    grid: grid.unwrap_or(DEFAULT_LAYERED_GRID),
                },
            ),
            MediumDescriptor::Grid {
                dimension,
                grid,
                a,
                rho,
            } => {
                let nn = dimension * dimension;
                let mut flat = Vec::with_capacity(a.len() * nn);
                for (p, entry) in a.iter().enumerate() {
                    let v = entry.flat();
                    if v.len() != nn {
                        return Err(BlochError::InvalidSample {
                            index: p,
                            reason: format!("expected {nn} matrix entries, got {}", v.len()),
                        });
                    }
                    flat.extend(v);
                }
                Self::from_grid(*dimension, grid.clone(), flat, rho.clone())
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let descriptor: MediumDescriptor = serde_json::from_str(text)?;
        Self::from_descriptor(&descriptor)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn grid_shape(&self) -> &[usize] {
        &self.grid_shape
    }

    pub fn descriptor(&self) -> &MediumDescriptor {
        &self.descriptor
    }

    /// SHA-256 of the canonical JSON descriptor, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.descriptor).expect("descriptor serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Recorded lower bound α of the smallest eigenvalue of `A0`.
    pub fn coercivity(&self) -> f64 {
        self.coercivity
    }

    pub fn rho_min(&self) -> f64 {
        self.rho_min
    }

    /// Layer description for 1D piecewise-constant media (homogeneous 1D
    /// media count as one layer).
    pub fn layers(&self) -> Option<Vec<Layer>> {
        match (&self.coefficients, self.dimension) {
            (Coefficients::Layered { layers, .. }, _) => Some(layers.clone()),
            (Coefficients::Homogeneous { a, rho }, 1) => Some(vec![Layer::new(1.0, a[0][0], *rho)]),
            (Coefficients::Sampled { .. }, _) => match &self.descriptor {
                MediumDescriptor::Layered { layers, .. } => Some(layers.clone()),
                _ => None,
            },
            _ => None,
        }
    }

    /// Coefficients are band-limited by the sample grid (and so subject to
    /// the alias condition).
    pub fn is_band_limited(&self) -> bool {
        matches!(self.coefficients, Coefficients::Sampled { .. })
    }

    /// Every coefficient `g = k − k′` needed by a basis of cutoff `K` must be
    /// alias-free: `m_j ≥ 4K + 2`.
    pub fn check_cutoff(&self, cutoff: usize) -> Result<()> {
        if !self.is_band_limited() {
            return Ok(());
        }
        let required = 4 * cutoff + 2;
        for (axis, &m) in self.grid_shape.iter().enumerate() {
            if m < required {
                return Err(BlochError::Aliasing {
                    axis,
                    grid: m,
                    cutoff,
                    required,
                });
            }
        }
        Ok(())
    }

    fn layered_hat(layers: &[Layer], starts: &[f64], g: i64, value: impl Fn(&Layer) -> f64) -> Complex64 {
        if g == 0 {
            return Complex64::new(layers.iter().map(|l| value(l) * l.width).sum(), 0.0);
        }
        let w = -2.0 * std::f64::consts::PI * g as f64;
        let mut acc = ZERO;
        let mut scale: f64 = 0.0;
        for (l, &s) in layers.iter().zip(starts) {
            let e = s + l.width;
            // ∫_s^e e^{-2πigy} dy = (e^{-2πig e} − e^{-2πig s}) / (−2πig)
            let diff = Complex64::from_polar(1.0, w * e) - Complex64::from_polar(1.0, w * s);
            acc += diff * value(l);
            scale = scale.max(value(l).abs());
        }
        let v = acc / Complex64::new(0.0, w);
        if v.norm() <= FLUSH_RELATIVE * scale {
            ZERO
        } else {
            v
        }
    }

    /// `Â0(g) = ∫ A0(y) e^{-2πi g·y} dy` as a padded block.
    pub fn a_hat_block(&self, g: &[i64]) -> CoefBlock {
        let mut out = [[ZERO; 2]; 2];
        match &self.coefficients {
            Coefficients::Homogeneous { a, .. } => {
                if g.iter().all(|&v| v == 0) {
                    for i in 0..self.dimension {
                        for j in 0..self.dimension {
                            out[i][j] = Complex64::new(a[i][j], 0.0);
                        }
                    }
                }
            }
            Coefficients::Layered { layers, starts } => {
                out[0][0] = Self::layered_hat(layers, starts, g[0], |l| l.a);
            }
            Coefficients::Sampled { a_dft, .. } => {
                for i in 0..self.dimension {
                    for j in i..self.dimension {
                        let c = fourier::coefficient(&a_dft[i][j], &self.grid_shape, g);
                        out[i][j] = c;
                        out[j][i] = c;
                    }
                }
            }
        }
        out
    }

    /// `Â0(g)` as a row-major `N×N` matrix.
    pub fn a_hat(&self, g: &[i64]) -> Vec<Complex64> {
        let block = self.a_hat_block(g);
        let n = self.dimension;
        (0..n * n).map(|p| block[p / n][p % n]).collect()
    }

    /// `ρ̂0(g) = ∫ ρ0(y) e^{-2πi g·y} dy`.
    pub fn rho_hat(&self, g: &[i64]) -> Complex64 {
        match &self.coefficients {
            Coefficients::Homogeneous { rho, .. } => {
                if g.iter().all(|&v| v == 0) {
                    Complex64::new(*rho, 0.0)
                } else {
                    ZERO
                }
            }
            Coefficients::Layered { layers, starts } => {
                Self::layered_hat(layers, starts, g[0], |l| l.rho)
            }
            Coefficients::Sampled { rho_dft, .. } => {
                fourier::coefficient(rho_dft, &self.grid_shape, g)
            }
        }
    }

    /// Nonzero Fourier coefficients in the cube `|g_j| ≤ radius`.
    pub fn fourier_table(&self, radius: usize) -> FourierTable {
        let r = radius as i64;
        let lo = vec![-r; self.dimension];
        let hi = vec![r; self.dimension];
        let mut a_terms = Vec::new();
        let mut rho_terms = Vec::new();
        for g in fourier::box_points(&lo, &hi) {
            let mut gg = [0i64; 2];
            gg[..g.len()].copy_from_slice(&g);
            let block = self.a_hat_block(&g);
            if block.iter().flatten().any(|c| *c != ZERO) {
                a_terms.push((gg, block));
            }
            let rho = self.rho_hat(&g);
            if rho != ZERO {
                rho_terms.push((gg, rho));
            }
        }
        FourierTable {
            radius,
            a_terms,
            rho_terms,
        }
    }

    /// Pointwise coefficients `(A0(y), ρ0(y))` of the represented medium.
    pub fn evaluate(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let n = self.dimension;
        match &self.coefficients {
            Coefficients::Homogeneous { a, rho } => {
                ((0..n * n).map(|p| a[p / n][p % n]).collect(), *rho)
            }
            Coefficients::Layered { layers, starts } => {
                let t = y[0].rem_euclid(1.0);
                let l = &layers[starts.iter().rposition(|&s| s <= t).unwrap_or(0)];
                (vec![l.a], l.rho)
            }
            Coefficients::Sampled { .. } => {
                let lo: Vec<i64> = self.grid_shape.iter().map(|&m| -(m as i64) / 2).collect();
                let hi: Vec<i64> = self.grid_shape.iter().map(|&m| (m as i64) / 2).collect();
                let mut a = vec![ZERO; n * n];
                let mut rho = ZERO;
                for g in fourier::box_points(&lo, &hi) {
                    let phase: f64 = g.iter().zip(y).map(|(&gj, &yj)| gj as f64 * yj).sum();
                    let e = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase);
                    let block = self.a_hat_block(&g);
                    for p in 0..n * n {
                        a[p] += block[p / n][p % n] * e;
                    }
                    rho += self.rho_hat(&g) * e;
                }
                (a.into_iter().map(|c| c.re).collect(), rho.re)
            }
        }
    }

    pub fn sample_count(&self) -> usize {
        self.rho_samples.len()
    }

    /// `(A0, ρ0)` at a grid point given by its multi-index.
    pub fn sample(&self, point: &[usize]) -> Result<(&[f64], f64)> {
        if point.len() != self.dimension {
            return Err(BlochError::DimensionMismatch {
                expected: self.dimension,
                got: point.len(),
            });
        }
        let mut flat = 0;
        for (axis, (&i, &m)) in point.iter().zip(&self.grid_shape).enumerate() {
            if i >= m {
                return Err(BlochError::InvalidArgument(format!(
                    "grid index {i} out of range {m} on axis {axis}"
                )));
            }
            flat = flat * m + i;
        }
        let nn = self.dimension * self.dimension;
        Ok((&self.a_samples[flat * nn..(flat + 1) * nn], self.rho_samples[flat]))
    }

    /// `c(y) = max_j √λ_j(y)` over the roots of `det(A0(y) − λ ρ0(y) I)`.
    pub fn local_speed(&self, point: &[usize]) -> Result<f64> {
        let (a, rho) = self.sample(point)?;
        let (_, hi) = sym_eig_extremes(a, self.dimension);
        Ok((hi / rho).sqrt())
    }

    pub fn max_speed(&self) -> f64 {
        self.speed.c_max
    }

    pub fn speed_bound(&self) -> &SpeedBound {
        &self.speed
    }
}

/// Nonzero Fourier coefficients of a medium over a cube of frequencies.
#[derive(Debug, Clone)]
pub struct FourierTable {
    pub radius: usize,
    pub a_terms: Vec<([i64; 2], CoefBlock)>,
    pub rho_terms: Vec<([i64; 2], Complex64)>,
}
