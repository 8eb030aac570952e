//! Plane-wave Galerkin space and the matrices of the shifted cell operator.
//!
//! With basis functions `e^{2πi k·y}`, `|k|_∞ ≤ K`, the stiffness matrix is
//! `H(θ)_{k,k′} = 4π² (k+θ)ᵀ Â0(k−k′) (k′+θ)` and the mass matrix is
//! `M_{k,k′} = ρ̂0(k−k′)`. Both are assembled exactly for the represented
//! medium; only nonzero Fourier terms are visited.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{BlochError, Result};
use crate::medium::{FourierTable, PeriodicMedium};

/// Hermiticity tolerance relative to the largest entry.
pub const HERMITIAN_TOL: f64 = 1e-13;

const FOUR_PI2: f64 = 4.0 * PI * PI;

/// Quasi-momentum `θ`, normally reduced to `[0,1)^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochParameter {
    theta: Vec<f64>,
}

impl BlochParameter {
    pub fn new(theta: &[f64]) -> Self {
        let theta = theta
            .iter()
            .map(|&t| {
                let r = t.rem_euclid(1.0);
                // rem_euclid can round up to exactly 1 for tiny negative input
                if r >= 1.0 {
                    0.0
                } else {
                    r
                }
            })
            .collect();
        BlochParameter { theta }
    }

    /// Keep `θ` as given. Used for finite-difference stencils, whose points
    /// must not wrap around the zone.
    pub fn unreduced(theta: &[f64]) -> Self {
        BlochParameter {
            theta: theta.to_vec(),
        }
    }

    /// `θ + h e_axis`, unreduced.
    pub fn shifted(&self, axis: usize, h: f64) -> Self {
        let mut theta = self.theta.clone();
        theta[axis] += h;
        BlochParameter { theta }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn dimension(&self) -> usize {
        self.theta.len()
    }

    pub(crate) fn padded(&self) -> [f64; 2] {
        let mut t = [0.0; 2];
        t[..self.theta.len()].copy_from_slice(&self.theta);
        t
    }
}

/// Integer wavevectors `k` with `max_j |k_j| ≤ K`, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveBasis {
    dimension: usize,
    cutoff: usize,
    wavevectors: Vec<[i64; 2]>,
}

impl PlaneWaveBasis {
    pub fn new(dimension: usize, cutoff: usize) -> Result<Self> {
        if dimension == 0 || dimension > 2 {
            return Err(BlochError::InvalidArgument(format!(
                "basis dimension {dimension} not supported"
            )));
        }
        if cutoff == 0 {
            return Err(BlochError::InvalidArgument("basis cutoff must be positive".into()));
        }
        let k = cutoff as i64;
        let wavevectors = if dimension == 1 {
            (-k..=k).map(|a| [a, 0]).collect()
        } else {
            (-k..=k).flat_map(|a| (-k..=k).map(move |b| [a, b])).collect()
        };
        Ok(PlaneWaveBasis {
            dimension,
            cutoff,
            wavevectors,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.wavevectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavevectors.is_empty()
    }

    /// Wavevector of basis function `i`, padded with zeros to two components.
    pub fn wavevector(&self, i: usize) -> [i64; 2] {
        self.wavevectors[i]
    }

    pub fn wavevectors(&self) -> &[[i64; 2]] {
        &self.wavevectors
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let kk = self.cutoff as i64;
        let side = 2 * kk + 1;
        let mut idx = 0i64;
        for &c in &k[..self.dimension] {
            if c.abs() > kk {
                return None;
            }
            idx = idx * side + (c + kk);
        }
        Some(idx as usize)
    }
}

/// Dense Hermitian matrix, symmetrized after assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    data: DMatrix<Complex64>,
    defect: f64,
}

impl HermitianMatrix {
    /// Accept a raw assembled matrix if it is Hermitian within
    /// [`HERMITIAN_TOL`], recording the defect, then symmetrize it.
    pub fn from_raw(mut data: DMatrix<Complex64>) -> Result<Self> {
        let n = data.nrows();
        if data.ncols() != n {
            return Err(BlochError::DimensionMismatch {
                expected: n,
                got: data.ncols(),
            });
        }
        let scale = data.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max).sqrt();
        // tiles keep both (i, j) and (j, i) in cache
        const TILE: usize = 32;
        let mut worst: f64 = 0.0;
        for i0 in (0..n).step_by(TILE) {
            for j0 in (i0..n).step_by(TILE) {
                for j in j0..(j0 + TILE).min(n) {
                    for i in i0..(i0 + TILE).min(n).min(j + 1) {
                        worst = worst.max((data[(i, j)] - data[(j, i)].conj()).norm_sqr());
                    }
                }
            }
        }
        let defect = if scale > 0.0 { worst.sqrt() / scale } else { 0.0 };
        if defect > HERMITIAN_TOL {
            return Err(BlochError::NotHermitian { defect });
        }
        for i0 in (0..n).step_by(TILE) {
            for j0 in (i0..n).step_by(TILE) {
                for j in j0..(j0 + TILE).min(n) {
                    for i in i0..(i0 + TILE).min(n).min(j + 1) {
                        if i == j {
                            data[(i, i)].im = 0.0;
                        } else {
                            let v = (data[(i, j)] + data[(j, i)].conj()) * 0.5;
                            data[(i, j)] = v;
                            data[(j, i)] = v.conj();
                        }
                    }
                }
            }
        }
        Ok(HermitianMatrix { data, defect })
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.data[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    /// Relative Hermiticity defect measured before symmetrization.
    pub fn hermiticity_defect(&self) -> f64 {
        self.defect
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `vᴴ A v`, summed over the support of `v` only.
    pub fn quadratic_form(&self, v: &DVector<Complex64>) -> Complex64 {
        let support: Vec<usize> = (0..v.len()).filter(|&i| v[i] != Complex64::new(0.0, 0.0)).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for &i in &support {
            let mut row = Complex64::new(0.0, 0.0);
            for &j in &support {
                row += self.data[(i, j)] * v[j];
            }
            acc += v[i].conj() * row;
        }
        acc
    }

    /// Plain-text dump: one row per line, entries as `re,im` separated by
    /// spaces.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.size() {
            let row: Vec<String> = (0..self.size())
                .map(|j| {
                    let c = self.data[(i, j)];
                    format!("{:e},{:e}", c.re, c.im)
                })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(input: R) -> Result<Self> {
        let mut rows: Vec<Vec<Complex64>> = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|pair| {
                    let (re, im) = pair
                        .split_once(',')
                        .ok_or_else(|| BlochError::InvalidArgument(format!("bad entry {pair:?}")))?;
                    let parse = |s: &str| {
                        s.parse::<f64>()
                            .map_err(|e| BlochError::InvalidArgument(format!("bad number {s:?}: {e}")))
                    };
                    Ok(Complex64::new(parse(re)?, parse(im)?))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(BlochError::DimensionMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        Self::from_raw(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

/// A medium paired with a basis, with the Fourier terms the assembly needs
/// (`|g_j| ≤ 2K`) cached.
#[derive(Debug, Clone)]
pub struct Discretization<'a> {
    medium: &'a PeriodicMedium,
    basis: PlaneWaveBasis,
    table: FourierTable,
}

impl<'a> Discretization<'a> {
    pub fn new(medium: &'a PeriodicMedium, basis: PlaneWaveBasis) -> Result<Self> {
        if medium.dimension() != basis.dimension() {
            return Err(BlochError::DimensionMismatch {
                expected: medium.dimension(),
                got: basis.dimension(),
            });
        }
        medium.check_cutoff(basis.cutoff())?;
        let table = medium.fourier_table(2 * basis.cutoff());
        Ok(Discretization {
            medium,
            basis,
            table,
        })
    }

    pub fn medium(&self) -> &'a PeriodicMedium {
        self.medium
    }

    pub fn basis(&self) -> &PlaneWaveBasis {
        &self.basis
    }

    pub fn table(&self) -> &FourierTable {
        &self.table
    }

    fn check_theta(&self, theta: &BlochParameter) -> Result<()> {
        if theta.dimension() != self.basis.dimension() {
            return Err(BlochError::DimensionMismatch {
                expected: self.basis.dimension(),
                got: theta.dimension(),
            });
        }
        Ok(())
    }

    /// Visit every `(i, j, Â0(k_i − k_j), k_i+θ, k_j+θ)` with a nonzero
    /// coefficient.
    fn for_each_a_term<F>(&self, theta: &BlochParameter, mut f: F)
    where
        F: FnMut(usize, usize, &crate::medium::CoefBlock, [f64; 2], [f64; 2]),
    {
        let t = theta.padded();
        for (i, k) in self.basis.wavevectors().iter().enumerate() {
            let q = [k[0] as f64 + t[0], k[1] as f64 + t[1]];
            for (g, block) in &self.table.a_terms {
                let kp = [k[0] - g[0], k[1] - g[1]];
                if let Some(j) = self.basis.index_of(&kp) {
                    let qp = [kp[0] as f64 + t[0], kp[1] as f64 + t[1]];
                    f(i, j, block, q, qp);
                }
            }
        }
    }

    pub fn stiffness(&self, theta: &BlochParameter) -> Result<HermitianMatrix> {
        self.check_theta(theta)?;
        let n = self.basis.len();
        let d = self.basis.dimension();
        let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        self.for_each_a_term(theta, |i, j, block, q, qp| {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..d {
                for b in 0..d {
                    acc += block[a][b] * (q[a] * qp[b]);
                }
            }
            h[(i, j)] = acc * FOUR_PI2;
        });
        HermitianMatrix::from_raw(h)
    }

    /// `∂H/∂θ_axis` (axis is 0-based).
    pub fn dstiffness(&self, theta: &BlochParameter, axis: usize) -> Result<HermitianMatrix> {
        self.check_theta(theta)?;
        let d = self.basis.dimension();
        if axis >= d {
            return Err(BlochError::DimensionMismatch {
                expected: d,
                got: axis + 1,
            });
        }
        let n = self.basis.len();
        let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        self.for_each_a_term(theta, |i, j, block, q, qp| {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..d {
                acc += block[axis][b] * qp[b];
                acc += block[b][axis] * q[b];
            }
            h[(i, j)] = acc * FOUR_PI2;
        });
        HermitianMatrix::from_raw(h)
    }

    /// `vᴴ (∂H/∂θ_axis) v` without assembling the matrix.
    pub fn dstiffness_form(&self, theta: &BlochParameter, axis: usize, v: &DVector<Complex64>) -> Result<Complex64> {
        self.check_theta(theta)?;
        let d = self.basis.dimension();
        if axis >= d || v.len() != self.basis.len() {
            return Err(BlochError::DimensionMismatch {
                expected: d,
                got: axis + 1,
            });
        }
        let zero = Complex64::new(0.0, 0.0);
        let t = theta.padded();
        let mut total = zero;
        for (i, k) in self.basis.wavevectors().iter().enumerate() {
            if v[i] == zero {
                continue;
            }
            let q = [k[0] as f64 + t[0], k[1] as f64 + t[1]];
            let mut row = zero;
            for (g, block) in &self.table.a_terms {
                let kp = [k[0] - g[0], k[1] - g[1]];
                let Some(j) = self.basis.index_of(&kp) else {
                    continue;
                };
                if v[j] == zero {
                    continue;
                }
                let qp = [kp[0] as f64 + t[0], kp[1] as f64 + t[1]];
                let mut acc = zero;
                for b in 0..d {
                    acc += block[axis][b] * qp[b];
                    acc += block[b][axis] * q[b];
                }
                row += acc * v[j];
            }
            total += v[i].conj() * row;
        }
        Ok(total * FOUR_PI2)
    }

    pub fn mass(&self) -> Result<HermitianMatrix> {
        let n = self.basis.len();
        let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (i, k) in self.basis.wavevectors().iter().enumerate() {
            for (g, rho) in &self.table.rho_terms {
                let kp = [k[0] - g[0], k[1] - g[1]];
                if let Some(j) = self.basis.index_of(&kp) {
                    m[(i, j)] = *rho;
                }
            }
        }
        HermitianMatrix::from_raw(m)
    }
}

pub fn assemble_stiffness(
    medium: &PeriodicMedium,
    basis: &PlaneWaveBasis,
    theta: &BlochParameter,
) -> Result<HermitianMatrix> {
    Discretization::new(medium, basis.clone())?.stiffness(theta)
}

pub fn assemble_mass(medium: &PeriodicMedium, basis: &PlaneWaveBasis) -> Result<HermitianMatrix> {
    Discretization::new(medium, basis.clone())?.mass()
}

/// `∂H/∂θ_axis` with a 0-based axis.
pub fn assemble_dstiffness(
    medium: &PeriodicMedium,
    basis: &PlaneWaveBasis,
    theta: &BlochParameter,
    axis: usize,
) -> Result<HermitianMatrix> {
    Discretization::new(medium, basis.clone())?.dstiffness(theta, axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{Layer, LayeredOptions};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn theta_is_reduced() {
        assert_eq!(BlochParameter::new(&[1.25, -0.25]).as_slice(), &[0.25, 0.75]);
        assert_eq!(BlochParameter::new(&[-1e-20]).as_slice(), &[0.0]);
        assert_eq!(BlochParameter::unreduced(&[-0.1]).as_slice(), &[-0.1]);
    }

    #[test]
    fn basis_layout() {
        let b = PlaneWaveBasis::new(2, 2).unwrap();
        assert_eq!(b.len(), 25);
        for (i, k) in b.wavevectors().iter().enumerate() {
            assert_eq!(b.index_of(k), Some(i));
        }
        assert!(b.wavevectors().windows(2).all(|w| w[0] < w[1]));
        assert!(b.index_of(&[0, 0]).is_some());
        assert_eq!(b.index_of(&[3, 0]), None);
        assert!(PlaneWaveBasis::new(1, 0).is_err());
    }

    #[test]
    fn homogeneous_stiffness_is_diagonal() {
        let m = PeriodicMedium::homogeneous(1, &[4.0], 1.0).unwrap();
        let b = PlaneWaveBasis::new(1, 1).unwrap();
        let h = assemble_stiffness(&m, &b, &BlochParameter::new(&[0.25])).unwrap();
        let pi2 = PI * PI;
        let expect = [9.0 * pi2, pi2, 25.0 * pi2];
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert!((h.entry(i, i).re - expect[i]).abs() < 1e-12 * expect[i]);
                } else {
                    assert_eq!(h.entry(i, j), c(0.0, 0.0));
                }
            }
        }
        let h0 = assemble_stiffness(&m, &b, &BlochParameter::new(&[0.0])).unwrap();
        assert_eq!(h0.entry(1, 1), c(0.0, 0.0));
    }

    #[test]
    fn layered_offdiagonal_entry() {
        let m = PeriodicMedium::layered(
            &[Layer::new(0.5, 1.0, 1.0), Layer::new(0.5, 4.0, 1.0)],
            LayeredOptions::default(),
        )
        .unwrap();
        let b = PlaneWaveBasis::new(1, 1).unwrap();
        let h = assemble_stiffness(&m, &b, &BlochParameter::new(&[0.25])).unwrap();
        let i = b.index_of(&[0]).unwrap();
        let j = b.index_of(&[1]).unwrap();
        let v = h.entry(i, j);
        assert!(v.re.abs() < 1e-12);
        assert!((v.im + 3.75 * PI).abs() < 1e-12);
    }

    #[test]
    fn mass_matrices() {
        let b = PlaneWaveBasis::new(1, 2).unwrap();
        let m = assemble_mass(&PeriodicMedium::homogeneous(1, &[1.0], 1.0).unwrap(), &b).unwrap();
        assert_eq!(m.matrix(), &DMatrix::identity(5, 5).map(|v: f64| c(v, 0.0)));
        let m = assemble_mass(&PeriodicMedium::homogeneous(1, &[1.0], 4.0).unwrap(), &b).unwrap();
        assert_eq!(m.entry(3, 3), c(4.0, 0.0));

        let med = PeriodicMedium::layered(
            &[Layer::new(0.5, 1.0, 1.0), Layer::new(0.5, 1.0, 2.0)],
            LayeredOptions::default(),
        )
        .unwrap();
        let b = PlaneWaveBasis::new(1, 1).unwrap();
        let m = assemble_mass(&med, &b).unwrap();
        for i in 0..3 {
            assert!((m.entry(i, i) - c(1.5, 0.0)).norm() < 1e-15);
        }
        // M_{k,k+1} = ρ̂0(−1) = ∫ρ e^{2πiy} = −i/π
        let v = m.entry(0, 1);
        assert!((v - c(0.0, -1.0 / PI)).norm() < 1e-15, "{v}");
        let mut q = c(0.0, 0.0);
        let n = 20000;
        for s in 0..n {
            let y = (s as f64 + 0.5) / n as f64;
            q += Complex64::from_polar(1.0, 2.0 * PI * y) * med.evaluate(&[y]).1 / n as f64;
        }
        assert!((q - v).norm() < 1e-8);
    }

    #[test]
    fn dstiffness_examples() {
        let m = PeriodicMedium::homogeneous(1, &[4.0], 1.0).unwrap();
        let b = PlaneWaveBasis::new(1, 1).unwrap();
        let d = assemble_dstiffness(&m, &b, &BlochParameter::new(&[0.25]), 0).unwrap();
        assert!((d.entry(1, 1).re - 8.0 * PI * PI).abs() < 1e-12);
        let d = assemble_dstiffness(&m, &b, &BlochParameter::new(&[0.0]), 0).unwrap();
        assert_eq!(d.entry(1, 1), c(0.0, 0.0));
        assert!(assemble_dstiffness(&m, &b, &BlochParameter::new(&[0.0]), 1).is_err());
    }

    #[test]
    fn non_hermitian_raw_is_rejected() {
        let mut a = DMatrix::from_element(2, 2, c(1.0, 0.0));
        a[(0, 1)] = c(1.0, 1.0);
        assert!(matches!(HermitianMatrix::from_raw(a), Err(BlochError::NotHermitian { .. })));
    }

    #[test]
    fn dump_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.1, -0.3), c(0.1, 0.3), c(1.0 / 3.0, 0.0)]);
        let h = HermitianMatrix::from_raw(a).unwrap();
        let mut buf = Vec::new();
        h.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back = HermitianMatrix::read_dump(&buf[..]).unwrap();
        assert_eq!(back.matrix(), h.matrix());
    }

    #[test]
    fn alias_and_dimension_errors() {
        let m = PeriodicMedium::sampled(vec![8], |y| (vec![2.0 + (2.0 * PI * y[0]).cos()], 1.0)).unwrap();
        assert!(matches!(
            assemble_mass(&m, &PlaneWaveBasis::new(1, 2).unwrap()),
            Err(BlochError::Aliasing { .. })
        ));
        assert!(assemble_mass(&m, &PlaneWaveBasis::new(1, 1).unwrap()).is_ok());
        assert!(matches!(
            assemble_mass(&m, &PlaneWaveBasis::new(2, 1).unwrap()),
            Err(BlochError::DimensionMismatch { .. })
        ));
    }
}
