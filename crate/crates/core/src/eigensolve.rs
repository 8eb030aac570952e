//! Generalized Hermitian eigenproblem `H v = λ M v`.
//!
//! `M` is Cholesky-factored, the problem reduced to `L⁻¹ H L⁻ᴴ w = λ w` and
//! handed to a dense Hermitian eigendecomposition. When `H` and `M` share a
//! block-diagonal sparsity pattern (e.g. media that do not vary along one
//! axis), each block is solved on its own; the union of the block spectra is
//! the spectrum of the full pencil.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{BlochError, Result};
use crate::planewave::HermitianMatrix;

/// Residual bound `‖Hv − λMv‖ / ‖H‖` every returned pair must satisfy.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Negative eigenvalues down to `−NEGATIVE_SLACK·‖H‖` are clamped to zero.
pub const NEGATIVE_SLACK: f64 = 1e-10;

pub const DEFAULT_GAP_TOL: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Ascending eigenpairs of the cell problem at one quasi-momentum.
#[derive(Debug, Clone)]
pub struct Spectrum {
    theta: Vec<f64>,
    size: usize,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<DVector<Complex64>>,
    residuals: Vec<f64>,
    clamped: Vec<bool>,
}

impl Spectrum {
    pub fn with_theta(mut self, theta: &[f64]) -> Self {
        self.theta = theta.to_vec();
        self
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Order of the full discrete problem.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of computed pairs.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, n: usize) -> f64 {
        self.eigenvalues[n]
    }

    pub fn eigenvector(&self, n: usize) -> &DVector<Complex64> {
        &self.eigenvectors[n]
    }

    pub fn eigenvector_mut(&mut self, n: usize) -> &mut DVector<Complex64> {
        &mut self.eigenvectors[n]
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Whether eigenvalue `n` was a tiny negative clamped to zero.
    pub fn clamped(&self, n: usize) -> bool {
        self.clamped[n]
    }

    /// Largest `|v_iᴴ M v_j − δ_ij|` over the computed pairs.
    // refinement can reorder eigenvalues that agree to rounding
    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.eigenvalues[a].total_cmp(&self.eigenvalues[b]));
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return;
        }
        self.eigenvalues = order.iter().map(|&i| self.eigenvalues[i]).collect();
        self.eigenvectors = order.iter().map(|&i| self.eigenvectors[i].clone()).collect();
        self.residuals = order.iter().map(|&i| self.residuals[i]).collect();
        self.clamped = order.iter().map(|&i| self.clamped[i]).collect();
    }

    pub fn orthonormality_defect(&self, mass: &HermitianMatrix) -> f64 {
        let mv: Vec<DVector<Complex64>> = self.eigenvectors.iter().map(|v| mass.matrix() * v).collect();
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for (j, mvj) in mv.iter().enumerate() {
                let ip = self.eigenvectors[i].dotc(mvj);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).norm());
            }
        }
        worst
    }
}

/// Spectral-gap test for the simplicity of a band.
#[derive(Debug, Clone, Copy)]
pub struct SimplicityTest {
    pub gap_tol: f64,
    /// Scale guarding the gap near `λ = 0`, normally `(2π c_max)²`.
    pub lambda_scale: f64,
}

impl SimplicityTest {
    pub fn new(gap_tol: f64, c_max: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI * c_max;
        SimplicityTest {
            gap_tol,
            lambda_scale: w * w,
        }
    }

    /// Smallest neighbouring gap of band `n` (0-based) divided by
    /// `max(λ_n, λ_scale)`.
    pub fn relative_gap(&self, spectrum: &Spectrum, n: usize) -> Result<f64> {
        let count = spectrum.len();
        if n >= count || (n + 1 >= count && n + 1 < spectrum.size()) {
            return Err(BlochError::InsufficientBands {
                band: n + 1,
                computed: count,
            });
        }
        let ev = spectrum.eigenvalues();
        let mut gap = f64::INFINITY;
        if n > 0 {
            gap = gap.min(ev[n] - ev[n - 1]);
        }
        if n + 1 < count {
            gap = gap.min(ev[n + 1] - ev[n]);
        }
        Ok(gap / ev[n].max(self.lambda_scale))
    }

    pub fn is_simple(&self, spectrum: &Spectrum, n: usize) -> Result<bool> {
        Ok(self.relative_gap(spectrum, n)? >= self.gap_tol)
    }
}

pub fn is_simple(spectrum: &Spectrum, n: usize, test: &SimplicityTest) -> Result<bool> {
    test.is_simple(spectrum, n)
}

/// Connected components of the joint sparsity graph of `a` and `b`.
fn blocks(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..j {
            if a[(i, j)] != ZERO || b[(i, j)] != ZERO {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn sub(a: &DMatrix<Complex64>, idx: &[usize]) -> DMatrix<Complex64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// Eigenpairs of one block, eigenvectors as columns.
fn solve_block(h: DMatrix<Complex64>, m: DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let n = h.nrows();
    if n == 1 {
        let mass = m[(0, 0)].re;
        if !(mass > 0.0) {
            return Err(BlochError::MassNotPositive);
        }
        let v = DMatrix::from_element(1, 1, Complex64::new(1.0 / mass.sqrt(), 0.0));
        return Ok((vec![h[(0, 0)].re / mass], v));
    }
    let chol = Cholesky::new(m).ok_or(BlochError::MassNotPositive)?;
    let l = chol.l();
    // complex square roots never fail, so negative pivots show up as
    // non-real diagonal entries
    if (0..n).any(|i| !(l[(i, i)].re > 0.0) || l[(i, i)].im.abs() > 1e-14 * l[(i, i)].re) {
        return Err(BlochError::MassNotPositive);
    }
    let x = l
        .solve_lower_triangular(&h)
        .ok_or_else(|| BlochError::Numerical("singular Cholesky factor".into()))?;
    let mut c = l
        .solve_lower_triangular(&x.adjoint())
        .ok_or_else(|| BlochError::Numerical("singular Cholesky factor".into()))?;
    for i in 0..n {
        c[(i, i)].im = 0.0;
        for j in i + 1..n {
            let v = (c[(i, j)] + c[(j, i)].conj()) * 0.5;
            c[(i, j)] = v;
            c[(j, i)] = v.conj();
        }
    }
    let eig = SymmetricEigen::new(c);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(BlochError::Numerical("non-finite eigenvalue".into()));
    }
    let v = l
        .adjoint()
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or_else(|| BlochError::Numerical("singular Cholesky factor".into()))?;
    Ok((eig.eigenvalues.iter().copied().collect(), v))
}

/// First `count` eigenpairs of `H v = λ M v`, ascending, with `vᴴMv = 1`.
pub fn generalized_eig(h: &HermitianMatrix, m: &HermitianMatrix, count: usize) -> Result<Spectrum> {
    let size = h.size();
    if m.size() != size {
        return Err(BlochError::DimensionMismatch {
            expected: size,
            got: m.size(),
        });
    }
    if count > size {
        return Err(BlochError::InvalidArgument(format!(
            "requested {count} eigenpairs of a {size}×{size} problem"
        )));
    }
    let hm = h.matrix();
    let mm = m.matrix();
    let h_norm = h.norm().max(f64::MIN_POSITIVE);

    struct Pair {
        lambda: f64,
        block: usize,
        column: usize,
    }
    let groups = blocks(hm, mm);
    let mut solved = Vec::with_capacity(groups.len());
    let mut pairs = Vec::with_capacity(size);
    for (b, idx) in groups.iter().enumerate() {
        let (vals, vecs) = solve_block(sub(hm, idx), sub(mm, idx))?;
        for (column, &lambda) in vals.iter().enumerate() {
            pairs.push(Pair { lambda, block: b, column });
        }
        solved.push(vecs);
    }
    pairs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.block.cmp(&b.block)));

    let mut spectrum = Spectrum {
        theta: Vec::new(),
        size,
        eigenvalues: Vec::with_capacity(count),
        eigenvectors: Vec::with_capacity(count),
        residuals: Vec::with_capacity(count),
        clamped: Vec::with_capacity(count),
    };
    for p in pairs.into_iter().take(count) {
        let idx = &groups[p.block];
        let local_h = sub(hm, idx);
        let local_m = sub(mm, idx);
        let mut w: DVector<Complex64> = solved[p.block].column(p.column).into_owned();
        let norm = w.dotc(&(&local_m * &w)).re.sqrt();
        w /= Complex64::new(norm, 0.0);
        // fix the phase: largest entry real positive
        let (imax, _) = w
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, c)| if c.norm() > acc.1 { (i, c.norm()) } else { acc });
        let phase = w[imax] / w[imax].norm();
        w /= phase;

        // the Rayleigh quotient is accurate to the square of the eigenvector
        // error, and to rounding relative to λ rather than to ‖H‖
        let hw = &local_h * &w;
        let mut lambda = w.dotc(&hw).re / w.dotc(&(&local_m * &w)).re;
        if !lambda.is_finite() {
            lambda = p.lambda;
        }
        let residual = (hw - (&local_m * &w) * Complex64::new(lambda, 0.0)).norm() / h_norm;
        if residual > RESIDUAL_TOL {
            return Err(BlochError::Numerical(format!(
                "eigenpair residual {residual:.3e} for λ = {lambda:e} exceeds {RESIDUAL_TOL:e}"
            )));
        }
        let mut clamped = false;
        if lambda < 0.0 {
            if lambda < -NEGATIVE_SLACK * h_norm {
                return Err(BlochError::NegativeEigenvalue(lambda));
            }
            lambda = 0.0;
            clamped = true;
        }
        let mut v = DVector::from_element(size, ZERO);
        for (local, &global) in idx.iter().enumerate() {
            v[global] = w[local];
        }
        spectrum.eigenvalues.push(lambda);
        spectrum.eigenvectors.push(v);
        spectrum.residuals.push(residual);
        spectrum.clamped.push(clamped);
    }
    spectrum.sort();
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::PeriodicMedium;
    use crate::planewave::{assemble_mass, assemble_stiffness, BlochParameter, PlaneWaveBasis};
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn herm(rows: usize, v: &[Complex64]) -> HermitianMatrix {
        HermitianMatrix::from_raw(DMatrix::from_row_slice(rows, rows, v)).unwrap()
    }

    #[test]
    fn diagonal_problem_sorts_and_permutes() {
        let z = c(0.0);
        let h = herm(3, &[c(3.0), z, z, z, c(1.0), z, z, z, c(2.0)]);
        let m = herm(3, &[c(1.0), z, z, z, c(1.0), z, z, z, c(1.0)]);
        let s = generalized_eig(&h, &m, 3).unwrap();
        assert_eq!(s.eigenvalues(), &[1.0, 2.0, 3.0]);
        assert_eq!(s.eigenvector(0)[1], c(1.0));
        assert_eq!(s.eigenvector(1)[2], c(1.0));
        assert_eq!(s.eigenvector(2)[0], c(1.0));
    }

    #[test]
    fn homogeneous_eigenvalues() {
        let med = PeriodicMedium::homogeneous(1, &[4.0], 1.0).unwrap();
        let b = PlaneWaveBasis::new(1, 1).unwrap();
        let t = BlochParameter::new(&[0.25]);
        let s = generalized_eig(
            &assemble_stiffness(&med, &b, &t).unwrap(),
            &assemble_mass(&med, &b).unwrap(),
            3,
        )
        .unwrap();
        let expect = [PI * PI, 9.0 * PI * PI, 25.0 * PI * PI];
        for (l, e) in s.eigenvalues().iter().zip(expect) {
            assert!((l - e).abs() < 1e-12 * e);
        }
        assert!((s.eigenvalue(0) - 9.869_604_401_089_358).abs() < 1e-12);
    }

    #[test]
    fn dense_pencil_is_solved() {
        // Hermitian H, positive definite M with complex off-diagonals
        let h = herm(
            3,
            &[
                c(4.0),
                Complex64::new(1.0, 0.5),
                c(0.0),
                Complex64::new(1.0, -0.5),
                c(3.0),
                Complex64::new(0.0, 0.2),
                c(0.0),
                Complex64::new(0.0, -0.2),
                c(1.0),
            ],
        );
        let m = herm(
            3,
            &[
                c(2.0),
                Complex64::new(0.1, 0.1),
                c(0.0),
                Complex64::new(0.1, -0.1),
                c(1.5),
                c(0.2),
                c(0.0),
                c(0.2),
                c(1.0),
            ],
        );
        let s = generalized_eig(&h, &m, 3).unwrap();
        assert!(s.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        assert!(s.orthonormality_defect(&m) < 1e-12);
        for n in 0..3 {
            let v = s.eigenvector(n);
            let r = h.matrix() * v - (m.matrix() * v) * c(s.eigenvalue(n));
            assert!(r.norm() < 1e-12);
            assert!((h.quadratic_form(v).re - s.eigenvalue(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_mass_is_a_medium_defect() {
        let z = c(0.0);
        let h = herm(2, &[c(1.0), c(0.5), c(0.5), c(1.0)]);
        let m = herm(2, &[c(1.0), c(2.0), c(2.0), c(1.0)]);
        assert!(matches!(generalized_eig(&h, &m, 2), Err(BlochError::MassNotPositive)));
        let m = herm(2, &[c(-1.0), z, z, c(1.0)]);
        assert!(matches!(generalized_eig(&h, &m, 1), Err(BlochError::MassNotPositive)));
    }

    #[test]
    fn tiny_negatives_clamp_large_ones_fail() {
        let z = c(0.0);
        let m = herm(2, &[c(1.0), z, z, c(1.0)]);
        let h = herm(2, &[c(-1e-14), z, z, c(1.0)]);
        let s = generalized_eig(&h, &m, 2).unwrap();
        assert_eq!(s.eigenvalue(0), 0.0);
        assert!(s.clamped(0));
        assert!(!s.clamped(1));
        let h = herm(2, &[c(-1e-3), z, z, c(1.0)]);
        assert!(matches!(generalized_eig(&h, &m, 2), Err(BlochError::NegativeEigenvalue(_))));
    }

    fn homogeneous_spectrum(theta: f64, count: usize) -> Spectrum {
        let med = PeriodicMedium::homogeneous(1, &[4.0], 1.0).unwrap();
        let b = PlaneWaveBasis::new(1, 4).unwrap();
        let t = BlochParameter::new(&[theta]);
        generalized_eig(
            &assemble_stiffness(&med, &b, &t).unwrap(),
            &assemble_mass(&med, &b).unwrap(),
            count,
        )
        .unwrap()
    }

    #[test]
    fn simplicity_examples() {
        let test = SimplicityTest::new(DEFAULT_GAP_TOL, 2.0);
        assert!(test.is_simple(&homogeneous_spectrum(0.25, 3), 0).unwrap());
        let s = homogeneous_spectrum(0.5, 3);
        assert!(!test.is_simple(&s, 0).unwrap());
        assert!(!test.is_simple(&s, 1).unwrap());
        assert!(matches!(
            test.is_simple(&s, 2),
            Err(BlochError::InsufficientBands { band: 3, computed: 3 })
        ));
        // the top of the full spectrum uses its lower gap only
        let full = homogeneous_spectrum(0.25, 9);
        assert!(test.is_simple(&full, 8).unwrap());
    }
}
