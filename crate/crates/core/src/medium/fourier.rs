//! Discrete Fourier helpers for band-limited periodic sample grids.
//!
//! A real field sampled on an even grid `m_1 × ... × m_N` is identified with
//! the unique trigonometric polynomial whose coefficients live in the cube
//! `|g_j| ≤ m_j/2`, with the Nyquist coefficient split evenly between `±m_j/2`
//! so that the polynomial stays real.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

/// In-place unnormalized N-dimensional FFT over a row-major array.
pub(crate) fn fft_nd(data: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    let mut planner = FftPlanner::<f64>::new();
    let total: usize = shape.iter().product();
    debug_assert_eq!(total, data.len());
    for axis in 0..shape.len() {
        let len = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let fft = planner.plan_fft(len, direction);
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        let outer = total / (len * stride);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * len * stride + s;
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

/// Row-major flat index of a (possibly negative) frequency on a periodic grid.
pub(crate) fn wrap_index(g: &[i64], shape: &[usize]) -> usize {
    g.iter().zip(shape).fold(0usize, |acc, (&gj, &m)| {
        acc * m + gj.rem_euclid(m as i64) as usize
    })
}

/// Iterate all integer vectors in the box `lo_j ..= hi_j`, lexicographically.
pub(crate) fn box_points(lo: &[i64], hi: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(lo.len())];
    for (&l, &h) in lo.iter().zip(hi) {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (l..=h).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Normalized, conjugate-symmetrized DFT of a real sample array.
///
/// `out[wrap_index(g)] = (1/|grid|) Σ_y f(y) e^{-2πi g·y}`, with
/// `out[-g] == conj(out[g])` holding bitwise.
pub(crate) fn forward(samples: &[f64], shape: &[usize]) -> Vec<Complex64> {
    let total: usize = shape.iter().product();
    let mut data: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut data, shape, FftDirection::Forward);
    let scale = 1.0 / total as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
    let mut sym = data.clone();
    let lo: Vec<i64> = shape.iter().map(|&m| -(m as i64) / 2).collect();
    let hi: Vec<i64> = shape.iter().map(|&m| (m as i64 - 1) / 2).collect();
    for g in box_points(&lo, &hi) {
        let neg: Vec<i64> = g.iter().map(|v| -v).collect();
        let i = wrap_index(&g, shape);
        let j = wrap_index(&neg, shape);
        sym[i] = (data[i] + data[j].conj()) * 0.5;
    }
    sym
}

/// Coefficient of the band-limited interpolant at frequency `g`.
pub(crate) fn coefficient(dft: &[Complex64], shape: &[usize], g: &[i64]) -> Complex64 {
    let mut weight = 1.0;
    for (&gj, &m) in g.iter().zip(shape) {
        let half = (m / 2) as i64;
        if gj.abs() > half {
            return Complex64::new(0.0, 0.0);
        }
        if gj.abs() == half {
            weight *= 0.5;
        }
    }
    dft[wrap_index(g, shape)] * weight
}

/// Evaluate the band-limited interpolant on a grid refined by `factor` along
/// every axis.
pub(crate) fn refine(samples: &[f64], shape: &[usize], factor: usize) -> Vec<f64> {
    let dft = forward(samples, shape);
    let fine: Vec<usize> = shape.iter().map(|&m| m * factor).collect();
    let total: usize = fine.iter().product();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); total];
    let lo: Vec<i64> = shape.iter().map(|&m| -(m as i64) / 2).collect();
    let hi: Vec<i64> = shape.iter().map(|&m| (m as i64) / 2).collect();
    for g in box_points(&lo, &hi) {
        coeffs[wrap_index(&g, &fine)] += coefficient(&dft, shape, &g);
    }
    fft_nd(&mut coeffs, &fine, FftDirection::Inverse);
    coeffs.into_iter().map(|v| v.re).collect()
}
