//! Transfer-matrix dispersion relation for 1D layered media.
//!
//! The state `(u, a u′)` is carried across each layer by
//! `[[cos κd, sin κd/(zΩ)], [−zΩ sin κd, cos κd]]` with `Ω = 2πω`,
//! `κ = Ω/c`, `z = ρc`. A Bloch mode with parameter `θ` exists at frequency
//! `ω` exactly when the half-trace of the one-period product equals
//! `cos 2πθ`.

use std::f64::consts::PI;

use crate::error::{BlochError, Result};
use crate::medium::{Layer, PeriodicMedium};
use crate::velocity::eigenvalue_of;

/// Bisection stops once the bracket is this narrow in `ω`.
pub const ROOT_TOL: f64 = 1e-12;

/// Tangential roots (band edges touching `±1`) must come this close.
const TOUCH_TOL: f64 = 1e-9;

const SCAN_OFFSET: f64 = 0.381966;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackLayer {
    pub width: f64,
    pub a: f64,
    pub speed: f64,
    pub impedance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<StackLayer>,
}

pub type Matrix2 = [[f64; 2]; 2];

fn mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

impl LayerStack {
    pub fn new(layers: &[Layer]) -> Result<Self> {
        if layers.is_empty() {
            return Err(BlochError::InvalidMedium("empty layer stack".into()));
        }
        let total: f64 = layers.iter().map(|l| l.width).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(BlochError::InvalidMedium(format!("layer widths sum to {total}, not 1")));
        }
        let layers = layers
            .iter()
            .map(|l| {
                if !(l.width > 0.0 && l.a > 0.0 && l.rho > 0.0) {
                    return Err(BlochError::InvalidMedium(format!("invalid layer {l:?}")));
                }
                let speed = l.speed();
                Ok(StackLayer {
                    width: l.width,
                    a: l.a,
                    speed,
                    impedance: l.rho * speed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LayerStack { layers })
    }

    pub fn from_medium(medium: &PeriodicMedium) -> Result<Self> {
        let layers = medium.layers().ok_or_else(|| {
            BlochError::InvalidMedium("transfer-matrix oracle needs a 1D layered medium".into())
        })?;
        Self::new(&layers)
    }

    pub fn layers(&self) -> &[StackLayer] {
        &self.layers
    }

    pub fn min_speed(&self) -> f64 {
        self.layers.iter().map(|l| l.speed).fold(f64::INFINITY, f64::min)
    }

    /// Travel time of a signal across one period.
    pub fn transit_time(&self) -> f64 {
        self.layers.iter().map(|l| l.width / l.speed).sum()
    }

    /// Product of the layer transfer matrices, last layer leftmost.
    pub fn monodromy(&self, omega: f64) -> Matrix2 {
        let big_omega = 2.0 * PI * omega;
        let mut total = [[1.0, 0.0], [0.0, 1.0]];
        for l in &self.layers {
            let x = big_omega * l.width / l.speed;
            let (s, c) = x.sin_cos();
            // sin(κd)/(zΩ) = (d/a)·sinc(κd); exact limit d/a at Ω = 0
            let sinc = if x == 0.0 { 1.0 } else { s / x };
            let step = [
                [c, l.width / l.a * sinc],
                [-l.impedance * big_omega * s, c],
            ];
            total = mul(&step, &total);
        }
        total
    }

    pub fn half_trace(&self, omega: f64) -> f64 {
        let m = self.monodromy(omega);
        0.5 * (m[0][0] + m[1][1])
    }

    /// First `count` Bloch frequencies at `theta ∈ [0,1)`, ascending and
    /// repeated by multiplicity.
    pub fn dispersion_solve(&self, theta: f64, count: usize) -> Result<Vec<f64>> {
        if !(0.0..1.0).contains(&theta) {
            return Err(BlochError::InvalidArgument(format!("theta {theta} outside [0,1)")));
        }
        let target = (2.0 * PI * theta).cos();
        let step = self.min_speed() / 1000.0;
        // n-th branch sits near (n/2 + 1)/T
        let mut window = (count as f64 / 2.0 + 1.0) / self.transit_time();
        let mut found = Vec::new();
        for attempt in 0..3 {
            found = self.scan(target, theta == 0.0, step, window);
            if found.len() >= count {
                found.truncate(count);
                return Ok(found);
            }
            if attempt < 2 {
                window *= 2.0;
            }
        }
        Err(BlochError::WindowTooSmall {
            window,
            found: found.len(),
            wanted: count,
        })
    }

    /// Eigenvalues `λ = 4π²ω²` of the first `count` bands.
    pub fn eigenvalues(&self, theta: f64, count: usize) -> Result<Vec<f64>> {
        Ok(self
            .dispersion_solve(theta, count)?
            .into_iter()
            .map(eigenvalue_of)
            .collect())
    }

    fn scan(&self, target: f64, at_origin: bool, step: f64, window: f64) -> Vec<f64> {
        let f = |w: f64| self.half_trace(w) - target;
        let mut roots = Vec::new();
        // the constant mode; f is even in ω so this root is tangential
        if at_origin {
            roots.push(0.0);
        }
        // samples sit off the lattice ω = i·step, where the homogeneous
        // touching roots of rational speeds would land exactly, and not
        // midway either, where an extremum would tie two samples
        let n = (window / step).ceil() as usize;
        let mut prev_w = 0.0;
        let mut prev = f(0.0);
        let mut prev2: Option<f64> = None;
        for i in 1..=n {
            let w = (i as f64 - SCAN_OFFSET) * step;
            let mut cur = f(w);
            if cur == 0.0 {
                cur = f(w + 1e-3 * step);
            }
            if prev == 0.0 {
                // the origin
            } else if prev.signum() * cur.signum() < 0.0 {
                roots.push(bisect(&f, prev_w, w));
            } else if let Some(pp) = prev2 {
                // local extremum of f near zero: the curve touches ±1
                let extremum = (prev.abs() < pp.abs()) && (prev.abs() <= cur.abs()) && pp.signum() == cur.signum();
                if extremum && prev.abs() < 1e-3 {
                    let (wt, ft) = golden_min(&|x| f(x).abs(), (prev_w - step).max(0.0), w);
                    if ft < TOUCH_TOL && wt > 0.5 * step {
                        roots.push(wt);
                        roots.push(wt);
                    }
                }
            }
            prev2 = Some(prev);
            prev_w = w;
            prev = cur;
        }
        roots
    }
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while b - a > ROOT_TOL {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Monodromy of `stack` at frequency `omega`.
pub fn monodromy(stack: &LayerStack, omega: f64) -> Matrix2 {
    stack.monodromy(omega)
}

/// First `count` Bloch frequencies of `stack` at `theta`.
pub fn dispersion_solve(stack: &LayerStack, theta: f64, count: usize) -> Result<Vec<f64>> {
    stack.dispersion_solve(theta, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(m: &Matrix2) -> f64 {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    fn two_phase() -> LayerStack {
        LayerStack::new(&[Layer::new(0.5, 1.0, 1.0), Layer::new(0.5, 4.0, 1.0)]).unwrap()
    }

    #[test]
    fn static_limit() {
        let s = LayerStack::new(&[Layer::new(1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(s.monodromy(0.0), [[1.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn quarter_period_entries() {
        let s = LayerStack::new(&[Layer::new(1.0, 1.0, 1.0)]).unwrap();
        let m = s.monodromy(0.25);
        assert!(m[0][0].abs() < 1e-15);
        assert!((m[0][1] - 2.0 / PI).abs() < 1e-15);
        assert!((m[1][0] + PI / 2.0).abs() < 1e-15);
        assert!(m[1][1].abs() < 1e-15);
    }

    #[test]
    fn unimodular() {
        let s = LayerStack::new(&[
            Layer::new(0.2, 3.0, 1.5),
            Layer::new(0.5, 1.0, 0.7),
            Layer::new(0.3, 9.0, 2.0),
        ])
        .unwrap();
        for i in 0..=500 {
            let w = i as f64 * 0.01;
            assert!((det(&s.monodromy(w)) - 1.0).abs() < 1e-12, "ω = {w}");
        }
    }

    #[test]
    fn homogeneous_branches() {
        let s = LayerStack::new(&[Layer::new(1.0, 1.0, 1.0)]).unwrap();
        let w = s.dispersion_solve(0.25, 5).unwrap();
        let expect = [0.25, 0.75, 1.25, 1.75, 2.25];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{w:?}");
        }
        let s = LayerStack::new(&[Layer::new(1.0, 4.0, 1.0)]).unwrap();
        let w = s.dispersion_solve(0.1, 5).unwrap();
        let expect = [0.2, 1.8, 2.2, 3.8, 4.2];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{w:?}");
        }
    }

    #[test]
    fn origin_and_touching_roots() {
        let w = two_phase().dispersion_solve(0.0, 3).unwrap();
        assert_eq!(w[0], 0.0);
        // homogeneous θ = 0: ω = c|k| with k = ±1 doubly degenerate
        let s = LayerStack::new(&[Layer::new(1.0, 1.0, 1.0)]).unwrap();
        let w = s.dispersion_solve(0.0, 5).unwrap();
        let expect = [0.0, 1.0, 1.0, 2.0, 2.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6, "{w:?}");
        }
    }

    #[test]
    fn half_trace_bounded_on_roots() {
        let s = two_phase();
        for theta in [0.1, 0.25, 0.4] {
            for w in s.dispersion_solve(theta, 6).unwrap() {
                assert!((s.half_trace(w) - (2.0 * PI * theta).cos()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn window_extension_and_bad_theta() {
        let s = two_phase();
        assert_eq!(s.dispersion_solve(0.3, 40).unwrap().len(), 40);
        assert!(s.dispersion_solve(1.0, 2).is_err());
        assert!(LayerStack::new(&[Layer::new(0.5, 1.0, 1.0)]).is_err());
    }
}
