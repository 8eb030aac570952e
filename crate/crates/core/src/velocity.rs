//! Frequencies, eigenvalue gradients and group velocities.
//!
//! `∇_θ λ_n` is available through three interchangeable [`GradientMethod`]s,
//! looked up by name in a [`GradientRegistry`]:
//!
//! * `hf`: Hellmann–Feynman, `∂λ/∂θ_j = vᴴ (∂H/∂θ_j) v` for the mass-normalized
//!   eigenvector;
//! * `integral`: the flux identity
//!   `ξ·∇λ = 2iπ ∫ (ψ A0ξ · conj(Dψ) − conj(ψ) ξ·A0 Dψ) dy`, `D = ∇ + 2iπθ`,
//!   evaluated by Fourier convolution and Parseval;
//! * `fd`: central differences of the sorted eigenvalues.

use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::eigensolve::{generalized_eig, SimplicityTest, Spectrum};
use crate::error::{BlochError, Result};
use crate::medium::PeriodicMedium;
use crate::planewave::{BlochParameter, Discretization, HermitianMatrix, PlaneWaveBasis};

/// Imaginary residue tolerated in a gradient, relative to `|λ|`.
pub const IMAG_TOL: f64 = 1e-10;

/// Relative acoustic floor: `λ_floor = ACOUSTIC_FLOOR · (2π c_max)²`.
pub const ACOUSTIC_FLOOR: f64 = 1e-8;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Minimum normalized overlap between the centre eigenvector and those at
/// the stencil points.
const STENCIL_OVERLAP: f64 = 0.5;

/// `ω = √λ / (2π)`, the nonnegative root of `4π²ω² = λ`.
pub fn frequency(lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(BlochError::NegativeEigenvalue(lambda));
    }
    Ok(lambda.sqrt() / (2.0 * PI))
}

/// `λ = 4π²ω²`.
pub fn eigenvalue_of(omega: f64) -> f64 {
    4.0 * PI * PI * omega * omega
}

pub fn acoustic_floor(c_max: f64) -> f64 {
    let w = 2.0 * PI * c_max;
    ACOUSTIC_FLOOR * w * w
}

/// `V = −∇λ / (4π√λ)`.
pub fn group_velocity(lambda: f64, grad_lambda: &[f64], lambda_floor: f64) -> Result<Vec<f64>> {
    if !(lambda >= lambda_floor) || lambda <= 0.0 {
        return Err(BlochError::Acoustic {
            lambda,
            floor: lambda_floor,
        });
    }
    let denom = 4.0 * PI * lambda.sqrt();
    Ok(grad_lambda.iter().map(|g| -g / denom).collect())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn real_part(value: Complex64, lambda: f64) -> Result<f64> {
    if value.im.abs() > IMAG_TOL * lambda.abs().max(f64::MIN_POSITIVE) {
        return Err(BlochError::Numerical(format!(
            "gradient has imaginary residue {:.3e} (λ = {lambda:e})",
            value.im
        )));
    }
    Ok(value.re)
}

fn require_simple(spectrum: &Spectrum, n: usize, test: &SimplicityTest) -> Result<()> {
    if !test.is_simple(spectrum, n)? {
        return Err(BlochError::Degenerate {
            band: n + 1,
            gap: test.relative_gap(spectrum, n)?,
        });
    }
    Ok(())
}

/// Hellmann–Feynman gradient of band `n` (0-based) given `∂H/∂θ_j` for every
/// axis.
pub fn grad_lambda_hf(
    spectrum: &Spectrum,
    n: usize,
    dstiffness: &[HermitianMatrix],
    test: &SimplicityTest,
) -> Result<Vec<f64>> {
    require_simple(spectrum, n, test)?;
    let v = spectrum.eigenvector(n);
    let lambda = spectrum.eigenvalue(n);
    dstiffness
        .iter()
        .map(|d| real_part(d.quadratic_form(v), lambda))
        .collect()
}

/// `ξ·∇λ` from the flux identity, before discarding the imaginary residue.
pub(crate) fn flux_identity(
    disc: &Discretization<'_>,
    theta: &BlochParameter,
    eigenvector: &DVector<Complex64>,
    xi: &[f64],
) -> (Complex64, f64) {
    let basis = disc.basis();
    let dim = basis.dimension();
    let t = theta.padded();
    let zero = Complex64::new(0.0, 0.0);
    let support: Vec<usize> = (0..eigenvector.len()).filter(|&i| eigenvector[i] != zero).collect();

    // d̂(k) = 2πi (k+θ) v_k : coefficients of Dψ
    let mut grad_hat = vec![[zero; 2]; basis.len()];
    for &i in &support {
        let k = basis.wavevector(i);
        for a in 0..dim {
            grad_hat[i][a] = Complex64::new(0.0, 2.0 * PI * (k[a] as f64 + t[a])) * eigenvector[i];
        }
    }
    // f̂ = (A0 ξ ψ)^ and ĥ = (ξ·A0 Dψ)^, truncated to the basis cube
    let mut f_hat = vec![[zero; 2]; basis.len()];
    let mut h_hat = vec![zero; basis.len()];
    for &i in &support {
        let k = basis.wavevector(i);
        for (g, block) in &disc.table().a_terms {
            let target = [k[0] + g[0], k[1] + g[1]];
            let Some(j) = basis.index_of(&target) else {
                continue;
            };
            for a in 0..dim {
                for b in 0..dim {
                    f_hat[j][a] += block[a][b] * xi[b] * eigenvector[i];
                    h_hat[j] += xi[a] * block[a][b] * grad_hat[i][b];
                }
            }
        }
    }
    let mut term1 = zero;
    let mut term2 = zero;
    for &i in &support {
        for a in 0..dim {
            term1 += f_hat[i][a] * grad_hat[i][a].conj();
        }
        term2 += eigenvector[i].conj() * h_hat[i];
    }
    let value = Complex64::new(0.0, 2.0 * PI) * (term1 - term2);
    (value, 2.0 * PI * (term1.norm() + term2.norm()))
}

/// `ξ·∇λ` for a mass-normalized eigenvector, from the flux identity.
pub fn grad_lambda_integral(
    medium: &PeriodicMedium,
    basis: &PlaneWaveBasis,
    theta: &BlochParameter,
    eigenvector: &DVector<Complex64>,
    xi: &[f64],
) -> Result<f64> {
    if xi.len() != basis.dimension() {
        return Err(BlochError::DimensionMismatch {
            expected: basis.dimension(),
            got: xi.len(),
        });
    }
    let disc = Discretization::new(medium, basis.clone())?;
    let (value, scale) = flux_identity(&disc, theta, eigenvector, xi);
    real_part(value, value.re.abs().max(scale))
}

/// Central differences `(λ_n(θ+h e_j) − λ_n(θ−h e_j)) / 2h` of band `n`
/// (0-based), evaluating stencil points without reducing `θ`.
pub fn finite_difference_gradient<F>(
    band_evaluator: F,
    theta: &BlochParameter,
    n: usize,
    h: f64,
    test: &SimplicityTest,
) -> Result<Vec<f64>>
where
    F: Fn(&BlochParameter) -> Result<Spectrum>,
{
    if !(h > 0.0 && h <= 1e-3) {
        return Err(BlochError::InvalidArgument(format!(
            "finite-difference step {h:e} outside (0, 1e-3]"
        )));
    }
    let centre = band_evaluator(theta)?;
    require_simple(&centre, n, test)?;
    let v0 = centre.eigenvector(n);
    (0..theta.dimension())
        .map(|axis| {
            let mut ends = [0.0; 2];
            for (slot, sign) in ends.iter_mut().zip([1.0, -1.0]) {
                let s = band_evaluator(&theta.shifted(axis, sign * h))?;
                if !test.is_simple(&s, n)? {
                    return Err(BlochError::StencilCrossing { band: n + 1 });
                }
                // a crossing inside the stencil swaps the branch sorted into
                // slot n; its eigenvector is then nearly orthogonal to v0
                let v = s.eigenvector(n);
                let overlap = v0.dotc(v).norm() / (v0.norm() * v.norm());
                if overlap < STENCIL_OVERLAP {
                    return Err(BlochError::StencilCrossing { band: n + 1 });
                }
                *slot = s.eigenvalue(n);
            }
            Ok((ends[0] - ends[1]) / (2.0 * h))
        })
        .collect()
}

/// How a gradient was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    HellmannFeynman,
    Integral,
    FiniteDifference,
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodTag::HellmannFeynman => "hellmann_feynman",
            MethodTag::Integral => "integral",
            MethodTag::FiniteDifference => "finite_difference",
        })
    }
}

/// Everything a gradient method may need at one quasi-momentum.
pub struct GradientContext<'a> {
    pub disc: &'a Discretization<'a>,
    pub mass: &'a HermitianMatrix,
    pub theta: &'a BlochParameter,
    pub simplicity: SimplicityTest,
    /// Eigenpairs to compute when re-solving (stencils).
    pub count: usize,
    pub fd_step: f64,
    dstiffness: OnceLock<Vec<HermitianMatrix>>,
    // spectra at θ ± h e_j, shared by every band
    stencils: OnceLock<Vec<(BlochParameter, Spectrum)>>,
}

impl<'a> GradientContext<'a> {
    pub fn new(
        disc: &'a Discretization<'a>,
        mass: &'a HermitianMatrix,
        theta: &'a BlochParameter,
        simplicity: SimplicityTest,
        count: usize,
    ) -> Self {
        GradientContext {
            disc,
            mass,
            theta,
            simplicity,
            count,
            fd_step: DEFAULT_FD_STEP,
            dstiffness: OnceLock::new(),
            stencils: OnceLock::new(),
        }
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self.stencils = OnceLock::new();
        self
    }

    /// Spectra at the central-difference stencil points, solved on first use.
    pub fn stencil_spectra(&self) -> Result<&[(BlochParameter, Spectrum)]> {
        if let Some(s) = self.stencils.get() {
            return Ok(s);
        }
        let mut out = Vec::with_capacity(2 * self.theta.dimension());
        for axis in 0..self.theta.dimension() {
            for sign in [1.0, -1.0] {
                let t = self.theta.shifted(axis, sign * self.fd_step);
                let s = self.solve(&t)?;
                out.push((t, s));
            }
        }
        Ok(self.stencils.get_or_init(|| out))
    }

    /// `∂H/∂θ_j` for every axis, assembled on first use.
    pub fn dstiffness(&self) -> Result<&[HermitianMatrix]> {
        if let Some(d) = self.dstiffness.get() {
            return Ok(d);
        }
        let d = (0..self.theta.dimension())
            .map(|axis| self.disc.dstiffness(self.theta, axis))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.dstiffness.get_or_init(|| d))
    }

    pub fn solve(&self, theta: &BlochParameter) -> Result<Spectrum> {
        let h = self.disc.stiffness(theta)?;
        Ok(generalized_eig(&h, self.mass, self.count)?.with_theta(theta.as_slice()))
    }
}

/// A way of computing `∇_θ λ_n` for a simple band.
pub trait GradientMethod: Send + Sync {
    fn name(&self) -> &'static str;

    fn tag(&self) -> MethodTag;

    /// Gradient of band `n` (0-based) of `spectrum`, which was computed at
    /// `ctx.theta`.
    fn gradient(&self, ctx: &GradientContext<'_>, spectrum: &Spectrum, n: usize) -> Result<Vec<f64>>;
}

pub struct HellmannFeynman;

impl GradientMethod for HellmannFeynman {
    fn name(&self) -> &'static str {
        "hf"
    }

    fn tag(&self) -> MethodTag {
        MethodTag::HellmannFeynman
    }

    fn gradient(&self, ctx: &GradientContext<'_>, spectrum: &Spectrum, n: usize) -> Result<Vec<f64>> {
        require_simple(spectrum, n, &ctx.simplicity)?;
        let v = spectrum.eigenvector(n);
        let lambda = spectrum.eigenvalue(n);
        (0..ctx.theta.dimension())
            .map(|axis| real_part(ctx.disc.dstiffness_form(ctx.theta, axis, v)?, lambda))
            .collect()
    }
}

pub struct IntegralIdentity;

impl GradientMethod for IntegralIdentity {
    fn name(&self) -> &'static str {
        "integral"
    }

    fn tag(&self) -> MethodTag {
        MethodTag::Integral
    }

    fn gradient(&self, ctx: &GradientContext<'_>, spectrum: &Spectrum, n: usize) -> Result<Vec<f64>> {
        require_simple(spectrum, n, &ctx.simplicity)?;
        let dim = ctx.theta.dimension();
        let lambda = spectrum.eigenvalue(n);
        (0..dim)
            .map(|axis| {
                let mut xi = vec![0.0; dim];
                xi[axis] = 1.0;
                let (value, _) = flux_identity(ctx.disc, ctx.theta, spectrum.eigenvector(n), &xi);
                real_part(value, lambda)
            })
            .collect()
    }
}

pub struct FiniteDifference;

impl GradientMethod for FiniteDifference {
    fn name(&self) -> &'static str {
        "fd"
    }

    fn tag(&self) -> MethodTag {
        MethodTag::FiniteDifference
    }

    fn gradient(&self, ctx: &GradientContext<'_>, spectrum: &Spectrum, n: usize) -> Result<Vec<f64>> {
        require_simple(spectrum, n, &ctx.simplicity)?;
        let stencils = ctx.stencil_spectra()?;
        let at_theta = |t: &BlochParameter| {
            if t == ctx.theta {
                return Ok(spectrum.clone());
            }
            match stencils.iter().find(|(p, _)| p == t) {
                Some((_, s)) => Ok(s.clone()),
                None => ctx.solve(t),
            }
        };
        finite_difference_gradient(at_theta, ctx.theta, n, ctx.fd_step, &ctx.simplicity)
    }
}

/// Gradient methods selectable by name.
pub struct GradientRegistry {
    methods: Vec<Box<dyn GradientMethod>>,
}

impl GradientRegistry {
    pub fn empty() -> Self {
        GradientRegistry { methods: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(HellmannFeynman));
        r.register(Box::new(IntegralIdentity));
        r.register(Box::new(FiniteDifference));
        r
    }

    /// Later registrations shadow earlier ones of the same name.
    pub fn register(&mut self, method: Box<dyn GradientMethod>) {
        self.methods.retain(|m| m.name() != method.name());
        self.methods.push(method);
    }

    /// Look up by short name (`hf`, `integral`, `fd`) or by tag
    /// (`hellmann_feynman`, `finite_difference`).
    pub fn get(&self, name: &str) -> Option<&dyn GradientMethod> {
        self.methods
            .iter()
            .find(|m| m.name() == name || m.tag().to_string() == name)
            .map(|m| m.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }
}

impl Default for GradientRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Why a record carries no velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Degenerate,
    Acoustic,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::Degenerate => "degenerate",
            SkipReason::Acoustic => "acoustic",
        })
    }
}

/// One `(θ, n)` record of a band sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPoint {
    pub theta: Vec<f64>,
    /// 1-based band index.
    pub band: usize,
    pub lambda: f64,
    pub omega: f64,
    pub grad_lambda: Option<Vec<f64>>,
    pub velocity: Option<Vec<f64>>,
    pub simple: bool,
    pub method: MethodTag,
    pub skipped: Option<SkipReason>,
}

impl BandPoint {
    pub fn speed(&self) -> Option<f64> {
        self.velocity.as_deref().map(norm)
    }
}

/// Build the record for band `n` (0-based), computing a velocity only for
/// simple bands above the acoustic floor.
pub fn band_point(
    ctx: &GradientContext<'_>,
    spectrum: &Spectrum,
    n: usize,
    method: &dyn GradientMethod,
    lambda_floor: f64,
) -> Result<BandPoint> {
    let lambda = spectrum.eigenvalue(n);
    let simple = ctx.simplicity.is_simple(spectrum, n)?;
    let mut point = BandPoint {
        theta: ctx.theta.as_slice().to_vec(),
        band: n + 1,
        lambda,
        omega: frequency(lambda)?,
        grad_lambda: None,
        velocity: None,
        simple,
        method: method.tag(),
        skipped: None,
    };
    if !simple {
        point.skipped = Some(SkipReason::Degenerate);
    } else if lambda < lambda_floor {
        point.skipped = Some(SkipReason::Acoustic);
    } else {
        let grad = method.gradient(ctx, spectrum, n)?;
        point.velocity = Some(group_velocity(lambda, &grad, lambda_floor)?);
        point.grad_lambda = Some(grad);
    }
    Ok(point)
}
