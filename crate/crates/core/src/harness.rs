//! Band sweeps over sets of quasi-momenta and the group-velocity bound check.

use std::cmp::Ordering;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolve::{generalized_eig, SimplicityTest, DEFAULT_GAP_TOL};
use crate::error::{BlochError, Result};
use crate::medium::PeriodicMedium;
use crate::planewave::{BlochParameter, Discretization, PlaneWaveBasis};
use crate::velocity::{
    acoustic_floor, band_point, BandPoint, GradientContext, GradientMethod, GradientRegistry, MethodTag,
    SkipReason, DEFAULT_FD_STEP,
};

pub const DEFAULT_BOUND_TOL: f64 = 1e-8;

/// Pairwise gradient agreement: relative tolerance and absolute floor.
pub const GRADIENT_REL_TOL: f64 = 1e-5;
pub const GRADIENT_ABS_FLOOR: f64 = 1e-8;

/// Placement of a uniform grid of `G` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridKind {
    /// `θ_i = (i + 1/2)/G`
    #[default]
    Midpoint,
    /// `θ_i = i/G`, which includes the zone centre and (for even `G`) edge.
    Node,
}

/// Tensor grid of `points` values per axis, lexicographic.
pub fn theta_grid(dimension: usize, points: usize, kind: GridKind) -> Vec<Vec<f64>> {
    let offset = match kind {
        GridKind::Midpoint => 0.5,
        GridKind::Node => 0.0,
    };
    let axis: Vec<f64> = (0..points).map(|i| (i as f64 + offset) / points as f64).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..dimension {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&t| {
                    let mut q = p.clone();
                    q.push(t);
                    q
                })
            })
            .collect();
    }
    if points == 0 {
        out.clear();
    }
    out
}

/// Parse `"θ1;θ2;..."`, components of one point separated by commas.
pub fn parse_theta_path(text: &str, dimension: usize) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|point| {
            let v = point
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| BlochError::InvalidArgument(format!("bad theta component {c:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if v.len() != dimension {
                return Err(BlochError::DimensionMismatch {
                    expected: dimension,
                    got: v.len(),
                });
            }
            Ok(v)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n_bands: usize,
    pub cutoff: usize,
    pub gap_tol: f64,
    /// Name of the gradient method in the registry.
    pub method: String,
    /// Also compute every gradient by all three methods and compare.
    pub verify_gradients: bool,
    pub fd_step: f64,
    pub parallel: bool,
}

impl SweepConfig {
    pub fn new(n_bands: usize, cutoff: usize) -> Self {
        SweepConfig {
            n_bands,
            cutoff,
            gap_tol: DEFAULT_GAP_TOL,
            method: "hf".into(),
            verify_gradients: false,
            fd_step: DEFAULT_FD_STEP,
            parallel: true,
        }
    }
}

/// Worst pairwise disagreement between gradient methods over a sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GradientCheck {
    pub compared: usize,
    /// Records where the stencil crossed another band.
    pub fd_skipped: usize,
    pub max_hf_integral: f64,
    pub max_hf_fd: f64,
    pub max_integral_fd: f64,
    pub failures: Vec<GradientFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientFailure {
    pub theta: Vec<f64>,
    pub band: usize,
    pub hf: Vec<f64>,
    pub integral: Vec<f64>,
    pub fd: Option<Vec<f64>>,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn merge(mut self, other: GradientCheck) -> GradientCheck {
        self.compared += other.compared;
        self.fd_skipped += other.fd_skipped;
        self.max_hf_integral = self.max_hf_integral.max(other.max_hf_integral);
        self.max_hf_fd = self.max_hf_fd.max(other.max_hf_fd);
        self.max_integral_fd = self.max_integral_fd.max(other.max_integral_fd);
        self.failures.extend(other.failures);
        self
    }
}

/// Disagreement normalized so that `≤ GRADIENT_REL_TOL` means agreement
/// within the relative tolerance or the absolute floor.
pub fn gradient_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs()).max(GRADIENT_ABS_FLOOR / GRADIENT_REL_TOL);
            (x - y).abs() / scale
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct BandTable {
    pub medium_digest: String,
    pub dimension: usize,
    pub cutoff: usize,
    pub c_max: f64,
    /// Quasi-momenta in the order they were requested (unreduced).
    pub path: Vec<Vec<f64>>,
    /// Sorted by `(θ, band)`.
    pub records: Vec<BandPoint>,
    pub gradient_check: Option<GradientCheck>,
}

fn cmp_theta(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Band records for every `θ` in `theta_set` and the first `n_bands` bands.
pub fn band_structure(
    medium: &PeriodicMedium,
    theta_set: &[Vec<f64>],
    config: &SweepConfig,
) -> Result<BandTable> {
    band_structure_with(medium, theta_set, config, &GradientRegistry::builtin())
}

pub fn band_structure_with(
    medium: &PeriodicMedium,
    theta_set: &[Vec<f64>],
    config: &SweepConfig,
    registry: &GradientRegistry,
) -> Result<BandTable> {
    let method = registry.get(&config.method).ok_or_else(|| {
        BlochError::InvalidArgument(format!(
            "unknown velocity method {:?} (available: {})",
            config.method,
            registry.names().join(", ")
        ))
    })?;
    let basis = PlaneWaveBasis::new(medium.dimension(), config.cutoff)?;
    if config.n_bands > basis.len() {
        return Err(BlochError::InvalidArgument(format!(
            "{} bands requested from a basis of {}",
            config.n_bands,
            basis.len()
        )));
    }
    let disc = Discretization::new(medium, basis)?;
    let mass = disc.mass()?;
    let c_max = medium.max_speed();
    let simplicity = SimplicityTest::new(config.gap_tol, c_max);
    let floor = acoustic_floor(c_max);
    let count = (config.n_bands + 1).min(disc.basis().len());
    let cross_check = if config.verify_gradients {
        Some([
            registry.get("hf").unwrap_or(&crate::velocity::HellmannFeynman),
            registry.get("integral").unwrap_or(&crate::velocity::IntegralIdentity),
            registry.get("fd").unwrap_or(&crate::velocity::FiniteDifference),
        ])
    } else {
        None
    };

    let work = |raw: &Vec<f64>| -> Result<(Vec<BandPoint>, GradientCheck)> {
        if raw.len() != medium.dimension() {
            return Err(BlochError::DimensionMismatch {
                expected: medium.dimension(),
                got: raw.len(),
            });
        }
        let theta = BlochParameter::new(raw);
        let ctx = GradientContext::new(&disc, &mass, &theta, simplicity, count).with_fd_step(config.fd_step);
        let spectrum = generalized_eig(&disc.stiffness(&theta)?, &mass, count)
            .map_err(|e| e.at(theta.as_slice(), 0))?
            .with_theta(theta.as_slice());
        let mut points = Vec::with_capacity(config.n_bands);
        let mut check = GradientCheck::default();
        for n in 0..config.n_bands {
            let point =
                band_point(&ctx, &spectrum, n, method, floor).map_err(|e| e.at(theta.as_slice(), n + 1))?;
            if let (Some(methods), None) = (&cross_check, point.skipped) {
                compare_methods(&ctx, &spectrum, n, methods, &mut check)
                    .map_err(|e| e.at(theta.as_slice(), n + 1))?;
            }
            points.push(point);
        }
        Ok((points, check))
    };

    let results: Vec<Result<(Vec<BandPoint>, GradientCheck)>> = if config.parallel {
        theta_set.par_iter().map(work).collect()
    } else {
        theta_set.iter().map(work).collect()
    };
    let mut records = Vec::with_capacity(theta_set.len() * config.n_bands);
    let mut check = GradientCheck::default();
    for r in results {
        let (points, c) = r?;
        records.extend(points);
        check = check.merge(c);
    }
    records.sort_by(|a, b| cmp_theta(&a.theta, &b.theta).then(a.band.cmp(&b.band)));
    Ok(BandTable {
        medium_digest: medium.digest(),
        dimension: medium.dimension(),
        cutoff: config.cutoff,
        c_max,
        path: theta_set.to_vec(),
        records,
        gradient_check: config.verify_gradients.then_some(check),
    })
}

fn compare_methods(
    ctx: &GradientContext<'_>,
    spectrum: &crate::eigensolve::Spectrum,
    n: usize,
    methods: &[&dyn GradientMethod; 3],
    check: &mut GradientCheck,
) -> Result<()> {
    let hf = methods[0].gradient(ctx, spectrum, n)?;
    let integral = methods[1].gradient(ctx, spectrum, n)?;
    let fd = match methods[2].gradient(ctx, spectrum, n) {
        Ok(g) => Some(g),
        Err(BlochError::StencilCrossing { .. }) => {
            check.fd_skipped += 1;
            None
        }
        Err(e) => return Err(e),
    };
    check.compared += 1;
    let hi = gradient_discrepancy(&hf, &integral);
    check.max_hf_integral = check.max_hf_integral.max(hi);
    let mut ok = hi <= GRADIENT_REL_TOL;
    if let Some(fd) = &fd {
        let hd = gradient_discrepancy(&hf, fd);
        let id = gradient_discrepancy(&integral, fd);
        check.max_hf_fd = check.max_hf_fd.max(hd);
        check.max_integral_fd = check.max_integral_fd.max(id);
        ok &= hd <= GRADIENT_REL_TOL && id <= GRADIENT_REL_TOL;
    }
    if !ok {
        check.failures.push(GradientFailure {
            theta: ctx.theta.as_slice().to_vec(),
            band: n + 1,
            hf,
            integral,
            fd,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub theta: Vec<f64>,
    pub band: usize,
    pub speed: f64,
    pub ratio: f64,
}

/// Outcome of checking `|V| ≤ c_max` over a band table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub c_max: f64,
    pub tol: f64,
    pub max_ratio: f64,
    pub checked: usize,
    pub skipped_degenerate: usize,
    pub skipped_acoustic: usize,
    pub violations: Vec<Violation>,
    pub pass: bool,
}

impl BoundReport {
    pub fn records(&self) -> usize {
        self.checked + self.skipped_degenerate + self.skipped_acoustic
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

pub fn verify_bound(table: &BandTable, tol: f64) -> BoundReport {
    let mut report = BoundReport {
        c_max: table.c_max,
        tol,
        max_ratio: 0.0,
        checked: 0,
        skipped_degenerate: 0,
        skipped_acoustic: 0,
        violations: Vec::new(),
        pass: true,
    };
    for r in &table.records {
        match (r.skipped, r.speed()) {
            (Some(SkipReason::Degenerate), _) => report.skipped_degenerate += 1,
            (Some(SkipReason::Acoustic), _) => report.skipped_acoustic += 1,
            (None, Some(speed)) => {
                report.checked += 1;
                let ratio = speed / table.c_max;
                report.max_ratio = report.max_ratio.max(ratio);
                if !(speed <= table.c_max * (1.0 + tol)) {
                    report.violations.push(Violation {
                        theta: r.theta.clone(),
                        band: r.band,
                        speed,
                        ratio,
                    });
                }
            }
            (None, None) => report.skipped_degenerate += 1,
        }
    }
    report.pass = report.violations.is_empty();
    report
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl BandTable {
    pub fn csv_header(dimension: usize) -> Vec<String> {
        let mut h: Vec<String> = (1..=dimension).map(|j| format!("theta_{j}")).collect();
        h.extend(["band", "lambda", "omega"].map(String::from));
        h.extend((1..=dimension).map(|j| format!("v_{j}")));
        h.extend(["speed", "simple", "skipped_reason"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(self.dimension))?;
        for r in &self.records {
            let mut row: Vec<String> = r.theta.iter().map(|&t| fmt_float(t)).collect();
            row.push(r.band.to_string());
            row.push(fmt_float(r.lambda));
            row.push(fmt_float(r.omega));
            match &r.velocity {
                Some(v) => row.extend(v.iter().map(|&x| fmt_float(x))),
                None => row.extend(std::iter::repeat(String::new()).take(self.dimension)),
            }
            row.push(r.speed().map(fmt_float).unwrap_or_default());
            row.push(r.simple.to_string());
            row.push(r.skipped.map(|s| s.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a table written by [`BandTable::write_csv`]. Gradients are not
    /// stored in the file.
    pub fn read_csv<R: Read>(input: R, c_max: f64) -> Result<BandTable> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let dimension = header.iter().filter(|h| h.starts_with("theta_")).count();
        let expected = Self::csv_header(dimension);
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(BlochError::InvalidArgument(format!(
                "unexpected band table header {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| BlochError::InvalidArgument(format!("bad number {s:?}: {e}")))
        };
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or("");
            let theta = (0..dimension).map(|j| num(field(j))).collect::<Result<Vec<_>>>()?;
            let band = field(dimension)
                .parse::<usize>()
                .map_err(|e| BlochError::InvalidArgument(format!("bad band index: {e}")))?;
            let lambda = num(field(dimension + 1))?;
            let omega = num(field(dimension + 2))?;
            let velocity = if field(dimension + 3).is_empty() {
                None
            } else {
                Some((0..dimension).map(|j| num(field(dimension + 3 + j))).collect::<Result<Vec<_>>>()?)
            };
            let simple = field(2 * dimension + 4) == "true";
            let skipped = match field(2 * dimension + 5) {
                "" => None,
                "degenerate" => Some(SkipReason::Degenerate),
                "acoustic" => Some(SkipReason::Acoustic),
                other => {
                    return Err(BlochError::InvalidArgument(format!("bad skipped_reason {other:?}")));
                }
            };
            records.push(BandPoint {
                theta,
                band,
                lambda,
                omega,
                grad_lambda: None,
                velocity,
                simple,
                method: MethodTag::HellmannFeynman,
                skipped,
            });
        }
        let mut path: Vec<Vec<f64>> = records.iter().map(|r| r.theta.clone()).collect();
        path.dedup();
        Ok(BandTable {
            medium_digest: String::new(),
            dimension,
            cutoff: 0,
            c_max,
            path,
            records,
            gradient_check: None,
        })
    }

    /// Long-format `(band, θ-arc-length, ω)` table, tab separated, one block
    /// per band in path order.
    pub fn write_plot_data<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# medium {} cutoff {}", self.medium_digest, self.cutoff)?;
        writeln!(out, "band\tarc_length\tomega")?;
        let mut arc = Vec::with_capacity(self.path.len());
        let mut s = 0.0;
        for (i, p) in self.path.iter().enumerate() {
            if i > 0 {
                s += p
                    .iter()
                    .zip(&self.path[i - 1])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            }
            arc.push(s);
        }
        let bands = self.records.iter().map(|r| r.band).max().unwrap_or(0);
        for band in 1..=bands {
            for (p, &len) in self.path.iter().zip(&arc) {
                let reduced = BlochParameter::new(p);
                if let Some(r) = self
                    .records
                    .iter()
                    .find(|r| r.band == band && cmp_theta(&r.theta, reduced.as_slice()).is_eq())
                {
                    writeln!(out, "{band}\t{}\t{}", fmt_float(len), fmt_float(r.omega))?;
                }
            }
        }
        Ok(())
    }
}
