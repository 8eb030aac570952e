use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bloch_core::harness::{self, DEFAULT_BOUND_TOL};
use bloch_core::oracle1d::LayerStack;
use bloch_core::velocity::eigenvalue_of;
use bloch_core::{band_structure, verify_bound, BandTable, GridKind, PeriodicMedium, SweepConfig};

/// Bloch band structures and group velocities of periodic media.
#[derive(Debug, Parser)]
#[command(name = "bloch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the first bands over a theta grid or path and write a CSV table.
    Bands(BandsArgs),
    /// Check |V| <= c_max over a theta grid and write a JSON report.
    Verify(VerifyArgs),
    /// Print the maximal characteristic speed of a medium.
    Cmax {
        #[arg(long)]
        medium: PathBuf,
    },
    /// Transfer-matrix frequencies of a 1D layered medium.
    Oracle1d {
        #[arg(long)]
        medium: PathBuf,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Grid {
    Midpoint,
    Node,
}

impl From<Grid> for GridKind {
    fn from(g: Grid) -> Self {
        match g {
            Grid::Midpoint => GridKind::Midpoint,
            Grid::Node => GridKind::Node,
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    medium: PathBuf,
    #[arg(long)]
    bands: usize,
    #[arg(long)]
    cutoff: usize,
    /// Relative spectral gap below which a band counts as degenerate.
    #[arg(long, default_value_t = bloch_core::eigensolve::DEFAULT_GAP_TOL)]
    gap_tol: f64,
    #[arg(long, value_enum, default_value = "midpoint")]
    grid_kind: Grid,
    /// Run the sweep on one thread.
    #[arg(long)]
    serial: bool,
}

#[derive(Debug, Args)]
struct BandsArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Points per axis of a uniform grid over the unit cell.
    #[arg(long, conflicts_with = "theta_path", required_unless_present = "theta_path")]
    theta_grid: Option<usize>,
    /// Explicit points, e.g. "0.1;0.2" or "0.1,0.3;0.2,0.3" in 2D.
    #[arg(long)]
    theta_path: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// hf, integral or fd.
    #[arg(long, default_value = "hf")]
    velocity_method: String,
    #[arg(long)]
    verify_gradients: bool,
    #[arg(long, default_value_t = bloch_core::velocity::DEFAULT_FD_STEP)]
    fd_step: f64,
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long)]
    theta_grid: usize,
    #[arg(long, default_value_t = DEFAULT_BOUND_TOL)]
    tol: f64,
    #[arg(long)]
    report: PathBuf,
    /// Check an existing band table instead of sweeping.
    #[arg(long)]
    table: Option<PathBuf>,
}

fn load_medium(path: &Path) -> anyhow::Result<PeriodicMedium> {
    PeriodicMedium::load(path).with_context(|| format!("loading medium {}", path.display()))
}

fn sweep_config(args: &SweepArgs) -> SweepConfig {
    let mut config = SweepConfig::new(args.bands, args.cutoff);
    config.gap_tol = args.gap_tol;
    config.parallel = !args.serial;
    config
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn fmt_theta(theta: &[f64]) -> String {
    theta.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
}

fn run_bands(args: BandsArgs) -> anyhow::Result<ExitCode> {
    let medium = load_medium(&args.sweep.medium)?;
    let dim = medium.dimension();
    let thetas = match (&args.theta_grid, &args.theta_path) {
        (Some(g), None) => harness::theta_grid(dim, *g, args.sweep.grid_kind.into()),
        (None, Some(p)) => harness::parse_theta_path(p, dim)?,
        _ => bail!("give exactly one of --theta-grid and --theta-path"),
    };
    if thetas.is_empty() {
        bail!("empty theta set");
    }
    let mut config = sweep_config(&args.sweep);
    config.method = args.velocity_method;
    config.verify_gradients = args.verify_gradients;
    config.fd_step = args.fd_step;

    let table = band_structure(&medium, &thetas, &config)?;
    table.write_csv(create(&args.out)?)?;
    if let Some(plot) = &args.plot_data {
        table.write_plot_data(create(plot)?)?;
    }

    for r in table.records.iter().filter(|r| r.skipped.is_some()) {
        eprintln!(
            "theta {} band {}: {}, velocity skipped",
            fmt_theta(&r.theta),
            r.band,
            r.skipped.unwrap()
        );
    }
    println!(
        "wrote {} records ({} theta points, {} bands) to {}",
        table.records.len(),
        thetas.len(),
        args.sweep.bands,
        args.out.display()
    );
    if let Some(check) = &table.gradient_check {
        println!(
            "gradients compared at {} points ({} without fd): max hf/integral {:.3e}, hf/fd {:.3e}, integral/fd {:.3e}",
            check.compared, check.fd_skipped, check.max_hf_integral, check.max_hf_fd, check.max_integral_fd
        );
        if !check.passed() {
            for f in &check.failures {
                eprintln!(
                    "gradient disagreement at theta {} band {}: hf {:?} integral {:?} fd {:?}",
                    fmt_theta(&f.theta),
                    f.band,
                    f.hf,
                    f.integral,
                    f.fd
                );
            }
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let medium = load_medium(&args.sweep.medium)?;
    let table = match &args.table {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let t = BandTable::read_csv(BufReader::new(f), medium.speed_bound().c_max)?;
            if t.dimension != medium.dimension() {
                bail!("table dimension {} does not match the medium", t.dimension);
            }
            t
        }
        None => {
            let thetas = harness::theta_grid(medium.dimension(), args.theta_grid, args.sweep.grid_kind.into());
            band_structure(&medium, &thetas, &sweep_config(&args.sweep))?
        }
    };
    let report = verify_bound(&table, args.tol);
    report.write_json(create(&args.report)?)?;
    println!(
        "c_max {:.12e}: {} records checked, {} degenerate and {} acoustic skipped, max |V|/c_max {:.12}",
        report.c_max, report.checked, report.skipped_degenerate, report.skipped_acoustic, report.max_ratio
    );
    if report.pass {
        println!("PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &report.violations {
            eprintln!(
                "violation at theta {} band {}: |V| = {:.12e} ({:.12} c_max)",
                fmt_theta(&v.theta),
                v.band,
                v.speed,
                v.ratio
            );
        }
        println!("FAIL: {} violations", report.violations.len());
        Ok(ExitCode::from(2))
    }
}

fn run_cmax(medium: &Path) -> anyhow::Result<ExitCode> {
    let medium = load_medium(medium)?;
    let bound = medium.speed_bound();
    println!("c_max {:.16e}", bound.c_max);
    match &bound.resolution {
        Some(res) => println!(
            "resolution {}",
            res.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x")
        ),
        None => println!("resolution exact"),
    }
    Ok(ExitCode::SUCCESS)
}

fn run_oracle(medium: &Path, theta: f64, count: usize) -> anyhow::Result<ExitCode> {
    let medium = load_medium(medium)?;
    let stack = LayerStack::from_medium(&medium)?;
    let omegas = stack.dispersion_solve(theta, count)?;
    println!("band\tomega\tlambda");
    for (i, w) in omegas.iter().enumerate() {
        println!("{}\t{:.16e}\t{:.16e}", i + 1, w, eigenvalue_of(*w));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which `verify` reserves for violations
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Bands(args) => run_bands(args),
        Command::Verify(args) => run_verify(args),
        Command::Cmax { medium } => run_cmax(&medium),
        Command::Oracle1d { medium, theta, count } => run_oracle(&medium, theta, count),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
