use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lbhe::config::{BoundaryKind, Placement, SimulationConfig};
use lbhe::equilibrium::{entropy_region_scan, sigma_grid, Equilibrium};
use lbhe::harness::{solution_by_name, Experiment, Refinement};
use lbhe::lattice::Lattice;
use lbhe::solver::Simulation;
use lbhe::stability::{eigenvalues, l2_region_scan, population_matrix, VerdictOptions};
use lbhe::Result;
use serde_json::json;

#[derive(Parser)]
#[command(name = "lbhe", version, about = "Fourth-order lattice Boltzmann solver for linear hyperbolic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the velocity table and max |M M~ - I| for a dimension.
    LatticeCheck {
        #[arg(short, long)]
        d: usize,
        #[arg(short, long, default_value_t = 1.0)]
        c: f64,
    },
    /// Moment vector, weights, margin and fourth-moment interval as JSON.
    Weights {
        #[arg(short, long)]
        d: usize,
        /// Comma-separated transport velocity.
        #[arg(short, long, value_delimiter = ',', allow_hyphen_values = true)]
        u: Vec<f64>,
        #[arg(short, long, default_value_t = 1.0)]
        c: f64,
        #[arg(short, long, default_value_t = 0.5)]
        g: f64,
    },
    /// Entropy-stability raster over a sigma grid as CSV.
    EntropyRegion {
        #[arg(short, long)]
        d: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short, long, default_value_t = 0.5)]
        g: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation from a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for phi.csv and trace.csv.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Von Neumann stability raster as CSV.
    L2Region {
        #[arg(short, long)]
        d: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short, long, default_value_t = 0.5)]
        g: f64,
        /// Wavenumber samples per axis.
        #[arg(long, default_value_t = 32)]
        xi: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Stop at the first unstable wavenumber (max_rho becomes a lower bound).
        #[arg(long)]
        stop_early: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues of the amplification matrix as JSON.
    Spectrum {
        #[arg(short, long)]
        d: usize,
        #[arg(short, long, value_delimiter = ',', allow_hyphen_values = true)]
        sigma: Vec<f64>,
        #[arg(short, long, default_value_t = 0.5)]
        g: f64,
        #[arg(short, long, value_delimiter = ',', allow_hyphen_values = true)]
        xi: Vec<f64>,
    },
    /// Run a convergence ladder for a registered example.
    RunExample {
        /// example1, example2 or example3
        name: String,
        #[arg(long)]
        dimension: Option<usize>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        u: Option<Vec<f64>>,
        #[arg(long)]
        placement: Option<Placement>,
        /// periodic or dirichlet
        #[arg(long)]
        boundary: Option<String>,
        #[arg(long)]
        boundary_order: Option<u8>,
        #[arg(long)]
        init_order: Option<u8>,
        /// Cells per unit length, e.g. 10,20,40.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        refine: Option<Refinement>,
        #[arg(long)]
        end_time: Option<f64>,
        /// Fourth-moment blend parameter.
        #[arg(long)]
        g: Option<f64>,
        #[arg(long, default_value_t = 0)]
        trace_every: u64,
        /// Keep running when no positive-weight equilibrium exists.
        #[arg(long)]
        allow_infeasible: bool,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct GridArgs {
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    hi: f64,
    /// Points per scanned axis.
    #[arg(short, long, default_value_t = 101)]
    n: usize,
    /// Values for axes beyond the first two (d >= 3 slices).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    fixed: Vec<f64>,
}

impl GridArgs {
    fn points(&self, d: usize) -> Result<Vec<Vec<f64>>> {
        let scanned = d.min(2);
        if self.fixed.len() != d - scanned {
            return Err(lbhe::Error::InvalidParameter(format!("--fixed needs {} values", d - scanned)));
        }
        Ok(sigma_grid(scanned, self.lo, self.hi, self.n)
            .into_iter()
            .map(|mut s| {
                s.extend_from_slice(&self.fixed);
                s
            })
            .collect())
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn sigma_columns(d: usize) -> String {
    (1..=d).map(|a| format!("sigma{a}")).collect::<Vec<_>>().join(",")
}

fn joined(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

fn lattice_check(d: usize, c: f64) -> Result<bool> {
    let lat = Lattice::new(d, c)?;
    println!("d = {d}, q = {}, c = {c}", lat.q());
    println!("{:>4}  velocity", "k");
    for (k, v) in lat.velocities().iter().enumerate() {
        println!("{k:>4}  ({})", joined(v));
    }
    let residual = lat.identity_residual();
    println!("max |M M~ - I| = {residual:.3e}");
    Ok(residual <= 1e-13 * c.powi(4).max(c.powi(-4)))
}

fn run_config_file(config: &Path, out: &Path) -> Result<()> {
    let cfg = SimulationConfig::from_json(&std::fs::read_to_string(config)?)?;
    let exact = solution_by_name(&cfg.solution.name, &cfg.u, cfg.source)?;
    let mut sim = Simulation::new(&cfg, exact.clone())?;
    let trace_every = if cfg.trace_every == 0 { 10 } else { cfg.trace_every };
    let report = sim.run_until(cfg.end_time, trace_every)?;
    std::fs::create_dir_all(out)?;
    sim.write_phi_csv(BufWriter::new(File::create(out.join("phi.csv"))?))?;
    report.trace.write_csv(BufWriter::new(File::create(out.join("trace.csv"))?))?;
    let summary = json!({
        "steps": sim.steps_taken(),
        "time": sim.time(),
        "rmse": sim.rmse(exact.as_ref()),
        "divergence": report.divergence,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_example(
    name: &str,
    dimension: Option<usize>,
    u: Option<Vec<f64>>,
    placement: Option<Placement>,
    boundary: Option<String>,
    boundary_order: Option<u8>,
    init_order: Option<u8>,
    sizes: Option<Vec<usize>>,
    refine: Option<Refinement>,
    end_time: Option<f64>,
    g: Option<f64>,
    trace_every: u64,
    allow_infeasible: bool,
    out: &Path,
) -> Result<()> {
    let mut e = Experiment::by_name(name, dimension)?;
    if let Some(u) = u {
        e.u = u;
    }
    if let Some(p) = placement {
        e.placement = p;
        e.boundary = BoundaryKind::Dirichlet;
    }
    if let Some(b) = boundary {
        e.boundary = match b.as_str() {
            "periodic" => BoundaryKind::Periodic,
            "dirichlet" => BoundaryKind::Dirichlet,
            other => return Err(lbhe::Error::Config(format!("unknown boundary '{other}'"))),
        };
    }
    if let Some(p) = boundary_order {
        e.boundary_order = p;
    }
    if let Some(k) = init_order {
        e.init_order = k;
    }
    if let Some(s) = sizes {
        e.sizes = s;
    }
    if let Some(r) = refine {
        e.refinement = r;
    }
    if let Some(t) = end_time {
        e.end_time = t;
    }
    if let Some(g) = g {
        e.g = g;
    }
    e.trace_every = trace_every;
    e.allow_infeasible = allow_infeasible;
    std::fs::create_dir_all(out)?;
    let report = e.run()?;
    for level in &report.levels {
        if !level.trace.records.is_empty() {
            level.trace.write_csv(BufWriter::new(File::create(out.join(format!("trace_{}.csv", level.size)))?))?;
        }
    }
    report.write_csv(BufWriter::new(File::create(out.join("report.csv"))?))?;
    print!("{}", report.table());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::LatticeCheck { d, c } => match lattice_check(d, c) {
            Ok(true) => return ExitCode::SUCCESS,
            Ok(false) => {
                eprintln!("identity check failed");
                return ExitCode::FAILURE;
            }
            Err(e) => Err(e),
        },
        Command::Weights { d, u, c, g } => (|| {
            let lat = Lattice::new(d, c)?;
            let eq = Equilibrium::new_unchecked(&lat, &u, g)?;
            let v = json!({
                "epsilon": eq.epsilon,
                "omega": eq.omega,
                "margin": eq.margin(),
                "entropy_stable": eq.is_entropy_stable(),
                "fourth_moment_interval": eq.bounds,
                "m4": eq.m4,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(())
        })(),
        Command::EntropyRegion { d, grid, g, out } => (|| {
            let pts = grid.points(d)?;
            let region = entropy_region_scan(d, &pts, g)?;
            let mut w = output(&out)?;
            writeln!(w, "{},stable,margin", sigma_columns(d))?;
            for p in region {
                writeln!(w, "{},{},{:.6e}", joined(&p.sigma), p.stable as u8, p.margin)?;
            }
            Ok(())
        })(),
        Command::Run { config, out } => run_config_file(&config, &out),
        Command::L2Region { d, grid, g, xi, tol, stop_early, out } => (|| {
            let pts = grid.points(d)?;
            let opts = VerdictOptions { tol, stop_early, ..Default::default() };
            let verdicts = l2_region_scan(d, &pts, g, xi, &opts)?;
            let mut w = output(&out)?;
            writeln!(w, "{},max_rho,l2_stable,entropy_stable,marginal", sigma_columns(d))?;
            for v in verdicts {
                writeln!(
                    w,
                    "{},{:.12},{},{},{}",
                    joined(&v.sigma),
                    v.max_rho,
                    v.l2_stable as u8,
                    v.entropy_stable as u8,
                    v.marginal as u8
                )?;
            }
            Ok(())
        })(),
        Command::Spectrum { d, sigma, g, xi } => (|| {
            let lat = Lattice::new(d, 1.0)?;
            let eq = Equilibrium::new_unchecked(&lat, &sigma, g)?;
            if xi.len() != d {
                return Err(lbhe::Error::InvalidParameter(format!("--xi needs {d} values")));
            }
            let ev = eigenvalues(&population_matrix(&lat, &eq.omega, &xi))?;
            let list: Vec<_> = ev.iter().map(|z| json!({"re": z.re, "im": z.im, "abs": z.norm()})).collect();
            let rho = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
            println!("{}", serde_json::to_string_pretty(&json!({"spectral_radius": rho, "eigenvalues": list}))?);
            Ok(())
        })(),
        Command::RunExample {
            name,
            dimension,
            u,
            placement,
            boundary,
            boundary_order,
            init_order,
            sizes,
            refine,
            end_time,
            g,
            trace_every,
            allow_infeasible,
            out,
        } => run_example(
            &name,
            dimension,
            u,
            placement,
            boundary,
            boundary_order,
            init_order,
            sizes,
            refine,
            end_time,
            g,
            trace_every,
            allow_infeasible,
            &out,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
