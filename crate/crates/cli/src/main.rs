use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use toric_kstab::curvature::weighted_scalar_curvature;
use toric_kstab::energy::{k_energy, minimize_k_energy, EnergyContext, MinimizeOptions};
use toric_kstab::io::{self, PLSpec, PolytopeSpec, PotentialSpec};
use toric_kstab::potentials::{certify_convexity, probe_grid, Normalize, PROBE_RESOLUTION};
use toric_kstab::stability::{
    boundary_norm, extremal_affine, futaki, stability_scan, ScanConfig, TestFunction,
};
use toric_kstab::{AffineFunction, Error, LabelledPolytope, Quadrature, QuadratureScheme};

mod selftest;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "toric-kstab",
    version,
    about = "Weighted K-stability toolkit for labelled polytopes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Gauss order for interior and boundary rules.
    #[arg(long, global = true)]
    scheme_order: Option<usize>,
    /// Uniform refinement levels.
    #[arg(long, global = true)]
    refine: Option<usize>,
    /// Extra refinement levels next to the boundary.
    #[arg(long, global = true)]
    grade: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for CSV, JSON and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Residual tolerance for `minimize`.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase", tag = "name")]
enum Command {
    /// Check a polytope spec and its weight.
    Validate { polytope: PathBuf },
    /// Solve for the extremal affine function.
    Extremal { polytope: PathBuf },
    /// Futaki invariant and boundary norm of a PL function or potential.
    Futaki {
        polytope: PathBuf,
        #[arg(
            long,
            conflicts_with = "potential",
            required_unless_present = "potential"
        )]
        pl: Option<PathBuf>,
        #[arg(long)]
        potential: Option<PathBuf>,
    },
    /// Sample the weighted scalar curvature on a grid.
    Curvature {
        polytope: PathBuf,
        potential: PathBuf,
        #[arg(long, default_value_t = 24)]
        resolution: usize,
    },
    /// Stability scan over creases and random PL maxima.
    Scan {
        polytope: PathBuf,
        #[arg(long, default_value_t = 500)]
        samples: usize,
    },
    /// Relative K-energy of a potential.
    Kenergy {
        polytope: PathBuf,
        potential: PathBuf,
    },
    /// Descend the K-energy from a starting potential.
    Minimize {
        polytope: PathBuf,
        potential: PathBuf,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = 6)]
        degree: u32,
    },
    /// Run the closed-form oracle checks.
    Selftest,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    command: &'a Command,
    scheme: QuadratureScheme,
    seed: u64,
    out: &'a Path,
    tol: Option<f64>,
}

enum Failure {
    Lib(Error),
    Io(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

impl Cli {
    /// Dimension of the polytope spec, when the command has one that parses.
    fn dim(&self) -> Option<usize> {
        let path = match &self.command {
            Command::Validate { polytope }
            | Command::Extremal { polytope }
            | Command::Futaki { polytope, .. }
            | Command::Curvature { polytope, .. }
            | Command::Scan { polytope, .. }
            | Command::Kenergy { polytope, .. }
            | Command::Minimize { polytope, .. } => polytope,
            Command::Selftest => return None,
        };
        io::read_json::<PolytopeSpec>(path).ok().map(|s| s.dim)
    }

    fn scheme(&self) -> QuadratureScheme {
        let mut s = self
            .dim()
            .map_or_else(QuadratureScheme::default, QuadratureScheme::for_dim);
        if let Some(o) = self.scheme_order {
            s.interior_order = o;
            s.boundary_order = o;
        }
        if let Some(r) = self.refine {
            s.refine = r;
        }
        if let Some(g) = self.grade {
            s.grade = g;
        }
        s
    }

    fn write(&self, name: &str, contents: &str) -> CliResult {
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn write_manifest(&self) -> CliResult {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Io(format!("{}: {e}", self.out.display())))?;
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            scheme: self.scheme(),
            seed: self.seed,
            out: &self.out,
            tol: self.tol,
        };
        let path = self.out.join("manifest.json");
        std::fs::write(&path, io::to_json(&manifest) + "\n")
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
    }
}

fn load_polytope(path: &Path) -> CliResult<(LabelledPolytope, AffineFunction)> {
    let (p, f) = io::read_json::<PolytopeSpec>(path)?.build()?;
    if p.dim() == 1 {
        println!("note: dimension 1 is a test dimension");
    }
    Ok((p, f))
}

fn format_affine(a: &AffineFunction) -> String {
    let scale = a
        .gradient
        .iter()
        .fold(a.constant.abs(), |m, g| m.max(g.abs()))
        .max(1.0);
    let mut s = format!("{}", a.constant);
    for (i, g) in a.gradient.iter().enumerate() {
        if g.abs() > 1e-10 * scale {
            s.push_str(&format!(" + ({g})*x{}", i + 1));
        }
    }
    s
}

fn run(cli: &Cli) -> CliResult {
    cli.write_manifest()?;
    let scheme = cli.scheme();
    match &cli.command {
        Command::Validate { polytope } => {
            let (p, f) = load_polytope(polytope)?;
            let w = toric_kstab::validate_weight(&p, &f)?;
            println!(
                "valid: dim {}, {} labels, {} vertices",
                p.dim(),
                p.labels().len(),
                p.vertices().len()
            );
            println!("delzant-like normals: {}", p.is_delzant());
            println!("weight range on vertices: [{}, {}]", w.min, w.max);
        }
        Command::Extremal { polytope } => {
            let (p, f) = load_polytope(polytope)?;
            let sol = extremal_affine(&Quadrature::new(&p, &scheme)?, &f)?;
            println!("s = {}", format_affine(&sol.affine));
            println!("coefficients = {:?}", sol.coefficients());
            println!("gram condition = {:e}", sol.condition);
            println!("gram residual = {:e}", sol.residual);
        }
        Command::Futaki {
            polytope,
            pl,
            potential,
        } => {
            let (p, f) = load_polytope(polytope)?;
            let q = Quadrature::new(&p, &scheme)?;
            let s = extremal_affine(&q, &f)?.affine;
            let x0 = p.basepoint();
            let (fut, bnorm, note) = if let Some(path) = pl {
                let v = io::read_json::<PLSpec>(path)?.build(p.dim())?;
                report_pair(&p, &q, &f, &s, &v, v.normalize(x0))?
            } else {
                let u =
                    io::read_json::<PotentialSpec>(potential.as_ref().expect("clap enforces one"))?
                        .build(&p)?;
                report_pair(&p, &q, &f, &s, &u, u.normalize(x0))?
            };
            println!("futaki = {fut}");
            println!("bnorm = {bnorm} ({note})");
            if bnorm > 0.0 {
                println!("ratio = {}", fut / bnorm);
            }
        }
        Command::Curvature {
            polytope,
            potential,
            resolution,
        } => {
            let (p, f) = load_polytope(polytope)?;
            let u = io::read_json::<PotentialSpec>(potential)?.build(&p)?;
            let rows = probe_grid(&p, *resolution)
                .into_iter()
                .map(|x| weighted_scalar_curvature(&u, &f, &x).map(|v| (x, v)))
                .collect::<Result<Vec<_>, _>>()?;
            cli.write("curvature.csv", &io::grid_csv(p.dim(), &rows))?;
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
                    (a.min(r.1), b.max(r.1))
                });
            println!("{} points, s_(u,f) in [{lo}, {hi}]", rows.len());
        }
        Command::Scan { polytope, samples } => {
            let (p, f) = load_polytope(polytope)?;
            let q = Quadrature::new(&p, &scheme)?;
            let s = extremal_affine(&q, &f)?.affine;
            let config = ScanConfig::with_total(p.dim(), *samples, cli.seed);
            let report = stability_scan(&p, &q, &f, &s, &config)?;
            cli.write("scan.csv", &io::scan_csv(&report))?;
            println!(
                "samples = {} (skipped {})",
                report.samples.len(),
                report.skipped
            );
            match report.minimizer() {
                Some(min) => {
                    println!(
                        "lambda_hat = {} (upper estimate of the uniform stability constant)",
                        min.ratio
                    );
                    println!("argmin = {} {} {}", min.id, min.family.as_str(), min.params);
                }
                None => println!("lambda_hat = none (no sample with positive boundary norm)"),
            }
        }
        Command::Kenergy {
            polytope,
            potential,
        } => {
            let (p, f) = load_polytope(polytope)?;
            let u = io::read_json::<PotentialSpec>(potential)?.build(&p)?;
            let e = k_energy(&p, &f, &u, &scheme)?;
            println!("energy = {}", e.total);
            println!("futaki = {}", e.futaki);
            println!("entropy = {}", e.entropy);
        }
        Command::Minimize {
            polytope,
            potential,
            max_iters,
            degree,
        } => {
            let (p, f) = load_polytope(polytope)?;
            let u = io::read_json::<PotentialSpec>(potential)?.build(&p)?;
            certify_convexity(&u, &p, PROBE_RESOLUTION)?;
            let ctx = EnergyContext::new(&p, &f, &scheme)?;
            let mut options = MinimizeOptions {
                max_iters: *max_iters,
                degree: *degree,
                seed: cli.seed,
                ..Default::default()
            };
            if let Some(t) = cli.tol {
                options.residual_tol = t;
            }
            let r = minimize_k_energy(&ctx, &u, &options)?;
            cli.write("history.csv", &io::history_csv(&r))?;
            cli.write(
                "final_potential.json",
                &(io::to_json(&PotentialSpec::from_potential(&r.potential)) + "\n"),
            )?;
            println!("termination = {}", r.termination.as_str());
            println!("iterations = {}", r.iterations());
            println!("energy = {}", r.energy.total);
            println!("residual = {:e}", r.final_residual());
            println!(
                "futaki = {} (solution value {})",
                r.final_futaki, r.expected_futaki
            );
            if !r.termination.converged() {
                return Err(Failure::Numerical(format!(
                    "descent did not converge ({})",
                    r.termination.as_str()
                )));
            }
        }
        Command::Selftest => {
            if !selftest::run(&scheme) {
                return Err(Failure::Numerical("selftest failed".into()));
            }
        }
    }
    Ok(())
}

/// `F(v)` and the boundary norm, using `v` itself when it is already normalized.
fn report_pair<V: TestFunction>(
    p: &LabelledPolytope,
    q: &Quadrature,
    f: &AffineFunction,
    s: &AffineFunction,
    v: &V,
    projected: V,
) -> CliResult<(f64, f64, &'static str)> {
    let fut = futaki(q, f, s, v)?;
    match boundary_norm(p, q, f, v) {
        Ok(b) => Ok((fut, b, "as given")),
        Err(Error::NotNormalized(_)) => Ok((
            fut,
            boundary_norm(p, q, f, &projected)?,
            "after normalization",
        )),
        Err(e) => Err(e.into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
