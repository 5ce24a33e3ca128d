use clap::{Args, Parser, Subcommand};
use commuteproj::harness::{run, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Commuting projector experiments. Each run prints one line per CSV row
/// and exits non-zero if any row FAILs.
#[derive(Parser)]
#[command(name = "commuteproj", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Commuting residual and well-posedness checks of the H(curl) projector.
    CheckCommute(Flags),
    /// Projection property on random conforming ND and RT fields.
    CheckProject(Flags),
    /// Convergence rate of the global best approximation.
    Convergence(Flags),
    /// Local-global equivalence ratios.
    Equivalence(Flags),
    /// Constrained versus unconstrained minima on one tetrahedron over p.
    SingleTet(Flags),
    /// Mixed discretization against the local quantities.
    Mixed(Flags),
}

#[derive(Args)]
struct Flags {
    /// `key = value` file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh file or generator (`reftet`, `cube-kuhn:refined=k,bc=D|N|mixed`).
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    /// canonical | alternative
    #[arg(long)]
    variant: Option<String>,
    /// trig, trig-low, trig-x, trig-n, sinxy, poly, poly-<k>, grad, random
    #[arg(long)]
    field: Option<String>,
    /// Uniform refinements of the mesh.
    #[arg(long)]
    refine: Option<String>,
    #[arg(long)]
    quad_degree: Option<String>,
    #[arg(long)]
    tol_feas: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// CSV output path.
    #[arg(long)]
    out: Option<String>,
    /// Inclusive degree range `a..b`.
    #[arg(long)]
    p_sweep: Option<String>,
    /// Record the well-posedness checks without stopping on violations.
    #[arg(long)]
    no_assert: bool,
    /// Random fields per degree (check-project).
    #[arg(long)]
    samples: Option<String>,
    /// Perturb the H(div) patch field at this vertex (fault injection).
    #[arg(long)]
    corrupt_sigma: Option<String>,
}

fn config(name: &str, f: &Flags) -> commuteproj::Result<ExperimentConfig> {
    let mut c = ExperimentConfig::for_command(name);
    if let Some(p) = &f.config {
        c.apply_file(p)?;
    }
    let pairs = [
        ("mesh", &f.mesh),
        ("degree", &f.degree),
        ("variant", &f.variant),
        ("field", &f.field),
        ("refine", &f.refine),
        ("quad-degree", &f.quad_degree),
        ("tol-feas", &f.tol_feas),
        ("seed", &f.seed),
        ("out", &f.out),
        ("p-sweep", &f.p_sweep),
        ("samples", &f.samples),
        ("corrupt-sigma", &f.corrupt_sigma),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            c.set(k, v)?;
        }
    }
    if f.no_assert {
        c.no_assert = true;
    }
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = match &cli.cmd {
        Cmd::CheckCommute(f) => ("check-commute", f),
        Cmd::CheckProject(f) => ("check-project", f),
        Cmd::Convergence(f) => ("convergence", f),
        Cmd::Equivalence(f) => ("equivalence", f),
        Cmd::SingleTet(f) => ("single-tet", f),
        Cmd::Mixed(f) => ("mixed", f),
    };
    let result = config(name, flags).and_then(|c| {
        let rep = run(name, &c)?;
        print!("{}", rep.render());
        if let Some(out) = &c.out {
            rep.save(out)?;
            eprintln!("wrote {}", out.display());
        }
        Ok(rep)
    });
    match result {
        Ok(rep) if rep.failed() => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
