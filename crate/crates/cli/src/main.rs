use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seaice_core::driver;
use seaice_core::state::{ElementPair, Spaces};
use seaice_core::{Config, Mesh};

#[derive(Parser)]
#[command(name = "seaice", version, about = "Least-squares finite element sea-ice simulator")]
struct Cli {
    /// Override a configuration key, e.g. `--set mesh.n=16`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the moving-cyclone scenario.
    Run {
        /// TOML configuration; built-in defaults when omitted.
        config: Option<PathBuf>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run a verification suite: derivatives, convergence, elements, or all.
    Verify { suite: String },
    /// Print statistics of the structured n x n mesh.
    MeshInfo { n: usize },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                log::error!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> seaice_core::Result<ExitCode> {
    match cli.command {
        Command::Run { config, dry_run } => {
            let config = Config::load_with_overrides(config.as_deref(), &cli.overrides)?;
            if dry_run {
                print!("{}", config.to_toml_string());
                return Ok(ExitCode::SUCCESS);
            }
            let out = driver::run(&config)?;
            println!(
                "{} steps, {} snapshots in {}",
                out.records.len(),
                out.snapshots.len(),
                config.output.dir.display()
            );
            if out.healthy() {
                Ok(ExitCode::SUCCESS)
            } else {
                let bad = out.records.iter().filter(|r| !r.gn_converged).count();
                log::warn!("Gauss-Newton did not converge in {bad} step(s)");
                Ok(ExitCode::from(2))
            }
        }
        Command::Verify { suite } => {
            let suites = seaice_core::verify::Suite::parse_list(&suite)?;
            let mut all_pass = true;
            for s in suites {
                let report = s.run()?;
                for entry in &report.entries {
                    println!("{entry}");
                }
                all_pass &= report.passed();
            }
            Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::MeshInfo { n } => {
            let mesh = Mesh::build_structured(n)?;
            let q = mesh.quality()?;
            println!("vertices        {}", mesh.n_vertices());
            println!("edges           {} ({} on the boundary)", mesh.n_edges(), mesh.n_boundary_edges());
            println!("triangles       {}", mesh.n_triangles());
            println!("min angle       {:.2} deg", q.min_angle_deg);
            println!("max aspect      {:.4}", q.max_aspect_ratio);
            println!("area range      {:.6e} .. {:.6e}", q.min_area, q.max_area);
            for pair in [ElementPair::Rt0P1, ElementPair::Rt1P2] {
                let s = Spaces::new(&mesh, pair)?;
                println!(
                    "{:<15} stress {} + velocity {} + tracers 2 x {}",
                    pair.to_string(),
                    s.sigma.n_global(),
                    s.u.n_global(),
                    s.tracer.n_global()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
