use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scfem::driver::{AdaptiveState, RunStatus};
use scfem::output::{emit_svg_plot, manifest_json, snapshot_mesh, write_csv, RawConfig, RunConfig};
use scfem::problems::problem_by_name;

#[derive(Parser)]
#[command(name = "scfem", version, about = "Adaptive stochastic collocation finite element solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop on a model problem.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cookie | fourier
    #[arg(long)]
    problem: Option<String>,
    /// leja | cc
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    /// Number of random parameters.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    theta_x: Option<f64>,
    #[arg(long)]
    theta_y: Option<f64>,
    #[arg(long)]
    vartheta: Option<f64>,
    #[arg(long)]
    estimate_period: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn raw(&self) -> scfem::Result<RawConfig> {
        let mut raw = match &self.config {
            Some(p) => RawConfig::parse(&fs::read_to_string(p)?)?,
            None => RawConfig::default(),
        };
        let mut flags = RawConfig::default();
        let pairs: [(&str, Option<String>); 10] = [
            ("problem", self.problem.clone()),
            ("family", self.family.clone()),
            ("tol", self.tol.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("theta_x", self.theta_x.map(|v| v.to_string())),
            ("theta_y", self.theta_y.map(|v| v.to_string())),
            ("vartheta", self.vartheta.map(|v| v.to_string())),
            ("estimate_period", self.estimate_period.map(|v| v.to_string())),
            ("max_iter", self.max_iter.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                flags.set(k, v);
            }
        }
        raw.merge(&flags);
        Ok(raw)
    }
}

fn run(args: &RunArgs) -> scfem::Result<RunStatus> {
    let raw = args.raw()?;
    let config = RunConfig::from_raw(&raw)?;
    let out =
        config.out.clone().ok_or_else(|| scfem::Error::Config(vec!["out must name an output directory".into()]))?;
    fs::create_dir_all(&out)?;

    let problem = problem_by_name(&config.problem, Some(config.m))?;
    let mut state = AdaptiveState::new(problem, config.driver.clone())?;
    let csv = out.join("run.csv");
    let mut history = Vec::new();
    let outcome = state.run_with(|_, step| {
        history.push(step.record.clone());
        let r = &step.record;
        eprintln!(
            "iter {:>3} {:<10} dof {:>9} colpts {:>5} mu_bar {:.3e} tau_bar {:.3e} eta {:.3e}",
            r.iter, r.kind, r.dof, r.n_colpts, r.mu_bar, r.tau_bar, r.eta
        );
        // keep a usable log even if a later step fails
        let _ = write_csv(&history, &csv);
    });

    write_csv(&outcome.records, &csv)?;
    fs::write(out.join("manifest.json"), manifest_json(&raw, &config, &outcome, state.audit())?)?;
    if outcome.records.len() >= 2 {
        emit_svg_plot(&outcome.records, out.join("convergence.svg"))?;
    }
    snapshot_mesh(state.mesh(), out.join("mesh_final.txt"))?;
    if let Some(e) = &outcome.error {
        eprintln!("run aborted: {e}");
    }
    Ok(outcome.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(RunStatus::Converged) => ExitCode::SUCCESS,
            Ok(RunStatus::MaxIterations) => {
                eprintln!("tolerance not reached within the iteration limit");
                ExitCode::from(2)
            }
            Ok(RunStatus::Failed) => ExitCode::from(3),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
