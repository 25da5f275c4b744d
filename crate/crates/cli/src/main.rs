use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dean_kawasaki::duality::solve_hj;
use dean_kawasaki::experiments::report::write_output;
use dean_kawasaki::experiments::weak_error::RowSetup;
use dean_kawasaki::experiments::{run_comparison, run_structure_suite, run_weak_error, ExperimentConfig, Manifest};
use dean_kawasaki::parallel::{map_indexed, with_threads};
use dean_kawasaki::regularization::RegSqrt;
use dean_kawasaki::rng::{path_rng, StreamFamily};
use dean_kawasaki::solver::{integrate_with, IntegrateOptions};
use dean_kawasaki::{Error, Result};

#[derive(Parser)]
#[command(name = "dk", version, about = "Regularised Dean-Kawasaki experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weak error of the SPDE and the Gaussian baseline against the exact duality value.
    WeakError(Common),
    /// Ordering of synchronously coupled solutions under refinement.
    Comparison(Common),
    /// Ensemble energy and entropy inequalities.
    Structure(Common),
    /// Exact Laplace functional and heat prediction for every N of the config.
    Duality(Common),
    /// Diagnostics along SPDE trajectories for the first N of the config.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `output` from the config, then `results`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `mc_paths` (for `simulate`: number of trajectories, default 1).
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self, override_paths: bool) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if override_paths {
            if let Some(p) = self.paths {
                cfg.mc_paths = p;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results"))
    }

    fn threads(&self) -> usize {
        self.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn run(
    name: &str,
    args: &Common,
    body: impl FnOnce(&ExperimentConfig, &Path) -> Result<(Vec<PathBuf>, serde_json::Value, i32)> + Send,
) -> Result<i32> {
    let cfg = args.load(name != "simulate")?;
    let dir = args.out_dir(&cfg);
    let start = Instant::now();
    let (outputs, summary, code) = with_threads(args.threads, || body(&cfg, &dir))?;
    let manifest = Manifest::new(name, cfg.master_seed, args.threads()).with_config(&cfg)?.finish(
        start.elapsed(),
        &outputs,
        summary,
    );
    let path = manifest.write(&dir)?;
    for p in &outputs {
        println!("wrote {}", p.display());
    }
    println!("wrote {}", path.display());
    Ok(code)
}

fn weak_error(args: &Common) -> Result<i32> {
    run("weak-error", args, |cfg, dir| {
        let report = run_weak_error(cfg)?;
        let csv = write_output(dir, "weak_error.csv", &report.to_csv())?;
        for f in &report.failures {
            eprintln!("row N = {} failed: {}", f.n_particles, f.message);
        }
        let summary = json!({
            "slope_spde": report.slope_spde,
            "slope_gaussian": report.slope_gaussian,
            "slope_heat": report.slope_heat,
            "failures": report.failures,
        });
        Ok((vec![csv], summary, report.exit_code()))
    })
}

fn comparison(args: &Common) -> Result<i32> {
    run("comparison", args, |cfg, dir| {
        let report = run_comparison(cfg)?;
        let csv = write_output(dir, "comparison.csv", &report.to_csv())?;
        let summary =
            json!({ "n_particles": report.n_particles, "lower_scale": report.lower_scale, "gap": report.gap });
        Ok((vec![csv], summary, 0))
    })
}

fn structure(args: &Common) -> Result<i32> {
    run("structure", args, |cfg, dir| {
        let report = run_structure_suite(cfg)?;
        let csv = write_output(dir, "structure.csv", &report.to_csv())?;
        let fitted = report.rows.iter().map(|r| r.entropy_ratio).fold(0.0, f64::max);
        println!("structure inequalities hold: {} (fitted entropy constant {fitted:.4})", report.passed());
        let summary = json!({
            "passed": report.passed(),
            "entropy_constant": report.entropy_constant,
            "fitted_entropy_constant": fitted,
            "sigmas": report.sigmas,
        });
        Ok((vec![csv], summary, 0))
    })
}

fn duality(args: &Common) -> Result<i32> {
    run("duality", args, |cfg, dir| {
        let mut csv = String::from("n_particles,horizon,duality_value,heat_value,gradient_sup\n");
        for (row, &n) in cfg.n_list.iter().enumerate() {
            let setup = RowSetup::new(cfg, row, n)?;
            let hj = solve_hj(&setup.phi, n, cfg.horizon)?;
            csv.push_str(&format!(
                "{n},{},{:.15e},{:.15e},{:.6e}\n",
                cfg.horizon,
                setup.duality_value,
                setup.heat_value,
                hj.gradient_sup()
            ));
        }
        let path = write_output(dir, "duality.csv", &csv)?;
        Ok((vec![path], json!({ "rows": cfg.n_list.len() }), 0))
    })
}

fn simulate(args: &Common) -> Result<i32> {
    let paths = args.paths.unwrap_or(1);
    if paths == 0 {
        return Err(Error::Config("--paths must be positive".into()));
    }
    run("simulate", args, move |cfg, dir| {
        let n = cfg.n_list[0];
        let setup = RowSetup::new(cfg, 0, n)?;
        let r = &setup.resolved;
        let reg = RegSqrt::new(r.params.delta)?;
        let options = IntegrateOptions {
            record_every: (r.steps / 200).max(1),
            solver_grid: Some(setup.solver_grid),
            track_integrals: false,
        };
        let trajectories = map_indexed(paths, |i| {
            let mut rng = path_rng(cfg.master_seed, StreamFamily::Spde, 0, i as u32);
            integrate_with(setup.initial.clone(), r.params, reg, cfg.horizon, r.dt, &mut rng, options, |_, _, _| Ok(()))
        });
        let mut csv = String::from("path_id,t,mass,energy,entropy,fisher,min_value,neg_mass\n");
        for (i, traj) in trajectories.into_iter().enumerate() {
            for (t, d) in traj?.records {
                csv.push_str(&format!(
                    "{i},{t:.8e},{:.15e},{:.10e},{:.10e},{:.10e},{:.6e},{:.6e}\n",
                    d.mass, d.energy, d.entropy, d.fisher, d.min_value, d.neg_mass
                ));
            }
        }
        let path = write_output(dir, "trajectory.csv", &csv)?;
        Ok((vec![path], json!({ "n_particles": n, "paths": paths }), 0))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::WeakError(a) => weak_error(a),
        Command::Comparison(a) => comparison(a),
        Command::Structure(a) => structure(a),
        Command::Duality(a) => duality(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
