//! Command-line front end: one-off simulations, parameter sweeps, trace
//! inspection and oracle self-checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridcomp::harness::{emit_csv, emit_plot, run_method, run_sweep, Method, SweepSpec};
use hybridcomp::model::{mse_analytic, mse_monte_carlo, SymbolDistribution};
use hybridcomp::oracle::{eta_grid_search, kernel_qp, qp_active_set, random_qp, random_slot_instance};
use hybridcomp::scenario::stream_rng;
use hybridcomp::subsolvers::{eta_closed_form, KernelSettings};
use hybridcomp::{build_scenario, complexity_estimate, Error, IterationTrace, Preset, SystemConfig};

#[derive(Parser)]
#[command(name = "hybridcomp", version, about = "Energy-minimizing AirComp + edge offloading simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; overrides --preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named parameter set.
    #[arg(long, default_value = "desk", value_parser = ["full", "desk"])]
    preset: String,
}

impl ConfigArgs {
    fn load(&self) -> hybridcomp::Result<SystemConfig> {
        let config = match &self.config {
            Some(path) => SystemConfig::load(path)?,
            None => SystemConfig::preset(self.preset.parse::<Preset>()?),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one scenario with one method.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Scenario seed; defaults to the configuration's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "bcd", value_parser = ["bcd", "equal", "inversion"])]
        method: String,
        /// Directory for scenario, decisions and trace files.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run a sweep described by a TOML file.
    Sweep {
        /// Sweep description (TOML).
        spec: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "DIR", default_value = "sweep_out")]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Pretty-print an iteration trace.
    Inspect {
        /// JSONL trace written by `simulate --out`.
        trace: PathBuf,
    },
    /// Check the models and solvers against their reference implementations.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random instances per check.
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate {
            config,
            seed,
            method,
            out,
        } => simulate(&config, seed, &method, out.as_deref()),
        Command::Sweep { spec, config, out, jobs } => sweep(&spec, &config, &out, jobs),
        Command::Inspect { trace } => inspect(&trace),
        Command::Oracle { seed, count } => oracle(seed, count),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } | Error::DegenerateSlot { .. } => 2,
        Error::Io(_) => 4,
        Error::Config(_) | Error::Usage(_) | Error::Parse(_) | Error::Domain(_) | Error::Shape(_) => 3,
    }
}

fn simulate(args: &ConfigArgs, seed: Option<u64>, method: &str, out: Option<&Path>) -> hybridcomp::Result<ExitCode> {
    let config = args.load()?;
    let method: Method = method.parse()?;
    let seed = seed.unwrap_or(config.rng_seed);
    let scenario = build_scenario(&config, seed)?;
    let run = run_method(&config, &scenario, method, seed)?;
    let summary = serde_json::json!({
        "method": method.name(),
        "seed": seed,
        "energy_J": run.energy,
        "iterations": run.iterations,
        "termination": run.trace.as_ref().map(|t| t.termination),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        scenario.save(&dir.join("scenario.json"))?;
        run.decisions.save(&dir.join("decisions.json"))?;
        if let Some(trace) = &run.trace {
            trace.save(&dir.join("trace.jsonl"))?;
        }
        std::fs::write(dir.join("config.toml"), config.to_toml_string())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(spec_path: &Path, args: &ConfigArgs, out: &Path, jobs: usize) -> hybridcomp::Result<ExitCode> {
    let base = args.load()?;
    let spec = SweepSpec::load(spec_path)?;
    let table = run_sweep(&base, &spec, jobs)?;
    std::fs::create_dir_all(out)?;
    let csv_name = format!("sweep_{}.csv", spec.parameter.name());
    emit_csv(&table, &out.join(&csv_name))?;
    let files = emit_plot(&table, spec.parameter.name(), out, &csv_name)?;
    let infeasible = table.iter().filter(|r| !r.feasible).count();
    println!(
        "{} cells ({infeasible} infeasible) -> {}, {}, {}",
        table.len(),
        out.join(&csv_name).display(),
        files.svg.display(),
        files.script.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn inspect(path: &Path) -> hybridcomp::Result<ExitCode> {
    let trace = IterationTrace::load(path)?;
    let e = trace.initial;
    println!(
        "{:>4}  {:>12}  {:>12}  {:>12}  {:>12}  {:>8}  {:>8}",
        "iter", "total [J]", "edge [J]", "aircomp [J]", "comp [J]", "accepted", "resched"
    );
    println!(
        "{:>4}  {:>12.6e}  {:>12.6e}  {:>12.6e}  {:>12.6e}",
        0, e.total, e.e_edge_tran, e.e_aircomp_tran, e.e_comp
    );
    for r in &trace.records {
        let e = r.energy;
        println!(
            "{:>4}  {:>12.6e}  {:>12.6e}  {:>12.6e}  {:>12.6e}  {:>8}  {:>8}",
            r.iteration, e.total, e.e_edge_tran, e.e_aircomp_tran, e.e_comp, r.accepted, r.schedule_changed
        );
    }
    println!("termination: {:?}", trace.termination);
    Ok(ExitCode::SUCCESS)
}

fn oracle(seed: u64, count: usize) -> hybridcomp::Result<ExitCode> {
    let mut rng = stream_rng(seed, 0);
    let mut all = true;
    let mut report = |name: &str, ok: bool, detail: String| {
        all &= ok;
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };

    let mut worst = 0.0f64;
    for _ in 0..count {
        let inst = random_slot_instance(&mut rng, 4, 3)?;
        let exact = mse_analytic(&inst.config, &inst.scenario, &inst.decisions, 0);
        let sampled = mse_monte_carlo(
            &inst.config,
            &inst.scenario,
            &inst.decisions,
            0,
            200_000,
            SymbolDistribution::Gaussian,
            &mut rng,
        );
        worst = worst.max((sampled - exact).abs() / exact);
    }
    report("mse monte carlo", worst < 0.02, format!("worst relative gap {worst:.2e} (2e5 samples)"));

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..count {
        let mut inst = random_slot_instance(&mut rng, 4, 3)?;
        inst.decisions.rx_scaling[0] = eta_closed_form(&inst.config, &inst.scenario, &inst.decisions, 0)?;
        let at_star = mse_analytic(&inst.config, &inst.scenario, &inst.decisions, 0);
        let (_, grid) = eta_grid_search(&inst.config, &inst.scenario, &inst.decisions, 0, 200)?;
        worst = worst.max(at_star - grid);
    }
    report("closed-form eta", worst <= 1e-8, format!("largest grid improvement {worst:.2e}"));

    let settings = KernelSettings {
        feas_tol: 1e-10,
        opt_tol: 1e-10,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for _ in 0..count {
        let qp = random_qp(&mut rng, 5);
        let Some((_, want)) = qp_active_set(&qp, 1e-9) else { continue };
        let got = kernel_qp(&qp, &settings).objective;
        worst = worst.max(if got.is_nan() { f64::INFINITY } else { (got - want).abs() });
    }
    report("convex kernel", worst <= 1e-6, format!("worst objective gap {worst:.2e}"));

    let c = complexity_estimate(&SystemConfig::desk());
    println!(
        "info complexity (desk): omega {:.3e}, theta {:.3e}, xi {:.3e}, total {:.3e}",
        c.omega, c.theta, c.xi, c.total
    );
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
