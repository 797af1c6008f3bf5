//! `elastowave` command line: runs scenarios from JSON configurations.
//!
//! Exit codes: 0 success, 2 invalid configuration or I/O, 3 geometric
//! condition violated, 4 solver failure, 5 a check failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elastowave::scenario::{
    convergence_study, resolvent_check, run_scenario, spectrum_summary, write_outputs, Check, Problem,
    ScenarioConfig,
};
use elastowave::{Error, Result};

#[derive(Parser)]
#[command(name = "elastowave", version, about = "Damped elastic waves with an acoustic inner boundary")]
struct Cli {
    /// Run everything on a single thread.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (JSON).
    config: PathBuf,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ScenarioConfig, PathBuf)> {
        let config = ScenarioConfig::load(&self.config).map_err(|e| e.context(&self.config.display().to_string()))?;
        let dir = self.output.clone().unwrap_or_else(|| config.output.clone());
        Ok((config, dir))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate in time and write mesh, energy trace and summary.
    Simulate(Common),
    /// Check the generator pairing and the resolvent on random states.
    ResolventCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rightmost eigenvalues of the discrete generator.
    Spectrum(Common),
    /// Simulate with every identity audit and the trace constant enabled.
    Audit(Common),
    /// Audits on `levels` successively halved meshes.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        levels: usize,
    },
}

fn configure_threads(deterministic: bool) -> Result<()> {
    let threads = if deterministic {
        Some(1)
    } else {
        match std::env::var("ELASTOWAVE_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::Parameter(format!("ELASTOWAVE_THREADS must be a positive integer, got {v:?}")))?,
            ),
            Err(_) => None,
        }
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn report_checks(checks: &[Check]) -> bool {
    let mut ok = true;
    for c in checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        println!("{tag} {:<36} {:>12.4e} (tolerance {:.1e})", c.name, c.value, c.tolerance);
        ok &= c.passed;
    }
    ok
}

/// Returns whether every check passed.
fn simulate(config: &ScenarioConfig, dir: &Path) -> Result<bool> {
    let out = run_scenario(config)?;
    write_outputs(&out, dir)?;
    let s = &out.summary;
    println!("h = {}, {} cells, {} + {} unknowns", s.h, s.n_cells, s.n_u, s.n_z);
    println!("E(0) = {:.6e}, E(T) = {:.6e}", s.energy.e0, s.energy.e_final);
    match s.decay.fit() {
        Some(f) => println!("decay fit: K1 = {:.4}, K2 = {:.4} on [{}, {}]", f.k1, f.k2, f.window[0], f.window[1]),
        None => println!("decay fit rejected"),
    }
    if let Some(sp) = &s.spectrum {
        println!("spectral abscissa {:.6e}", sp.abscissa);
    }
    if let Some(p) = &s.poincare {
        println!("C_p = {:.6}", p.c_p);
    }
    Ok(report_checks(&s.checks))
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads(cli.deterministic)?;
    match cli.command {
        Command::Simulate(c) => {
            let (config, dir) = c.load()?;
            simulate(&config, &dir)
        }
        Command::Audit(c) => {
            let (mut config, dir) = c.load()?;
            config.analysis.audit = true;
            config.analysis.poincare = true;
            config.time.store_stride = Some(1);
            config.validate()?;
            simulate(&config, &dir)
        }
        Command::ResolventCheck { common, samples, seed } => {
            if samples == 0 {
                return Err(Error::Parameter("--samples must be positive".into()));
            }
            let (config, dir) = common.load()?;
            let problem = Problem::build(&config)?;
            let r = resolvent_check(&problem, samples, seed)?;
            write_json(&dir, "resolvent.json", &r)?;
            Ok(report_checks(&r.checks))
        }
        Command::Spectrum(c) => {
            let (config, dir) = c.load()?;
            let problem = Problem::build(&config)?;
            let sp = spectrum_summary(&problem.sys, config.analysis.n_modes, None)?;
            write_json(&dir, "spectrum.json", &sp)?;
            for m in &sp.modes {
                println!("{:+.10e} {:+.10e}i", m.re, m.im);
            }
            println!("abscissa {:.6e}, energy rate {:.6e}", sp.abscissa, sp.energy_rate);
            Ok(true)
        }
        Command::Converge { common, levels } => {
            let (config, dir) = common.load()?;
            let table = convergence_study(&config, levels)?;
            std::fs::create_dir_all(&dir)?;
            table.write_csv(&dir.join("convergence.csv"))?;
            write_json(&dir, "convergence.json", &table)?;
            for (k, l) in table.levels.iter().enumerate() {
                println!("h = {:<10} flux {:.4e}  C_p {:.6}", l.h, l.flux_residual, l.c_p);
                if k > 0 {
                    for o in &table.orders[k - 1] {
                        let order = if o.at_round_off { "round-off".to_string() } else { format!("{:.3}", o.order) };
                        println!("    {:<24} order {order}", o.identity);
                    }
                }
            }
            let mut ok = true;
            for l in &table.levels {
                for name in &l.failed_checks {
                    println!("FAIL h = {}: {name}", l.h);
                    ok = false;
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(5),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
