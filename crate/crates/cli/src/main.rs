//! `hhme`: theory tables, finite-population simulation, dataset ingestion and
//! the reference-table report for mean estimation under non-response and
//! measurement error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hhme_core::ingest;
use hhme_core::montecarlo::{self, grid_around, Coefficients};
use hhme_core::popgen::{generate_population, parameters_from_population, PopulationSpec};
use hhme_core::report::{self, SimulationReport};
use hhme_core::{theory, ParameterSet, RunConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_TOLERANCE: u8 = 3;

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "hhme", version, about = "Mean estimation under non-response and measurement error")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form MSE table for a design
    Theory(TheoryArgs),
    /// Monte Carlo check of the closed-form MSEs on a generated population
    Simulate(SimulateArgs),
    /// Estimate design parameters from a paired true/measured dataset
    Ingest(IngestArgs),
    /// Printed vs recomputed reference table with discrepancy report
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct TheoryArgs {
    /// Design parameters (TOML)
    config: PathBuf,
    #[arg(long)]
    json: bool,
    /// Print only the total MSE column
    #[arg(long)]
    no_decomposition: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Design parameters (TOML); must set N
    config: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    reps: u64,
    #[arg(long, env = "HHME_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Maximum |relative deviation| from theory before exiting with status 3
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
    /// Fixed regression slope instead of b*
    #[arg(long, requires = "m2")]
    b: Option<f64>,
    /// Fixed class weight m2 (m1 = 1 - m2) instead of m2*
    #[arg(long, requires = "b")]
    m2: Option<f64>,
    /// Scan MSE(t_p) over m2 in m2* +/- 0.5 (step 0.01)
    #[arg(long)]
    grid_m2: bool,
    /// Write the m2 scan as CSV (implies --grid-m2)
    #[arg(long, value_name = "PATH")]
    grid_out: Option<PathBuf>,
    /// Write per-replication estimates as CSV (at most 100000 rows)
    #[arg(long, value_name = "PATH")]
    dump_csv: Option<PathBuf>,
    /// Write the generated population as CSV
    #[arg(long, value_name = "PATH")]
    dump_population: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct IngestArgs {
    /// CSV with columns y_true, x_true, y_meas, x_meas, stratum
    dataset: PathBuf,
    /// Subsampling denominator (not recoverable from data)
    #[arg(long)]
    k: Option<f64>,
    /// Override the non-response weight estimated from the stratum column
    #[arg(long)]
    w2: Option<f64>,
    /// Sample size for the output design (default: number of rows)
    #[arg(long)]
    n: Option<usize>,
    /// Population size for the output design
    #[arg(long = "population-size", value_name = "N")]
    population_size: Option<usize>,
    /// Write the design here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Theory(a) => theory_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::Reproduce(a) => reproduce_cmd(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .chain()
                .find_map(|c| c.downcast_ref::<hhme_core::Error>())
                .is_some_and(hhme_core::Error::is_validation);
            ExitCode::from(if validation { EXIT_VALIDATION } else { EXIT_USAGE })
        }
    }
}

fn print(text: &str) -> Result<u8> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(0)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_config(path: &Path) -> Result<ParameterSet> {
    ParameterSet::load(path).with_context(|| format!("invalid config {}", path.display()))
}

fn theory_cmd(a: TheoryArgs) -> Result<u8> {
    let p = load_config(&a.config)?.validate()?;
    let rep = report::theory_report(&p)?;
    if a.json {
        print(&rep.to_json()?)
    } else {
        print(&rep.to_text(!a.no_decomposition))
    }
}

fn simulate_cmd(a: SimulateArgs) -> Result<u8> {
    let design = load_config(&a.config)?.validate()?;
    let spec = PopulationSpec::from_parameters(&design)?;
    let pop = generate_population(&spec, a.seed)?;
    // theory is evaluated at the realized population, not the requested one
    let params = parameters_from_population(&pop, design.n, design.k, design.errors).validate()?;

    let coefficients = match (a.b, a.m2) {
        (Some(b), Some(m2)) => Coefficients::Explicit { b, m2 },
        _ => Coefficients::Optimal,
    };
    let cfg = RunConfig { reps: a.reps, seed: a.seed, coefficients, workers: a.workers };

    if let Some(path) = &a.dump_population {
        let mut w = create(path)?;
        pop.write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = &a.dump_csv {
        let rows = montecarlo::replication_rows(&pop, &params, &cfg)?;
        let mut w = create(path)?;
        montecarlo::write_replications_csv(&rows, &mut w)?;
        w.flush()?;
    }

    let run = montecarlo::run(&pop, &params, &cfg)?;
    let grid = if a.grid_m2 || a.grid_out.is_some() {
        let (_, m2_opt) = theory::m2_opt(&params)?;
        let g = montecarlo::grid_search_m2(&pop, &params, &cfg, &grid_around(m2_opt, 0.5, 0.01))?;
        if let Some(path) = &a.grid_out {
            let mut w = create(path)?;
            report::write_grid_csv(&g, &mut w)?;
            w.flush()?;
        }
        Some(g)
    } else {
        None
    };

    let rep = SimulationReport::new(run, grid, a.tol);
    if a.json {
        print(&rep.to_json()?)?;
    } else {
        print(&rep.to_text())?;
    }
    Ok(if rep.within_tolerance { 0 } else { EXIT_TOLERANCE })
}

fn ingest_cmd(a: IngestArgs) -> Result<u8> {
    let data = ingest::load_dataset(&a.dataset).with_context(|| format!("invalid dataset {}", a.dataset.display()))?;
    let k = a.k.unwrap_or_else(|| {
        eprintln!(
            "warning: --k not given; assuming k = {} (the subsampling rate cannot be estimated from data)",
            ingest::DEFAULT_K
        );
        ingest::DEFAULT_K
    });
    let est = ingest::estimate_parameters(&data, k, a.w2)?;
    let mut params = est.params;
    if let Some(n) = a.n {
        params.n = n;
    }
    if a.population_size.is_some() {
        params.population_size = a.population_size;
    }
    let params = params.validate()?.into_inner();

    let v = est.indirect;
    eprintln!(
        "variance check (direct vs measured minus error): x {} vs {}, y {} vs {}",
        v.var_x_direct, v.var_x_indirect, v.var_y_direct, v.var_y_indirect
    );
    match &a.out {
        Some(path) => {
            params.save(path)?;
            Ok(0)
        }
        None => print(&params.to_toml_string()?),
    }
}

fn reproduce_cmd(a: ReproduceArgs) -> Result<u8> {
    let rep = report::reproduce_report()?;
    if a.json {
        print(&rep.to_json()?)
    } else {
        print(&rep.to_text())
    }
}
