//! `icmsim`: batch front-end for the Monte Carlo study.

mod config;
mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use icmsim_core::dgp::{self, GridCell};
use icmsim_core::mc;
use icmsim_core::output::{self, fmt_num};
use icmsim_core::study::Estimator;

use config::{Overrides, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Ml,
    Pls,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Ml => Estimator::Ml,
            EstimatorArg::Pls => Estimator::Pls,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "icmsim", version, about = "Monte Carlo study of indicator-construct misspecification in SEM")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Admissible replications per cell and assumed model.
    #[arg(long, global = true, value_name = "N")]
    reps: Option<usize>,
    #[arg(long, global = true, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Condition filter `key=v1,v2`; keys: id, position, n, K, sigma, correlation, dgp, assumed.
    #[arg(long, global = true, value_name = "K=V")]
    filter: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Monte Carlo plan and write CSV results and plot data.
    Run,
    /// Fisher-consistency check for every estimable combination.
    Fisher,
    /// Run the invariant suites and print a pass/fail table.
    Verify {
        /// Threshold table (JSON) used by the fit-flag suite.
        #[arg(long, value_name = "PATH")]
        thresholds: Option<PathBuf>,
        /// Rewrite the golden hashes of the quick Monte Carlo.
        #[arg(long)]
        bless: bool,
        /// Golden hash file.
        #[arg(long, value_name = "PATH")]
        golden: Option<PathBuf>,
        #[arg(long)]
        skip_mc: bool,
        #[arg(long)]
        skip_fisher: bool,
    },
    /// List the design conditions.
    ListConditions,
    /// Dump the population covariance and true parameters of one condition.
    Population,
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        seed: cli.seed,
        reps: cli.reps,
        estimator: cli.estimator.map(Into::into),
        filters: cli.filter.clone(),
        out: cli.out.clone(),
        workers: cli.workers,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn cell_fields(c: &GridCell) -> Vec<String> {
    vec![
        c.position.to_string(),
        c.k.to_string(),
        fmt_num(c.sigma),
        if c.homogeneous { "homogeneous" } else { "heterogeneous" }.to_string(),
    ]
}

fn open_output(out: &Option<PathBuf>, name: &str) -> Result<Box<dyn Write>> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let p = dir.join(name);
            Ok(Box::new(std::fs::File::create(&p).with_context(|| format!("writing {}", p.display()))?))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn cmd_run(cli: &Cli) -> Result<ExitCode> {
    let r = config::resolve(load_config(cli)?, &overrides(cli))?;
    let out = r.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    r.plan.validate()?;
    let records = mc::run_plan(&r.plan, r.workers)?;
    let summary = mc::aggregate(&records, r.plan.target_admissible);
    output::write_all(&out, &records, &summary)?;
    let truncated = summary.iter().filter(|s| s.path == 1 && s.truncated).count();
    eprintln!(
        "{} records, {} summary rows ({} truncated groups) written to {}",
        records.len(),
        summary.len(),
        truncated,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_fisher(cli: &Cli) -> Result<ExitCode> {
    let r = config::resolve(load_config(cli)?, &overrides(cli))?;
    let pool = rayon_pool(r.workers)?;
    let rows = pool.install(|| mc::fisher_matrix(&r.plan.cells, r.plan.estimator, r.plan.master_seed))?;
    let rows: Vec<_> = rows
        .into_iter()
        .filter(|o| r.plan.dgp_kinds.contains(&o.condition.dgp_kind) && r.plan.assumed_kinds.contains(&o.assumed_kind))
        .collect();
    let mut w = csv_writer(open_output(&r.out, "fisher.csv")?);
    w.write_record([
        "position", "K", "sigma", "correlation", "dgp_kind", "assumed_kind", "estimator", "expected_consistent",
        "beta1_std", "beta2_std", "beta3_std", "max_deviation", "admissible", "reason_codes", "pass",
    ])?;
    for o in &rows {
        let mut rec = cell_fields(&o.condition.cell);
        rec.extend([
            o.condition.dgp_kind.to_string(),
            o.assumed_kind.to_string(),
            o.estimator.to_string(),
            (o.expected_consistent as u8).to_string(),
            fmt_num(o.std_paths[0]),
            fmt_num(o.std_paths[1]),
            fmt_num(o.std_paths[2]),
            fmt_num(o.max_deviation),
            (o.admissible as u8).to_string(),
            o.reasons.iter().map(|r| r.code()).collect::<Vec<_>>().join(";"),
            (o.pass as u8).to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    let failed = rows.iter().filter(|o| !o.pass).count();
    eprintln!("{} combinations, {failed} failed", rows.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_list(cli: &Cli) -> Result<ExitCode> {
    let r = config::resolve(load_config(cli)?, &overrides(cli))?;
    let mut w = csv_writer(open_output(&r.out, "conditions.csv")?);
    w.write_record(["condition_id", "position", "n", "K", "sigma", "correlation"])?;
    for c in &r.plan.cells {
        let f = cell_fields(c);
        w.write_record([c.id().to_string(), f[0].clone(), c.n.to_string(), f[1].clone(), f[2].clone(), f[3].clone()])?;
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_population(cli: &Cli) -> Result<ExitCode> {
    let r = config::resolve(load_config(cli)?, &overrides(cli))?;
    let [cell] = r.plan.cells.as_slice() else {
        bail!("population needs filters selecting exactly one condition ({} selected)", r.plan.cells.len());
    };
    let kinds: Vec<_> = r.plan.dgp_kinds.iter().copied().filter(|k| icmsim_core::study::dgp_kinds(cell.position).contains(k)).collect();
    let [kind] = kinds.as_slice() else {
        bail!("population needs a single data-generating kind, e.g. --filter dgp=composite");
    };
    let mut cond = cell.with_kind(*kind);
    cond.phi_correlation = r.plan.phi_correlation;
    let pop = dgp::build_population(&cond)?;
    let mut w = open_output(&r.out, "population.json")?;
    serde_json::to_writer_pretty(&mut w, &pop.to_json_value())?;
    writeln!(w)?;
    Ok(ExitCode::SUCCESS)
}

fn csv_writer(w: Box<dyn Write>) -> csv::Writer<Box<dyn Write>> {
    csv::Writer::from_writer(w)
}

fn rayon_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

fn default_golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("golden").join("quick_mc.json")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run => cmd_run(&cli),
        Command::Fisher => cmd_fisher(&cli),
        Command::ListConditions => cmd_list(&cli),
        Command::Population => cmd_population(&cli),
        Command::Verify { thresholds, bless, golden, skip_mc, skip_fisher } => {
            let opts = verify::Options {
                thresholds: thresholds.clone(),
                bless: *bless,
                golden: golden.clone().unwrap_or_else(default_golden),
                skip_mc: *skip_mc,
                skip_fisher: *skip_fisher,
                workers: cli.workers.unwrap_or(0),
            };
            verify::run(&opts)
        }
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
