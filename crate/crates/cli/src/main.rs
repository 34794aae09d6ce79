//! `clusterstore`: generate databases, run workloads, cluster, and sweep
//! buffer sizes.
//!
//! Exit status: 0 on success, 1 on a usage error (bad flags, missing input
//! files, invalid configuration), 2 on any other failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use clusterstore::dro::Trigger;
use clusterstore::dstc::DstcState;
use clusterstore::experiment::{self, parse_frame_list, EngineReport, EngineState, Executor, ExperimentConfig};
use clusterstore::store::{io_report_csv, Database, Store};
use clusterstore::workload;

#[derive(Parser)]
#[command(
    name = "clusterstore",
    version,
    about = "Paged object store with dynamic object clustering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a database and write its snapshot.
    Generate(Common),
    /// Run the workload once on a snapshot and report its I/O.
    Run(Common),
    /// Run the workload, cluster once, and write the clustered snapshot.
    Cluster(Common),
    /// Before/after experiment over the frame sweep.
    Bench(Common),
    /// Rebuild the results CSV and plot-data files from a results CSV.
    Report {
        /// Results CSV written by `bench`.
        results: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// key=value parameter file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// none, dro or dstc.
    #[arg(long)]
    engine: Option<String>,
    /// Comma-separated frame counts; a trailing % is relative to the page
    /// count.
    #[arg(long)]
    frames: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    /// Run the sweep on one thread.
    #[arg(long)]
    sequential: bool,
}

/// Marks an error as the caller's fault.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                if !path.is_file() {
                    return Err(usage(format!("config file {} not found", path.display())));
                }
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_text(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(engine) = &self.engine {
            cfg.engine = engine.parse().map_err(|e| usage(format!("{e}")))?;
        }
        if let Some(frames) = &self.frames {
            cfg.frames = parse_frame_list(frames).map_err(|e| usage(format!("{e}")))?;
        }
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(n) = self.iterations {
            cfg.iterations = n;
        }
        cfg.validate().map_err(|e| usage(format!("{e}")))?;
        Ok(cfg)
    }

    fn required_snapshot(&self) -> Result<Store> {
        let path = self.snapshot.as_ref().ok_or_else(|| usage("--snapshot is required"))?;
        load_snapshot(path)
    }

    fn executor(&self) -> Executor {
        if self.sequential {
            Executor::Sequential
        } else {
            Executor::default()
        }
    }
}

fn load_snapshot(path: &Path) -> Result<Store> {
    if !path.is_file() {
        return Err(usage(format!("snapshot {} not found", path.display())));
    }
    Store::load_snapshot(path).with_context(|| format!("loading {}", path.display()))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn cmd_generate(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let store = workload::generate_database(&cfg.database)?;
    let path = args
        .snapshot
        .clone()
        .unwrap_or_else(|| args.out.join("database.snapshot"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    store.save_snapshot(&path)?;
    println!("wrote {}", path.display());
    println!(
        "objects={} pages={} bytes={}",
        store.object_count(),
        store.page_count(),
        store.total_bytes()
    );
    Ok(())
}

fn open(cfg: &ExperimentConfig, store: Store) -> Result<(Database, EngineState)> {
    let frames = cfg.frames[0].resolve(store.page_count());
    let capacity = store.page_capacity();
    let db = Database::with_store(store, cfg.store_config(capacity, frames))?;
    Ok((db, EngineState::new(cfg, capacity)))
}

fn cmd_run(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let (mut db, mut engine) = open(&cfg, args.required_snapshot()?)?;
    let run = experiment::run_triggered(&mut db, &mut engine, &cfg.workload, cfg.auto_trigger)?;
    let csv = io_report_csv([("workload", run.workload), ("clustering", run.clustering)]);
    write(&args.out, "run.csv", &csv)?;
    if !run.reports.is_empty() {
        let mut body = format!("{}\n", EngineReport::CSV_HEADER);
        for r in &run.reports {
            body.push_str(&r.csv_row());
            body.push('\n');
        }
        write(&args.out, "clustering.csv", &body)?;
    }
    print!("{csv}");
    println!(
        "frames={} transactions={} digest={:016x}",
        db.buffer().frames(),
        run.transactions,
        run.digest
    );
    Ok(())
}

fn cmd_cluster(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let (mut db, mut engine) = open(&cfg, args.required_snapshot()?)?;
    workload::run_workload(&mut db, &mut engine, &cfg.workload)?;
    let report = engine.cluster(&mut db, Trigger::Manual)?;
    let body = format!("{}\n{}\n", EngineReport::CSV_HEADER, report.csv_row());
    write(&args.out, "clustering.csv", &body)?;
    match &report {
        EngineReport::Dro(r) => {
            if let Some(p) = &r.proposal {
                let order: Vec<String> = p.order.iter().map(|o| o.to_string()).collect();
                println!("proposal={}", order.join(","));
            }
        }
        EngineReport::Dstc(r) => {
            write(&args.out, "units.csv", &DstcState::units_csv(&r.units))?;
        }
        EngineReport::None => {}
    }
    let path = args.out.join("clustered.snapshot");
    db.store().save_snapshot(&path)?;
    println!("wrote {}", path.display());
    print!("{body}");
    Ok(())
}

fn cmd_bench(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let results = match &args.snapshot {
        Some(path) => experiment::run_bench_on(&load_snapshot(path)?, &cfg, args.executor())?,
        None => experiment::run_bench(&cfg, args.executor())?,
    };
    for path in experiment::write_report(&results.points, &args.out)? {
        println!("wrote {}", path.display());
    }
    write(
        &args.out,
        "clustering.csv",
        &experiment::clustering_csv(results.engine, &results.iterations),
    )?;
    print!("{}", experiment::results_csv(&results.points));
    Ok(())
}

fn cmd_report(results: &Path, out: &Path) -> Result<()> {
    if !results.is_file() {
        return Err(usage(format!("results file {} not found", results.display())));
    }
    let text = fs::read_to_string(results)?;
    let points = experiment::parse_results_csv(&text)?;
    for path in experiment::write_report(&points, out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Report { results, out } => cmd_report(results, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
