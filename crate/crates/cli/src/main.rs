//! `invr-lab`: generate worlds, train the main model, run variants and
//! compare them, all from one JSON configuration file.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use invr_core::config::{ConfigError, ExperimentConfig};
use invr_core::report::{build_report, RunSummary};
use invr_core::sim::{
    generate_world, prepare, prepare_with_table, run_ab, run_warmup, train_on_warmup, Prepared, RunOptions, SimError,
    VariantName, Warmup, World,
};
use invr_core::ItemEmbeddingTable;

#[derive(Parser)]
#[command(name = "invr-lab", version, about = "Inverse-retrieval long-tail exposure lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration (defaults merged with --config) as JSON.
    PrintConfig(Common),
    /// Write the world snapshot and warm-up traffic.
    Generate(Common),
    /// Train the main model on warm-up traffic and write the embedding table.
    Train(Common),
    /// Run one variant over the full horizon for each sim seed.
    Run(RunArgs),
    /// Run every configured variant on every sim seed and write the report.
    Ab(AbArgs),
    /// Compare finished runs against a baseline.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// World seed for generate and train; the single sim seed for run and ab.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, replacing `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// BASELINE, RANDOM, INVR_RANDOM, INVR_SCORE or INVR_USER_RANK.
    #[arg(long)]
    variant: String,
    /// Embedding table written by `train`; trained inline when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct AbArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Also write interaction logs and assignments for every run.
    #[arg(long)]
    logs: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories, each holding a summary.json.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "BASELINE")]
    baseline: String,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

/// Exit code 1 for usage and configuration problems, 2 for failures at run time.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::UnknownVariant(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::PrintConfig(c) => {
            let config = load(&c, SeedTarget::World)?;
            print!("{}", config.to_json());
            Ok(())
        }
        Command::Generate(c) => cmd_generate(&load(&c, SeedTarget::World)?),
        Command::Train(c) => cmd_train(&load(&c, SeedTarget::World)?),
        Command::Run(r) => {
            let variant: VariantName = r.variant.parse()?;
            cmd_run(&load(&r.common, SeedTarget::Sim)?, variant, r.embeddings.as_deref())
        }
        Command::Ab(a) => cmd_ab(&load(&a.common, SeedTarget::Sim)?, a.embeddings.as_deref(), a.logs),
        Command::Report(r) => cmd_report(&r.runs, r.baseline.parse()?, &r.out),
    }
}

enum SeedTarget {
    World,
    Sim,
}

fn load(c: &Common, target: SeedTarget) -> Result<ExperimentConfig, Failure> {
    let mut config = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        match target {
            SeedTarget::World => config.world.seed = seed,
            SeedTarget::Sim => config.sim_seeds = vec![seed],
        }
    }
    if let Some(out) = &c.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn write_with<F>(path: &Path, body: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut out = BufWriter::new(File::create(path)?);
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

fn write_world(dir: &Path, world: &World, warmup: &Warmup) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    write_with(&dir.join("publishers.csv"), |o| world.write_publishers(o))?;
    write_with(&dir.join("items.csv"), |o| world.write_items(o))?;
    write_with(&dir.join("users.csv"), |o| world.write_users(o))?;
    write_with(&dir.join("publisher_stats.csv"), |o| {
        writeln!(o, "publisher_id,niche,items,visible,clicks,revenue")?;
        for s in &warmup.publisher_stats {
            writeln!(o, "{},{},{},{},{},{}", s.publisher, u8::from(s.niche), s.items, s.visible, s.clicks, s.revenue)?;
        }
        Ok(())
    })?;
    write_with(&dir.join("warmup_interactions.csv"), |o| warmup.log.write_csv(o))
}

fn cmd_generate(config: &ExperimentConfig) -> Result<(), Failure> {
    let world = generate_world(&config.world)?;
    let warmup = run_warmup(&world, config)?;
    let dir = config.output_dir.join("world");
    write_world(&dir, &world, &warmup)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_train(config: &ExperimentConfig) -> Result<(), Failure> {
    let world = generate_world(&config.world)?;
    let warmup = run_warmup(&world, config)?;
    let table = train_on_warmup(&world, &warmup, &config.train)?;
    fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join("embeddings.txt");
    write_with(&path, |o| table.write_text(o).map_err(std::io::Error::other))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn prepared(config: &ExperimentConfig, embeddings: Option<&Path>) -> Result<Prepared, Failure> {
    Ok(match embeddings {
        Some(p) => {
            let file = File::open(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            let table = ItemEmbeddingTable::read_text(BufReader::new(file))
                .map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            prepare_with_table(config, table)?
        }
        None => prepare(config)?,
    })
}

fn run_dir(config: &ExperimentConfig, variant: VariantName, seed: u64) -> PathBuf {
    config.output_dir.join("runs").join(format!("{variant}-seed{seed}"))
}

fn cmd_run(config: &ExperimentConfig, variant: VariantName, embeddings: Option<&Path>) -> Result<(), Failure> {
    let prep = prepared(config, embeddings)?;
    let options = RunOptions { keep_log: true, keep_assignments: true };
    for &seed in &config.sim_seeds {
        let result = prep.run(variant, seed, options)?;
        let dir = run_dir(config, variant, seed);
        result.write_dir(&dir)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn cmd_ab(config: &ExperimentConfig, embeddings: Option<&Path>, logs: bool) -> Result<(), Failure> {
    let prep = prepared(config, embeddings)?;
    let options = RunOptions { keep_log: logs, keep_assignments: logs };
    let ab = run_ab(&prep, &config.variants, &config.sim_seeds, options)?;
    for (k, r) in ab.runs.iter().enumerate() {
        // Duplicate variants (an A/A check) get distinct directories.
        let dir = config.output_dir.join("runs").join(format!("{k:02}-{}-seed{}", r.summary.variant, r.summary.sim_seed));
        r.write_dir(&dir)?;
    }
    let dir = config.output_dir.join("report");
    ab.report.write_all(&dir)?;
    print!("{}", ab.report.table_csv());
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_report(runs: &[PathBuf], baseline: VariantName, out: &Path) -> Result<(), Failure> {
    let summaries = runs
        .iter()
        .map(|d| RunSummary::read_dir(d))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let report = build_report(&summaries, baseline).map_err(|e| Failure::Runtime(e.to_string()))?;
    report.write_all(out)?;
    print!("{}", report.table_csv());
    Ok(())
}
