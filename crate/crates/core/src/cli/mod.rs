//! Command-line front end: `gen-data`, `eval`, `cost`, `search`, `bench` and
//! `report`.
//!
//! Every command writes its artifacts under the output directory (`--out`,
//! else `out_dir` from the configuration) and overwrites earlier runs with
//! identical bytes when the configuration and seeds are unchanged.

mod config;
mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use self::config::{
    parse_config, BenchSection, DatasetSection, EvalSection, Experiment, ExperimentConfig, ModelEntry, PerLayer,
    SearchSection,
};
pub use self::report::{genome_label, read_csv, render_markdown, write_csv, CsvRow, ReportRow, CSV_HEADER};

use crate::cost::{measure_throughput, CostReport, CONVENTION_TAG};
use crate::error::{Error, Result};
use crate::model::{build_supernet, extract_subnet, ArchConfig, PresetLibrary, SearchSpace};
use crate::numerics::PrecisionMode;
use crate::probe::{generate_dataset, SyntheticDataset, CLASS_NAMES};
use crate::search::{evaluate_genome, evolve, pareto_front, CostObjective, Genome};
use crate::seed;

#[derive(Debug, Parser)]
#[command(name = "vitjoint", version, about = "Joint architecture / token / precision compression explorer for ViTs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed, overriding the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for feature extraction and candidate evaluation.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Model name for `eval`, `cost` and `bench`.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    #[arg(long = "merge-r", global = true, value_name = "N")]
    pub merge_r: Option<usize>,
    #[arg(long, global = true, value_name = "single|half")]
    pub precision: Option<PrecisionMode>,
    /// Images per timed forward call in `bench`.
    #[arg(long, global = true, value_name = "N")]
    pub batch: Option<usize>,
    /// Cost axis of the Pareto front written by `search`.
    #[arg(long, global = true, value_name = "flops|energy", default_value = "flops")]
    pub objective: CostObjective,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic dataset to `<out>/dataset`.
    GenData,
    /// Evaluate one model and write `<out>/eval.csv`.
    Eval,
    /// Print parameter count, FLOPs and energy proxy of a model.
    Cost,
    /// Run the evolutionary search; writes `<out>/history.csv` and `<out>/front.md`.
    Search,
    /// Time forward passes on one thread; writes `<out>/bench.csv`.
    Bench,
    /// Render a CSV produced by any command as a Markdown table.
    Report {
        /// CSV file to render.
        input: PathBuf,
    },
}

struct Context<'a> {
    cli: &'a Cli,
    experiment: Option<Experiment>,
}

impl Context<'_> {
    fn experiment(&self) -> Result<&Experiment> {
        self.experiment
            .as_ref()
            .ok_or_else(|| Error::invalid("--config", "this command needs an experiment configuration"))
    }

    fn out_dir(&self) -> Result<PathBuf> {
        match (&self.cli.out, &self.experiment) {
            (Some(dir), _) => Ok(dir.clone()),
            (None, Some(e)) => Ok(e.config.out_dir.clone()),
            (None, None) => Err(Error::invalid("--out", "no output directory given")),
        }
    }

    fn global_seed(&self) -> u64 {
        self.experiment.as_ref().map(|e| e.config.seed).or(self.cli.seed).unwrap_or(0)
    }
}

/// Run a parsed command line, writing human-readable output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut (dyn Write + Send)) -> Result<()> {
    let experiment = match &cli.config {
        Some(path) => {
            let mut e = parse_config(path)?;
            if let Some(s) = cli.seed {
                e.config.seed = s;
            }
            Some(e)
        }
        None => None,
    };
    let ctx = Context { cli, experiment };
    match cli.jobs {
        Some(0) => Err(Error::invalid("--jobs", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid("--jobs", e.to_string()))?
            .install(|| dispatch(&ctx, stdout)),
        None => dispatch(&ctx, stdout),
    }
}

fn dispatch(ctx: &Context, stdout: &mut dyn Write) -> Result<()> {
    match &ctx.cli.command {
        Command::GenData => gen_data(ctx, stdout),
        Command::Eval => eval(ctx, stdout),
        Command::Cost => cost(ctx, stdout),
        Command::Search => search(ctx, stdout),
        Command::Bench => bench(ctx, stdout),
        Command::Report { input } => report(ctx, input, stdout),
    }
}

fn write_file(path: &Path, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    writeln!(stdout, "wrote {}", path.display())?;
    Ok(())
}

fn csv_bytes(rows: &[CsvRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(buf)
}

fn build_dataset(e: &Experiment) -> Result<SyntheticDataset> {
    generate_dataset(e.config.dataset.n_per_class, e.space.image_size, e.seed(seed::DATASET))
}

/// The dataset under `<out>/dataset` when it matches the configuration,
/// otherwise a freshly generated one.
fn dataset_for(e: &Experiment, out: &Path) -> Result<SyntheticDataset> {
    let dir = out.join("dataset");
    if dir.join("dataset.toml").exists() {
        let d = SyntheticDataset::load(&dir)?;
        let expected_len = e.config.dataset.n_per_class * CLASS_NAMES.len();
        if d.seed == e.seed(seed::DATASET) && d.image_size == e.space.image_size && d.len() == expected_len {
            return Ok(d);
        }
    }
    build_dataset(e)
}

fn gen_data(ctx: &Context, stdout: &mut dyn Write) -> Result<()> {
    let e = ctx.experiment()?;
    let dir = ctx.out_dir()?.join("dataset");
    build_dataset(e)?.save(&dir)?;
    writeln!(stdout, "wrote {}", dir.display())?;
    Ok(())
}

fn eval(ctx: &Context, stdout: &mut dyn Write) -> Result<()> {
    let e = ctx.experiment()?;
    let cli = ctx.cli;
    let (name, arch, merge_r, precision) = e.eval_target(cli.preset.as_deref(), cli.merge_r, cli.precision)?;
    let out = ctx.out_dir()?;
    let dataset = dataset_for(e, &out)?;
    let supernet = build_supernet(&e.space, e.seed(seed::SUPERNET))?;
    let genome = Genome { arch, merge_r, precision };
    let record = evaluate_genome(&genome, &supernet, &dataset, e.seed(seed::PROBE), &e.config.probe)?;
    let row = CsvRow::from_record(&record, Some(&name));
    writeln!(stdout, "{}: accuracy {:.4}", row.label, record.accuracy)?;
    write_file(&out.join("eval.csv"), &csv_bytes(&[row])?, stdout)
}

/// Architecture and its space, looked up in the configuration when given,
/// otherwise among the built-in presets.
fn resolve_model(ctx: &Context) -> Result<(String, ArchConfig, SearchSpace)> {
    let cli = ctx.cli;
    match &ctx.experiment {
        Some(e) => {
            let name = cli.preset.clone().unwrap_or_else(|| e.config.eval.preset.clone());
            Ok((name.clone(), e.arch(&name)?.clone(), e.space.clone()))
        }
        None => {
            let name = cli
                .preset
                .clone()
                .ok_or_else(|| Error::invalid("--preset", "name a model or pass --config"))?;
            let lib = PresetLibrary::builtin();
            Ok((name.clone(), lib.arch(&name)?.clone(), lib.space_of(&name)?.clone()))
        }
    }
}

fn default_r_and_precision(ctx: &Context) -> (usize, PrecisionMode) {
    let eval = ctx.experiment.as_ref().map(|e| &e.config.eval);
    (
        ctx.cli.merge_r.or(eval.map(|e| e.merge_r)).unwrap_or(0),
        ctx.cli.precision.or(eval.map(|e| e.precision)).unwrap_or(PrecisionMode::Single),
    )
}

fn cost(ctx: &Context, stdout: &mut dyn Write) -> Result<()> {
    let (name, arch, _) = resolve_model(ctx)?;
    let (merge_r, precision) = default_r_and_precision(ctx);
    let report = CostReport::new(&arch, merge_r, precision);
    let genome = Genome { arch, merge_r, precision };
    writeln!(stdout, "model = {}", genome_label(&genome, Some(&name)))?;
    writeln!(stdout, "params = {}", report.params)?;
    writeln!(stdout, "params_m = {:.1}", report.params as f64 / 1e6)?;
    writeln!(stdout, "flops = {}", report.flops)?;
    writeln!(stdout, "gflops = {:.1}", report.flops as f64 / 1e9)?;
    writeln!(stdout, "energy_units = {}", report.energy_units)?;
    writeln!(stdout, "convention = {CONVENTION_TAG}")?;
    Ok(())
}

fn search(ctx: &Context, stdout: &mut dyn Write) -> Result<()> {
    let e = ctx.experiment()?;
    let out = ctx.out_dir()?;
    let dataset = dataset_for(e, &out)?;
    let supernet = build_supernet(&e.space, e.seed(seed::SUPERNET))?;
    let config = e.config.search.to_search_config(e.seed(seed::SEARCH));
    let result = evolve(&e.space, &config, &supernet, &dataset, e.seed(seed::PROBE), &e.config.probe)?;
    let history = result.history();
    let rows: Vec<CsvRow> = history
        .iter()
        .map(|r| CsvRow::from_record(r, e.name_of(&r.genome.arch)))
        .collect();
    let front = pareto_front(&history, ctx.cli.objective)?;
    let front_rows: Vec<ReportRow> = front
        .iter()
        .map(|r| ReportRow::from(&CsvRow::from_record(r, e.name_of(&r.genome.arch))))
        .collect();
    for (g, records) in result.generations.iter().enumerate() {
        let best = records.iter().map(|r| r.accuracy).fold(0.0, f64::max);
        writeln!(stdout, "generation {g}: best accuracy {best:.4}")?;
    }
    write_file(&out.join("history.csv"), &csv_bytes(&rows)?, stdout)?;
    write_file(&out.join("front.md"), render_markdown(&front_rows).as_bytes(), stdout)
}

fn bench(ctx: &Context, stdout: &mut dyn Write) -> Result<()> {
    let (name, arch, space) = resolve_model(ctx)?;
    let (merge_r, precision) = default_r_and_precision(ctx);
    space.check_merge_r(merge_r)?;
    space.check_precision(precision)?;
    let section = ctx.experiment.as_ref().map(|e| e.config.bench.clone()).unwrap_or_default();
    let batch = ctx.cli.batch.unwrap_or(section.batch);
    let global = ctx.global_seed();
    let supernet = build_supernet(&space, seed::derive_seed(global, seed::SUPERNET))?;
    let weights = extract_subnet(&supernet, &arch)?;
    let bench_seed = seed::derive_seed(global, seed::BENCH);
    let result = measure_throughput(
        &weights,
        merge_r,
        precision,
        batch,
        section.warmup_iters,
        section.timed_iters,
        bench_seed,
    )?;
    let genome = Genome { arch, merge_r, precision };
    let cost = CostReport::new(&genome.arch, merge_r, precision);
    let row = CsvRow::new(genome_label(&genome, Some(&name)), &genome, &cost, None, Some(&result), bench_seed);
    writeln!(stdout, "{}: {:.1} images/s (batch {batch})", row.label, result.fps)?;
    write_file(&ctx.out_dir()?.join("bench.csv"), &csv_bytes(&[row])?, stdout)
}

fn report(ctx: &Context, input: &Path, stdout: &mut dyn Write) -> Result<()> {
    if !input.exists() {
        return Err(Error::MissingFile(input.to_path_buf()));
    }
    let rows = read_csv(fs::File::open(input)?)?;
    let md = render_markdown(&rows.iter().map(ReportRow::from).collect::<Vec<_>>());
    match &ctx.cli.out {
        Some(dir) => write_file(&dir.join("report.md"), md.as_bytes(), stdout),
        None => Ok(stdout.write_all(md.as_bytes())?),
    }
}
