use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use wscj_core::io;
use wscj_core::pipeline::{self, Route, RunConfig, WeightSource};
use wscj_core::sim::{self, SimConfig};
use wscj_core::weights::{self, DEFAULT_KT};
use wscj_core::{Alpha, Error, Threshold};

/// Ancestral gene order reconstruction under the weighted SCJ model.
#[derive(Parser)]
#[command(name = "wscj", version, about)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct one optimal labeling.
    Solve(SolveArgs),
    /// Like `solve`, drawing co-optimal labelings uniformly (500 by default).
    Sample(SolveArgs),
    /// Write Boltzmann adjacency weights as a weight TSV.
    Weigh(WeighArgs),
    /// Simulate trees and genomes.
    Simulate(SimulateArgs),
    /// Score reconstructed ancestors against simulated ones.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverChoice {
    Auto,
    Dp,
    Ilp,
}

#[derive(Args)]
struct InputArgs {
    /// Newick tree.
    #[arg(long)]
    tree: PathBuf,
    /// Genome TSV with one row per leaf chromosome.
    #[arg(long)]
    genomes: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Weight TSV.
    #[arg(long, conflicts_with = "boltzmann")]
    weights: Option<PathBuf>,
    /// Compute Boltzmann weights instead of reading them.
    #[arg(long)]
    boltzmann: bool,
    /// Boltzmann temperature.
    #[arg(long, requires = "boltzmann")]
    kt: Option<f64>,
    /// Weight factor, as a decimal or a fraction p/q.
    #[arg(long, default_value = "0")]
    alpha: String,
    /// Candidate adjacencies with a smaller weight are dropped at a node.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest squared label-space bound handled by the dynamic program.
    #[arg(long, default_value_t = wscj_core::dp::DEFAULT_CAP)]
    cap: u128,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "auto")]
    solver: SolverChoice,
    /// Never use branch-and-bound; oversized components fail.
    #[arg(long, conflicts_with = "solver")]
    no_ilp: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WeighArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_KT)]
    kt: f64,
    #[arg(long)]
    threads: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    markers: u32,
    #[arg(long, default_value_t = 6)]
    leaves: usize,
    #[arg(long, default_value_t = 0.001)]
    birth_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    death_rate: f64,
    /// Tree diameter as a multiple of the marker count.
    #[arg(long, default_value_t = 2.0)]
    diameter: f64,
    #[arg(long, default_value_t = 0.9)]
    p_inversion: f64,
    #[arg(long, default_value_t = 1)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; replicate `i` goes to `rep<i>/`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    tree: PathBuf,
    /// Genome TSV of the true ancestors.
    #[arg(long)]
    truth: PathBuf,
    /// Genome TSV of the reconstructed ancestors, such as `cars.tsv`.
    #[arg(long)]
    predicted: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn thread_pool(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!(Error::Input("--threads must be positive".into()));
        }
        // Only the first call can succeed; later ones keep the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn solve(args: SolveArgs, sampling: bool) -> anyhow::Result<()> {
    let phylo = io::read_phylogeny(&args.input.tree, &args.input.genomes)?;
    let weights = match (&args.weights, args.boltzmann) {
        (Some(path), _) => WeightSource::File { path: path.clone() },
        (None, true) => WeightSource::Boltzmann { kt: args.kt.unwrap_or(DEFAULT_KT) },
        (None, false) => WeightSource::None,
    };
    let alpha: Alpha = args.alpha.parse()?;
    let threshold = Threshold::from_f64(args.threshold)?;
    let n_samples = args.samples.unwrap_or(if sampling { 500 } else { 0 });
    if sampling && n_samples == 0 {
        bail!(Error::Input("`sample` needs --samples above 0".into()));
    }
    let route = match (args.no_ilp, args.solver) {
        (true, _) | (false, SolverChoice::Dp) => Route::DpOnly,
        (false, SolverChoice::Ilp) => Route::IlpOnly,
        (false, SolverChoice::Auto) => Route::Auto,
    };
    if args.threads == Some(0) {
        bail!(Error::Input("--threads must be positive".into()));
    }
    let config = RunConfig {
        alpha,
        threshold,
        weights,
        n_samples,
        seed: args.seed,
        cap: args.cap,
        threads: args.threads,
        route,
    };
    let raw = pipeline::load_weights(&phylo, &config.weights)?;
    let outcome = pipeline::run_solve(&phylo, &raw, &config)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("tree".to_string(), args.input.tree.display().to_string());
    inputs.insert("genomes".to_string(), args.input.genomes.display().to_string());
    pipeline::write_outputs(&phylo, &outcome, &inputs, &args.out)
        .with_context(|| format!("writing results to {}", args.out.display()))?;
    let r = &outcome.report;
    println!(
        "objective {} (scj {}, discarded weight {}), {} components, co-optimal {}",
        r.objective,
        r.changes,
        r.discarded_weight,
        r.components.len(),
        r.cooptimal.as_ref().map_or_else(|| "unknown".to_string(), |c| c.to_string())
    );
    Ok(())
}

fn weigh(args: WeighArgs) -> anyhow::Result<()> {
    thread_pool(args.threads)?;
    let phylo = io::read_phylogeny(&args.input.tree, &args.input.genomes)?;
    let table = weights::boltzmann_table(&phylo, args.kt)?;
    let text = io::format_weights(phylo.tree(), &table);
    write_or_print(args.out.as_deref(), &text)
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    thread_pool(args.threads)?;
    let config = SimConfig {
        n_markers: args.markers,
        n_leaves: args.leaves,
        birth_rate: args.birth_rate,
        death_rate: args.death_rate,
        diameter_factor: args.diameter,
        p_inversion: args.p_inversion,
        seed: args.seed,
    };
    config.validate()?;
    let results = sim::evolve_replicates(&config, args.replicates)?;
    for (i, r) in results.iter().enumerate() {
        let dir = args.out.join(format!("rep{i}"));
        r.write(&dir)?;
        println!("{}\t{} events", dir.display(), r.total_events());
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let tree = io::read_tree(&args.tree)?;
    let truth = io::read_adjacency_sets(&args.truth)?;
    let predicted = io::read_adjacency_sets(&args.predicted)?;
    let ev = sim::score_named(&tree, &truth, &predicted)?;
    let mut s = String::from("node\ttp\tfp\tfn\n");
    for (name, c) in &ev.per_node {
        s.push_str(&format!("{name}\t{}\t{}\t{}\n", c.tp, c.fp, c.fn_));
    }
    let p = ev.pooled;
    s.push_str(&format!("all\t{}\t{}\t{}\n", p.tp, p.fp, p.fn_));
    let sc = ev.scores;
    s.push_str(&format!(
        "# sensitivity\t{:.6}\n# precision\t{:.6}\n# f1\t{:.6}\n# f0.5\t{:.6}\n# degenerate\t{}\n",
        sc.sensitivity, sc.precision, sc.f1, sc.f05, sc.degenerate
    ));
    write_or_print(args.out.as_deref(), &s)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::CapacityExceeded { .. }) => 2,
        Some(Error::Internal(_)) => 3,
        _ => 1,
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Solve(a) => solve(a, false),
        Command::Sample(a) => solve(a, true),
        Command::Weigh(a) => weigh(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
