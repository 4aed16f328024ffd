//! Thin command-line front end over the library: run configured
//! experiments, evaluate checkpoints, expand models, and build
//! exemplary IDX pairs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use expanse::expand::{coverage_report, expand_network, ExpansionPlan, NewWeightMode};
use expanse::persist::{format_accuracy, load_checkpoint, save_checkpoint, write_report};
use expanse::{evaluate, expanse_run, load_idx, write_idx, ExperimentConfig};

#[derive(Parser)]
#[command(name = "expanse", version, about = "Continual learning experiments for dense networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config; writes per-stage checkpoints and a report.
    Run(RunArgs),
    /// Evaluate a checkpoint on an IDX image/label pair.
    Eval(EvalArgs),
    /// Expand a checkpointed network and write the result with its freeze mask.
    Expand(ExpandArgs),
    /// Write a balanced exemplary IDX pair selected from a dataset.
    SelectExemplars(SelectArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory for checkpoints and the report.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace stage i's seed with this value plus i.
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset root override (beats the config and EXPANSE_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    images: PathBuf,
    labels: PathBuf,
    /// Class count override when the label file may not contain the
    /// highest class.
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Args)]
struct ExpandArgs {
    checkpoint: PathBuf,
    /// Target layer sizes, comma separated (e.g. 784,256,128,10).
    #[arg(long, value_delimiter = ',')]
    target: Vec<usize>,
    /// Target class index for each source class, comma separated.
    #[arg(long, value_delimiter = ',')]
    class_map: Option<Vec<usize>>,
    /// Zero the non-embedded entries instead of keeping random init.
    #[arg(long)]
    zero_mode: bool,
    /// Seed for the fresh large network.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    images: PathBuf,
    labels: PathBuf,
    /// Take the first N samples of every class.
    #[arg(long, conflicts_with = "index_file")]
    per_class: Option<usize>,
    /// File with one sample index per line; taken in listed order.
    #[arg(long)]
    index_file: Option<PathBuf>,
    #[arg(long)]
    out_images: PathBuf,
    #[arg(long)]
    out_labels: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> expanse::Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Expand(args) => cmd_expand(args),
        Command::SelectExemplars(args) => cmd_select(args),
    }
}

fn cmd_run(args: RunArgs) -> expanse::Result<()> {
    let config = ExperimentConfig::from_file(&args.config)?;
    let output = expanse_run(&config, args.data_dir.as_deref(), args.seed)?;
    std::fs::create_dir_all(&args.out).map_err(|e| expanse::Error::io(&args.out, e))?;
    for (i, stage) in output.stages.iter().enumerate() {
        let path = args.out.join(format!("stage{:02}-{}.ckpt", i, stage.result.name));
        save_checkpoint(&path, &stage.network, stage.mask.as_ref(), None)?;
        let r = &stage.result;
        println!(
            "stage {:02} {:<24} exemplary {:>8} train {:>8} test {:>8}  ({:.1}s)",
            i,
            r.name,
            r.exemplary.as_ref().map_or("-".into(), |e| format_accuracy(e.accuracy)),
            r.train.as_ref().map_or("-".into(), |e| format_accuracy(e.accuracy)),
            r.test.as_ref().map_or("-".into(), |e| format_accuracy(e.accuracy)),
            r.seconds,
        );
    }
    let report_path = args.out.join("report.json");
    write_report(&output.results(), &report_path)?;
    println!("report written to {}", report_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> expanse::Result<()> {
    let (net, _, _) = load_checkpoint(&args.checkpoint)?;
    let dataset = load_idx(&args.images, &args.labels, args.classes)?;
    let report = evaluate(&net, &dataset)?;
    println!("samples:  {}", dataset.len());
    println!("accuracy: {} ({:.6})", format_accuracy(report.accuracy), report.accuracy);
    println!("loss:     {:.6}", report.mean_loss);
    println!("confusion (rows = true class):");
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        println!("  {}", cells.join(" "));
    }
    Ok(())
}

fn cmd_expand(args: ExpandArgs) -> expanse::Result<()> {
    let (small, _, _) = load_checkpoint(&args.checkpoint)?;
    let plan = ExpansionPlan {
        source_sizes: small.spec().layer_sizes().to_vec(),
        target_sizes: args.target.clone(),
        class_map: args.class_map.clone(),
        new_weight_mode: if args.zero_mode {
            NewWeightMode::Zero
        } else {
            NewWeightMode::Random
        },
    };
    let coverage = coverage_report(&plan)?;
    let (big, mask) = expand_network(&small, &plan, args.seed)?;
    save_checkpoint(&args.out, &big, Some(&mask), None)?;
    println!(
        "expanded {:?} -> {:?}",
        plan.source_sizes, plan.target_sizes
    );
    for layer in &coverage.layers {
        println!(
            "layer {}: frozen {} weights + {} biases, new {} weights + {} biases{}",
            layer.layer,
            layer.frozen_weights,
            layer.frozen_biases,
            layer.new_weights,
            layer.new_biases,
            if layer.appended { " (appended)" } else { "" },
        );
    }
    println!(
        "total frozen {} / new {} parameters",
        coverage.total_frozen, coverage.total_new
    );
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}

fn cmd_select(args: SelectArgs) -> expanse::Result<()> {
    let dataset = load_idx(&args.images, &args.labels, None)?;
    let selected = match (&args.per_class, &args.index_file) {
        (Some(n), None) => dataset.select_exemplars(*n)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| expanse::Error::io(path, e))?;
            let indices: Vec<usize> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| {
                    l.parse()
                        .map_err(|_| expanse::Error::Config(format!("bad index line '{l}'")))
                })
                .collect::<expanse::Result<_>>()?;
            dataset.select_by_indices(&indices)?
        }
        _ => {
            return Err(expanse::Error::Config(
                "exactly one of --per-class or --index-file is required".into(),
            ))
        }
    };
    write_idx(&selected, &args.out_images, &args.out_labels)?;
    println!(
        "wrote {} samples ({} classes) to {} / {}",
        selected.len(),
        selected.class_count(),
        args.out_images.display(),
        args.out_labels.display()
    );
    Ok(())
}
