use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use localweak_core::eval::SliceKind;
use localweak_core::model::{serve_lines, NgramLinearModel};
use localweak_core::pipeline::{verify_manifest, Overrides, Pipeline, PipelineError, Stage};
use localweak_core::synth;

#[derive(Parser)]
#[command(name = "localweak", version, about = "Weak-supervision pipeline for local-news detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct StageArgs {
    /// Pipeline configuration file.
    #[arg(long, default_value = "pipeline.toml")]
    config: PathBuf,
    /// Directory holding all artifacts (default: `work/` next to the config).
    #[arg(long)]
    workdir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Score cutoff; repeat for several.
    #[arg(long = "cutoff")]
    cutoffs: Vec<f64>,
    /// Evaluation slice; repeat for several.
    #[arg(long = "slice", value_parser = parse_slice)]
    slices: Vec<SliceKind>,
    #[arg(long)]
    min_clicks: Option<u64>,
    #[arg(long)]
    gap_threshold: Option<f64>,
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

fn parse_slice(s: &str) -> Result<SliceKind, String> {
    s.parse().map_err(|e: localweak_core::eval::EvalError| e.to_string())
}

impl StageArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            workdir: self.workdir.clone(),
            seed: self.seed,
            cutoffs: self.cutoffs.clone(),
            slices: self.slices.clone(),
            min_clicks: self.min_clicks,
            gap_threshold: self.gap_threshold,
            split_ratio: self.split_ratio,
            epochs: self.epochs,
        }
    }

    fn pipeline(&self) -> Result<Pipeline, PipelineError> {
        Pipeline::from_file(&self.config, &self.overrides())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate raw inputs; fit the TF-IDF model.
    Ingest(StageArgs),
    /// Publisher and article click affinity.
    Affinity(StageArgs),
    /// Weak labels with provenance.
    Label(StageArgs),
    /// Front and back translation.
    Augment(StageArgs),
    /// Bootstrap correction, dataset split and model training.
    Train(StageArgs),
    /// Score the test set with the classifier and the gazetteer baseline.
    Score(StageArgs),
    /// Precision/recall reports.
    Evaluate(StageArgs),
    /// Classifier vs baseline delta table.
    Compare(StageArgs),
    /// Run all eight stages in order.
    All(StageArgs),
    /// Check the manifest chain against the artifacts on disk.
    Verify(StageArgs),
    /// Write the toy corpus and a pipeline.toml into a directory.
    GenToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = synth::TOY_SEED)]
        seed: u64,
    },
    /// Regenerate every bundled synthetic data file.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a trained model over the line protocol on stdin/stdout.
    ScoreLines {
        #[arg(long)]
        model: PathBuf,
    },
}

fn run_stages(args: &StageArgs, stages: &[Stage]) -> Result<(), PipelineError> {
    let pipeline = args.pipeline()?;
    for &stage in stages {
        let summary = pipeline.run(stage)?;
        println!("{}: ok", stage.as_str());
        for note in &summary.notes {
            println!("  {note}");
        }
    }
    Ok(())
}

fn io_failure(path: &std::path::Path, e: io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let stage = |s: Stage, a: &StageArgs| run_stages(a, &[s]);
    match &cli.command {
        Command::Ingest(a) => stage(Stage::Ingest, a),
        Command::Affinity(a) => stage(Stage::Affinity, a),
        Command::Label(a) => stage(Stage::Label, a),
        Command::Augment(a) => stage(Stage::Augment, a),
        Command::Train(a) => stage(Stage::Train, a),
        Command::Score(a) => stage(Stage::Score, a),
        Command::Evaluate(a) => stage(Stage::Evaluate, a),
        Command::Compare(a) => stage(Stage::Compare, a),
        Command::All(a) => run_stages(a, &Stage::ALL),
        Command::Verify(a) => {
            let pipeline = a.pipeline()?;
            let problems = verify_manifest(pipeline.workdir(), Some(pipeline.config()))?;
            if problems.is_empty() {
                println!("manifest verifies");
                Ok(())
            } else {
                Err(PipelineError::Stage(format!("manifest does not verify:\n  {}", problems.join("\n  "))))
            }
        }
        Command::GenToy { out, seed } => {
            synth::write_toy(out, *seed).map_err(|e| io_failure(out, e))?;
            println!("toy corpus written to {}", out.display());
            Ok(())
        }
        Command::GenData { out } => {
            synth::write_bundled(out).map_err(|e| io_failure(out, e))?;
            println!("bundled data written to {}", out.display());
            Ok(())
        }
        Command::ScoreLines { model } => {
            if !model.is_file() {
                return Err(PipelineError::MissingInput(model.clone()));
            }
            let m = NgramLinearModel::<f64>::load(model)?;
            serve_lines(&m, io::stdin().lock(), BufWriter::new(io::stdout().lock())).map_err(|e| io_failure(model, e))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
