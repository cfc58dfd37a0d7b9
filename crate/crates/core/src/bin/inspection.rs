use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inspection_core::pipeline::{self, PipelineConfig, RawConfig};
use inspection_core::Error;

#[derive(Parser)]
#[command(name = "inspection", version, about = "GIN + Deep Graph Infomax embeddings with random-forest classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the dataset and print a summary.
    Validate(Common),
    /// Train the encoder on the training graphs.
    TrainDgi(Common),
    /// Write embeddings for every graph.
    Embed(Common),
    /// Fit the random forest on training embeddings.
    TrainRf(Common),
    /// Score the test graphs.
    Evaluate(Common),
    /// Run every stage in sequence.
    Pipeline(Common),
    /// Write a synthetic dataset in Elliptic CSV format.
    Synth(Common),
}

#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// dne, lf-dne or af-dne
    #[arg(long)]
    scenario: Option<String>,
    /// af or lf
    #[arg(long)]
    view: Option<String>,
    /// DGI epochs per training graph
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding the Elliptic CSV triplet
    #[arg(long)]
    data: Option<PathBuf>,
    /// Extra key=value override; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut raw = match &self.config {
            Some(p) => RawConfig::from_file(p)?,
            None => RawConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            raw.set_checked(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            raw.set("seed", &s.to_string());
        }
        if let Some(s) = &self.scenario {
            raw.set("scenario", s);
        }
        if let Some(v) = &self.view {
            raw.set("view", v);
        }
        if let Some(e) = self.epochs {
            raw.set("epochs", &e.to_string());
        }
        if let Some(o) = &self.out {
            raw.set("output_dir", &o.to_string_lossy());
        }
        if let Some(d) = &self.data {
            raw.set("data.dir", &d.to_string_lossy());
        }
        raw.resolve()
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Validate(c) => {
            let s = pipeline::cmd_validate(&c.resolve()?)?;
            println!("{s}");
        }
        Command::Synth(c) => {
            let cfg = c.resolve()?;
            let s = pipeline::cmd_synth(&cfg)?;
            println!("wrote {} ({s})", cfg.output_dir.display());
        }
        Command::TrainDgi(c) => {
            let s = pipeline::cmd_train_dgi(&c.resolve()?)?;
            println!(
                "trained on {} graphs, loss {} -> {}; wrote {}",
                s.graphs,
                fmt_opt(s.first_loss),
                fmt_opt(s.last_loss),
                s.encoder_path.display()
            );
        }
        Command::Embed(c) => {
            let s = pipeline::cmd_embed(&c.resolve()?)?;
            println!("wrote {} files, {} rows x {}", s.files.len(), s.rows, s.dim);
        }
        Command::TrainRf(c) => {
            let s = pipeline::cmd_train_rf(&c.resolve()?)?;
            println!(
                "fit {} trees on {} rows x {}; wrote {}",
                s.trees,
                s.rows,
                s.width,
                s.forest_path.display()
            );
        }
        Command::Evaluate(c) => print_report(&pipeline::cmd_evaluate(&c.resolve()?)?),
        Command::Pipeline(c) => {
            let s = pipeline::cmd_pipeline(&c.resolve()?)?;
            println!("{}", s.dataset);
            print_report(&s.report);
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn print_report(r: &inspection_core::eval::EvalReport) {
    println!(
        "precision {:.4}  recall {:.4}  f1 {:.4}  auc {:.4}",
        r.precision, r.recall, r.f1, r.auc
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
