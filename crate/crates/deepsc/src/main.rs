//! `deepsc`: multi-layer sparse coding feature learning from the command
//! line. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deepsc::config::{apply_overrides, load_config};
use deepsc::error::CmdResult;
use deepsc::{runner, synth};

#[derive(Parser)]
#[command(name = "deepsc", version, about = "Unsupervised multi-layer sparse coding features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-image stages (results do not depend on this).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute dense descriptors for a directory of images.
    Descriptors {
        /// Directory of images (flat, or one subdirectory per class).
        #[arg(long)]
        images: PathBuf,
        /// Output descriptor file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        patch: u32,
        #[arg(long, default_value_t = 4)]
        spacing: u32,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Train a model on the training split and write the archive.
    Train {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Extract pyramid features for a directory of images.
    Features {
        /// Trained model archive.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
        /// Output sparse text file.
        #[arg(long)]
        out: PathBuf,
        /// Use only the first n layers of the model.
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Split, train, extract, classify, and report accuracy.
    Evaluate {
        #[command(flatten)]
        common: ConfigArgs,
        /// Number of repeated runs with different split seeds.
        #[arg(long)]
        repeats: Option<usize>,
        /// Use only the first n layers of the model.
        #[arg(long)]
        layers: Option<usize>,
    },
    /// Generate a synthetic oriented-texture dataset.
    Synth {
        /// Dataset root to create.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 64)]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep the SVM regularization constant C on one fixed split.
    Grid {
        #[command(flatten)]
        common: ConfigArgs,
        /// Comma-separated C values, e.g. 0.1,1,10.
        #[arg(long, value_delimiter = ',', required = true)]
        c: Vec<f64>,
        /// Use only the first n layers of the model.
        #[arg(long)]
        layers: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("deepsc: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> CmdResult<()> {
    match command {
        Command::Descriptors { images, out, patch, spacing, jobs } => {
            let summary = runner::cmd_descriptors(&images, &out, patch, spacing, jobs)?;
            println!("wrote {} descriptor blocks to {}", summary.images, summary.out_path.display());
        }
        Command::Train { common } => {
            let mut config = load_config(&common.config)?;
            apply_overrides(&mut config, common.seed, None)?;
            let summary = runner::cmd_train(&config, common.jobs)?;
            for warning in &summary.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "trained {} layers on {} images (feature dim {}); model at {}, log at {}",
                summary.depth,
                summary.train_images,
                summary.feature_dim,
                summary.model_path.display(),
                summary.log_path.display()
            );
        }
        Command::Features { model, images, out, layers, jobs } => {
            let summary = runner::cmd_features(&model, &images, &out, layers, jobs)?;
            println!(
                "wrote {} feature rows (dim {}, {} layers) to {}",
                summary.images,
                summary.dim,
                summary.depth,
                summary.out_path.display()
            );
        }
        Command::Evaluate { common, repeats, layers } => {
            let mut config = load_config(&common.config)?;
            apply_overrides(&mut config, common.seed, repeats)?;
            let summary = runner::cmd_evaluate(&config, layers, common.jobs)?;
            print!("{}", summary.report_text);
            println!("report written to {}", summary.report_path.display());
        }
        Command::Synth { out, classes, per_class, size, seed } => {
            synth::write_synth_dataset(&out, classes, per_class, size, seed)?;
            println!("wrote {classes} classes x {per_class} images ({size}x{size}) under {}", out.display());
        }
        Command::Grid { common, c, layers } => {
            let mut config = load_config(&common.config)?;
            apply_overrides(&mut config, common.seed, None)?;
            let points = runner::cmd_grid(&config, &c, layers, common.jobs)?;
            println!("{:<12} average per-class accuracy", "C");
            let mut best = &points[0];
            for point in &points {
                println!("{:<12} {:.4}", point.c, point.average);
                if point.average > best.average {
                    best = point;
                }
            }
            println!("best: C={} ({:.4})", best.c, best.average);
        }
    }
    Ok(())
}
