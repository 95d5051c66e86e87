mod commands;
mod options;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use options::{EvalOptions, PostOptions};

#[derive(Debug, Parser)]
#[command(
    name = "sedkit",
    version,
    about = "Sound event detection post-processing and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GradKind {
    Mm,
    Amm,
    Lp,
    Conv,
    /// Linear-softmax pooling.
    Ls,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pool each class of each posterior file to one clip-level probability.
    Pool {
        #[arg(long, default_value = "ls")]
        kind: sedkit::PoolingKind,
        /// Posterior files or directories of them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, value_enum)]
        kind: GradKind,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = sedkit::subsample::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = sedkit::subsample::DEFAULT_P)]
        p: f64,
        /// Side length of the random conv kernel.
        #[arg(long, default_value_t = 2)]
        kernel_size: usize,
    },
    /// Post-process posterior files and write the detected events as TSV.
    Decode {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        post: PostOptions,
        /// Output annotation file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, env = "SED_DECODE_JOBS")]
        jobs: Option<usize>,
    },
    /// Average several models' posteriors for one clip.
    Fuse {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        /// Output posterior file; its `.meta.json` sidecar is written next to it.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score predicted events against reference events.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        eval: EvalOptions,
        /// Also write the JSON report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a seeded synthetic corpus.
    Synth {
        /// JSON generator settings; missing fields take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the seed given in the `--spec` file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_clips: usize,
    },
    /// Post-process, decode and score in one run.
    Pipeline {
        /// JSON config; every flag below overrides the matching entry.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Posterior files or directories; replaces the config's list.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[command(flatten)]
        post: PostOptions,
        #[command(flatten)]
        eval: EvalOptions,
        /// Decoded annotation TSV.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, env = "SED_DECODE_JOBS")]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pool { kind, inputs } => commands::pool(kind, &inputs),
        Command::Gradcheck {
            kind,
            trials,
            seed,
            alpha,
            p,
            kernel_size,
        } => commands::gradcheck(kind, trials, seed, alpha, p, kernel_size),
        Command::Decode {
            inputs,
            post,
            output,
            jobs,
        } => commands::decode(&inputs, &post, output.as_deref(), jobs),
        Command::Fuse { inputs, output } => commands::fuse(&inputs, &output),
        Command::Eval {
            reference,
            pred,
            eval,
            report,
        } => commands::eval(&reference, &pred, &eval, report.as_deref()),
        Command::Synth {
            spec,
            seed,
            out_dir,
            n_clips,
        } => commands::synth(spec.as_deref(), seed, &out_dir, n_clips),
        Command::Pipeline {
            config,
            inputs,
            reference,
            post,
            eval,
            output,
            report,
            jobs,
        } => commands::pipeline(
            config.as_deref(),
            commands::PipelineFlags {
                inputs,
                reference,
                post,
                eval,
                output,
                report,
                jobs,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match err.downcast_ref::<commands::Failures>() {
                Some(failures) => {
                    for line in &failures.0 {
                        eprintln!("sedkit: error: {line}");
                    }
                }
                None => eprintln!("sedkit: error: {}", format!("{err:#}").replace('\n', " ")),
            }
            ExitCode::FAILURE
        }
    }
}
