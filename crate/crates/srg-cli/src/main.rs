use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use srg_cli::commands::{self, Split};
use srg_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "srg",
    about = "Snippet-relatedness temporal action proposal pipeline",
    version
)]
struct Cli {
    /// Base profile supplying every configuration default.
    #[arg(long, global = true, default_value = "tiny")]
    profile: String,

    /// Optional key=value config file overriding the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/val dataset directory.
    Synth {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the temporal interval generation network.
    TrainTign {
        /// Dataset directory produced by `synth`.
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the temporal interval evaluation network.
    TrainTien {
        #[arg(long)]
        data: PathBuf,
        /// Generation-network checkpoint.
        #[arg(long)]
        tign: PathBuf,
        /// Reuse a pre-generated interval dump instead of running the
        /// generation network.
        #[arg(long)]
        intervals: Option<PathBuf>,
        /// Also write the generated training intervals to this path.
        #[arg(long)]
        dump_intervals: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate scored, refined, suppressed proposals for one split.
    Propose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
        #[arg(long)]
        tign: PathBuf,
        #[arg(long)]
        tien: PathBuf,
        /// Directory for per-video score-map dumps.
        #[arg(long)]
        dump_maps: Option<PathBuf>,
        /// Path for a per-video interval dump.
        #[arg(long)]
        dump_intervals: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute recall/AR/AUC metrics for a proposal file.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured block/boost ablation grid.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    srg_cli::init_thread_pool()?;
    let config = RunConfig::load(&cli.profile, cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Synth { out } => commands::cmd_synth(&config, &out),
        Command::TrainTign { data, out } => commands::cmd_train_tign(&config, &data, &out),
        Command::TrainTien {
            data,
            tign,
            intervals,
            dump_intervals,
            out,
        } => commands::cmd_train_tien(
            &config,
            &data,
            &tign,
            intervals.as_deref(),
            dump_intervals.as_deref(),
            &out,
        ),
        Command::Propose {
            data,
            split,
            tign,
            tien,
            dump_maps,
            dump_intervals,
            out,
        } => commands::cmd_propose(
            &config,
            &data,
            split,
            &tign,
            &tien,
            dump_maps.as_deref(),
            dump_intervals.as_deref(),
            &out,
        ),
        Command::Eval {
            data,
            split,
            proposals,
            out,
        } => commands::cmd_eval(&config, &data, split, &proposals, &out),
        Command::Ablate { data, out } => commands::cmd_ablate(&config, &data, &out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
