use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod cmd;
mod inputs;
mod report;

#[derive(Parser)]
#[command(name = "histopatch", version, about = "Whole-slide image patch selection, augmentation, embedding and retrieval")]
struct Cli {
    /// Log format on stderr.
    #[arg(long, value_enum, default_value_t = LogFormat::Text, global = true)]
    log: LogFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LogFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Select patch locations for every slide in a directory.
    Fps(cmd::fps::FpsArgs),
    /// Write the planned patches as PNG files.
    Extract(cmd::extract::ExtractArgs),
    /// Generate rotation-augmented multi-crop views.
    Augment(cmd::augment::AugmentArgs),
    /// Embed planned patches into an embedding store.
    Embed(cmd::embed::EmbedArgs),
    /// Leave-one-out retrieval evaluation over a store.
    Search(cmd::search::SearchArgs),
    /// Cross-validated linear probe over a store.
    Probe(cmd::probe::ProbeArgs),
    /// Per-head class-token attention heatmaps for one image.
    Attn(cmd::attn::AttnArgs),
    /// Write randomly initialised model weights.
    InitWeights(cmd::model::InitWeightsArgs),
    /// Print parameter and FLOP counts.
    Params(cmd::model::ParamsArgs),
}

fn init_logging(format: LogFormat) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if format == LogFormat::Json {
        b.format(|buf, record| {
            let line = serde_json::json!({
                "ts": buf.timestamp().to_string(),
                "level": record.level().as_str(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    b.init();
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("HISTOPATCH_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("HISTOPATCH_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log);
    let result = init_threads().and_then(|_| match cli.command {
        Command::Fps(a) => cmd::fps::run(a),
        Command::Extract(a) => cmd::extract::run(a),
        Command::Augment(a) => cmd::augment::run(a),
        Command::Embed(a) => cmd::embed::run(a),
        Command::Search(a) => cmd::search::run(a),
        Command::Probe(a) => cmd::probe::run(a),
        Command::Attn(a) => cmd::attn::run(a),
        Command::InitWeights(a) => cmd::model::init_weights(a),
        Command::Params(a) => cmd::model::params(a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
