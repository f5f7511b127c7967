use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metaprobe::config::{ChatMode, EmbeddingMode, RunConfig};
use metaprobe::corpus::Genre;
use metaprobe::geometry::PlaneMode;
use metaprobe::pipeline::{self, Command, Manifest, RunError};
use metaprobe::transforms::VariantKind;

#[derive(Parser)]
#[command(
    name = "metaprobe",
    version,
    about = "Metaphor understanding probes for chat models"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `<output_dir>/<command>` from the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replay from a directory holding `chat.jsonl` and, optionally, `embeddings.tsv`.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Interpretation geometry against the reference plane.
    Spatial {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        geometry_mode: Option<PlaneMode>,
    },
    /// Four-option interpretation choice.
    Multichoice {
        #[command(flatten)]
        common: Common,
    },
    /// Word imagination overlap with and without context.
    Imagine {
        #[command(flatten)]
        common: Common,
        /// Restrict to genres (repeatable).
        #[arg(long = "genre")]
        genres: Vec<Genre>,
        /// Keep only records above the novelty threshold.
        #[arg(long)]
        novel: bool,
    },
    /// Write shuffled sentence variants without querying a model.
    ShuffleGen {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<VariantKind>,
    },
    /// Metaphor detection on original and shuffled sentences.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<VariantKind>,
        /// Output directory of an earlier `shuffle-gen` run.
        #[arg(long)]
        variants: Option<PathBuf>,
    },
    /// Recompute summary tables from a finished run directory.
    Report {
        /// Run directory to read.
        from: PathBuf,
        /// Where to write; defaults to `from`.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, RunError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds.global = seed;
        cfg.seeds.multichoice = None;
        cfg.seeds.shuffle = None;
    }
    if let Some(dir) = &common.fixtures {
        let dir = std::path::absolute(dir).unwrap_or_else(|_| dir.clone());
        cfg.chat.mode = ChatMode::Fixture;
        cfg.chat.fixture = Some(dir.join("chat.jsonl"));
        cfg.chat.endpoint = None;
        cfg.chat.record_to = None;
        let emb = dir.join("embeddings.tsv");
        if emb.exists() {
            cfg.embedding.mode = EmbeddingMode::Fixture;
            cfg.embedding.fixture = Some(emb);
            cfg.embedding.endpoint = None;
        }
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &RunConfig, name: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| cfg.resolve(&cfg.output_dir).join(name))
}

fn run(cli: Cli) -> Result<(Manifest, PathBuf), RunError> {
    let (common, command) = match cli.command {
        Cmd::Report { from, out } => {
            let out = out.unwrap_or_else(|| from.clone());
            return pipeline::report(&from, &out).map(|m| (m, out));
        }
        Cmd::Spatial {
            common,
            geometry_mode,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(m) = geometry_mode {
                cfg.geometry.mode = m;
            }
            let out = out_dir(&common, &cfg, "spatial");
            return pipeline::execute(&Command::Spatial, &cfg, &out).map(|m| (m, out));
        }
        Cmd::Multichoice { common } => (common, Command::Multichoice),
        Cmd::Imagine {
            common,
            genres,
            novel,
        } => (
            common,
            Command::Imagine {
                genres,
                novel_only: novel,
            },
        ),
        Cmd::ShuffleGen { common, kinds } => (common, Command::ShuffleGen { kinds }),
        Cmd::Detect {
            common,
            kinds,
            variants,
        } => (common, Command::Detect { kinds, variants }),
    };
    let cfg = load_config(&common)?;
    let out = out_dir(&common, &cfg, command.name());
    pipeline::execute(&command, &cfg, &out).map(|m| (m, out))
}

fn print_summary(manifest: &Manifest, out: &Path) {
    println!(
        "{}: {} of {} items scored, {} network calls ({} replayed)",
        manifest.command,
        manifest.scored,
        manifest.items_in,
        manifest.network_calls(),
        manifest.chat_calls.replayed + manifest.embedding_calls.replayed,
    );
    for (reason, n) in &manifest.exclusions {
        println!("  excluded {reason}: {n}");
    }
    if let Ok(csv) = std::fs::read_to_string(out.join("summary.csv")) {
        print!("{csv}");
    }
    println!("wrote {}", out.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok((manifest, out)) => {
            print_summary(&manifest, &out);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
