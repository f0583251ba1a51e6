//! The `cartogan` pipeline: synthetic tilesets, GAN style transfer, map
//! classification and a read-only tile server.

pub mod commands;
pub mod config;
pub mod serve;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use cartogan_core::dataset::Role;
use cartogan_core::gan::ModelKind;

pub use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "cartogan", version, about = "Synthetic map tiles, GAN style transfer and map/non-map evaluation")]
pub struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base directory for relative config paths (default: the config's directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render paired simple/target tilesets and the non-map image set.
    Dataset,
    /// Train a style-transfer model on the train split.
    Train {
        #[arg(long)]
        model: ModelKind,
        /// Restrict to one zoom level.
        #[arg(long)]
        zoom: Option<u8>,
    },
    /// Apply a trained generator to the simple-style test tiles.
    Transfer {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        zoom: Option<u8>,
    },
    /// Train the map/non-map classifier.
    TrainIsmap,
    /// Score transfer tilesets with the classifier.
    Evaluate {
        /// Evaluate one model's transfer set (default: every set present).
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long, requires = "model")]
        zoom: Option<u8>,
    },
    /// Write a manifest for an existing z/x/y tile tree.
    Ingest {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        role: Role,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Serve a tileset over HTTP.
    Serve {
        /// Tileset directory holding manifest.json.
        #[arg(long, conflicts_with = "role")]
        root: Option<PathBuf>,
        /// Serve this role's tileset from the config instead.
        #[arg(long)]
        role: Option<Role>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

/// Worker thread cap from `CARTOGAN_THREADS`, else the machine's parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var("CARTOGAN_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("CARTOGAN_THREADS must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let threads = thread_count()?;
    let ctx = || -> Result<commands::Ctx> {
        let Some(path) = &cli.config else {
            bail!("this command needs --config <path>");
        };
        let cfg = PipelineConfig::load(path)?;
        let base = match &cli.out {
            Some(o) => o.clone(),
            None => path.parent().map(PathBuf::from).unwrap_or_default(),
        };
        Ok(commands::Ctx { cfg, base, threads })
    };
    match &cli.command {
        Command::Dataset => commands::dataset(&ctx()?, out),
        Command::Train { model, zoom } => commands::train(&ctx()?, *model, *zoom, out),
        Command::Transfer { model, zoom } => commands::transfer(&ctx()?, *model, *zoom, out),
        Command::TrainIsmap => commands::train_ismap(&ctx()?, out),
        Command::Evaluate { model, zoom } => commands::evaluate(&ctx()?, model.map(|m| (m, *zoom)), out),
        Command::Ingest { dir, role, seed, test_fraction } => commands::ingest(dir, *role, *seed, *test_fraction, out),
        Command::Serve { root, role, port } => {
            let root = match (root, role) {
                (Some(r), _) => r.clone(),
                (None, Some(role)) => ctx()?.role_dir(*role),
                (None, None) => bail!("serve needs --root <dir> or --config with --role"),
            };
            serve::serve_blocking(&root, *port, threads, out).with_context(|| format!("serving {}", root.display()))
        }
    }
}
