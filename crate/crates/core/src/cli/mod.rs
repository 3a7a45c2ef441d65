//! Command-line driver: argument parsing, configuration, workspace
//! artifacts and the six subcommands.

mod commands;
mod config;
mod workspace;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_analyze, cmd_build, cmd_eval, cmd_ingest, cmd_report, cmd_run, BuildTarget, Context,
    DatasetMeta, EvalSummary,
};
pub use config::{Config, GraphConfig, MockConfig, PromptConfig};
pub use workspace::{read_json, write_file, write_json, RunManifest, Status, Workspace};

use crate::corpus::Format;
use crate::error::Result;
use crate::pipeline::Variant;

#[derive(Debug, Parser)]
#[command(name = "specfi", version, about = "Narrative retrieval experiments")]
pub struct Cli {
    /// Artifact directory.
    #[arg(long, global = true, default_value = "specfi-workspace")]
    pub workspace: PathBuf,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "synthetic")]
    pub dataset: String,
    /// Use the offline mock embedder, chat model, extractor and summarizer.
    #[arg(long, global = true)]
    pub mock: bool,
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Base seed for generation runs (and the permutation test).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long = "n-hyp", global = true)]
    pub n_hyp: Option<usize>,
    /// Retrieval cutoff (at least 100).
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a corpus and taxonomy into the workspace (`synthetic` needs no paths).
    Ingest {
        #[arg(long)]
        documents: Option<PathBuf>,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
    },
    /// Build retrieval indexes or the narrative graph.
    Build {
        #[arg(value_enum, default_value = "all")]
        what: BuildTarget,
    },
    /// Retrieve with one variant for every configured run.
    Run,
    /// Score the latest run of `--variant` (default: every variant with a run).
    Eval,
    /// Correlate per-narrative AP with D_i and V_i.
    Analyze {
        /// Analyze this metric table (CSV or JSON) instead of the workspace evaluations.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Render quality, runtime, refusal and correlation tables.
    Report,
}

impl Cli {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn effective_config(&self) -> Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if self.mock {
            c.mock.enabled = true;
        }
        if let Some(v) = self.variant {
            c.pipeline.variant = v;
        }
        if let Some(r) = self.runs {
            c.pipeline.runs = r;
        }
        if let Some(s) = self.seed {
            c.pipeline.base_seed = s;
            c.analysis.seed = s;
        }
        if let Some(n) = self.n_hyp {
            c.pipeline.n_hypotheticals = n;
        }
        if let Some(k) = self.k {
            c.pipeline.k = k;
        }
        if let Command::Analyze { iterations: Some(i), .. } = &self.command {
            c.analysis.iterations = *i;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Executes one parsed command line, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<()> {
    let config = cli.effective_config()?;
    let ctx = Context {
        workspace: Workspace::open(&cli.workspace)?,
        config,
        dataset: cli.dataset.clone(),
    };
    match &cli.command {
        Command::Ingest { documents, taxonomy, format } => {
            let dir = cmd_ingest(&ctx, documents.as_deref(), taxonomy.as_deref(), *format)?;
            println!("{}", dir.display());
        }
        Command::Build { what } => {
            for dir in cmd_build(&ctx, *what)? {
                println!("{}", dir.display());
            }
        }
        Command::Run => println!("{}", cmd_run(&ctx)?.display()),
        Command::Eval => {
            for dir in cmd_eval(&ctx, cli.variant)? {
                println!("{}", dir.display());
            }
        }
        Command::Analyze { table, .. } => {
            let (_, report) = cmd_analyze(&ctx, table.as_deref())?;
            print!("{}", crate::stats::render_correlation_table(&report));
        }
        Command::Report => print!("{}", cmd_report(&ctx)?.1),
    }
    Ok(())
}
