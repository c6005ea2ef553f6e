use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sepkit_core::pipeline::{
    exit_code, run, stage_name, write_toy_corpus, EnhanceMethod, PipelineConfig, RunOptions, StageOutcome,
    StageRange, RESULTS_DIR, SUMMARY_FILE,
};
use sepkit_core::Error;

/// Staged simulate -> enhance -> score -> pack runner.
#[derive(Debug, Parser)]
#[command(name = "sepkit", version)]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Pipeline config (TOML). SEPKIT__SECTION__KEY variables override its keys.
    #[arg(long, short)]
    config: PathBuf,
    /// Recompute stages whose outputs already exist.
    #[arg(long)]
    force: bool,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Work directory, replacing io.work_dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a range of stages (default: the config's).
    Run {
        #[command(flatten)]
        common: Common,
        /// Stage or range: 3, 1..4, 2-3.
        #[arg(long)]
        stage: Option<String>,
    },
    /// Stage 1: spatialize the clean manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of utterances to render.
        #[arg(long)]
        count: Option<usize>,
        /// Diffuse noise bank directory.
        #[arg(long)]
        diffuse_bank: Option<PathBuf>,
        /// Also render a test set with this diffuse bank swapped in.
        #[arg(long)]
        alt_test: Option<PathBuf>,
    },
    /// Stage 2: enhance the simulated mixtures.
    Enhance {
        #[command(flatten)]
        common: Common,
        /// Method, replacing enhancement.method.
        #[arg(long)]
        method: Option<String>,
    },
    /// Stage 3: score enhanced outputs against the references.
    Score {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic toy corpus with noise banks and a ready config.
    Toy {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 3.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
    },
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

fn load(common: &Common) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(j) = common.jobs {
        cfg.io.jobs = Some(j);
    }
    if let Some(s) = common.seed {
        cfg.io.seed = s;
    }
    if let Some(d) = &common.out_dir {
        cfg.io.work_dir = absolute(d);
    }
    Ok(cfg)
}

fn execute(cfg: &PipelineConfig, stages: Option<StageRange>, force: bool) -> Result<(), Error> {
    cfg.validate()?;
    let report = run(cfg, &RunOptions { force, stages })?;
    for s in &report.stages {
        let what = match s.outcome {
            StageOutcome::Ran => "done",
            StageOutcome::Skipped => "up to date",
        };
        println!("stage {} ({}): {what} -> {}", s.stage, stage_name(s.stage), s.dir.display());
    }
    if report.stages.iter().any(|s| s.stage == 4) {
        let summary = cfg.work_dir().join(RESULTS_DIR).join(cfg.enhancement.method.name()).join(SUMMARY_FILE);
        if let Ok(text) = std::fs::read_to_string(&summary) {
            print!("{text}");
        }
    }
    println!("run log: {}", report.log.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    let single = |n: u8| Some(StageRange { start: n, stop: n });
    match cli.command {
        Command::Run { common, stage } => {
            let cfg = load(&common)?;
            let stages = stage.as_deref().map(StageRange::parse).transpose()?;
            execute(&cfg, stages, common.force)
        }
        Command::Simulate { common, count, diffuse_bank, alt_test } => {
            let mut cfg = load(&common)?;
            if count.is_some() {
                cfg.spatializer.count = count;
            }
            if let Some(d) = diffuse_bank {
                cfg.spatializer.diffuse_noise_dir = Some(absolute(&d));
            }
            if let Some(d) = alt_test {
                cfg.spatializer.alt_diffuse_dir = Some(absolute(&d));
            }
            execute(&cfg, single(1), common.force)
        }
        Command::Enhance { common, method } => {
            let mut cfg = load(&common)?;
            if let Some(m) = method {
                cfg.enhancement.method = m.parse::<EnhanceMethod>()?;
            }
            execute(&cfg, single(2), common.force)
        }
        Command::Score { common } => {
            let cfg = load(&common)?;
            execute(&cfg, single(3), common.force)
        }
        Command::Toy { out_dir, count, seconds, seed, sample_rate } => {
            let toy = write_toy_corpus(&out_dir, count, seconds, seed, sample_rate)?;
            println!("clean manifest: {}", toy.clean_manifest.display());
            println!("config: {}", toy.config.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
