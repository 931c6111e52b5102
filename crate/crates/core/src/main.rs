use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tsclv::clustering::Method;
use tsclv::pipeline::config::WORKDIR_ENV;
use tsclv::pipeline::demo::DemoSpec;
use tsclv::pipeline::{write_demo, Pipeline, PipelineConfig, Step, StepOutcome};
use tsclv::validity::Criterion;

/// Cluster weekly purchase series, mine motifs, forecast centroids and
/// stage customers by lifecycle.
///
/// Settings come from built-in defaults, then the `--config` TOML file,
/// then the TSCLV_WORKDIR environment variable, then command-line flags.
#[derive(Parser, Debug)]
#[command(name = "tsclv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Directory holding intermediate and final artifacts.
    #[arg(long, global = true, env = WORKDIR_ENV)]
    workdir: Option<PathBuf>,
    /// Raw transaction CSV.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Root seed; every stochastic step derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Re-run steps even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    /// Drop exact duplicate transaction rows.
    #[arg(long, global = true)]
    dedup: bool,
    /// Comma-separated distance measures, e.g. EUCL,DTW,COR.
    #[arg(long, global = true, value_delimiter = ',')]
    measures: Option<Vec<String>>,
    /// Comma-separated clustering methods.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, global = true)]
    k_min: Option<usize>,
    #[arg(long, global = true)]
    k_max: Option<usize>,
    /// Scheme selection criterion: sim or silhouette.
    #[arg(long, global = true)]
    criterion: Option<Criterion>,
    /// `entity,cluster` CSV to score Sim against instead of the consensus.
    #[arg(long, global = true)]
    sim_ref: Option<PathBuf>,
    #[arg(long, global = true)]
    perplexity: Option<f64>,
    /// Forecast horizon in weeks.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// JSON stage x element suggestion matrix.
    #[arg(long, global = true)]
    matrix: Option<PathBuf>,
    /// Mine motifs in every entity's series as well as the centroids.
    #[arg(long, global = true)]
    per_entity: bool,
    /// Skip SVG charts.
    #[arg(long, global = true)]
    no_svg: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic 5-archetype transaction log and its labels.
    DemoData {
        /// Output directory (defaults to the workdir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        entities: usize,
        #[arg(long, default_value_t = 52)]
        weeks: usize,
    },
    /// Parse transactions into the weekly series matrix.
    Ingest,
    /// Pairwise distance matrices under each measure.
    Distances,
    /// Cluster every (method, measure, K) scheme.
    Cluster,
    /// Score schemes and select the best one.
    Select,
    /// t-SNE layout of the selected scheme.
    Embed,
    /// SAX motifs of every centroid.
    Motif,
    /// ARIMA forecasts of every centroid.
    Forecast,
    /// Lifecycle staging and marketing report.
    Report,
    /// Every step in order.
    All,
    /// Print the effective configuration as TOML.
    Config,
}

fn build_config(o: &Overrides) -> tsclv::Result<PipelineConfig> {
    let mut cfg = match &o.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &o.workdir {
        cfg.paths.workdir = v.clone();
    }
    if let Some(v) = &o.input {
        cfg.paths.input = v.clone();
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if o.dedup {
        cfg.ingest.dedup = true;
    }
    if let Some(v) = &o.measures {
        cfg.distances.measures = v.clone();
    }
    if let Some(v) = &o.methods {
        cfg.clustering.methods = v.clone();
    }
    if let Some(v) = o.k_min {
        cfg.clustering.k_min = v;
    }
    if let Some(v) = o.k_max {
        cfg.clustering.k_max = v;
    }
    if let Some(v) = o.criterion {
        cfg.clustering.criterion = v;
    }
    if let Some(v) = &o.sim_ref {
        cfg.clustering.sim_ref = Some(v.clone());
    }
    if let Some(v) = o.perplexity {
        cfg.embed.perplexity = v;
    }
    if let Some(v) = o.horizon {
        cfg.forecast.horizon = v;
    }
    if let Some(v) = &o.matrix {
        cfg.lifecycle.matrix = Some(v.clone());
    }
    if o.per_entity {
        cfg.motif.per_entity = true;
    }
    if o.no_svg {
        cfg.output.svg = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(o: &StepOutcome) {
    if o.skipped {
        eprintln!("[{}] up to date", o.step);
    } else {
        eprintln!("[{}] wrote {}", o.step, o.outputs.join(", "));
    }
    for w in &o.warnings {
        eprintln!("[{}] warning: {w}", o.step);
    }
}

fn run(cli: Cli) -> tsclv::Result<()> {
    let cfg = build_config(&cli.overrides)?;
    let step = match cli.command {
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            return Ok(());
        }
        Command::DemoData { out, entities, weeks } => {
            let dir = out.unwrap_or_else(|| cfg.paths.workdir.clone());
            let spec = DemoSpec { entities, weeks, ..DemoSpec::default() };
            for p in write_demo(&dir, cfg.seed, &spec)? {
                eprintln!("[demo-data] wrote {}", p.display());
            }
            return Ok(());
        }
        Command::All => {
            let pipeline = Pipeline::new(cfg, cli.overrides.force)?;
            for o in pipeline.run_all()? {
                report(&o);
            }
            return Ok(());
        }
        Command::Ingest => Step::Ingest,
        Command::Distances => Step::Distances,
        Command::Cluster => Step::Cluster,
        Command::Select => Step::Select,
        Command::Embed => Step::Embed,
        Command::Motif => Step::Motif,
        Command::Forecast => Step::Forecast,
        Command::Report => Step::Report,
    };
    let pipeline = Pipeline::new(cfg, cli.overrides.force)?;
    report(&pipeline.run(step)?);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
