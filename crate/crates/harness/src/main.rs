use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ssada::{emit_results, load_data, load_grid, prepare_backbone, run_workflow, train_probe, ExperimentConfig, LabelerMode};
use ssada_annotate::{RoundStore, ServiceHandle, ServiceLabeler};
use ssada_core::checkpoint::Checkpoint;
use ssada_core::data::write_csv;
use ssada_core::labeler::OracleLabeler;
use ssada_core::metrics::BASELINE;

#[derive(Parser)]
#[command(name = "ssada", version, about = "Self-supervised pretraining and active domain adaptation experiments")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Run only this seed instead of the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective config as TOML.
    Config,
    /// Write every domain pool as CSV.
    GenData {
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Pretrain (and optionally retrain) the backbone; writes backbone.json.
    SslTrain {
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the source linear probe and print baseline AUPRC per target; writes probe.json.
    Probe {
        #[arg(short, long)]
        out: PathBuf,
        /// Backbone checkpoint from `ssl-train`; trained from scratch when omitted.
        #[arg(long)]
        backbone: Option<PathBuf>,
    },
    /// Run the full workflow and write the result files.
    AdaRun {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        labeler: Option<LabelerMode>,
        /// Annotation service port (service labeler only).
        #[arg(long)]
        port: Option<u16>,
    },
    /// Print the tables of an earlier run.
    Report {
        #[arg(short, long)]
        dir: PathBuf,
    },
    /// Run the workflow with labels from the annotation service.
    Serve {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds[0]
}

fn run(cfg: ExperimentConfig, out: &Path) -> Result<()> {
    let report = match cfg.labeler {
        LabelerMode::Oracle => {
            let data = load_data(&cfg)?;
            let oracle = OracleLabeler::new(data.targets.iter());
            run_workflow(&cfg, |_| oracle.clone())?
        }
        LabelerMode::Service => {
            std::fs::create_dir_all(out)?;
            let journal = out.join(&cfg.service.journal);
            let store = Arc::new(RoundStore::with_journal(&journal)?);
            let addr = SocketAddr::from(([0, 0, 0, 0], cfg.service.port));
            let svc = ServiceHandle::spawn(store.clone(), addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("annotation service on {} (journal {})", svc.url(), journal.display());
            let labeler = ServiceLabeler::new(store, Duration::from_secs(cfg.service.timeout_secs));
            let report = run_workflow(&cfg, |_| labeler.clone())?;
            svc.stop()?;
            report
        }
    };
    for path in emit_results(&report, out)? {
        eprintln!("wrote {}", path.display());
    }
    print!("{}", report.grid.render_table());
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Config => print!("{}", cfg.to_toml()?),
        Command::GenData { out } => {
            std::fs::create_dir_all(&out)?;
            let data = load_data(&cfg)?;
            for pool in data.all_pools() {
                let path = out.join(format!("{}.csv", pool.name));
                write_csv(pool, &path)?;
                println!("{}\t{}\t{}", path.display(), pool.len(), pool.positives());
            }
        }
        Command::SslTrain { out } => {
            std::fs::create_dir_all(&out)?;
            let data = load_data(&cfg)?;
            let backbone = prepare_backbone(&cfg, &data, first_seed(&cfg))?;
            let path = out.join("backbone.json");
            Checkpoint::new("backbone").with_network("backbone", &backbone).save(&path)?;
            println!("{}", path.display());
        }
        Command::Probe { out, backbone } => {
            std::fs::create_dir_all(&out)?;
            let data = load_data(&cfg)?;
            let seed = first_seed(&cfg);
            let bb = match backbone {
                Some(p) => Checkpoint::load(&p)?.network("backbone")?,
                None => prepare_backbone(&cfg, &data, seed)?,
            };
            let probe = train_probe(&cfg, &data, bb, seed)?;
            let path = out.join("probe.json");
            Checkpoint::new("probe")
                .with_network("backbone", &probe.backbone)
                .with_network("head", &probe.head)
                .save(&path)?;
            println!("domain\t{BASELINE}");
            for (i, pool) in data.targets.iter().enumerate() {
                let split = ssada::split_target(&cfg, pool, seed, i)?;
                println!("{}\t{:.4}", pool.name, ssada::evaluate(&probe, &split.eval)?);
            }
        }
        Command::AdaRun { out, labeler, port } => {
            if let Some(l) = labeler {
                cfg.labeler = l;
            }
            if let Some(p) = port {
                cfg.service.port = p;
            }
            run(cfg, &out)?;
        }
        Command::Serve { out, port } => {
            cfg.labeler = LabelerMode::Service;
            if let Some(p) = port {
                cfg.service.port = p;
            }
            run(cfg, &out)?;
        }
        Command::Report { dir } => {
            let grid = load_grid(&dir)?;
            if grid.cells.is_empty() && !grid.domains.is_empty() {
                bail!("grid in {} has no cells", dir.display());
            }
            print!("{}", grid.render_table());
            println!();
            print!("{}", grid.render_deltas(BASELINE)?);
        }
    }
    Ok(())
}
