use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use skillforge::campaign::{resume_campaign, run_campaign, CampaignConfig, CampaignReport};
use skillforge::config::Config;
use skillforge::fsutil;
use skillforge::layout::Layout;
use skillforge::pipeline::{Engine, Mode};
use skillforge::provider::{Gateway, LiveProvider};
use skillforge::store::init_project;
use skillforge_core::registry::Layer;
use skillforge_core::NodePath;

#[derive(Parser)]
#[command(name = "skillforge", version, about = "Mine, validate and publish a library of agent skills")]
struct Cli {
    /// Project root holding the registry, packages and reports.
    #[arg(long, global = true, default_value = ".")]
    registry: PathBuf,
    /// Engine configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ProviderKind::Mock)]
    provider: ProviderKind,
    /// Directory of scripted responses for the mock provider
    /// (default: <registry>/script).
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderKind {
    Mock,
    Live,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayerArg {
    Execution,
    Synthetic,
    System,
}

impl From<LayerArg> for Layer {
    fn from(l: LayerArg) -> Self {
        match l {
            LayerArg::Execution => Layer::Execution,
            LayerArg::Synthetic => Layer::Synthetic,
            LayerArg::System => Layer::System,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create a fresh registry from an indented taxonomy file.
    Init { taxonomy: PathBuf },
    /// Run one full mining cycle.
    Cycle {
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        branch: Option<NodePath>,
    },
    #[command(subcommand)]
    Campaign(CampaignCommand),
    /// Design, validate and register one skill for a task prompt.
    DesignSkill {
        #[arg(long)]
        prompt: PathBuf,
    },
    /// Re-run layer-1 tests on a registered skill.
    Test {
        skill_id: String,
        #[arg(long, value_enum)]
        layer: Option<LayerArg>,
    },
    /// Show the novelty verdict a skill would receive now.
    Novelty { skill_id: String },
    Status,
    /// Write the static site bundle.
    ExportSite { dest: PathBuf },
    /// Mean duration per stage over completed cycles.
    TimingReport,
}

#[derive(Subcommand)]
enum CampaignCommand {
    Run {
        plan: PathBuf,
        /// Stop after this many phases, leaving a checkpoint.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    Resume {
        id: String,
        #[arg(long)]
        stop_after: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Init { .. } => "init",
            Command::Cycle { .. } => "cycle",
            Command::Campaign(CampaignCommand::Run { .. }) => "campaign run",
            Command::Campaign(CampaignCommand::Resume { .. }) => "campaign resume",
            Command::DesignSkill { .. } => "design-skill",
            Command::Test { .. } => "test",
            Command::Novelty { .. } => "novelty",
            Command::Status => "status",
            Command::ExportSite { .. } => "export-site",
            Command::TimingReport => "timing-report",
        }
    }
}

type Failure = Box<dyn std::error::Error>;

fn engine(cli: &Cli) -> Result<Engine, Failure> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::desk(),
    };
    let gateway = match cli.provider {
        ProviderKind::Mock => {
            // Read-only commands never call the provider, so a missing
            // script directory only matters once a stage runs.
            let dir = cli.script.clone().unwrap_or_else(|| cli.registry.join("script"));
            Gateway::new(
                Arc::new(skillforge::provider::MockProvider::new(dir)),
                config.effort_profile()?,
            )
        }
        ProviderKind::Live => Gateway::new(Arc::new(LiveProvider::from_env()?), config.effort_profile()?),
    };
    Ok(Engine::new(Layout::new(&cli.registry), config, gateway)?)
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn print_campaign(r: &CampaignReport) {
    println!(
        "campaign {}: {:?}, {} mining phases, {} evaluation phases",
        r.campaign_id,
        r.status,
        r.mining_phases(),
        r.evaluation_phases()
    );
    for p in &r.phases {
        println!("  {}", serde_json::to_string(p).expect("phases serialize"));
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Init { taxonomy } => {
            let text = fsutil::read_to_string(taxonomy)?;
            let lib = init_project(&Layout::new(&cli.registry), &text)?;
            let c = lib.tree.coverage_summary();
            println!("initialized {} ({} domains, {} leaves)", cli.registry.display(), c.domains, c.leaves);
        }
        Command::Cycle { parallel, branch } => {
            let mode = if *parallel { Mode::Parallel } else { Mode::Sequential };
            let r = engine(cli)?.run_cycle(mode, branch.clone())?;
            println!("{}", json(&r));
        }
        Command::Campaign(CampaignCommand::Run { plan, stop_after }) => {
            let r = run_campaign(&engine(cli)?, CampaignConfig::load(plan)?, *stop_after)?;
            print_campaign(&r);
        }
        Command::Campaign(CampaignCommand::Resume { id, stop_after }) => {
            let r = resume_campaign(&engine(cli)?, id, *stop_after)?;
            print_campaign(&r);
        }
        Command::DesignSkill { prompt } => {
            let text = fsutil::read_to_string(prompt)?;
            let r = engine(cli)?.design_skill(&text)?;
            println!("{}", json(&r));
        }
        Command::Test { skill_id, layer } => {
            let r = engine(cli)?.retest(skill_id, layer.map(Layer::from))?;
            println!("{}", json(&r));
        }
        Command::Novelty { skill_id } => {
            let v = engine(cli)?.novelty_preview(skill_id)?;
            println!("{}", json(&v));
        }
        Command::Status => {
            let s = engine(cli)?.status()?;
            println!("{}", json(&s));
        }
        Command::ExportSite { dest } => {
            let b = engine(cli)?.export(dest)?;
            println!(
                "exported {} skills, {} resources to {}",
                b.skills_index.len(),
                b.resources_index.len(),
                dest.display()
            );
        }
        Command::TimingReport => {
            let (_, table) = engine(cli)?.timing_report()?;
            print!("{}", table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", cli.command.name(), e);
            ExitCode::FAILURE
        }
    }
}
