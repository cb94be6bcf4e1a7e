use std::path::{Path, PathBuf};
use std::sync::Arc;

use aliasmaze_core::agents::AgentKind;
use aliasmaze_core::harness::{
    corridor_second_half, kl_divergence, load_map, run_experiment, transfer_experiment, ExperimentConfig, KlSummary,
    RunHooks, VisitHeatmap,
};
use aliasmaze_core::oracle::Condition;
use aliasmaze_core::render::{aliasing_index, AliasingMode, RenderConfig, TexturePalette};
use aliasmaze_core::telemetry::RunControl;
use aliasmaze_server::{AdviceServer, ServerConfig};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "aliasmaze", version, about = "Advice-driven deep Q-learning in a perceptually aliased maze")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train sessions and write metrics, heatmap and summary.
    Train(RunArgs),
    /// Print a heatmap CSV as a normalized grid.
    Heatmap {
        file: PathBuf,
        /// Map used to report the corridor's second-half mass.
        #[arg(long)]
        map: Option<String>,
    },
    /// KL divergence between two heatmaps, both directions.
    Kl { p: PathBuf, q: PathBuf },
    /// Continue a trained checkpoint on a rotated map.
    Transfer {
        #[command(flatten)]
        run: RunArgs,
        /// Quarter turns applied to the map.
        #[arg(long, default_value_t = 1)]
        rotations: u32,
    },
    /// Fraction of near-identical view pairs for each palette.
    AliasingIndex {
        #[arg(long, default_value = "paper20")]
        map: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML experiment config; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long, value_parser = parse_agent)]
    agent: Option<AgentKind>,
    #[arg(long, value_parser = parse_condition)]
    condition: Option<Condition>,
    #[arg(long)]
    friction: Option<u32>,
    #[arg(long)]
    serve_port: Option<u16>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = parse_palette)]
    palette: Option<AliasingMode>,
    /// Built-in map name (paper20, desk12) or a map file.
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    AgentKind::parse(s).ok_or_else(|| format!("unknown agent '{s}' (baseline, fa, naa)"))
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    Condition::parse(s).ok_or_else(|| format!("unknown condition '{s}' (hfha, hfla, lfha, lfla, human, none)"))
}

fn parse_palette(s: &str) -> Result<AliasingMode, String> {
    AliasingMode::parse(s).ok_or_else(|| format!("unknown palette '{s}' (aliased, landmarked)"))
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_toml(&text)?
            }
            None => match self.preset {
                Preset::Desk => ExperimentConfig::desk(),
                Preset::Paper => ExperimentConfig::paper(),
            },
        };
        if let Some(v) = self.agent {
            cfg.agent = v;
        }
        if let Some(v) = self.condition {
            cfg.condition = v;
        }
        if let Some(v) = self.friction {
            cfg.arbitration.friction = v;
        }
        if let Some(v) = self.serve_port {
            cfg.serve_port = Some(v);
        }
        if let Some(v) = &self.checkpoint {
            cfg.checkpoint = Some(v.clone());
        }
        if let Some(v) = self.palette {
            cfg.palette = v;
        }
        if let Some(v) = &self.map {
            cfg.map = v.clone();
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.sessions {
            cfg.sessions = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = Some(v.clone());
        }
        if cfg.condition == Condition::Human && cfg.serve_port.is_none() {
            bail!("the human condition needs --serve-port");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Hooks for a run, with a live server if a port is configured. The server
/// stays up as long as the returned handle lives.
fn hooks(cfg: &ExperimentConfig) -> Result<(RunHooks, Option<AdviceServer>)> {
    let Some(port) = cfg.serve_port else { return Ok((RunHooks::default(), None)) };
    let queue = cfg.arbitration.queue();
    let control = RunControl::new();
    let server_cfg = ServerConfig { map: Some(load_map(&cfg.map)?), ..ServerConfig::default() };
    let server = AdviceServer::serve(&format!("0.0.0.0:{port}"), queue.clone(), control.clone(), server_cfg)?;
    eprintln!("advice server listening on ws://{}", server.local_addr());
    let hooks = RunHooks { telemetry: Arc::new(server.telemetry()), control, queue: Some(queue) };
    Ok((hooks, Some(server)))
}

fn train(args: &RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let (hooks, _server) = hooks(&cfg)?;
    let mut result = run_experiment(&cfg, &hooks)?;
    if let Some(dir) = &cfg.output_dir {
        let label = cfg.label();
        for (other, heat) in sibling_heatmaps(dir, &label)? {
            let forward = kl_divergence(&result.heatmap, &heat)?;
            let reverse = kl_divergence(&heat, &result.heatmap)?;
            result.summary.kl.insert(other.clone(), KlSummary { p: label.clone(), q: other, forward, reverse });
        }
        let path = dir.join(format!("summary_{label}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&result.summary)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&result.summary)?);
    Ok(())
}

/// Heatmaps written by other configurations into the same directory.
fn sibling_heatmaps(dir: &Path, label: &str) -> Result<Vec<(String, VisitHeatmap)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(other) = name.strip_prefix("heatmap_").and_then(|n| n.strip_suffix(".csv")) else { continue };
        if other != label {
            out.push((other.to_string(), VisitHeatmap::read(&path)?));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn heatmap(file: &Path, map: Option<&str>) -> Result<()> {
    let heat = VisitHeatmap::read(file)?;
    let total = heat.total().max(1) as f64;
    for y in 0..heat.height() {
        let row: Vec<String> = (0..heat.width()).map(|x| format!("{:.4}", heat.get(x, y) as f64 / total)).collect();
        println!("{}", row.join(" "));
    }
    println!("visits {}", heat.total());
    if let Some(name) = map {
        let map = load_map(name)?;
        if (map.width(), map.height()) != (heat.width(), heat.height()) {
            bail!("heatmap is {}x{}, map is {}x{}", heat.width(), heat.height(), map.width(), map.height());
        }
        println!("corridor second half mass {:.6}", heat.mass_fraction(&corridor_second_half(&map)));
    }
    Ok(())
}

fn kl(p: &Path, q: &Path) -> Result<()> {
    let (hp, hq) = (VisitHeatmap::read(p)?, VisitHeatmap::read(q)?);
    let out = KlSummary {
        p: p.display().to_string(),
        q: q.display().to_string(),
        forward: kl_divergence(&hp, &hq)?,
        reverse: kl_divergence(&hq, &hp)?,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn transfer(args: &RunArgs, rotations: u32) -> Result<()> {
    let cfg = args.config()?;
    let Some(checkpoint) = cfg.checkpoint.clone() else { bail!("transfer needs --checkpoint") };
    let (hooks, _server) = hooks(&cfg)?;
    let report = transfer_experiment(&cfg, &checkpoint, rotations, &hooks)?;
    if let Some(dir) = &cfg.output_dir {
        let path = dir.join(format!("transfer_{}_r{rotations}.csv", cfg.label()));
        aliasmaze_core::harness::write_records(&path, &report.records)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "rotations": report.rotations,
            "phase1FinalMovingAverage": report.phase1_final_moving_average,
            "phase1StableGoalEpisode": report.phase1_stable_goal_episode,
            "threshold": report.threshold,
            "reconvergenceEpisode": report.reconvergence_episode,
            "episodes": report.records.len(),
        }))?
    );
    Ok(())
}

fn aliasing(map: &str) -> Result<()> {
    let map = load_map(map)?;
    let cfg = RenderConfig::default();
    for mode in [AliasingMode::Aliased, AliasingMode::Landmarked] {
        println!("{} {:.6}", mode.name(), aliasing_index(&map, &TexturePalette::new(mode), &cfg));
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => train(&args),
        Command::Heatmap { file, map } => heatmap(&file, map.as_deref()),
        Command::Kl { p, q } => kl(&p, &q),
        Command::Transfer { run, rotations } => transfer(&run, rotations),
        Command::AliasingIndex { map } => aliasing(&map),
    }
}
