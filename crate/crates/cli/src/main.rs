//! Command-line entry point for scenario generation, training and evaluation.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use thz360_core::hddpg::write_curve;
use thz360_core::harness::{
    build_env, build_scenario, headpred_file, run_experiment, save_actors, synth_saliency, synth_scenes,
    stream_rng, train_drl, train_headpred, write_metrics, write_scenario_traces, ExperimentConfig, PolicyKind,
    Stream,
};

#[derive(Parser)]
#[command(name = "thz360", version, about = "Multi-user 360-degree video streaming over terahertz links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured policy.
    #[arg(long)]
    policy: Option<PolicyKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes synthetic head traces (traces.csv, train_traces.csv).
    GenTraces(Common),
    /// Writes synthetic saliency videos (video_<k>.smap).
    GenSaliency(Common),
    /// Trains personalised head models.
    TrainHeadpred(Common),
    /// Trains the bitrate and beamforming agents.
    TrainDrl(Common),
    /// Trains what the policy needs and evaluates it.
    Evaluate(Common),
    /// Evaluates several policies and seeds into one metrics.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        /// Comma-separated policies; all when omitted.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<PolicyKind>,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = c.policy {
        cfg.policy = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenTraces(c) => {
            let cfg = load_config(&c)?;
            let data = build_scenario(&cfg)?;
            write_scenario_traces(&data, &c.out)?;
            println!("wrote traces for {} users to {}", data.test_traces.len(), c.out.display());
        }
        Command::GenSaliency(c) => {
            let cfg = load_config(&c)?;
            let mut rng = stream_rng(cfg.seed, Stream::Scenario);
            let scenes = synth_scenes(&cfg, &mut rng);
            let files = synth_saliency(&scenes, cfg.fusion.map_width, cfg.fusion.map_height, &c.out)?;
            println!("wrote {} saliency videos to {}", files.len(), c.out.display());
        }
        Command::TrainHeadpred(c) => {
            let cfg = load_config(&c)?;
            ensure_dir(&c.out)?;
            let data = build_scenario(&cfg)?;
            let models = train_headpred(&cfg, &data)?;
            for (u, m) in models.iter().enumerate() {
                m.save(&headpred_file(&c.out, u))?;
            }
            println!("wrote {} head models to {}", models.len(), c.out.display());
        }
        Command::TrainDrl(c) => {
            let cfg = load_config(&c)?;
            ensure_dir(&c.out)?;
            let data = build_scenario(&cfg)?;
            let mut env = build_env(&cfg, &data)?;
            let out = train_drl(&cfg, &mut env)?;
            save_actors(&out, &c.out)?;
            write_curve(&out.curve, &c.out.join("training_curve.csv"))?;
            println!("trained {} episodes; actors in {}", out.curve.len(), c.out.display());
        }
        Command::Evaluate(c) => {
            let cfg = load_config(&c)?;
            let run = run_experiment(&cfg, &c.out)?;
            println!(
                "{}: avg QoE {:.4}, avg rebuffering {:.4} slots, avg sum-rate {:.3e} bit/s",
                run.metrics.policy, run.metrics.avg_qoe, run.metrics.avg_rebuffer_slots, run.metrics.avg_sum_rate_bps
            );
        }
        Command::Sweep {
            common,
            seeds,
            policies,
        } => {
            let base = load_config(&common)?;
            let policies = if policies.is_empty() {
                PolicyKind::ALL.to_vec()
            } else {
                policies
            };
            let mut rows = Vec::new();
            for &seed in &seeds {
                for &policy in &policies {
                    let cfg = ExperimentConfig {
                        seed,
                        policy,
                        ..base.clone()
                    };
                    let dir = common.out.join(format!("{policy}_seed{seed}"));
                    let run = run_experiment(&cfg, &dir)?;
                    println!("{policy} seed {seed}: avg QoE {:.4}", run.metrics.avg_qoe);
                    rows.push(run.metrics);
                }
            }
            ensure_dir(&common.out)?;
            write_metrics(&rows, &common.out.join("metrics.csv"))?;
        }
    }
    Ok(())
}
