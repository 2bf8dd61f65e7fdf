use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use srlab::commands::{self, Ctx};
use srlab::oracle;
use srlab::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "srlab", version, about = "Train and evaluate SR-Reward models and offline agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `train.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set sr.pretrain_steps=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate expert demonstrations.
    GenDemos(Common),
    /// Pretrain SR-Reward on the demonstrations.
    TrainReward {
        #[command(flatten)]
        common: Common,
        /// Continue from an SR checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the offline agent (or BC) and keep the best checkpoint.
    TrainAgent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sr_checkpoint: Option<PathBuf>,
    },
    /// Evaluate agent checkpoints on fresh rollouts.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluate this checkpoint for every seed instead of each seed's best.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// SR-Reward return of noise-corrupted demonstrations.
    CorruptEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sr_checkpoint: Option<PathBuf>,
        /// Comma-separated noise levels; defaults to `eval.noise_levels`.
        #[arg(long, value_delimiter = ',')]
        noise_levels: Option<Vec<f64>>,
    },
    /// Reward heatmaps over the maze for the four unit actions.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sr_checkpoint: Option<PathBuf>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Grid sweep over the negative-sampling β and σ.
    SweepNs {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
    },
    /// Tabular consistency checks on the gridworld.
    OracleCheck(Common),
}

fn context(c: &Common) -> Result<(Ctx, Vec<u64>)> {
    let cfg = ExperimentConfig::load(&c.config, &c.overrides)?;
    let seeds = match c.seed {
        Some(s) => vec![s],
        None => cfg.train.seeds.clone(),
    };
    Ok((Ctx::new(cfg, c.out.clone())?, seeds))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenDemos(c) => {
            let (ctx, seeds) = context(&c)?;
            let r = commands::gen_demos(&ctx, seeds[0])?;
            println!(
                "wrote {} demonstrations to {} ({} attempts, {} discarded)",
                r.requested,
                ctx.path("demos.jsonl").display(),
                r.attempts,
                r.discarded
            );
        }
        Command::TrainReward { common, resume } => {
            let (ctx, seeds) = context(&common)?;
            for s in seeds {
                let run = commands::train_reward(&ctx, s, resume.as_deref())?;
                let last = run.trace.last().map_or(f64::NAN, |r| r.total);
                println!("seed {s}: final total loss {last:.6}, checkpoint {}", run.checkpoint.display());
            }
        }
        Command::TrainAgent { common, sr_checkpoint } => {
            let (ctx, seeds) = context(&common)?;
            for s in seeds {
                let run = commands::train_agent(&ctx, s, sr_checkpoint.as_deref())?;
                println!(
                    "seed {s}: best mean return {:.3} at step {}, final {:.3}",
                    run.best_return, run.best_step, run.final_return
                );
            }
        }
        Command::Eval { common, checkpoint } => {
            let (ctx, seeds) = context(&common)?;
            let r = commands::eval(&ctx, &seeds, checkpoint.as_deref())?;
            for row in &r.per_seed {
                println!(
                    "seed {}: return {:.3} ± {:.3}, success {:.2}, normalized {:.4}",
                    row.seed, row.mean_return, row.std_return, row.success_rate, row.normalized
                );
            }
            println!(
                "aggregate: normalized {:.4} ± {:.4}, success {:.2}",
                r.aggregate.mean_normalized, r.aggregate.std_normalized, r.aggregate.mean_success
            );
        }
        Command::CorruptEval {
            common,
            sr_checkpoint,
            noise_levels,
        } => {
            let (ctx, seeds) = context(&common)?;
            let levels = noise_levels.unwrap_or_else(|| ctx.cfg.eval.noise_levels.clone());
            for s in seeds {
                for r in commands::corrupt_eval(&ctx, s, sr_checkpoint.as_deref(), &levels)? {
                    println!("seed {s}: noise {:.3} mean {:.4} std {:.4} n {}", r.noise, r.mean, r.std, r.n);
                }
            }
        }
        Command::Heatmap {
            common,
            sr_checkpoint,
            resolution,
        } => {
            let (ctx, seeds) = context(&common)?;
            let res = resolution.unwrap_or(ctx.cfg.eval.heatmap_resolution);
            for s in seeds {
                commands::heatmap(&ctx, s, sr_checkpoint.as_deref(), res)?;
                println!("seed {s}: wrote {res}x{res} heatmaps to {}", ctx.out.display());
            }
        }
        Command::SweepNs { common, betas, sigmas } => {
            let (mut ctx, seeds) = context(&common)?;
            ctx.cfg.train.seeds = seeds;
            let betas = betas.unwrap_or_else(|| ctx.cfg.eval.sweep_betas.clone());
            let sigmas = sigmas.unwrap_or_else(|| ctx.cfg.eval.sweep_sigmas.clone());
            for r in commands::sweep_ns(&ctx, &betas, &sigmas)? {
                println!("beta {:.4} sigma {:.4}: {:.4} ± {:.4}", r.beta, r.sigma, r.mean, r.std);
            }
        }
        Command::OracleCheck(c) => {
            let (ctx, seeds) = context(&c)?;
            let r = oracle::oracle_check(&ctx, seeds[0])?;
            for row in &r.rows {
                println!(
                    "{} {}: max error {:.3e} (tolerance {:.1e}) at {}",
                    if row.pass { "PASS" } else { "FAIL" },
                    row.check,
                    row.max_error,
                    row.tolerance,
                    row.location
                );
            }
            if !r.pass() {
                eprintln!("oracle check failed");
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
