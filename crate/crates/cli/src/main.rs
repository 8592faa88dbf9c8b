//! `cseg`: command-line driver for the constrained segmentation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cseg::pipeline::phases::{self, Workspace};
use cseg::pipeline::{AblationMode, RunConfig, SweepAxis};

#[derive(Parser)]
#[command(name = "cseg", version, about = "Anatomy-constrained lesion segmentation on synthetic phantoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Workspace directory.
    #[arg(long, default_value = "cseg-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the lung and lesion phantom datasets.
    Synth(Common),
    /// Train the lung segmenter and write lung+ candidates.
    Phase1(Common),
    /// Label candidates, train the discriminator, finalize constraints.
    Phase2(Common),
    /// Train and evaluate the lesion segmenter.
    Phase3 {
        #[command(flatten)]
        common: Common,
        /// baseline | constrained (also raw-lung, lung-plus, full)
        #[arg(long)]
        mode: Option<AblationMode>,
    },
    /// Run all four constraint modes under one seed.
    Ablate(Common),
    /// Vary one morphology or coverage parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: SweepAxis,
    },
    /// Finite-difference gradient checks.
    Gradcheck(Common),
    /// Re-evaluate a saved phase3 checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<AblationMode>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth(c) => {
            let cfg = load_config(&c)?;
            let s = phases::run_synth(&cfg, &Workspace::new(&c.out))?;
            println!("lung train/valid/test = {:?}", s.lung);
            println!("lesion train/valid/test = {:?}", s.lesion);
        }
        Command::Phase1(c) => {
            let cfg = load_config(&c)?;
            let s = phases::run_phase1(&cfg, &Workspace::new(&c.out))?;
            print!("{}", s.lung_test.to_kv_text());
            println!("corrupted = {}\nblank_candidates = {}", s.corrupted, s.blank_candidates);
        }
        Command::Phase2(c) => {
            let cfg = load_config(&c)?;
            let s = phases::run_phase2(&cfg, &Workspace::new(&c.out))?;
            println!("auroc = {:.6}", s.auroc);
            print!("{}", s.anchors_csv());
            println!("chosen cutoff = {} (anchor {})", s.chosen_cutoff, s.chosen_anchor);
            println!("accepted train/valid/test = {:?}", s.accepted);
        }
        Command::Phase3 { common, mode } => {
            let cfg = load_config(&common)?;
            let ws = Workspace::new(&common.out);
            let mode = mode.unwrap_or(cfg.mode);
            let r = phases::run_phase3(&cfg, &ws, mode, &ws.phase3_dir(mode))?;
            print!("{}", r.to_kv_text());
        }
        Command::Ablate(c) => {
            let cfg = load_config(&c)?;
            let r = phases::run_ablate(&cfg, &Workspace::new(&c.out))?;
            for row in &r.rows {
                println!(
                    "{:<10} iou {:.4}±{:.4} dsc {:.4}±{:.4} hd {:.3}±{:.3}",
                    row.label, row.iou.mean, row.iou.se, row.dsc.mean, row.dsc.se, row.hd.mean, row.hd.se
                );
            }
        }
        Command::Sweep { common, axis } => {
            let cfg = load_config(&common)?;
            let r = phases::run_sweep(&cfg, &Workspace::new(&common.out), axis)?;
            for row in &r.rows {
                println!(
                    "{}={} iou {:.4} (baseline {:.4})",
                    axis.as_str(),
                    row.value,
                    row.full.iou.mean,
                    row.baseline.iou.mean
                );
            }
        }
        Command::Gradcheck(c) => {
            let cfg = load_config(&c)?;
            std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
            let r = phases::run_gradcheck(&cfg, &Workspace::new(&c.out))?;
            print!("{}", r.render());
            return Ok(r.passed());
        }
        Command::Eval { common, mode } => {
            let cfg = load_config(&common)?;
            let mode = mode.unwrap_or(cfg.mode);
            let r = phases::run_eval(&cfg, &Workspace::new(&common.out), mode)?;
            print!("{}", r.to_kv_text());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            // library errors already embed their io cause in the message
            let mut msg = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !msg.ends_with(&text) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&text);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
