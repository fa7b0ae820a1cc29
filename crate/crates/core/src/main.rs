use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use actionloc::config::PipelineConfig;
use actionloc::error::{Error, Result};
use actionloc::pipeline::{
    run_calibrate, run_evaluate, run_fuse, run_pipeline, run_postprocess, run_propose, run_synth,
    with_pool, PipelineInput, SynthOptions,
};
use actionloc::synthetic::ScenarioParams;

/// Multi-view driving-action localization: proposal generation, score
/// fusion, threshold calibration, post-processing and evaluation.
#[derive(Parser)]
#[command(name = "actionloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration source flags shared by every stage. Precedence: --set
/// overrides beat the --config file, which beats built-in defaults.
#[derive(Args)]
struct ConfigArgs {
    /// key=value manifest file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Individual override, repeatable (e.g. --set merge_tol=3)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for per-video stages (0 = one per logical CPU)
    #[arg(long)]
    workers: Option<usize>,
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for pair in &self.set {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::invariant(format!("--set expects KEY=VALUE, got '{pair}'"))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Scenario flags shared by `synth` and `pipeline`.
#[derive(Args)]
struct ScenarioArgs {
    /// Seed of all scenario randomness
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of videos
    #[arg(long, default_value_t = 4)]
    videos: usize,
    /// Actions per video (each class at most once)
    #[arg(long, default_value_t = 8)]
    actions: usize,
    /// Score noise level in [0, 1)
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Per-view peak reliability as dashboard,rear,right
    #[arg(long, default_value = "1.0,0.8,0.9")]
    reliability: String,
    /// Shift rendered action boundaries by up to this many seconds
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
}

impl ScenarioArgs {
    fn options(&self) -> Result<SynthOptions> {
        let parts: Vec<&str> = self.reliability.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::invariant(format!(
                "--reliability expects three comma-separated values, got '{}'",
                self.reliability
            )));
        }
        let mut view_reliability = [0.0; 3];
        for (slot, part) in view_reliability.iter_mut().zip(&parts) {
            *slot = part
                .parse::<f64>()
                .map_err(|_| Error::invariant(format!("invalid reliability value '{part}'")))?;
        }
        Ok(SynthOptions {
            seed: self.seed,
            params: ScenarioParams {
                n_videos: self.videos,
                n_actions_per_video: self.actions,
                noise_level: self.noise,
                view_reliability,
            },
            jitter: self.jitter,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario (score traces + ground truth)
    Synth {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output score-trace file
        #[arg(long)]
        traces: PathBuf,
        /// Output ground-truth CSV
        #[arg(long)]
        gt: PathBuf,
    },
    /// Generate scored candidate intervals from actionness traces
    Propose {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fuse per-view/per-rate class scores onto proposals (model voting)
    Fuse {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Mine per-class thresholds from correctly-localized predictions
    Calibrate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cross-validate over N video folds; writes <out>.fold<k> tables
        /// and their element-wise minimum to <out>
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Duration filter, threshold gates and duplicate merging
    Postprocess {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the challenge submission file
        #[arg(long)]
        submission: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score predictions against ground truth
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Raw proposal file for AR@AN
        #[arg(long)]
        proposals: Option<PathBuf>,
        /// Write the machine-readable report here
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run every stage end to end through files in --outdir
    Pipeline {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Ingest existing traces instead of synthesizing (requires --gt)
        #[arg(long, requires = "gt")]
        traces: Option<PathBuf>,
        /// Ground truth to use with --traces
        #[arg(long, requires = "traces")]
        gt: Option<PathBuf>,
        #[arg(long)]
        outdir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { scenario, traces, gt } => run_synth(&scenario.options()?, &traces, &gt),
        Command::Propose { traces, out, config } => {
            let cfg = config.build()?;
            with_pool(cfg.workers, || run_propose(&traces, &out, &cfg))
        }
        Command::Fuse {
            traces,
            proposals,
            out,
            config,
        } => {
            let cfg = config.build()?;
            with_pool(cfg.workers, || run_fuse(&traces, &proposals, &out, &cfg))
        }
        Command::Calibrate {
            predictions,
            gt,
            out,
            folds,
            config,
        } => {
            let cfg = config.build()?;
            run_calibrate(&predictions, &gt, &out, folds, &cfg)
        }
        Command::Postprocess {
            predictions,
            thresholds,
            out,
            submission,
            config,
        } => {
            let cfg = config.build()?;
            run_postprocess(&predictions, &thresholds, &out, submission.as_deref(), &cfg)
        }
        Command::Evaluate {
            predictions,
            gt,
            proposals,
            report,
            config,
        } => {
            let cfg = config.build()?;
            let result = run_evaluate(
                &predictions,
                &gt,
                proposals.as_deref(),
                report.as_deref(),
                &cfg,
            )?;
            print!("{result}");
            Ok(())
        }
        Command::Pipeline {
            scenario,
            traces,
            gt,
            outdir,
            config,
        } => {
            let cfg = config.build()?;
            let input = match (traces, gt) {
                (Some(traces), Some(gt)) => PipelineInput::Files { traces, gt },
                _ => PipelineInput::Synth(scenario.options()?),
            };
            let report = run_pipeline(&input, &outdir, &cfg)?;
            print!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
