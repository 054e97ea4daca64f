//! `fyi`: run the synthesis engine stage by stage, as a batch, or as a benchmark.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fyi_core::assets::AssetRepository;
use fyi_core::bench::{jerky_benchmark, misplacement_benchmark, JerkyConfig, MisplacementConfig};
use fyi_core::export::write_files;
use fyi_core::pipeline::{run_batch, run_scene, PipelineConfig, PipelineError, RunContext, Stage, EXIT_CONFIG};

/// `println!` that stops quietly when stdout is closed, e.g. piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Parser, Debug)]
#[command(name = "fyi", version, about = "Instruction-to-dataset synthesis engine")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Optimization views.
    #[arg(long, global = true, default_value_t = 2)]
    views: usize,
    /// Pass threshold on the multi-view mean score.
    #[arg(long, global = true, default_value_t = 0.8)]
    threshold: f64,
    /// Use the HTTP gateway (reads FYI_LLM_API_KEY) instead of the offline mocks.
    #[arg(long, global = true)]
    live: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decompose the instruction and print the result.
    Collect,
    /// Compose the layout and write scene.json.
    Layout,
    /// Run multi-view optimization and write the optimized scene.json.
    Optimize,
    /// Plan and refine the motion; writes plan.json and report.json.
    Plan,
    /// Run one scene to the end and write its frames, without a manifest.
    Render,
    /// Run the whole batch and write the bundle with its manifest.
    Pipeline,
    /// Run the misplacement and jerky-plan benchmarks and print a table.
    Bench {
        /// Misplacement scenes per view count.
        #[arg(long, default_value_t = 100)]
        scenes: usize,
        /// Jerky plans.
        #[arg(long, default_value_t = 50)]
        plans: usize,
        /// Misplacement image size in pixels.
        #[arg(long, default_value_t = 64)]
        resolution: u32,
    },
}

fn load_config(global: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.optimize.views = global.views;
    config.optimize.threshold = global.threshold;
    config.validate()?;
    Ok(config)
}

fn run_stage(global: &Global, stage: Stage) -> anyhow::Result<i32> {
    let ctx = RunContext::new(load_config(global)?, global.seed, global.live)?;
    let run = run_scene(&ctx, 0, global.seed, stage);
    if stage == Stage::Collect {
        if let Some(d) = &run.decomposition {
            say!("{}", serde_json::to_string_pretty(d)?);
        }
    }
    if let Some(r) = &run.report {
        say!("optimization: passed {}  iterations {}  relocations {}", r.passed, r.iterations, r.relocations.len());
    }
    if !run.files.is_empty() {
        let written = write_files(&global.out, &run.files).with_context(|| format!("writing {}", global.out.display()))?;
        for f in written {
            say!("{}  {}", f.sha256, f.path);
        }
    }
    for e in &run.errors {
        eprintln!("error: {e}");
    }
    Ok(run.exit_code)
}

fn run_pipeline(global: &Global) -> anyhow::Result<i32> {
    let ctx = RunContext::new(load_config(global)?, global.seed, global.live)?;
    let outcome = run_batch(&ctx, global.seed, &global.out)?;
    for s in &outcome.manifest.scenes {
        say!(
            "{}  seed {}  passed {}  converged {}  frames {}  exit {}",
            s.name, s.seed, s.passed, s.converged, s.frames, s.exit_code
        );
        for e in &s.errors {
            eprintln!("{}: {e}", s.name);
        }
    }
    say!("manifest: {}", global.out.join("manifest.json").display());
    Ok(outcome.exit_code)
}

fn run_bench(global: &Global, scenes: usize, plans: usize, resolution: u32) -> anyhow::Result<i32> {
    let config = load_config(global)?;
    let repo = match &config.asset_manifest {
        Some(p) => AssetRepository::load(p)?,
        None => AssetRepository::demo(),
    };
    let misplacement = MisplacementConfig {
        scenes,
        resolution,
        optimize: config.optimize_config(),
        first_seed: global.seed,
    };
    say!("misplacement benchmark: {scenes} scenes, {resolution}x{resolution}, threshold {}", global.threshold);
    say!("{:>5}  {:>12}  {:>6}  {:>10}  {:>8}", "views", "success_rate", "passed", "mean_iters", "seconds");
    let mut views: Vec<usize> = vec![1, 2, 3];
    if !views.contains(&global.views) {
        views.push(global.views);
    }
    for v in views {
        let s = misplacement_benchmark(&repo, v, &misplacement);
        say!("{:>5}  {:>12.2}  {:>6}  {:>10.2}  {:>8.2}", v, s.success_rate, s.passed, s.mean_iterations, s.seconds);
        for e in &s.errors {
            eprintln!("  {e}");
        }
    }
    let jerky = JerkyConfig {
        plans,
        max_rounds: config.planner.max_rounds,
        budget: config.planner.budget,
        first_seed: global.seed,
    };
    let j = jerky_benchmark(&repo, &jerky);
    say!();
    say!("jerky-plan benchmark: {plans} plans, at most {} rounds", jerky.max_rounds);
    say!("{:>16}  {:>15}  {:>5}  {:>10}  {:>8}", "violations_before", "violations_after", "clean", "max_rounds", "seconds");
    say!(
        "{:>16.2}  {:>15.2}  {:>5}  {:>10}  {:>8.2}",
        j.mean_violations_before, j.mean_violations_after, j.clean, j.max_rounds_used, j.seconds
    );
    for e in &j.errors {
        eprintln!("  {e}");
    }
    Ok(0)
}

fn exit_code_of(err: &anyhow::Error) -> i32 {
    err.downcast_ref::<PipelineError>().map_or(EXIT_CONFIG, PipelineError::exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match cli.command {
        Command::Collect => run_stage(g, Stage::Collect),
        Command::Layout => run_stage(g, Stage::Layout),
        Command::Optimize => run_stage(g, Stage::Optimize),
        Command::Plan => run_stage(g, Stage::Plan),
        Command::Render => run_stage(g, Stage::Export),
        Command::Pipeline => run_pipeline(g),
        Command::Bench { scenes, plans, resolution } => run_bench(g, scenes, plans, resolution),
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        exit_code_of(&e)
    });
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}

