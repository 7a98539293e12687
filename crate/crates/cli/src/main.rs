//! Command-line driver for the cascade. Each subcommand runs one
//! stage against a pipeline config, reading its inputs from the
//! config's output directory and persisting its outputs there, so
//! stages compose through files; `run` executes every stage in order.
//!
//! Exit codes: 0 on success, 1 on a configuration error, 2 on a stage
//! failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cropcascade::error::CoreError;
use cropcascade::io;
use cropcascade::pipeline::{self, PipelineConfig, PipelineError, RunSummary};
use cropcascade::scenegen::{
    generate_prior_year, generate_scene, huantai_profiles, zhijiang_prior_profiles,
    zhijiang_profiles, PhenologyProfile, SceneSpec,
};

#[derive(Parser)]
#[command(
    name = "cropcascade",
    version,
    about = "Cascaded crop classification over satellite image time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle from a spec and phenology profiles.
    Generate(GenerateArgs),
    /// Select strong pixels, apply the rules, open the labels, and draw samples.
    Label(ConfigArg),
    /// Destroy observations in the strong samples to match the target histogram.
    Weaken(ConfigArg),
    /// Append synthetic mixed-pixel samples to the weakened set.
    SynthMix(ConfigArg),
    /// Sweep the tree-count grid on a holdout split.
    Sweep(ConfigArg),
    /// Train the multiclass forest on the training set.
    Train(ConfigArg),
    /// Predict the class map and per-class vote shares for the scene.
    Classify(ConfigArg),
    /// Train one-class ensembles and write their positive masks.
    Pul(ConfigArg),
    /// Apply one-class masks onto the prediction and render the final map.
    Overlay(ConfigArg),
    /// Score the final map against ground truth and write the run report.
    Evaluate(ConfigArg),
    /// Run every stage in order.
    Run(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline config file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Scene spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Phenology profile map JSON file (profile name to parameters).
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    profiles: Option<PathBuf>,
    /// Built-in profile set to use instead of a file.
    #[arg(long, value_enum)]
    builtin: Option<BuiltinProfiles>,
    /// Output scene bundle directory.
    #[arg(long)]
    out: PathBuf,
    /// Generate the prior year on year-shifted grids, without clouds.
    #[arg(long)]
    prior_year: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BuiltinProfiles {
    Zhijiang,
    ZhijiangPrior,
    Huantai,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PipelineError::Config(_) => ExitCode::from(1),
                PipelineError::Stage { .. } => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Generate(args) => generate(&args),
        Command::Label(arg) => {
            let (config, base) = load(&arg)?;
            pipeline::stage_setup(&config, &base)?;
            let outcome = pipeline::stage_label(&config, &base)?;
            println!(
                "selected {} strong pixels, labeled {}, drew {} samples",
                outcome.strong_selected, outcome.labeled_pixels, outcome.samples
            );
            Ok(())
        }
        Command::Weaken(arg) => {
            let (config, base) = load(&arg)?;
            pipeline::stage_setup(&config, &base)?;
            let report = pipeline::stage_weaken(&config, &base)?;
            println!(
                "weakened samples toward the target histogram ({} kept sparse)",
                report.kept_sparse
            );
            Ok(())
        }
        Command::SynthMix(arg) => {
            let (config, base) = load(&arg)?;
            pipeline::stage_setup(&config, &base)?;
            let total = pipeline::stage_mixtures(&config, &base)?;
            println!("training set has {total} samples");
            Ok(())
        }
        Command::Sweep(arg) => {
            let (config, base) = load(&arg)?;
            pipeline::stage_setup(&config, &base)?;
            match pipeline::stage_sweep(&config, &base)? {
                Some(report) => {
                    let accuracy = report
                        .points
                        .iter()
                        .find(|p| p.n_trees == report.chosen_n_trees)
                        .map(|p| p.holdout_accuracy)
                        .unwrap_or(0.0);
                    println!(
                        "chose {} trees (holdout accuracy {:.4})",
                        report.chosen_n_trees, accuracy
                    );
                }
                None => println!("no sweep configured"),
            }
            Ok(())
        }
        Command::Train(arg) => {
            let (config, base) = load(&arg)?;
            pipeline::stage_setup(&config, &base)?;
            let n_trees = pipeline::stage_train(&config, &base)?;
            println!("trained forest with {n_trees} trees");
            Ok(())
        }
        Command::Classify(arg) => {
            let (config, base) = load(&arg)?;
            pipeline::stage_setup(&config, &base)?;
            pipeline::stage_classify(&config, &base)?;
            println!("wrote prediction map");
            Ok(())
        }
        Command::Pul(arg) => {
            let (config, base) = load(&arg)?;
            pipeline::stage_setup(&config, &base)?;
            let stages = pipeline::stage_pul(&config, &base)?;
            if stages == 0 {
                println!("no one-class stages configured");
            } else {
                println!("ran {stages} one-class stages");
            }
            Ok(())
        }
        Command::Overlay(arg) => {
            let (config, base) = load(&arg)?;
            pipeline::stage_setup(&config, &base)?;
            pipeline::stage_overlay(&config, &base)?;
            println!("wrote final map");
            Ok(())
        }
        Command::Evaluate(arg) => {
            let (config, base) = load(&arg)?;
            pipeline::stage_setup(&config, &base)?;
            let summary = pipeline::stage_evaluate(&config, &base)?;
            print_summary(&summary);
            Ok(())
        }
        Command::Run(arg) => {
            let (config, base) = load(&arg)?;
            let summary = pipeline::run_pipeline(&config, &base)?;
            print_summary(&summary);
            println!(
                "outputs in {}",
                io::resolve_path(&base, &config.output_dir).display()
            );
            Ok(())
        }
    }
}

fn load(arg: &ConfigArg) -> Result<(PipelineConfig, PathBuf), PipelineError> {
    PipelineConfig::from_file(&arg.config).map_err(PipelineError::Config)
}

fn print_summary(summary: &RunSummary) {
    match &summary.evaluation {
        Some(eval) => println!(
            "overall accuracy {:.4} over {} pixels",
            eval.overall_accuracy, eval.evaluated_pixels
        ),
        None => println!("ground truth absent; accuracy not computed"),
    }
}

fn read_json_input<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| {
        PipelineError::Config(CoreError::InvalidConfig(format!(
            "cannot read {}: {e}",
            path.display()
        )))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        PipelineError::Config(CoreError::InvalidConfig(format!(
            "cannot parse {}: {e}",
            path.display()
        )))
    })
}

fn generate(args: &GenerateArgs) -> Result<(), PipelineError> {
    let spec: SceneSpec = read_json_input(&args.spec)?;
    let profiles: BTreeMap<String, PhenologyProfile> = match (&args.profiles, args.builtin) {
        (Some(path), None) => read_json_input(path)?,
        (None, Some(builtin)) => match builtin {
            BuiltinProfiles::Zhijiang => zhijiang_profiles(),
            BuiltinProfiles::ZhijiangPrior => zhijiang_prior_profiles(),
            BuiltinProfiles::Huantai => huantai_profiles(),
        },
        _ => unreachable!("clap enforces exactly one profile source"),
    };
    let generate_stage = |source: CoreError| PipelineError::Stage {
        stage: "generate".to_string(),
        source,
    };
    let scene = if args.prior_year {
        generate_prior_year(&spec, &profiles)
    } else {
        generate_scene(&spec, &profiles)
    }
    .map_err(generate_stage)?;
    io::save_scene(&scene, &args.out).map_err(generate_stage)?;
    println!(
        "wrote scene bundle {} ({}x{}, {} classes)",
        args.out.display(),
        scene.width,
        scene.height,
        scene.classes.len()
    );
    Ok(())
}
