use std::path::{Path, PathBuf};
use std::process::ExitCode;

use centaur_core::harness::{plot_summary, run_experiment, solve_cache, Experiment, ExperimentSpec, Mode};
use centaur_core::Error;
use clap::{Args, Parser, Subcommand};
use log::error;

#[derive(Parser)]
#[command(name = "centaur-lab", version, about = "Run human-machine centaur planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Food Truck: hyperbolic human, learning over 20 episodes per seed.
    Foodtruck(RunArgs),
    /// Food Shelter: the human overestimates action noise.
    Foodshelter(RunArgs),
    /// Food Shelter: the machine overestimates action noise.
    #[command(name = "foodshelter_swapped", alias = "foodshelter-swapped")]
    FoodshelterSwapped(RunArgs),
    /// Food Shelter: both agents know the true noise.
    #[command(name = "foodshelter_bothcorrect", alias = "foodshelter-bothcorrect")]
    FoodshelterBothcorrect(RunArgs),
    /// Check the single-step belief alignment bound on random instances.
    Alignment(AlignmentArgs),
    /// Pre-solve the prior particles of an experiment into its cache directory.
    SolveCache {
        /// JSON experiment spec; must name the experiment and a cache_dir.
        #[arg(long)]
        config: PathBuf,
    },
    /// Render summary.csv as an SVG next to it.
    Plot { summary: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Arms to run, comma separated (centaur, naive, ideal, human). All by default.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<String>,
    /// Seed range `a..b` (end exclusive) or a comma separated list.
    #[arg(long)]
    seeds: Option<String>,
    /// JSON experiment spec; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds played concurrently.
    #[arg(long)]
    workers: Option<usize>,
    /// Directory of solved particle caches.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AlignmentArgs {
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Fails before anything ran.
struct SpecError(String);

impl From<Error> for SpecError {
    fn from(e: Error) -> Self {
        SpecError(e.to_string())
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, SpecError> {
    let bad = || SpecError(format!("bad seed list `{s}`; expected `a..b` or `1,2,3`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn load_spec(experiment: Experiment, config: Option<&Path>) -> Result<ExperimentSpec, SpecError> {
    let Some(path) = config else {
        return Ok(ExperimentSpec::new(experiment));
    };
    let text = std::fs::read_to_string(path).map_err(|e| SpecError(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| SpecError(format!("{}: {e}", path.display())))?;
    let obj = value.as_object_mut().ok_or_else(|| SpecError("config must be a JSON object".into()))?;
    obj.insert("experiment".into(), serde_json::to_value(experiment).expect("enum serializes"));
    serde_json::from_value(value).map_err(|e| SpecError(format!("{}: {e}", path.display())))
}

fn run_spec(args: RunArgs, experiment: Experiment) -> Result<ExperimentSpec, SpecError> {
    let mut spec = load_spec(experiment, args.config.as_deref())?;
    if !args.mode.is_empty() {
        spec.modes = args.mode.iter().map(|m| Mode::parse(m.trim())).collect::<Result<_, _>>()?;
    }
    if let Some(s) = &args.seeds {
        spec.seeds = parse_seeds(s)?;
    }
    if let Some(out) = args.out {
        spec.output_dir = Some(out);
    }
    if let Some(w) = args.workers {
        spec.workers = w;
    }
    if let Some(c) = args.cache_dir {
        spec.cache_dir = Some(c);
    }
    spec.validate()?;
    Ok(spec)
}

fn execute(spec: &ExperimentSpec) -> u8 {
    match run_experiment(spec) {
        Ok(result) => {
            if spec.experiment == Experiment::Alignment {
                let failed = result.bounds.iter().filter(|(_, b)| !b.holds).count();
                println!(
                    "{} instances checked ({} rejected with zero value of observation), {} violations",
                    result.bounds.len(),
                    result.rejected_instances,
                    failed
                );
            } else {
                for arm in &result.arms {
                    let (mean, se) = arm.final_stats(0);
                    println!("{:>8}: mean return {mean:.3} (se {se:.3}) over {} seeds", arm.mode.name(), arm.seeds.len());
                }
            }
            if let Some(dir) = &spec.output_dir {
                println!("wrote {}", dir.display());
            }
            0
        }
        Err(Error::InvalidSpec(m)) => {
            error!("invalid spec: {m}");
            2
        }
        Err(e) => {
            error!("{e}");
            3
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    ExitCode::from(run(Cli::parse()))
}

/// Exit status: 0 on success, 2 for a bad spec or summary, 3 when a run fails.
fn run(cli: Cli) -> u8 {
    let spec = match cli.command {
        Command::Foodtruck(a) => run_spec(a, Experiment::Foodtruck),
        Command::Foodshelter(a) => run_spec(a, Experiment::Foodshelter),
        Command::FoodshelterSwapped(a) => run_spec(a, Experiment::FoodshelterSwapped),
        Command::FoodshelterBothcorrect(a) => run_spec(a, Experiment::FoodshelterBothcorrect),
        Command::Alignment(a) => load_spec(Experiment::Alignment, a.config.as_deref()).and_then(|mut spec| {
            if let Some(n) = a.instances {
                spec.alignment.instances = n;
            }
            if let Some(s) = a.seed {
                spec.alignment.seed = s;
            }
            if let Some(out) = a.out {
                spec.output_dir = Some(out);
            }
            spec.validate()?;
            Ok(spec)
        }),
        Command::SolveCache { config } => {
            let spec = std::fs::read_to_string(&config)
                .map_err(|e| SpecError(format!("{}: {e}", config.display())))
                .and_then(|t| ExperimentSpec::from_json(&t).map_err(SpecError::from));
            return match spec.map(|s| solve_cache(&s)) {
                Err(SpecError(m)) | Ok(Err(Error::InvalidSpec(m))) => {
                    error!("invalid spec: {m}");
                    2
                }
                Ok(Err(e)) => {
                    error!("{e}");
                    3
                }
                Ok(Ok((report, status))) => {
                    println!(
                        "{}: {} particles, {} solved models ({status:?})",
                        report.path.display(),
                        report.particles,
                        report.models
                    );
                    0
                }
            };
        }
        Command::Plot { summary } => {
            return match plot_summary(&summary) {
                Ok(out) => {
                    println!("wrote {}", out.display());
                    0
                }
                Err(e @ Error::MalformedSummary(_)) => {
                    error!("{e}");
                    2
                }
                Err(e) => {
                    error!("{e}");
                    3
                }
            };
        }
    };
    match spec {
        Ok(spec) => execute(&spec),
        Err(SpecError(m)) => {
            error!("invalid spec: {m}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;

    fn status(args: &[&str]) -> u8 {
        let mut argv = vec!["centaur-lab"];
        argv.extend_from_slice(args);
        run(Cli::try_parse_from(argv).unwrap())
    }

    const SMALL: &str = r#"{"seeds": [0, 1], "food_shelter": {"horizon": 10, "prior_eps": 2, "prior_c": 2,
        "prior_c_step": 0.05, "planner": {"iterations": 50}}}"#;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").ok().unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").ok().unwrap(), vec![4, 7]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("a..b").is_err());
    }

    #[test]
    fn runs_succeed() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("small.json");
        fs::write(&config, SMALL).unwrap();
        let out = dir.path().join("run");
        let code = status(&[
            "foodshelter_swapped",
            "--config",
            config.to_str().unwrap(),
            "--mode",
            "naive,human",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert!(out.join("summary.csv").exists());
        assert_eq!(status(&["plot", out.join("summary.csv").to_str().unwrap()]), 0);
        assert!(out.join("summary.svg").exists());

        let out = dir.path().join("align");
        assert_eq!(status(&["alignment", "--instances", "3", "--out", out.to_str().unwrap()]), 0);
        assert_eq!(fs::read_to_string(out.join("bounds.csv")).unwrap().lines().count(), 4);
    }

    #[test]
    fn bad_specs_exit_with_2() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(status(&["foodshelter", "--mode", "oracle"]), 2);
        assert_eq!(status(&["foodtruck", "--seeds", "5..2"]), 2);
        assert_eq!(status(&["foodtruck", "--workers", "0"]), 2);
        let config = dir.path().join("bad.json");
        fs::write(&config, "{ nope").unwrap();
        assert_eq!(status(&["foodshelter", "--config", config.to_str().unwrap()]), 2);
        assert_eq!(status(&["solve-cache", "--config", config.to_str().unwrap()]), 2);
        // a valid spec without a cache directory
        fs::write(&config, r#"{"experiment": "foodshelter"}"#).unwrap();
        assert_eq!(status(&["solve-cache", "--config", config.to_str().unwrap()]), 2);

        let summary = dir.path().join("summary.csv");
        fs::write(&summary, "arm,index\nhuman,x\n").unwrap();
        assert_eq!(status(&["plot", summary.to_str().unwrap()]), 2);
    }

    #[test]
    fn failed_runs_exit_with_3() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("small.json");
        fs::write(&config, SMALL).unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "").unwrap();
        let out = blocker.join("run");
        let code = status(&["foodshelter", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 3);
    }
}
