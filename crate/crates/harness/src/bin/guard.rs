use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use guard_core::models::{accuracy, load_checkpoint, save_checkpoint, Checkpoint, NodeClassifier};
use guard_harness::data::load_dataset;
use guard_harness::pipeline::{
    build_defense_patch, run_census, run_pipeline, sweep, time_defense, train_models,
    write_census_csv, write_degree_histogram_csv, Pretrained, SweepParameter, TrainedVictim,
};
use guard_harness::{ExperimentConfig, HarnessError, HarnessResult};

#[derive(Parser, Debug)]
#[command(name = "guard", version, about = "Targeted edge attacks and anchor-based defenses on graphs")]
struct Cli {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the surrogate and the victim; writes checkpoint.bin and victim.bin.
    Train,
    /// Attack sampled targets with the surrogate; writes attacks.jsonl.
    Attack {
        /// Surrogate checkpoint to use instead of training.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Build the defense patch; writes patch.json.
    Defend {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Clean, attacked and defended accuracy for every configured defense.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Attacker-node frequencies and degrees; writes census.csv.
    Census {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate over a list of k or alpha values.
    Sweep {
        #[arg(long, value_enum)]
        param: Param,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Median wall time of influence scoring plus anchor selection.
    Time {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Param {
    K,
    Alpha,
}

fn create(dir: &Path, name: &str) -> HarnessResult<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| HarnessError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> HarnessResult<()> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(HarnessError::runtime)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn pretrained(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> HarnessResult<Pretrained> {
    let Some(path) = checkpoint else {
        return Ok(Pretrained::default());
    };
    let data = load_dataset(cfg)?;
    let surrogate = load_checkpoint(path)
        .map_err(HarnessError::Data)?
        .into_linear(&data.graph)
        .map_err(HarnessError::Data)?;
    Ok(Pretrained {
        surrogate: Some(surrogate),
    })
}

fn run(cli: Cli) -> HarnessResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(HarnessError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(HarnessError::runtime)?;
    }
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)
        .map_err(|e| HarnessError::Runtime(format!("cannot create {}: {e}", out.display())))?;

    match cli.command {
        Command::Train => {
            let trained = train_models(&cfg)?;
            let (g, test) = (&trained.data.graph, &trained.splits.test);
            save_checkpoint(&Checkpoint::from_linear(&trained.surrogate), out.join("checkpoint.bin"))?;
            let (victim, victim_prediction) = match &trained.victim {
                TrainedVictim::Gcn(m) => (Checkpoint::from_gcn(m), m.predict(g)?),
                TrainedVictim::Linear(m) => (Checkpoint::from_linear(m), m.predict(g)?),
            };
            save_checkpoint(&victim, out.join("victim.bin"))?;
            let report = json!({
                "command": "train",
                "config": cfg,
                "num_nodes": g.num_nodes(),
                "num_edges": g.num_edges(),
                "surrogate_test_accuracy": accuracy(&trained.surrogate.predict(g)?, g, test)?,
                "victim_test_accuracy": accuracy(&victim_prediction, g, test)?,
            });
            write_json(out, "report.json", &report)?;
        }
        Command::Attack { checkpoint } => {
            let pre = pretrained(&cfg, checkpoint.as_deref())?;
            let mut log = create(out, "attacks.jsonl")?;
            let run = run_census(&cfg, &pre, Some(&mut log))?;
            log.flush()?;
            let report = json!({
                "command": "attack",
                "config": cfg,
                "attacks": run.records,
                "surrogate_attacked_accuracy": run.surrogate_attacked_accuracy,
                "total_injections": run.census.total,
                "runtimes": run.runtimes,
            });
            write_json(out, "report.json", &report)?;
        }
        Command::Census { checkpoint } => {
            let pre = pretrained(&cfg, checkpoint.as_deref())?;
            let mut log = create(out, "attacks.jsonl")?;
            let run = run_census(&cfg, &pre, Some(&mut log))?;
            log.flush()?;
            let data = load_dataset(&cfg)?;
            let mut csv = create(out, "census.csv")?;
            write_census_csv(&run.census, data.graph.degrees(), &mut csv)?;
            csv.flush()?;
            let mut hist = create(out, "degree_histogram.csv")?;
            write_degree_histogram_csv(&run.census, data.graph.degrees(), &mut hist)?;
            hist.flush()?;
            let report = json!({
                "command": "census",
                "config": cfg,
                "attacks": run.records,
                "census": run.summary,
                "surrogate_attacked_accuracy": run.surrogate_attacked_accuracy,
                "runtimes": run.runtimes,
            });
            write_json(out, "report.json", &report)?;
        }
        Command::Defend { checkpoint } => {
            let pre = pretrained(&cfg, checkpoint.as_deref())?;
            let (data, patch) = build_defense_patch(&cfg, &pre)?;
            patch.save(out.join("patch.json"))?;
            let g = &data.graph;
            let degrees: Vec<usize> = patch.anchors().iter().map(|&v| g.degree(v)).collect();
            let mean_degree = degrees.iter().sum::<usize>() as f64 / degrees.len().max(1) as f64;
            let report = json!({
                "command": "defend",
                "config": cfg,
                "provenance": patch.provenance(),
                "anchors": patch.len(),
                "anchor_mean_degree": mean_degree,
                "anchor_low_degree_fraction":
                    degrees.iter().filter(|&&d| d <= 2).count() as f64 / degrees.len().max(1) as f64,
                "anchor_incident_edges": degrees.iter().sum::<usize>(),
            });
            write_json(out, "report.json", &report)?;
        }
        Command::Evaluate { checkpoint } => {
            let pre = pretrained(&cfg, checkpoint.as_deref())?;
            let mut log = create(out, "attacks.jsonl")?;
            let report = run_pipeline(&cfg, &pre, Some(&mut log))?;
            log.flush()?;
            write_json(out, "report.json", &report)?;
        }
        Command::Sweep { param, values } => {
            let parameter = match param {
                Param::K => SweepParameter::K,
                Param::Alpha => SweepParameter::Alpha,
            };
            let mut log = create(out, "attacks.jsonl")?;
            let report = sweep(&cfg, parameter, &values, Some(&mut log))?;
            log.flush()?;
            write_json(out, "report.json", &report)?;
        }
        Command::Time { checkpoint } => {
            let pre = pretrained(&cfg, checkpoint.as_deref())?;
            let probe = time_defense(&cfg, &pre)?;
            write_json(out, "report.json", &json!({ "command": "time", "config": cfg, "timing": probe }))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("guard: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
