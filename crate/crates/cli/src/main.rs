use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mexlab_core::detector::{replay, write_verdicts_csv, Verdict};
use mexlab_core::harness::{
    attack_distances, plan_evasion, prepare, read_query_stream, run_attack, run_experiment,
    sweep_delta, test_agreement, write_csv_dataset, write_search_trace, ExperimentConfig,
};
use mexlab_core::neuralnet::write_network;
use mexlab_core::Error;

#[derive(Parser)]
#[command(
    name = "mexlab",
    version,
    about = "Model extraction attacks and stateful detection experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat TOML experiment config; defaults apply to missing keys.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config's `seed`.
    #[arg(long, short, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, short, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the data splits and train the target model.
    TrainTarget,
    /// Run the configured extraction attack and save its query log.
    Attack,
    /// Replay a query log through the detector.
    Detect {
        /// Query log CSV; regenerated from the config when omitted.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Plan dummy queries that keep a logged attack below the alarm threshold.
    Evade {
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Benign FPR and attack detection index for each configured delta.
    SweepDelta,
    /// Full experiment: all enabled metrics plus the JSON report.
    Report,
}

struct Failure {
    stage: &'static str,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let stage = match &error {
            Error::Stage { stage, .. } => stage,
            _ => "run",
        };
        Failure { stage, error }
    }
}

fn tagged(stage: &'static str) -> impl Fn(Error) -> Failure {
    move |error| Failure { stage, error }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    File::create(dir.join(name))
        .map(BufWriter::new)
        .map_err(|e| Failure {
            stage: "report",
            error: e.into(),
        })
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(tagged("config"))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(tagged("config"))?;
    Ok(cfg)
}

fn attack_stream(
    cfg: &ExperimentConfig,
    log: Option<&Path>,
) -> Result<Vec<(Vec<f64>, usize)>, Failure> {
    match log {
        Some(p) => read_query_stream(p).map_err(tagged("detect")),
        None => {
            let prep = prepare(cfg)?;
            let run = run_attack(cfg, &prep)?;
            Ok(run.log.stream().map(|(x, c)| (x.to_vec(), c)).collect())
        }
    }
}

fn replay_stream(
    cfg: &ExperimentConfig,
    stream: &[(Vec<f64>, usize)],
) -> Result<(Vec<Verdict>, Option<usize>), Failure> {
    let (verdicts, state) = replay(
        stream.iter().map(|(x, c)| (x.as_slice(), *c)),
        &cfg.detector(),
    )
    .map_err(tagged("detect"))?;
    Ok((verdicts, state.first_alarm()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    let out = &cli.common.out;
    std::fs::create_dir_all(out).map_err(|e| Failure {
        stage: "report",
        error: e.into(),
    })?;
    let io = tagged("report");
    match cli.command {
        Command::TrainTarget => {
            let prep = prepare(&cfg)?;
            write_network(&prep.target, create(out, "target.net")?).map_err(&io)?;
            write_csv_dataset(&out.join("target_train.csv"), &prep.target_train).map_err(&io)?;
            write_csv_dataset(&out.join("attacker_pool.csv"), &prep.attacker_pool).map_err(&io)?;
            write_csv_dataset(&out.join("test.csv"), &prep.test).map_err(&io)?;
            let acc = prep.target.accuracy(&prep.test).map_err(tagged("target"))?;
            println!("target test accuracy {acc:.4}");
        }
        Command::Attack => {
            let prep = prepare(&cfg)?;
            let run = run_attack(&cfg, &prep)?;
            run.log
                .write_csv(create(out, "queries.csv")?)
                .map_err(&io)?;
            write_network(&run.substitute, create(out, "substitute.net")?).map_err(&io)?;
            if let Some(trace) = &run.search_trace {
                write_search_trace(trace, create(out, "search_trace.csv")?).map_err(&io)?;
            }
            let agreement = test_agreement(&prep.target, &run.substitute, &prep.test)
                .map_err(tagged("metrics"))?;
            println!("queries {} test agreement {agreement:.4}", run.log.len());
        }
        Command::Detect { log } => {
            let stream = attack_stream(&cfg, log.as_deref())?;
            let (verdicts, first) = replay_stream(&cfg, &stream)?;
            write_verdicts_csv(&verdicts, create(out, "verdicts.csv")?).map_err(&io)?;
            match first {
                Some(i) => println!("detected at query {i} of {}", stream.len()),
                None => println!("not detected in {} queries", stream.len()),
            }
        }
        Command::Evade { log } => {
            let stream = attack_stream(&cfg, log.as_deref())?;
            let (verdicts, _) = replay_stream(&cfg, &stream)?;
            let plan = plan_evasion(&cfg, &verdicts).map_err(tagged("evasion"))?;
            plan.write_csv(create(out, "evasion_plan.csv")?)
                .map_err(&io)?;
            println!(
                "useful {} dummies {} overhead {:+.0}% ({} distances)",
                plan.useful,
                plan.dummies,
                100.0 * plan.overhead_ratio,
                attack_distances(&verdicts).len()
            );
        }
        Command::SweepDelta => {
            for p in sweep_delta(&cfg, Some(out))? {
                let idx = p.detection_index.map_or("-".to_string(), |i| i.to_string());
                println!("delta {:.3} fpr {:.4} detection {idx}", p.delta, p.fpr_mean);
            }
        }
        Command::Report => {
            let r = run_experiment(&cfg, out)?;
            println!(
                "test agreement {:.4} detection {} report {}",
                r.test_agreement,
                r.detection_index.map_or("-".to_string(), |i| i.to_string()),
                out.join("report.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f.error {
                Error::Stage { source, .. } => eprintln!("mexlab: [{}] {source}", f.stage),
                e => eprintln!("mexlab: [{}] {e}", f.stage),
            }
            ExitCode::from(if f.stage == "config" { 2 } else { 1 })
        }
    }
}
