use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use tokenflow_bench::driver::calibrate_rate;
use tokenflow_bench::{emit_tsv, run, Arm, Experiment, ExperimentRow, QuantumConfig, RunConfig};

#[derive(Parser)]
#[command(version, about = "Open-loop latency experiments for tokenflow")]
struct Cli {
    #[command(subcommand)]
    family: Family,
    /// Coordination arms to run; repeat for several. Defaults depend on the
    /// experiment.
    #[arg(long, value_enum, global = true)]
    arm: Vec<ArmArg>,
    /// Workers; the scaling experiments sweep powers of two up to this.
    #[arg(long, default_value_t = 1, global = true)]
    workers: usize,
    /// Input rate in records per second: per worker, or in total for
    /// strong scaling.
    #[arg(long, global = true, conflicts_with = "calibrate")]
    rate: Option<u64>,
    /// Find the highest rate the tokens arm sustains and run at three
    /// quarters of it.
    #[arg(long, global = true)]
    calibrate: bool,
    /// Timestamp quantum exponents; repeat for several.
    #[arg(long, global = true)]
    quantum_exp: Vec<u32>,
    /// Chain lengths for opsequence; repeat for several.
    #[arg(long, global = true)]
    chain_length: Vec<usize>,
    #[arg(long, default_value_t = 10, global = true)]
    duration_secs: u64,
    #[arg(long, default_value_t = 2, global = true)]
    warmup_secs: u64,
    /// Step all workers round-robin on one thread.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Where to write the results; standard output if absent.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Family {
    /// Latency against timestamp granularity.
    WordcountQuantum,
    /// Fixed rate per worker, growing worker count.
    WeakScaling,
    /// Fixed total rate, growing worker count.
    StrongScaling,
    /// Latency against the length of a chain of forwarding stages.
    Opsequence,
}

#[derive(ValueEnum, Clone, Copy)]
enum ArmArg {
    Tokens,
    Notifications,
    #[value(name = "watermarks-X")]
    WatermarksX,
    #[value(name = "watermarks-P")]
    WatermarksP,
}

impl From<ArmArg> for Arm {
    fn from(a: ArmArg) -> Arm {
        match a {
            ArmArg::Tokens => Arm::Tokens,
            ArmArg::Notifications => Arm::Notifications,
            ArmArg::WatermarksX => Arm::WatermarksX,
            ArmArg::WatermarksP => Arm::WatermarksP,
        }
    }
}

fn powers_of_two_upto(n: usize) -> Vec<usize> {
    std::iter::successors(Some(1), |w| Some(w * 2)).take_while(|w| *w <= n).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(rows) => {
            let text = emit_tsv(&rows);
            match &cli.output {
                Some(path) => {
                    if let Err(e) = fs::write(path, text) {
                        eprintln!("cannot write {}: {e}", path.display());
                        return ExitCode::FAILURE;
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<Vec<ExperimentRow>, String> {
    let opsequence = cli.family == Family::Opsequence;
    let arms: Vec<Arm> = if cli.arm.is_empty() {
        if opsequence {
            vec![Arm::Tokens, Arm::WatermarksX, Arm::WatermarksP]
        } else {
            vec![Arm::Tokens, Arm::Notifications, Arm::WatermarksX]
        }
    } else {
        cli.arm.iter().map(|a| Arm::from(*a)).collect()
    };
    if opsequence && arms.contains(&Arm::Notifications) {
        return Err("opsequence has no notifications arm".into());
    }
    let exponents = if cli.quantum_exp.is_empty() {
        if cli.family == Family::WordcountQuantum {
            (8..=16).collect()
        } else {
            vec![16]
        }
    } else {
        cli.quantum_exp.clone()
    };
    let quanta = exponents.iter().map(|x| QuantumConfig::new(*x).map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?;
    let chains = if cli.chain_length.is_empty() { vec![8, 32, 128, 256] } else { cli.chain_length.clone() };
    let worker_counts = match cli.family {
        Family::WeakScaling | Family::StrongScaling => powers_of_two_upto(cli.workers.max(1)),
        _ => vec![cli.workers.max(1)],
    };
    let experiments: Vec<Experiment> =
        if opsequence { chains.iter().map(|l| Experiment::Opsequence(*l)).collect() } else { vec![Experiment::Wordcount] };
    let duration = Duration::from_secs(cli.duration_secs);
    let warmup = Duration::from_secs(cli.warmup_secs).min(duration);

    let mut rows = Vec::new();
    for &experiment in experiments.iter() {
        for &quantum in quanta.iter() {
            for &workers in worker_counts.iter() {
                let rate = match cli.rate {
                    Some(r) => r,
                    None if cli.calibrate => {
                        // Strong scaling fixes the total rate, so calibrate it on one worker.
                        let probe_workers = if cli.family == Family::StrongScaling { 1 } else { workers };
                        let found = calibrate_rate(experiment, probe_workers, quantum, cli.deterministic)
                            .map_err(|e| e.to_string())?
                            .ok_or("the tokens arm sustains no rate in the search range")?;
                        eprintln!("calibrated {found} records/s per worker");
                        found * 3 / 4
                    }
                    None => return Err("give --rate or --calibrate".into()),
                };
                let rate_per_worker = if cli.family == Family::StrongScaling { rate / workers as u64 } else { rate };
                for &arm in arms.iter() {
                    let config = RunConfig {
                        experiment,
                        arm,
                        workers,
                        rate_per_worker,
                        quantum,
                        duration,
                        warmup,
                        deterministic: cli.deterministic,
                    };
                    let result = run(&config).map_err(|e| e.to_string())?;
                    eprintln!(
                        "{} {} workers={} rate={} quantum=2^{}: {}",
                        result.row.experiment,
                        arm,
                        workers,
                        rate_per_worker,
                        quantum.exponent(),
                        match result.row.latencies {
                            Some(l) => format!("p50={}ns p999={}ns max={}ns", l.p50, l.p999, l.max),
                            None => "DNF".to_string(),
                        }
                    );
                    let mut row = result.row;
                    if cli.family != Family::WordcountQuantum && !opsequence {
                        row.experiment = match cli.family {
                            Family::WeakScaling => "weak-scaling".into(),
                            _ => "strong-scaling".into(),
                        };
                    }
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}
