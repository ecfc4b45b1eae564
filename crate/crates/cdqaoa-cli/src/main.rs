//! `cdqaoa`: derive, reverse, simulate and check counterdiabatic QAOA
//! schedules from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::ContractFailure;
use crate::config::{parse_instance, parse_orders, parse_p_list, parse_schedule, RunConfig};

#[derive(Parser)]
#[command(name = "cdqaoa", version, about = "Counterdiabatic QAOA schedules and angles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Numeric against closed-form alpha on a lambda grid (CSV).
    Alpha(Flags),
    /// Forward matching: schedule and depth to angles.
    Derive(Flags),
    /// Reverse matching: angles to a continuous schedule.
    Reverse(Flags),
    /// Simulate angles or a schedule; optionally optimize angles.
    Simulate(Flags),
    /// Dense-matrix oracle suites.
    Oracle(Flags),
    /// Parallel sweep over depth, s0 or total time (CSV).
    Sweep(Flags),
}

#[derive(clap::Args, Debug, Default)]
struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// two_level, two_level_bloch, ring:N, regular:N:D:SEED, maxcut:0-1,..., JSON or a JSON file.
    #[arg(long)]
    instance: Option<String>,
    /// linear, linear_sine:S0, smoothstep, power:R (suffix @T sets the time), JSON or a JSON file.
    #[arg(long)]
    schedule: Option<String>,
    /// Depth or list of depths: 3, 1,2,4 or 2..=6.
    #[arg(long)]
    p: Option<String>,
    /// Expansion orders BCH,MAGNUS.
    #[arg(long)]
    orders: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; companion CSV tables share its stem.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Alpha source (numeric, none, closed_two_level, closed_chain, closed_regular, ...).
    #[arg(long)]
    alpha: Option<String>,
    /// Angle file, JSON or CSV.
    #[arg(long)]
    angles: Option<PathBuf>,
    /// statevector, fermion or auto.
    #[arg(long)]
    simulator: Option<String>,
    /// derive: also simulate the angles.
    #[arg(long)]
    simulate: bool,
    /// simulate: gradient ascent on the angles.
    #[arg(long)]
    optimize: bool,
    /// oracle: flip the sign of one BCH word.
    #[arg(long)]
    flip_bch_word: Option<String>,
    /// oracle: largest dense instance.
    #[arg(long)]
    max_qubits: Option<usize>,
}

impl Flags {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.instance {
            cfg.instance = Some(parse_instance(s)?);
        }
        if let Some(s) = &self.schedule {
            cfg.schedule = Some(parse_schedule(s)?);
        }
        if let Some(s) = &self.p {
            cfg.p = parse_p_list(s)?;
        }
        if let Some(s) = &self.orders {
            cfg.orders = parse_orders(s)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.oracle.seed = seed;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(a) = self.angles {
            cfg.angles = None;
            cfg.angles_file = Some(a);
        }
        if let Some(s) = self.simulator {
            cfg.simulator = s;
        }
        cfg.simulate |= self.simulate;
        cfg.optimize |= self.optimize;
        if self.flip_bch_word.is_some() {
            cfg.oracle.flip_bch_word = self.flip_bch_word;
        }
        if let Some(m) = self.max_qubits {
            cfg.oracle.max_qubits = m;
        }
        if self.out.is_some() {
            cfg.out = self.out;
        }
        cfg.orders.validate()?;
        Ok(cfg)
    }
}

/// 2 for bad input, 3 for a numerical contract that did not hold.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ContractFailure>().is_some() {
        return 3;
    }
    match e.downcast_ref::<cdqaoa::Error>() {
        Some(err) if !err.is_validation() => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, flags) = match cli.command {
        Command::Alpha(f) => ("alpha", f),
        Command::Derive(f) => ("derive", f),
        Command::Reverse(f) => ("reverse", f),
        Command::Simulate(f) => ("simulate", f),
        Command::Oracle(f) => ("oracle", f),
        Command::Sweep(f) => ("sweep", f),
    };
    let cfg = flags.into_config()?;
    match name {
        "alpha" => commands::alpha(&cfg),
        "derive" => commands::derive(&cfg),
        "reverse" => commands::reverse(&cfg),
        "simulate" => commands::simulate(&cfg),
        "oracle" => commands::oracle(&cfg),
        _ => commands::sweep(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let v: anyhow::Error = cdqaoa::Error::Validation("x".into()).into();
        let n: anyhow::Error = cdqaoa::Error::Numerical("x".into()).into();
        let c: anyhow::Error = ContractFailure("x".into()).into();
        let io: anyhow::Error = std::io::Error::other("x").into();
        assert_eq!(exit_code(&v), 2);
        assert_eq!(exit_code(&n), 3);
        assert_eq!(exit_code(&c), 3);
        assert_eq!(exit_code(&io), 2);
    }

    #[test]
    fn flags_override_config() {
        let f = Flags { instance: Some("ring:6".into()), p: Some("2,3".into()), seed: Some(9), ..Default::default() };
        let cfg = f.into_config().unwrap();
        assert_eq!(cfg.p, vec![2, 3]);
        assert_eq!(cfg.oracle.seed, 9);
    }
}
