use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use privmatch_harness::bench::{render_bench, run_bench, BenchConfig};
use privmatch_harness::counters::describe;
use privmatch_harness::montecarlo::{monte_carlo_estimators, McParams};
use privmatch_harness::report::{render_table, write_csv, write_reports};
use privmatch_harness::runner::run_scenario_with;
use privmatch_harness::transport::LinkModel;
use privmatch_harness::{ProtocolKind, Scenario, TransportKind};

#[derive(Parser)]
#[command(name = "match", about = "Privacy-preserving profile matching experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.txt, report.csv and timing.csv.
    Run {
        /// Scenario JSON file, or `table2` for the bundled example.
        #[arg(long, default_value = "table2")]
        scenario: String,
        /// Overrides the scenario's protocol.
        #[arg(long, value_enum)]
        protocol: Option<ProtocolKind>,
        /// Carry frames through a serialized byte stream instead of in process.
        #[arg(long)]
        byte_stream: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Validate the Bloom-filter estimators by simulation.
    Montecarlo {
        #[arg(long, default_value = "table2")]
        scenario: String,
        /// Responder paired with the initiator for the moment estimates.
        #[arg(long, default_value = "Bob")]
        candidate: String,
        #[arg(long, default_value_t = 400)]
        lambda: u32,
        #[arg(long, default_value_t = 12)]
        l: u32,
        #[arg(long, default_value_t = 11)]
        lprime: u32,
        #[arg(long, default_value_t = 1000)]
        trials: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the summary as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep profile size and priority levels across all protocols.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "10,50,100")]
        m: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10")]
        kappa: Vec<u32>,
        #[arg(long, default_value_t = 1024)]
        prime_bits: u64,
        /// Filter length for E-match; sized from the profiles when absent.
        #[arg(long)]
        lambda: Option<u32>,
        #[arg(long, default_value_t = 1)]
        reps: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the closed-form operation counts for one configuration.
    Counters {
        #[arg(long, value_enum)]
        protocol: ProtocolKind,
        #[arg(long)]
        m: u64,
        #[arg(long, default_value_t = 10)]
        kappa: u32,
    },
}

fn load(spec: &str) -> Result<Scenario> {
    if spec == "table2" {
        return Ok(Scenario::table2());
    }
    Scenario::load(spec.as_ref()).with_context(|| format!("loading scenario {spec}"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            protocol,
            byte_stream,
            out,
        } => {
            let s = load(&scenario)?;
            let transport = if byte_stream {
                TransportKind::ByteStream
            } else {
                TransportKind::InProcess
            };
            let run = run_scenario_with(&s, protocol.unwrap_or(s.protocol), transport)?;
            let link = LinkModel { kbps: s.link_kbps };
            print!("{}", render_table(&run, link));
            write_reports(&run, link, &out).with_context(|| format!("writing reports to {}", out.display()))?;
        }
        Command::Montecarlo {
            scenario,
            candidate,
            lambda,
            l,
            lprime,
            trials,
            seed,
            csv,
        } => {
            let prepared = load(&scenario)?.prepare()?;
            let params = McParams {
                lambda,
                l,
                lprime,
                trials,
                seed,
            };
            let report = monte_carlo_estimators(&prepared, &candidate, &params)?;
            print!("{}", report.render());
            if let Some(path) = csv {
                write_csv(&report.rows(), File::create(&path)?)?;
            }
        }
        Command::Bench {
            m,
            kappa,
            prime_bits,
            lambda,
            reps,
            seed,
            csv,
        } => {
            if m.is_empty() || kappa.is_empty() {
                bail!("need at least one m and one kappa");
            }
            let rows = run_bench(&BenchConfig {
                ms: m,
                kappas: kappa,
                prime_bits,
                lambda,
                reps,
                seed,
                ..BenchConfig::default()
            })?;
            print!("{}", render_bench(&rows));
            if let Some(path) = csv {
                write_csv(&rows, File::create(&path)?)?;
            }
        }
        Command::Counters { protocol, m, kappa } => print!("{}", describe(protocol, m, kappa)?),
    }
    Ok(())
}
