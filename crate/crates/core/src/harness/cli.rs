use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::runner::{evaluate_scenario, RunOptions};
use super::scenario::ScenarioSpec;
use crate::server::{start, ServerConfig};

pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "harness", about = "Run scripted multi-client scenarios against a room server")]
struct HarnessArgs {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs one scenario file and prints a summary.
    Run {
        scenario: PathBuf,
        /// Server base URL. Without it an in-process server is started on
        /// loopback.
        #[arg(long)]
        server: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where to write the TOML report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Entry point of the harness command. Returns the process exit code:
/// 0 when every assertion passed, 1 when some failed, 2 for bad input and
/// 3 when the run could not complete.
pub fn harness_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match HarnessArgs::try_parse_from(args) {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let Command::Run { scenario, server, seed, report } = args.command;
    let spec = match ScenarioSpec::load(&scenario) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_USAGE;
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("runtime: {e}");
            return EXIT_ERROR;
        }
    };
    runtime.block_on(async move {
        let local = match &server {
            Some(_) => None,
            None => match start(ServerConfig::ephemeral()).await {
                Ok(running) => Some(running),
                Err(e) => {
                    eprintln!("{e}");
                    return EXIT_ERROR;
                }
            },
        };
        let url = server.unwrap_or_else(|| local.as_ref().map(|s| s.http_url()).unwrap_or_default());
        println!("seed {seed}, server {url}");
        let outcome = evaluate_scenario(&spec, &url, &RunOptions::seeded(seed)).await;
        if let Some(local) = local {
            local.shutdown().await;
        }
        match outcome {
            Ok(result) => {
                print!("{}", result.summary());
                for line in &result.trace {
                    println!("  trace: {line}");
                }
                if let Some(path) = report {
                    if let Err(e) = result.write(&path) {
                        eprintln!("{e}");
                        return EXIT_ERROR;
                    }
                }
                if result.passed { 0 } else { EXIT_FAILED }
            }
            Err(e) => {
                eprintln!("{e}");
                EXIT_ERROR
            }
        }
    })
}
