//! Command-line harness: run scenarios, execute presets, sweep parameters.
//!
//! Exit codes: 0 on success, 1 when a preset check or sweep run fails,
//! 2 on usage or validation errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpsim::presets;
use mpsim::runner::{run_scenario, write_outputs};
use mpsim::scenario::Scenario;

#[derive(Parser)]
#[command(name = "mpsim", about = "Packet-level multipath transport simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write summary + series.
    Run {
        /// Scenario file (TOML; .json parsed as JSON).
        file: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override a field by dotted path, e.g. links.b2.loss=0.01.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        sets: Vec<String>,
        /// Output directory (default: out).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Record the event trace next to the summary.
        #[arg(long)]
        trace: bool,
    },
    /// Run a named preset batch and print its check report.
    Preset {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Skip writing per-run outputs.
        #[arg(long)]
        no_outputs: bool,
    },
    /// List available presets.
    ListPresets,
    /// Run a scenario across a parameter grid and seeds; one CSV row per run.
    Sweep {
        file: PathBuf,
        /// Grid axis: PATH=V1,V2,... (repeatable; cross-product).
        #[arg(long = "grid", value_name = "PATH=V1,V2,...", required = true)]
        grids: Vec<String>,
        /// Seeds to run each grid point with.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected PATH=VALUE, got `{s}`")),
    }
}

fn cmd_run(
    file: PathBuf,
    seed: Option<u64>,
    sets: Vec<String>,
    out: PathBuf,
    trace: bool,
) -> Result<ExitCode, String> {
    let mut overrides: Vec<(String, String)> = Vec::new();
    if let Some(s) = seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    for s in &sets {
        overrides.push(parse_kv(s)?);
    }
    let sc = Scenario::from_path(&file)
        .and_then(|sc| sc.with_overrides(&overrides))
        .map_err(|e| e.to_string())?;
    let (mut world, summary) = run_scenario(&sc, trace).map_err(|e| e.to_string())?;
    world.trace.enabled = trace;
    let dir = out.join(format!("{}-s{}", sc.name, sc.seed));
    let written = write_outputs(&dir, &world, &summary).map_err(|e| e.to_string())?;
    for f in &summary.flows {
        println!(
            "flow {}: throughput {:.2} Mbps, goodput {:.2} Mbps, mean OFO {:.2} pkts",
            f.name, f.throughput_mbps, f.goodput_mbps, f.ofo_mean_pkts
        );
    }
    for path in written {
        println!("wrote {path}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_preset(name: String, seed: Option<u64>, out: PathBuf, no_outputs: bool) -> Result<ExitCode, String> {
    let seed = seed.unwrap_or(1);
    let dir = if no_outputs { None } else { Some(out.join(&name)) };
    let outcome =
        presets::run_preset(&name, seed, dir.as_deref()).map_err(|e| e.to_string())?;
    print!("{}", outcome.report());
    if let Some(d) = dir {
        let report = d.join("report.txt");
        std::fs::create_dir_all(&d).map_err(|e| e.to_string())?;
        std::fs::write(&report, outcome.report()).map_err(|e| e.to_string())?;
        println!("wrote {}", report.display());
    }
    Ok(if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_sweep(
    file: PathBuf,
    grids: Vec<String>,
    seeds: Vec<u64>,
    out: PathBuf,
) -> Result<ExitCode, String> {
    let base = Scenario::from_path(&file).map_err(|e| e.to_string())?;
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for g in &grids {
        let (path, vals) = parse_kv(g)?;
        let vals: Vec<String> = vals.split(',').map(str::to_string).collect();
        if vals.is_empty() || vals.iter().all(|v| v.is_empty()) {
            return Err(format!("empty grid for `{path}`"));
        }
        axes.push((path, vals));
    }
    // Cross-product of all axes.
    let mut points: Vec<Vec<(String, String)>> = vec![vec![]];
    for (path, vals) in &axes {
        let mut next = Vec::new();
        for p in &points {
            for v in vals {
                let mut q = p.clone();
                q.push((path.clone(), v.clone()));
                next.push(q);
            }
        }
        points = next;
    }

    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let csv_path = out.join(format!("{}-sweep.csv", base.name));
    let mut rows = String::from("run,seed,params,flow,throughput_mbps,goodput_mbps,ofo_mean_pkts,error\n");
    let mut run_id = 0usize;
    let mut any_failed = false;
    for point in &points {
        for &seed in &seeds {
            run_id += 1;
            let mut sets = point.clone();
            sets.push(("seed".into(), seed.to_string()));
            let label: String = point
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            match base
                .with_overrides(&sets)
                .and_then(|sc| run_scenario(&sc, false))
            {
                Ok((_, summary)) => {
                    for f in &summary.flows {
                        rows.push_str(&format!(
                            "{run_id},{seed},\"{label}\",{},{:.4},{:.4},{:.4},\n",
                            f.name, f.throughput_mbps, f.goodput_mbps, f.ofo_mean_pkts
                        ));
                    }
                }
                Err(e) => {
                    any_failed = true;
                    let msg = e.to_string().replace('"', "'");
                    rows.push_str(&format!("{run_id},{seed},\"{label}\",,,,,\"{msg}\"\n"));
                }
            }
        }
    }
    std::fs::write(&csv_path, rows).map_err(|e| e.to_string())?;
    println!("wrote {} ({run_id} runs)", csv_path.display());
    Ok(if any_failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            file,
            seed,
            sets,
            out,
            trace,
        } => cmd_run(file, seed, sets, out, trace),
        Command::Preset {
            name,
            seed,
            out,
            no_outputs,
        } => cmd_preset(name, seed, out, no_outputs),
        Command::ListPresets => {
            for p in presets::list() {
                println!("{:<22} {}", p.name, p.about);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            file,
            grids,
            seeds,
            out,
        } => cmd_sweep(file, grids, seeds, out),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
