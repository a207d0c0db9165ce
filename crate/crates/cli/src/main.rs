use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use smpc_core::error::SimError;
use smpc_core::sim::{containment_report, run_episode_with, sweep, Scenario, Variation};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_COLLISION: u8 = 3;

#[derive(Parser)]
#[command(name = "smpc", version, about = "Closed-loop simulator for hierarchical stochastic MPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its log as JSON lines.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the maneuver planner toggle.
        #[arg(long, value_enum)]
        hl: Option<Toggle>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Log destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every low-level program to `<out>.qp.txt`
        /// (or `qp_dump.txt` without `--out`).
        #[arg(long)]
        dump_qp: bool,
        /// Disable agent noise.
        #[arg(long)]
        no_noise: bool,
    },
    /// Run the scenario over many seeds and print summary statistics.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long)]
        beta_tv: Option<f64>,
        #[arg(long)]
        beta_ped: Option<f64>,
        #[arg(long, value_enum)]
        hl: Option<Toggle>,
        /// Write the full summary as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the envelope containment of every agent in a scenario.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Allowed shortfall of the containment fraction below the risk level.
        #[arg(long, default_value_t = 0.03)]
        tolerance: f64,
    },
}

fn exit_code(e: &SimError) -> u8 {
    match e {
        SimError::Config(_) | SimError::Parse(_) => EXIT_CONFIG,
        SimError::Numerical { .. } | SimError::Io(_) => EXIT_RUNTIME,
    }
}

fn load(path: &Path, hl: Option<Toggle>) -> Result<Scenario, SimError> {
    // an unreadable scenario file is a configuration problem, not a runtime one
    let mut scn = Scenario::load(path).map_err(|e| match e {
        SimError::Io(io) => SimError::Parse(format!("{}: {io}", path.display())),
        other => other,
    })?;
    if let Some(t) = hl {
        scn.maneuver_planner = matches!(t, Toggle::On);
    }
    scn.build()?;
    Ok(scn)
}

fn run(cli: Cli) -> Result<u8, SimError> {
    match cli.command {
        Command::Run { scenario, hl, seed, steps, out, dump_qp, no_noise } => {
            let mut scn = load(&scenario, hl)?;
            if let Some(s) = seed {
                scn.seed = s;
            }
            if let Some(n) = steps {
                scn.steps = n;
            }
            if no_noise {
                scn.noise = false;
            }
            let mut dump = if dump_qp {
                let path = match &out {
                    Some(o) => {
                        let mut p = o.clone().into_os_string();
                        p.push(".qp.txt");
                        PathBuf::from(p)
                    }
                    None => PathBuf::from("qp_dump.txt"),
                };
                Some(BufWriter::new(File::create(path)?))
            } else {
                None
            };
            let mut dump_err = None;
            let log = run_episode_with(&scn, |step, qp| {
                if let Some(w) = dump.as_mut() {
                    let res = writeln!(w, "# step {step}").and_then(|_| qp.write_plain(&mut *w));
                    if let Err(e) = res {
                        dump_err.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = dump_err {
                return Err(e.into());
            }
            if let Some(mut w) = dump {
                w.flush()?;
            }
            match &out {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(p)?);
                    log.write_jsonl(&mut w)?;
                    w.flush()?;
                }
                None => {
                    let stdout = io::stdout();
                    let mut w = BufWriter::new(stdout.lock());
                    log.write_jsonl(&mut w)?;
                    w.flush()?;
                }
            }
            let s = &log.summary;
            eprintln!(
                "{}: steps {} J_sim {:.1} min speed {:.2} m/s collision {} fallback steps {}",
                s.scenario, s.steps, s.j_sim, s.min_speed, s.collision, s.fallback_steps
            );
            if let Some(f) = &s.failure {
                eprintln!("error: {f}");
                return Ok(EXIT_RUNTIME);
            }
            Ok(if s.collision { EXIT_COLLISION } else { 0 })
        }
        Command::Sweep { scenario, seeds, beta_tv, beta_ped, hl, out } => {
            let scn = load(&scenario, hl)?;
            let seed_list: Vec<u64> = (0..seeds).map(|i| scn.seed.wrapping_add(i)).collect();
            let summary = sweep(&scn, &seed_list, Variation { beta_tv, beta_ped }, 10_000)?;
            println!("runs {}  collision frequency {:.4}", summary.runs.len(), summary.collision_frequency);
            println!(
                "J_sim mean {:.1} std {:.1} min {:.1} max {:.1}",
                summary.j_mean, summary.j_std, summary.j_min, summary.j_max
            );
            for (i, a) in scn.agents.iter().enumerate() {
                println!(
                    "min gap to {}: mean {:.3} m, worst {:.3} m",
                    a.name, summary.mean_min_gap[i], summary.min_min_gap[i]
                );
            }
            for c in &summary.containment {
                println!("containment {} {} beta {:.2}: {:.4}", c.agent, c.level, c.beta, c.min_fraction);
            }
            if let Some(p) = out {
                let w = BufWriter::new(File::create(p)?);
                serde_json::to_writer_pretty(w, &summary).map_err(io::Error::from)?;
            }
            if summary.runs.iter().any(|r| r.failure.is_some()) {
                return Ok(EXIT_RUNTIME);
            }
            Ok(if summary.collision_frequency > 0.0 { EXIT_COLLISION } else { 0 })
        }
        Command::Validate { scenario, trials, tolerance } => {
            let scn = load(&scenario, None)?;
            let report = containment_report(&scn, trials, scn.seed)?;
            let mut ok = true;
            for c in &report {
                let pass = c.min_fraction >= c.beta - tolerance;
                ok &= pass;
                println!(
                    "{} {} {} beta {:.2}: containment {:.4}",
                    if pass { "PASS" } else { "FAIL" },
                    c.agent,
                    c.level,
                    c.beta,
                    c.min_fraction
                );
            }
            Ok(if ok { 0 } else { EXIT_RUNTIME })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
