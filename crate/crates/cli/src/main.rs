//! `uavmec` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 invalid or infeasible input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use uavmec::env::EnvConfig;
use uavmec::exec::Execution;
use uavmec::model::{generate_scenario, validate_instance, Instance, PROFILES};
use uavmec::oracle::{brute_force, replay, TinyLimits};
use uavmec::pipeline::{evaluate, train, Checkpoint, EvalOptions, ExperimentConfig, LowerChoice, TrainOptions};
use uavmec::retrieval::{retrieve, Corpus, HashEncoder, DEFAULT_K};
use uavmec::routing::{check_route, RoutePlan};
use uavmec::trace::write_trace;
use uavmec::{Error, Result};

#[derive(Parser)]
#[command(name = "uavmec", version, about = "Joint UAV collection routing and edge-offloading scheduler")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate or validate scenario files.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Check a route plan against every routing constraint.
    CheckRoute {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        route: PathBuf,
    },
    /// Exhaustive solver for tiny scenarios.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Two-stage training (Up-PPO, then Low-PPO against the fixed plan).
    Train(TrainArgs),
    /// Greedy evaluation of a checkpoint.
    Eval(EvalArgs),
    /// Rank corpus chunks against a query and print the aggregated prompt.
    Retrieve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    Gen {
        #[arg(long, default_value = "paper")]
        profile: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Validate { file: PathBuf },
}

#[derive(Subcommand)]
enum OracleCmd {
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        /// Certificate trace (gzip JSON lines); skipped when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Plan of the optimum (route-v1 JSON).
        #[arg(long)]
        route_out: Option<PathBuf>,
        #[arg(long)]
        node_budget: Option<u64>,
        /// Allocation levels per component.
        #[arg(long)]
        levels: Option<usize>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// TOML configuration; `SCHED_<SECTION>_<KEY>` variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    resume: Option<PathBuf>,
    /// `a2c` adds a Low-A2C series.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario file; defaults to the configured scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate the `a2c` lower policy instead of PPO.
    #[arg(long)]
    baseline: Option<String>,
    /// Also report the gap to the exhaustive optimum (tiny scenarios only).
    #[arg(long)]
    oracle: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    Instance::from_json(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path, std::env::vars())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Scenario(ScenarioCmd::Gen { profile, seed, out }) => {
            if !PROFILES.contains(&profile.as_str()) {
                return Err(Error::Config(format!(
                    "unknown profile {profile:?}; registered: {}",
                    PROFILES.join(", ")
                )));
            }
            let json = generate_scenario(seed, &profile)?.to_json()?;
            match out {
                Some(p) => fs::write(p, json)?,
                None => println!("{json}"),
            }
            Ok(0)
        }
        Cmd::Scenario(ScenarioCmd::Validate { file }) => {
            let inst = read_instance(&file)?;
            let v = validate_instance(&inst);
            if v.is_empty() {
                println!("valid: {} stations, {} UAVs, {} tasks", inst.n_stations(), inst.n_uavs(), inst.tasks.len());
                Ok(0)
            } else {
                for x in &v {
                    println!("{}: {}", x.code, x.message);
                }
                Ok(3)
            }
        }
        Cmd::CheckRoute { scenario, route } => {
            let inst = read_instance(&scenario)?;
            let text = fs::read_to_string(&route).map_err(|e| Error::Input(format!("{}: {e}", route.display())))?;
            let plan = RoutePlan::from_json(&text).map_err(|e| Error::Input(format!("{}: {e}", route.display())))?;
            let report = check_route(&inst, &plan)?;
            for (c, ok) in report.summary() {
                println!("{c}: {}", if ok { "pass" } else { "FAIL" });
            }
            for v in &report.violations {
                println!("  {}: {}", v.constraint, v.detail);
            }
            println!("collected: {:?}", report.collected);
            Ok(if report.passes() { 0 } else { 3 })
        }
        Cmd::Oracle(OracleCmd::Solve {
            scenario,
            trace,
            route_out,
            node_budget,
            levels,
        }) => {
            let inst = read_instance(&scenario)?;
            let mut cfg = EnvConfig {
                resample_tasks: false,
                ..EnvConfig::default()
            };
            if let Some(l) = levels {
                cfg.l_q = l;
            }
            cfg.validate()?;
            let mut limits = TinyLimits::default();
            if let Some(b) = node_budget {
                limits.node_budget = b;
            }
            let r = brute_force(&inst, &cfg, &limits, Execution::Parallel)?;
            println!("optimum: {}", r.value);
            println!("collected: {:?}", r.plan.collected());
            println!("plans searched: {}, nodes: {}", r.plans_searched, r.nodes);
            let out = replay(&inst, &cfg, &r.plan, &r.schedule)?;
            if let Some(p) = trace {
                write_trace(&p, &out.trace)?;
            }
            if let Some(p) = route_out {
                fs::write(p, r.plan.to_json()?)?;
            }
            Ok(0)
        }
        Cmd::Train(a) => {
            let mut cfg = load_config(a.config.as_deref())?;
            if let Some(b) = a.baseline {
                cfg.run.baseline = b;
            }
            if let Some(o) = a.out_dir {
                cfg.run.out_dir = o;
            }
            cfg.validate()?;
            let s = train(
                &cfg,
                &TrainOptions {
                    resume: a.resume,
                    stop_after: None,
                },
            )?;
            let ck = &s.checkpoint;
            println!("run directory: {}", s.out_dir.display());
            println!("config hash: {}", ck.config_hash);
            for st in [Some(&ck.upper), ck.lower.as_ref(), ck.lower_a2c.as_ref()].into_iter().flatten() {
                let last = st.rows.last();
                println!(
                    "{}: {} episodes, final MA(50) reward {}",
                    st.layer,
                    st.episodes_done,
                    last.map_or(f64::NAN, |r| r.ma50)
                );
            }
            Ok(0)
        }
        Cmd::Eval(a) => {
            let cfg = load_config(a.config.as_deref())?;
            let inst = match &a.scenario {
                Some(p) => read_instance(p)?,
                None => cfg.load_instance()?,
            };
            let lower = match a.baseline.as_deref() {
                None | Some("ppo") => LowerChoice::Ppo,
                Some("a2c") => LowerChoice::A2c,
                Some(o) => return Err(Error::Config(format!("unknown baseline {o:?}"))),
            };
            let ck = Checkpoint::load(&a.checkpoint)?;
            let opts = EvalOptions {
                episodes: a.episodes.unwrap_or(cfg.run.eval_episodes),
                seed: a.seed,
                lower,
                oracle: a.oracle,
                limits: TinyLimits::default(),
                execution: cfg.run.execution,
            };
            let report = evaluate(&ck, Arc::new(inst), &cfg.env, &opts)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Cmd::Retrieve { corpus, query, k } => {
            let enc = HashEncoder::default();
            let c = Corpus::from_dir(&enc, &corpus)?;
            let (r, prompt) = retrieve(&enc, &c, &query, k)?;
            for (rank, ((i, s), ch)) in r.indices.iter().zip(&r.scores).zip(&r.chunks).enumerate() {
                println!("{:>3}  {s:.6}  #{i}  {} @{}", rank + 1, ch.source, ch.start_token);
            }
            println!();
            print!("{prompt}");
            Ok(0)
        }
    }
}
