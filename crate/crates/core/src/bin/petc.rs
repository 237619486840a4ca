use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{error, info};
use serde::Serialize;

use petc_core::config::ProjectConfig;
use petc_core::game::build_network_tga;
use petc_core::pipeline::{self, PreparedLoop};
use petc_core::sdp::write_relation_csv;
use petc_core::sim::{conflict_scan, trace_statistics, write_events_csv, write_trace_csv, Arbiter};
use petc_core::synth::{Strategy, Synthesis};
use petc_core::traffic::{build_tga, TrafficModel};
use petc_core::uppaal::export_uppaal;
use petc_core::{Error, Result};

const EXIT_ERROR: u8 = 1;
const EXIT_SYNTHESIS: u8 = 2;
const EXIT_CONFLICT: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "petc", version, about = "Traffic abstraction and scheduling of PETC loops on a shared network")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Project configuration (TOML).
    #[arg(long, global = true, default_value = "configs/batch_reactor.toml")]
    config: PathBuf,

    /// Output directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for simulation and oracle sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// SDP feasibility tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// round_robin | lowest_loop_id | seeded_random
    #[arg(long, global = true)]
    arbiter: Option<Arbiter>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute regions, transition relations and traffic models.
    Abstract,
    /// Build the scheduling game and solve it.
    Synthesize,
    /// Simulate the loops under the synthesized scheduler.
    Simulate,
    /// Write the timed-game network as UPPAAL Tiga XML.
    ExportUppaal,
    /// Check the models against sampled trajectories.
    Validate,
}

fn load_config(cli: &Cli) -> Result<(ProjectConfig, PathBuf)> {
    let mut cfg = ProjectConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
        cfg.abstraction.oracle_seed = seed;
    }
    if let Some(tol) = cli.tol {
        cfg.abstraction.sdp_tol = tol;
    }
    if let Some(a) = cli.arbiter {
        cfg.simulation.arbiter = a;
    }
    cfg.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn model_path(out: &Path, loop_id: usize) -> PathBuf {
    out.join(format!("loop{loop_id}_model.json"))
}

fn load_models(cfg: &ProjectConfig, out: &Path) -> Result<Vec<TrafficModel>> {
    (1..=cfg.loops.len())
        .map(|l| {
            let path = model_path(out, l);
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::input(format!("{}: {e} (run `petc abstract` first)", path.display())))?;
            TrafficModel::from_json(&text)
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct LoopSummary {
    loop_id: usize,
    k_min: usize,
    k_max: usize,
    trigger_edges: usize,
    early_edges: usize,
    undecided: usize,
}

fn cmd_abstract(cfg: &ProjectConfig, out: &Path) -> Result<u8> {
    let loops = pipeline::abstract_all(cfg)?;
    let mut summary = Vec::new();
    for (idx, l) in loops.iter().enumerate() {
        let id = idx + 1;
        let w = BufWriter::new(File::create(out.join(format!("loop{id}_relation.csv")))?);
        write_relation_csv(id, l.trigger.entries.iter().chain(&l.early.entries), w)?;
        fs::write(model_path(out, id), l.model.to_json()? + "\n")?;
        let undecided = l.trigger.count(petc_core::sdp::VerdictStatus::Unknown)
            + l.early.count(petc_core::sdp::VerdictStatus::Unknown);
        println!(
            "loop {id}: regions Q{}..Q{}, {} trigger edges, {} early edges, {} undecided, {:.2} s",
            l.prepared.spec.k_min,
            l.prepared.spec.k_max,
            l.model.trigger_edges.len(),
            l.model.early_edges.len(),
            undecided,
            l.elapsed.as_secs_f64()
        );
        summary.push(LoopSummary {
            loop_id: id,
            k_min: l.prepared.spec.k_min,
            k_max: l.prepared.spec.k_max,
            trigger_edges: l.model.trigger_edges.len(),
            early_edges: l.model.early_edges.len(),
            undecided,
        });
    }
    write_json(&out.join("abstraction_report.json"), &summary)?;
    Ok(0)
}

fn cmd_synthesize(cfg: &ProjectConfig, out: &Path) -> Result<u8> {
    let models = load_models(cfg, out)?;
    let (game, result, report) = pipeline::synthesize(cfg, &models)?;
    println!("game: {}", game.stats());
    println!(
        "winning states: {} (build {:.3} s, solve {:.3} s)",
        report.winning_states, report.build_seconds, report.solve_seconds
    );
    result.strategy().write(BufWriter::new(File::create(out.join("strategy.txt"))?))?;
    write_json(&out.join("synthesis_report.json"), &report)?;
    match result {
        Synthesis::Winning(_) => {
            println!("scheduler found for every initial state");
            Ok(0)
        }
        Synthesis::Failure { losing_initial, .. } => {
            error!("{} initial states are losing", losing_initial.len());
            for s in losing_initial.iter().take(10) {
                error!("  losing: {s}");
            }
            Ok(EXIT_SYNTHESIS)
        }
    }
}

fn cmd_simulate(cfg: &ProjectConfig, out: &Path) -> Result<u8> {
    let models = load_models(cfg, out)?;
    let path = out.join("strategy.txt");
    let file = File::open(&path)
        .map_err(|e| Error::input(format!("{}: {e} (run `petc synthesize` first)", path.display())))?;
    let strategy = Strategy::read(BufReader::new(file))?;
    let prepared: Vec<PreparedLoop> = pipeline::prepare_all(cfg)?;
    let trace = match pipeline::run_simulation(cfg, &prepared, &models, strategy) {
        Ok(t) => t,
        Err(e @ Error::Soundness(_)) => {
            error!("{e}");
            return Ok(EXIT_CONFLICT);
        }
        Err(e) => return Err(e),
    };
    write_trace_csv(&trace, BufWriter::new(File::create(out.join("trace.csv"))?))?;
    write_events_csv(&trace, BufWriter::new(File::create(out.join("events.csv"))?))?;
    let stats = trace_statistics(&trace);
    write_json(&out.join("sim_stats.json"), &stats)?;
    let scanned = conflict_scan(&trace);
    println!(
        "{} events, early fraction {:.3}, {} conflicts",
        stats.events,
        stats.early_fraction,
        scanned.len().max(trace.conflicts.len())
    );
    if !scanned.is_empty() || !trace.conflicts.is_empty() {
        return Ok(EXIT_CONFLICT);
    }
    Ok(0)
}

fn cmd_export(cfg: &ProjectConfig, out: &Path) -> Result<u8> {
    let models = load_models(cfg, out)?;
    let tgas: Vec<_> = models.iter().map(build_tga).collect();
    let xml = export_uppaal(&tgas, &build_network_tga(cfg.network.delta)?, &cfg.earliness_params()?);
    let path = out.join("network.xml");
    fs::write(&path, xml)?;
    println!("wrote {}", path.display());
    Ok(0)
}

#[derive(Serialize)]
struct ValidationReport {
    passed: bool,
    oracle_samples: usize,
    oracle_violations: usize,
    conformance_steps: usize,
    conformance_violations: usize,
}

fn cmd_validate(cfg: &ProjectConfig, out: &Path) -> Result<u8> {
    let models = load_models(cfg, out)?;
    let prepared = pipeline::prepare_all(cfg)?;
    let a = &cfg.abstraction;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("oracle_sweep.csv"))?));
    w.write_record(["loop_id", "source_region", "action_time_k", "oracle_size", "model_size", "missing"])?;
    let mut oracle_violations = 0;
    let mut conformance_steps = 0;
    let mut conformance_violations = 0;
    for (idx, (p, m)) in prepared.iter().zip(&models).enumerate() {
        let id = idx + 1;
        if (p.spec.k_min, p.spec.k_max) != (m.spec.k_min, m.spec.k_max) {
            return Err(Error::input(format!("loop {id}: model regions differ from the configuration")));
        }
        let start = Instant::now();
        let rows = pipeline::oracle_sweep(id, p, m, a.oracle_samples, a.oracle_seed, a.allow_sub_miet_early)?;
        for r in &rows {
            let missing: Vec<String> = r.missing.iter().map(|q| q.to_string()).collect();
            w.write_record([
                id.to_string(),
                r.source.to_string(),
                r.k.to_string(),
                r.oracle.len().to_string(),
                r.model.len().to_string(),
                missing.join(" "),
            ])?;
            oracle_violations += r.missing.len();
        }
        let conf =
            pipeline::conformance_trials(id, p, m, a.conformance_states, a.conformance_events, a.oracle_seed)?;
        conformance_steps += conf.steps;
        conformance_violations += conf.violations.len();
        info!("loop {id}: validation took {:.2?}", start.elapsed());
    }
    w.flush()?;
    let report = ValidationReport {
        passed: oracle_violations == 0 && conformance_violations == 0,
        oracle_samples: a.oracle_samples,
        oracle_violations,
        conformance_steps,
        conformance_violations,
    };
    write_json(&out.join("validation_report.json"), &report)?;
    println!(
        "oracle: {oracle_violations} missing edges; conformance: {conformance_violations} violations in {conformance_steps} steps"
    );
    Ok(if report.passed { 0 } else { EXIT_VALIDATION })
}

fn run(cli: &Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::input(format!("thread pool: {e}")))?;
    }
    let (cfg, out) = load_config(cli)?;
    match cli.command {
        Command::Abstract => cmd_abstract(&cfg, &out),
        Command::Synthesize => cmd_synthesize(&cfg, &out),
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::ExportUppaal => cmd_export(&cfg, &out),
        Command::Validate => cmd_validate(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
