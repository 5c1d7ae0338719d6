//! `swarmlab` command-line front end.
//!
//! Exit status: 0 success, 1 invalid configuration or arguments, 2 runtime
//! failure, 3 a `preset --check` run with a failing tolerance verdict.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use swarmlab::config::ConfigFailure;
use swarmlab::harness::{self, hash_json, list_presets, run_replications, summarize, HarnessError};
use swarmlab::lyapunov::{check_recipe, mean_drift, rate_envelope_check};
use swarmlab::output::{write_sojourns_csv, write_trajectory_csv};
use swarmlab::{
    derive_constants, parse_config, ConfigDocument, LyapunovConfig, Overrides, RunOptions, TrajectoryRecord, Verdict,
};

#[derive(Parser)]
#[command(name = "swarmlab", version, about = "Multi-swarm peer-to-peer file-sharing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file and write trajectories plus a summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Root seed; overrides `sim.rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides `sim.replications`.
        #[arg(long)]
        replications: Option<u32>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run a named scenario preset.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        replications: Option<u32>,
        /// Keep only sweep variants with these file sizes.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        t_end: Option<f64>,
        /// Keep only variants with these labels.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
        /// JSON file of overrides; command-line flags take precedence.
        #[arg(long)]
        overrides: Option<PathBuf>,
        /// Exit with status 3 when a tolerance check fails.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Print every preset name with a one-line description.
    ListPresets,
    /// Write one variant of a preset as a standalone configuration file.
    ExportConfig {
        name: String,
        /// Variant label; defaults to the first variant.
        #[arg(long)]
        variant: Option<String>,
        /// Destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration file without running it.
    ValidateConfig { path: PathBuf },
}

/// Failure classified by exit status.
enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed, out, replications, quiet } => {
            simulate(&config, seed, &out, replications, quiet).map(|()| ExitCode::SUCCESS)
        }
        Command::Preset { name, out, seed, replications, k, t_end, only, overrides, check, quiet } => {
            let flags = Overrides { replications, t_end, k, only, ..Overrides::default() };
            preset(&name, out.as_deref(), seed, flags, overrides.as_deref(), check, quiet)
        }
        Command::ListPresets => {
            let width = list_presets().iter().map(|p| p.name.len()).max().unwrap_or(0);
            for p in list_presets() {
                println!("{:width$}  {}", p.name, p.description);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportConfig { name, variant, out } => export(&name, variant.as_deref(), out.as_deref()).map(|()| ExitCode::SUCCESS),
        Command::ValidateConfig { path } => load(&path).map(|_| {
            println!("{}: ok", path.display());
            ExitCode::SUCCESS
        }),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<ConfigDocument, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Invalid)?;
    parse_config(&text).map_err(|ConfigFailure(diags)| {
        let lines: Vec<String> = diags.iter().map(|d| format!("{}: {d}", path.display())).collect();
        Failure::Invalid(anyhow::anyhow!("invalid configuration\n{}", lines.join("\n")))
    })
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    writeln!(w)?;
    Ok(())
}

fn write_record(dir: &Path, record: &TrajectoryRecord<f64>, lyap: Option<&LyapunovConfig<f64>>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let traj = dir.join("trajectory.csv");
    write_trajectory_csv(record, lyap, BufWriter::new(File::create(&traj)?)).with_context(|| format!("writing {}", traj.display()))?;
    let soj = dir.join("sojourns.csv");
    write_sojourns_csv(record, BufWriter::new(File::create(&soj)?)).with_context(|| format!("writing {}", soj.display()))?;
    Ok(())
}

fn simulate(path: &Path, seed: Option<u64>, out: &Path, replications: Option<u32>, quiet: bool) -> Result<(), Failure> {
    let mut doc = load(path)?;
    if let Some(s) = seed {
        doc.sim.rng_seed = s;
    }
    if let Some(r) = replications {
        if r == 0 {
            return Err(Failure::Invalid(anyhow::anyhow!("--replications must be at least 1")));
        }
        doc.sim.replications = r;
    }
    let config = doc.run_config();
    let reps = doc.sim.replications;
    let records = run_replications(&config, reps, doc.sim.rng_seed).context("running simulation")?;
    let warmup = doc.warmup();
    let stats = summarize(&records, warmup, harness::DEFAULT_LEVEL);

    let d = doc.diagnostics;
    let constants = derive_constants(&config.params, &config.swarms, d.eta, d.epsilon_prime);
    let lyap = constants.as_ref().ok();
    let diagnostics = json!({
        "eta": d.eta,
        "epsilon_prime": d.epsilon_prime,
        "constants": lyap,
        "constants_error": constants.as_ref().err().map(ToString::to_string),
        "non_finite_reason": lyap.and_then(LyapunovConfig::non_finite_reason),
        "recipe": lyap.map(check_recipe),
        "mean_drift": lyap.map(|c| records.iter().map(|r| mean_drift(r, c, warmup)).collect::<Vec<_>>()),
        "envelope": records.iter().map(|r| rate_envelope_check(r, d.confidence)).collect::<Vec<_>>(),
    });

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (r, rec) in records.iter().enumerate() {
        let dir = if r == 0 { out.to_path_buf() } else { out.join("replications").join(format!("{r:03}")) };
        write_record(&dir, rec, lyap)?;
    }
    let summary = json!({
        "version": swarmlab::VERSION,
        "config": doc,
        "config_hash": hash_json(&doc),
        "rng_seed": doc.sim.rng_seed,
        "replications": reps,
        "stream_seeds": (0..reps).map(|r| swarmlab::derive_stream_seed(doc.sim.rng_seed, u64::from(r))).collect::<Vec<_>>(),
        "counters": records.iter().map(|r| &r.counters).collect::<Vec<_>>(),
        "final_state": records.iter().map(|r| &r.final_state).collect::<Vec<_>>(),
        "statistics": stats,
        "diagnostics": diagnostics,
    });
    write_json(&out.join("summary.json"), &summary)?;
    if !quiet {
        for s in &stats.swarms {
            let soj = s.sojourn.estimate.map_or("n/a".to_string(), |e| format!("{:.4}", e.mean));
            println!("{}: mean sojourn {soj}, peak population {}", s.id, s.peak_population);
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn preset(
    name: &str,
    out: Option<&Path>,
    seed: u64,
    flags: Overrides,
    file: Option<&Path>,
    check: bool,
    quiet: bool,
) -> Result<ExitCode, Failure> {
    let mut overrides = match file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(Failure::Invalid)?;
            serde_json::from_str::<Overrides>(&text)
                .with_context(|| format!("parsing overrides {}", p.display()))
                .map_err(Failure::Invalid)?
        }
        None => Overrides::default(),
    };
    overrides.replications = flags.replications.or(overrides.replications);
    overrides.t_end = flags.t_end.or(overrides.t_end);
    overrides.k = flags.k.or(overrides.k);
    overrides.only = flags.only.or(overrides.only);

    let opts = RunOptions { keep_records: out.is_some() };
    let run = harness::run_preset(name, &overrides, seed, &opts).map_err(|e| match e {
        HarnessError::Config(_) => Failure::Runtime(e.into()),
        _ => Failure::Invalid(e.into()),
    })?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for v in &run.variants {
            for (r, rec) in v.records.iter().enumerate() {
                write_record(&dir.join(&v.label).join(format!("{r:03}")), rec, None)?;
            }
        }
        let summary = json!({
            "version": swarmlab::VERSION,
            "overrides": overrides,
            "run": run,
        });
        write_json(&dir.join("summary.json"), &summary)?;
    }
    if !quiet {
        for v in &run.variants {
            let means: Vec<String> = v
                .summary
                .swarms
                .iter()
                .map(|s| format!("{}={}", s.id, s.sojourn.estimate.map_or("n/a".to_string(), |e| format!("{:.3}", e.mean))))
                .collect();
            println!("{:<28} mean sojourn {}", v.label, means.join(" "));
        }
        for i in &run.improvements {
            let f = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            println!("K={:<4} MS {} RFwPMS {} improvement {}%", i.k, f(i.ms), f(i.rfwpms), f(i.percent));
        }
        for c in &run.checks {
            let obs = c.observed.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            println!("{:?}: {} (observed {obs})", c.verdict, c.name);
        }
        println!("verdict: {:?}", run.verdict);
    }
    Ok(if check && run.verdict == Verdict::Fail { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn export(name: &str, variant: Option<&str>, out: Option<&Path>) -> Result<(), Failure> {
    let p = harness::preset(name).map_err(|e| Failure::Invalid(e.into()))?;
    let v = match variant {
        Some(label) => p.variants.iter().find(|v| v.label == label).ok_or_else(|| {
            let labels: Vec<&str> = p.variants.iter().map(|v| v.label.as_str()).collect();
            Failure::Invalid(anyhow::anyhow!("no variant `{label}` in `{name}`; available: {}", labels.join(", ")))
        })?,
        None => &p.variants[0],
    };
    let doc = ConfigDocument::from_run_config(&v.config, p.replications, Some(p.warmup));
    match out {
        Some(path) => write_json(path, &doc)?,
        None => println!("{}", serde_json::to_string_pretty(&doc).context("serializing")?),
    }
    Ok(())
}
