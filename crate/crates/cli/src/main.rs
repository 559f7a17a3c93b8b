//! Command-line entry point: subcommands wrapping each experiment kind plus
//! low-level utilities to sample, inspect and replay Harris constructions,
//! trace ancestries, and run the random-walk suite.
//!
//! Conventions: all randomness flows from `--seed` (one is drawn from system
//! entropy and printed when absent); flag names mirror configuration fields
//! one-to-one; human summaries go to stdout, CSV/JSON files under
//! `--output-dir`, machine-readable error objects to stderr.  Exit codes:
//! 0 success, 2 acceptance failure, 1 error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cplab_core::ancestry;
use cplab_core::experiments::{run as run_experiment, ExperimentConfig, ExperimentKind};
use cplab_core::forward::{self, OneTypeConfig, TypedConfig};
use cplab_core::harris::{HarrisConstruction, Window};
use cplab_core::kernel::Kernel;
use cplab_core::walk;

#[derive(Parser)]
#[command(
    name = "cplab",
    about = "Exact two-type contact process laboratory",
    disable_help_subcommand = true
)]
struct Cli {
    /// Worker pool size for replica parallelism (never affects results).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SampleArgs {
    /// Master seed; drawn from system entropy and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Infection rate (arrow rate is lambda * p(d) per ordered pair).
    #[arg(long, default_value_t = 4.0)]
    lambda: f64,
    /// Kernel as comma-separated displacement:mass pairs; nearest-neighbour
    /// when omitted.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    window_lo: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    window_hi: Option<i64>,
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Harris construction and write it as JSON.
    Sample {
        #[command(flatten)]
        sample: SampleArgs,
        /// Output file name (under --output-dir).
        #[arg(long, default_value = "harris.json")]
        output: String,
    },
    /// Evolve a configuration forward on a sampled construction.
    Evolve {
        #[command(flatten)]
        sample: SampleArgs,
        /// Initial configuration: heaviside | vacant | ones:LO:HI | a JSON
        /// config file.
        #[arg(long, default_value = "heaviside")]
        initial: String,
        #[arg(long)]
        t: f64,
        /// Output file for the final configuration.
        #[arg(long, default_value = "state.json")]
        output: String,
    },
    /// Trace the ordered ancestor sequence of a site.
    Trace {
        #[command(flatten)]
        sample: SampleArgs,
        /// Load a serialized construction instead of sampling.
        #[arg(long)]
        harris: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        x: i64,
        #[arg(long)]
        t: f64,
        /// Output CSV (one row per ancestor rank).
        #[arg(long, default_value = "ancestors.csv")]
        output: String,
    },
    /// Scan the renewal times of one ancestry.
    Renewals {
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long)]
        harris: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        x: i64,
        /// Censoring margin standing in for survival forever.
        #[arg(long, default_value_t = 30.0)]
        margin: f64,
        #[arg(long, default_value = "renewals.csv")]
        output: String,
    },
    /// Run a replicated experiment campaign from a JSON configuration.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Inline override `field=json_value`; wins over the file value.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the perturbed random walk suite.
    Rwalk {
        /// Family preset name (unperturbed | drifted) or a family JSON file.
        #[arg(long, default_value = "drifted")]
        family: String,
        #[arg(long, default_value_t = 5, allow_hyphen_values = true)]
        x0: i64,
        /// Comma-separated list of step horizons.
        #[arg(long, default_value = "64,256,1024")]
        n_grid: String,
        #[arg(long, default_value_t = 20000)]
        replicas: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay a serialized construction through a forward evolution.
    Replay {
        #[arg(long)]
        harris: PathBuf,
        /// Initial configuration, as in `evolve`.
        #[arg(long, default_value = "heaviside")]
        evolve: String,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = "state.json")]
        output: String,
    },
}

fn parse_kernel(spec: Option<&str>) -> Result<Kernel> {
    match spec {
        None => Ok(Kernel::nearest_neighbour()),
        Some(text) => {
            let mut map = BTreeMap::new();
            for tok in text.split(',') {
                let (d, m) = tok
                    .split_once(':')
                    .ok_or_else(|| anyhow!("kernel token {tok:?} is not displacement:mass"))?;
                map.insert(d.trim().parse::<i64>()?, m.trim().parse::<f64>()?);
            }
            Kernel::build(&map).map_err(|e| anyhow!(e.to_string()))
        }
    }
}

fn effective_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::random();
            println!("seed: {s} (drawn from system entropy)");
            s
        }
    }
}

fn sample_construction(args: &SampleArgs, default_horizon: f64) -> Result<(HarrisConstruction, u64)> {
    let kernel = parse_kernel(args.kernel.as_deref())?;
    let seed = effective_seed(args.seed);
    let horizon = args.horizon.unwrap_or(default_horizon);
    let window = match (args.window_lo, args.window_hi) {
        (Some(lo), Some(hi)) => Window::new(lo, hi),
        (None, None) => {
            let reach =
                (3.0 * args.lambda * kernel.range() as f64 * horizon).ceil() as i64;
            Window::new(-reach - kernel.range() as i64, reach + kernel.range() as i64)
        }
        _ => bail!("provide both --window-lo and --window-hi or neither"),
    };
    let h = HarrisConstruction::sample(&kernel, args.lambda, window, horizon, seed)
        .map_err(|e| anyhow!(e.to_string()))?;
    Ok((h, seed))
}

fn parse_initial(spec: &str, window: Window) -> Result<TypedConfig> {
    match spec {
        "heaviside" => Ok(TypedConfig::heaviside(window)),
        "vacant" => Ok(TypedConfig::vacant(window)),
        other => {
            if let Some(rest) = other.strip_prefix("ones:") {
                let (lo, hi) = rest
                    .split_once(':')
                    .ok_or_else(|| anyhow!("expected ones:LO:HI"))?;
                let ones =
                    OneTypeConfig::from_range(window, lo.parse()?, hi.parse()?);
                let mut cfg = TypedConfig::vacant(window);
                for s in ones.sites() {
                    cfg.set(s, forward::TYPE_ONE);
                }
                Ok(cfg)
            } else {
                let text = std::fs::read_to_string(other)
                    .with_context(|| format!("initial configuration file {other}"))?;
                TypedConfig::from_json(&text)
                    .ok_or_else(|| anyhow!("malformed configuration JSON in {other}"))
            }
        }
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn parse_grid(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| anyhow!("{e}")))
        .collect()
}

fn evolve_and_write(
    h: &HarrisConstruction,
    initial: &str,
    t: f64,
    dir: &Path,
    output: &str,
) -> Result<()> {
    if t > h.horizon() {
        bail!("t = {t} beyond the construction horizon {}", h.horizon());
    }
    let init = parse_initial(initial, h.window())?;
    let out = forward::evolve_multitype(h, &init, t);
    let stats = forward::interface_stats(&out.value);
    let path = write_text(dir, output, &out.value.to_json())?;
    println!(
        "evolved to t = {t}: ones {}, twos {}, vacant {}",
        out.value.count(forward::TYPE_ONE),
        out.value.count(forward::TYPE_TWO),
        out.value.count(forward::VACANT),
    );
    println!(
        "interface: r = {:?}, l = {:?}, rho = {:?}, boundary_contaminated = {}",
        stats.r, stats.l, stats.rho, out.boundary_contaminated
    );
    println!("state written to {}", path.display());
    Ok(())
}

/// Exit code 2 signals a failed acceptance-tagged check.
const EXIT_ACCEPTANCE: i32 = 2;

fn dispatch(cli: Cli) -> Result<i32> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let dir = cli.output_dir.clone();
    match cli.command {
        Command::Sample { sample, output } => {
            let (h, seed) = sample_construction(&sample, 10.0)?;
            let path = write_text(&dir, &output, &h.to_json())?;
            println!(
                "sampled construction: seed {seed}, window [{}, {}], horizon {}, {} events ({} deaths, {} arrows)",
                h.window().lo,
                h.window().hi,
                h.horizon(),
                h.event_count(),
                h.total_deaths(),
                h.total_arrows()
            );
            println!("construction written to {}", path.display());
            Ok(0)
        }
        Command::Evolve {
            sample,
            initial,
            t,
            output,
        } => {
            let (h, _) = sample_construction(&sample, t)?;
            evolve_and_write(&h, &initial, t, &dir, &output)?;
            Ok(0)
        }
        Command::Replay {
            harris,
            evolve,
            t,
            output,
        } => {
            let text = std::fs::read_to_string(&harris)
                .with_context(|| format!("construction file {}", harris.display()))?;
            let h = HarrisConstruction::from_json(&text).map_err(|e| anyhow!(e.to_string()))?;
            evolve_and_write(&h, &evolve, t, &dir, &output)?;
            Ok(0)
        }
        Command::Trace {
            sample,
            harris,
            x,
            t,
            output,
        } => {
            let h = match harris {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    HarrisConstruction::from_json(&text).map_err(|e| anyhow!(e.to_string()))?
                }
                None => sample_construction(&sample, t)?.0,
            };
            if !h.window().contains(x) {
                bail!("site {x} outside window [{}, {}]", h.window().lo, h.window().hi);
            }
            let trace = ancestry::trace_ancestry(&h, x, t);
            let mut csv = String::from("x,n,t,site\n");
            for (n, site) in trace.value.iter().enumerate() {
                csv.push_str(&format!("{x},{},{t},{site}\n", n + 1));
            }
            let path = write_text(&dir, &output, &csv)?;
            println!(
                "ancestors of {x} at dual time {t}: {:?} (boundary_contaminated = {})",
                trace.value, trace.boundary_contaminated
            );
            println!("table written to {}", path.display());
            Ok(0)
        }
        Command::Renewals {
            sample,
            harris,
            x,
            margin,
            output,
        } => {
            let h = match harris {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    HarrisConstruction::from_json(&text).map_err(|e| anyhow!(e.to_string()))?
                }
                None => sample_construction(&sample, 60.0)?.0,
            };
            match ancestry::find_renewals(&h, x, margin) {
                Err(e) => bail!("{e}"),
                Ok(recs) => {
                    let mut csv =
                        String::from("index,time,site,increment_space,increment_time,censored\n");
                    for r in &recs.value {
                        csv.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            r.index, r.time, r.site, r.increment_space, r.increment_time, r.censored
                        ));
                    }
                    let path = write_text(&dir, &output, &csv)?;
                    println!(
                        "{} renewals of site {x} (margin {margin}, boundary_contaminated = {})",
                        recs.value.len(),
                        recs.boundary_contaminated
                    );
                    println!("records written to {}", path.display());
                }
            }
            Ok(0)
        }
        Command::Experiment { config, set } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("configuration file {}", config.display()))?;
            let mut cfg =
                ExperimentConfig::from_json(&text).map_err(|e| anyhow!(e.to_string()))?;
            for kv in &set {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| anyhow!("override {kv:?} is not KEY=VALUE"))?;
                cfg.apply_override(k, v).map_err(|e| anyhow!(e.to_string()))?;
            }
            run_and_report(&cfg, &dir)
        }
        Command::Rwalk {
            family,
            x0,
            n_grid,
            replicas,
            seed,
        } => {
            // Validate the family name/file early for a clear error.
            if walk::presets::by_name(&family).is_none() && !Path::new(&family).exists() {
                bail!("unknown family {family:?}: not a preset and not a file");
            }
            let mut cfg = ExperimentConfig::new(ExperimentKind::RwalkTail, effective_seed(seed));
            cfg.family = Some(family);
            cfg.x = Some(x0);
            cfg.n_grid = Some(parse_grid(&n_grid)?.into_iter().map(|n| n as u64).collect());
            cfg.replicas = replicas;
            run_and_report(&cfg, &dir)
        }
    }
}

fn run_and_report(cfg: &ExperimentConfig, dir: &Path) -> Result<i32> {
    let report = run_experiment(cfg).map_err(|e| anyhow!(e.to_string()))?;
    let stem = report.kind.name();
    report
        .write_files(dir, stem)
        .with_context(|| format!("writing report files under {}", dir.display()))?;
    println!("effective config: {}", serde_json::to_string(&report.config)?);
    for c in &report.checks {
        println!(
            "[{}] {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!(
        "{} cells written to {stem}.json / {stem}.csv under {} ({:.2}s)",
        report.cells.len(),
        dir.display(),
        report.runtime_seconds
    );
    Ok(if report.overall_pass { 0 } else { EXIT_ACCEPTANCE })
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print normally and exit 0.
            if e.use_stderr() {
                eprintln!(
                    "{}",
                    serde_json::json!({"error": "usage", "message": e.to_string()})
                );
                std::process::exit(1);
            }
            let _ = e.print();
            std::process::exit(0);
        }
    };
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": "runtime", "message": format!("{e:#}")})
            );
            std::process::exit(1);
        }
    }
}
