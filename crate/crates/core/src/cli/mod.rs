//! Command-line experiment runner.
//!
//! Settings come from a TOML [`ExperimentConfig`]; flags override the file.
//! Besides the named flags, `--set section.key=value` overrides any key,
//! with the value parsed as TOML.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ExperimentConfig, SCHEMA_VERSION};
pub use output::{OutputSet, RunManifest};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ntklab", version, about = "Neural tangent kernels of MLPs and ResNets: experiments and checks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; sweeps use seed, seed + 1, ...
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override any config key, e.g. `--set drift.widths=[64,128]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel profiles over the angle gap.
    Kernel {
        #[arg(long)]
        grid: Option<usize>,
        /// Divide every profile by its peak.
        #[arg(long)]
        normalize: Option<bool>,
    },
    /// Closed-form kernel regression and its smoothness μ.
    Regress {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Empirical NTK at initialization and trained networks against the analytic NTK.
    Empirical {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Skip training.
        #[arg(long)]
        no_train: bool,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Drift of the empirical NTK during training against width.
    Drift {
        /// Comma-separated, ascending.
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<usize>>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lr_scale: Option<f64>,
    },
    /// Input-gradient bounds and the MLP/ResNet ratio.
    Bounds {
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Also measure the largest input gradient of a network at init on this many angles.
        #[arg(long)]
        empirical_grid: Option<usize>,
    },
    /// Closed-form expectations against Monte Carlo, optionally with the gradient check.
    Oracle {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        covariances: Option<usize>,
        /// Run the finite-difference gradient check with default settings.
        #[arg(long)]
        gradients: bool,
    },
    /// Smoothness of networks trained outside the NTK regime.
    Offntk {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        samples: Option<usize>,
        /// `adam` or `sgd`.
        #[arg(long)]
        optimizer: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Evaluate the acceptance criteria.
    All {
        /// Comma-separated criterion numbers; default all eleven.
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u8>>,
        /// Exit with status 1 if any criterion fails.
        #[arg(long)]
        strict: bool,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Kernel { .. } => "kernel",
            Command::Regress { .. } => "regress",
            Command::Empirical { .. } => "empirical",
            Command::Drift { .. } => "drift",
            Command::Bounds { .. } => "bounds",
            Command::Oracle { .. } => "oracle",
            Command::Offntk { .. } => "offntk",
            Command::All { .. } => "all",
            Command::ShowConfig => "show-config",
        }
    }

    /// Named flags as `(key, TOML value)` overrides.
    fn overrides(&self) -> Vec<(String, String)> {
        let mut o = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        let s = |v: &Option<usize>| v.map(|x| x.to_string());
        let f = |v: &Option<f64>| v.map(|x| format!("{x:?}"));
        let list = |v: &Option<Vec<usize>>| v.as_ref().map(|x| format!("{x:?}"));
        match self {
            Command::Kernel { grid, normalize } => {
                put("kernel.grid", s(grid));
                put("kernel.normalize", normalize.map(|b| b.to_string()));
            }
            Command::Regress { samples, grid, gamma } => {
                put("regress.sampling.count", s(samples));
                put("regress.grid", s(grid));
                put("regress.gamma", f(gamma));
            }
            Command::Empirical { sweep, no_train, lr } => {
                put("empirical.width", s(&sweep.width));
                put("empirical.seeds", s(&sweep.seeds));
                put("empirical.grid", s(&sweep.grid));
                put("empirical.iterations", s(&sweep.iterations));
                put("empirical.lr", f(lr));
                if *no_train {
                    put("empirical.train", Some("false".into()));
                }
            }
            Command::Drift { widths, seeds, iterations, lr_scale } => {
                put("drift.widths", list(widths));
                put("drift.seeds", s(seeds));
                put("drift.iterations", s(iterations));
                put("drift.lr_scale", f(lr_scale));
            }
            Command::Bounds { width, depth, alpha, empirical_grid } => {
                put("bounds.width", s(width));
                put("bounds.arch.depth", s(depth));
                put("bounds.arch.alpha", f(alpha));
                put("bounds.empirical.grid", s(empirical_grid));
            }
            Command::Oracle { samples, covariances, gradients } => {
                put("oracle.samples", s(samples));
                put("oracle.covariances", s(covariances));
                if *gradients {
                    put("oracle.gradient", Some("{}".into()));
                }
            }
            Command::Offntk { sweep, samples, optimizer, lr } => {
                put("offntk.width", s(&sweep.width));
                put("offntk.seeds", s(&sweep.seeds));
                put("offntk.grid", s(&sweep.grid));
                put("offntk.iterations", s(&sweep.iterations));
                put("offntk.sampling.count", s(samples));
                put("offntk.optimizer.kind", optimizer.as_ref().map(|k| format!("{k:?}")));
                put("offntk.optimizer.lr", f(lr));
            }
            Command::All { criteria, .. } => {
                put("all.criteria", criteria.as_ref().map(|c| format!("{c:?}")));
            }
            Command::ShowConfig => {}
        }
        o
    }
}

fn parse_value(raw: &str) -> Result<toml::Value> {
    let doc: toml::Table = toml::from_str(&format!("v = {raw}"))
        .or_else(|_| toml::from_str(&format!("v = {:?}", raw)))
        .map_err(|e| Error::Config(format!("cannot parse value {raw:?}: {e}")))?;
    Ok(doc["v"].clone())
}

/// Set a dotted key, creating intermediate tables.
fn set_key(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| Error::Config(format!("{key}: {part} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Load the file (or the defaults), apply flags, and validate.
///
/// Overrides are applied to the TOML document of the effective config, so
/// they pass through the same schema checks as the file.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let base = match &cli.global.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut doc: toml::Table =
        toml::from_str(&base.to_toml()).map_err(|e| Error::Config(format!("re-reading config: {e}")))?;
    let mut overrides = cli.command.overrides();
    for s in &cli.global.set {
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = cli.global.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.global.out {
        overrides.push(("out".into(), format!("{:?}", out.display().to_string())));
    }
    if let Some(t) = cli.global.threads {
        overrides.push(("threads".into(), t.to_string()));
    }
    for (k, v) in overrides {
        set_key(&mut doc, &k, parse_value(&v)?)?;
    }
    let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
    ExperimentConfig::parse(&text)
}

/// Exit status of a completed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    CriteriaFailed,
}

pub fn run(cli: &Cli) -> Result<Status> {
    let cfg = resolve_config(cli)?;
    if cfg.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(Status::Ok);
    }
    let mut out = OutputSet::create(&cfg, cli.command.name())?;
    let mut status = Status::Ok;
    match &cli.command {
        Command::Kernel { .. } => commands::kernel(&cfg, &mut out)?,
        Command::Regress { .. } => commands::regress(&cfg, &mut out)?,
        Command::Empirical { .. } => commands::empirical(&cfg, &mut out)?,
        Command::Drift { .. } => commands::drift(&cfg, &mut out)?,
        Command::Bounds { .. } => commands::bounds(&cfg, &mut out)?,
        Command::Oracle { .. } => commands::oracle(&cfg, &mut out)?,
        Command::Offntk { .. } => commands::offntk(&cfg, &mut out)?,
        Command::All { strict, .. } => {
            let outcomes = commands::all(&cfg, &mut out)?;
            if *strict && outcomes.iter().any(|o| !o.passed) {
                status = Status::CriteriaFailed;
            }
        }
        Command::ShowConfig => unreachable!(),
    }
    let m = out.finish()?;
    eprintln!("{} files in {} ({:.1}s)", m.outputs.len(), cfg.out.display(), m.wall_clock_seconds);
    Ok(status)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("ntklab").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let c = resolve_config(&cli(&["drift", "--widths", "8,16", "--seed", "7", "--set", "drift.seeds=2"])).unwrap();
        assert_eq!(c.drift.widths, vec![8, 16]);
        assert_eq!(c.drift.seeds, 2);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn set_accepts_bare_strings_and_rejects_unknown_keys() {
        let c = resolve_config(&cli(&["offntk", "--optimizer", "sgd", "--lr", "0.01"])).unwrap();
        assert_eq!(c.offntk.optimizer, crate::net::Optimizer::Sgd { lr: 0.01 });
        assert!(resolve_config(&cli(&["kernel", "--set", "kernel.gird=3"])).is_err());
        assert!(resolve_config(&cli(&["kernel", "--set", "nonsense"])).is_err());
    }

    #[test]
    fn flags_beat_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "version = 1\nseed = 3\n[kernel]\ngrid = 5\n").unwrap();
        let p = path.to_str().unwrap();
        let c = resolve_config(&cli(&["kernel", "--config", p])).unwrap();
        assert_eq!((c.seed, c.kernel.grid), (3, 5));
        let c = resolve_config(&cli(&["kernel", "--config", p, "--grid", "9", "--seed", "4"])).unwrap();
        assert_eq!((c.seed, c.kernel.grid), (4, 9));
    }
}
