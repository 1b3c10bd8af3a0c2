//! Command-line front end.
//!
//! Settings resolve in three layers: per-workflow defaults, then an optional
//! `key=value` config file with dotted keys (`system.alpha=0.5`, `channel.num_taps=5`),
//! then command-line flags. Every layer writes into the same key map, so validation
//! messages always name the dotted key at fault.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::alloc::{allocate, format_allocation_table};
use crate::channel::{self, ChannelModelConfig, ChannelRealization, RNG_NAME};
use crate::error::{Error, Result};
use crate::harness::{
    compare_to_oracle, derive_trial_seed, run_sweep, AllocatorKind, OracleComparisonSpec,
    SweepSpec, SweepVariable, SEED_RULE, VERSION,
};
use crate::math::{PowerThreshold, SystemConfig};

#[derive(Debug, Parser)]
#[command(name = "bitpower", version, about = "Joint bit and power allocation for OFDM links")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Allocate bits and power on one channel realization
    Alloc(AllocArgs),
    /// Monte Carlo sweep over noise variance, alpha or the power threshold
    Sweep(SweepArgs),
    /// Compare the proposed allocator against the exhaustive optimum
    Oracle(OracleArgs),
}

#[derive(Debug, Args, Default)]
pub struct SharedArgs {
    /// key=value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub subcarriers: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub ber_target: Option<String>,
    /// Noise variance with unit suffix (W, mW, uW)
    #[arg(long)]
    pub noise_variance: Option<String>,
    /// Absolute total power limit with unit suffix, or `unbounded`
    #[arg(long, conflicts_with = "power_threshold_frac")]
    pub power_threshold: Option<String>,
    /// Power limit as a fraction of the unconstrained total, per realization
    #[arg(long)]
    pub power_threshold_frac: Option<String>,
    #[arg(long)]
    pub realizations: Option<String>,
    /// Comma list of proposed, proposed_unconstrained, baseline, oracle
    #[arg(long)]
    pub allocators: Option<String>,
    #[arg(long)]
    pub taps: Option<String>,
    #[arg(long)]
    pub decay: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct AllocArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Channel table (index,re,im) to use instead of a generated realization
    #[arg(long)]
    pub channel_file: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// noise_variance, alpha or power_threshold
    #[arg(long)]
    pub sweep_var: Option<String>,
    /// Comma list of ascending values (unit suffixes allowed for powers)
    #[arg(long)]
    pub sweep_values: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct OracleArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[arg(long)]
    pub b_max: Option<String>,
    /// Run the exhaustive search even above the size guard
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Workflow {
    Alloc,
    Sweep,
    Oracle,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub workflow: Workflow,
    pub system: SystemConfig,
    pub channel_model: ChannelModelConfig,
    pub sweep: Option<SweepSpec>,
    pub oracle: Option<OracleComparisonSpec>,
    pub channel_file: Option<PathBuf>,
    // kept out of the metadata so reruns into other directories stay byte-identical
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// Parses a power such as `0.1mW`, `5uW`, `1e-9W` or a bare number of watts.
pub fn parse_power(key: &str, text: &str) -> Result<f64> {
    let t = text.trim();
    // divide by an exact power of ten so `5uW` parses to the nearest double of 5e-6
    let (num, divisor) = if let Some(n) = t.strip_suffix("mW") {
        (n, 1e3)
    } else if let Some(n) = t.strip_suffix("uW").or_else(|| t.strip_suffix("µW")) {
        (n, 1e6)
    } else if let Some(n) = t.strip_suffix('W') {
        (n, 1.0)
    } else {
        (t, 1.0)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("`{text}` is not a power (units: W, mW, uW)")))?;
    Ok(v / divisor)
}

fn parse_f64(key: &str, text: &str) -> Result<f64> {
    text.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("`{text}` is not a number")))
}

fn parse_int<T: std::str::FromStr>(key: &str, text: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("`{text}` is not a nonnegative integer")))
}

fn parse_bool(key: &str, text: &str) -> Result<bool> {
    match text.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::config(key, format!("`{other}` is not a boolean"))),
    }
}

/// Parses `key=value` lines. `#` starts a comment; blank lines are ignored.
pub fn parse_config_text(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: expected key=value", lineno + 1),
            });
        };
        let key = k.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: unknown key `{key}`", lineno + 1),
            });
        }
        map.insert(key.to_string(), v.trim().to_string());
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "system.num_subcarriers",
    "system.alpha",
    "system.ber_target",
    "system.noise_variance",
    "system.power_threshold",
    "system.power_threshold_frac",
    "system.max_bits",
    "channel.num_taps",
    "channel.decay_factor",
    "run.seed",
    "run.out",
    "run.channel_file",
    "run.realizations",
    "run.allocators",
    "sweep.variable",
    "sweep.values",
    "oracle.b_max",
    "oracle.force",
];

fn workflow_defaults(workflow: Workflow) -> BTreeMap<String, String> {
    let mut d: BTreeMap<String, String> = [
        ("system.num_subcarriers", "128"),
        ("system.alpha", "0.5"),
        ("system.ber_target", "1e-4"),
        ("system.noise_variance", "1e-9W"),
        ("system.power_threshold", "unbounded"),
        ("channel.num_taps", "5"),
        ("channel.decay_factor", "0.2"),
        ("run.seed", "1"),
        ("run.out", "out"),
        ("oracle.b_max", "12"),
        ("oracle.force", "false"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let mut set = |k: &str, v: &str| {
        d.insert(k.to_string(), v.to_string());
    };
    match workflow {
        Workflow::Alloc => {
            set("system.power_threshold_frac", "0.5");
            d.remove("system.power_threshold");
        }
        Workflow::Sweep => {
            set("system.power_threshold", "0.1mW");
            set("run.realizations", "500");
            set("run.allocators", "proposed,proposed_unconstrained,baseline");
            set("sweep.variable", "noise_variance");
            set(
                "sweep.values",
                "1e-9,1e-8,1e-7,1e-6,1e-5,1e-4,1e-3,1e-2,1e-1,1,10",
            );
        }
        Workflow::Oracle => {
            set("system.num_subcarriers", "8");
            set("system.power_threshold", "5uW");
            set("run.realizations", "100");
        }
    }
    d
}

fn flag_overrides(shared: &SharedArgs) -> Vec<(&'static str, String)> {
    let mut v = Vec::new();
    let mut push = |k: &'static str, x: &Option<String>| {
        if let Some(s) = x {
            v.push((k, s.clone()));
        }
    };
    push("run.seed", &shared.seed);
    push("system.num_subcarriers", &shared.subcarriers);
    push("system.alpha", &shared.alpha);
    push("system.ber_target", &shared.ber_target);
    push("system.noise_variance", &shared.noise_variance);
    push("system.power_threshold", &shared.power_threshold);
    push("system.power_threshold_frac", &shared.power_threshold_frac);
    push("run.realizations", &shared.realizations);
    push("run.allocators", &shared.allocators);
    push("channel.num_taps", &shared.taps);
    push("channel.decay_factor", &shared.decay);
    if let Some(out) = &shared.out {
        v.push(("run.out", out.display().to_string()));
    }
    v
}

/// Layers defaults, config file and flags into one key map.
fn layered_settings(
    workflow: Workflow,
    shared: &SharedArgs,
    extra: Vec<(&'static str, String)>,
) -> Result<(BTreeMap<String, String>, Vec<String>)> {
    let mut map = workflow_defaults(workflow);
    let mut explicit = Vec::new();
    let apply = |map: &mut BTreeMap<String, String>, k: &str, v: String| {
        // the two threshold forms are alternatives: setting one clears the other
        match k {
            "system.power_threshold" => {
                map.remove("system.power_threshold_frac");
            }
            "system.power_threshold_frac" => {
                map.remove("system.power_threshold");
            }
            _ => {}
        }
        map.insert(k.to_string(), v);
    };
    if let Some(path) = &shared.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file = parse_config_text(&text, path)?;
        if file.contains_key("system.power_threshold")
            && file.contains_key("system.power_threshold_frac")
        {
            return Err(Error::config(
                "system.power_threshold",
                "set either power_threshold or power_threshold_frac, not both",
            ));
        }
        for (k, v) in file {
            explicit.push(k.clone());
            apply(&mut map, &k, v);
        }
    }
    for (k, v) in flag_overrides(shared).into_iter().chain(extra) {
        explicit.push(k.to_string());
        apply(&mut map, k, v);
    }
    Ok((map, explicit))
}

struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn req(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::config(key, "missing required setting"))
    }

    fn system(&self) -> Result<SystemConfig> {
        let n: usize = parse_int("system.num_subcarriers", self.req("system.num_subcarriers")?)?;
        let alpha = parse_f64("system.alpha", self.req("system.alpha")?)?;
        let ber = parse_f64("system.ber_target", self.req("system.ber_target")?)?;
        let noise = parse_power("system.noise_variance", self.req("system.noise_variance")?)?;
        let threshold = match (
            self.get("system.power_threshold"),
            self.get("system.power_threshold_frac"),
        ) {
            (_, Some(f)) => PowerThreshold::Relative(parse_f64("system.power_threshold_frac", f)?),
            (Some(t), None) if t.trim() == "unbounded" => PowerThreshold::Unbounded,
            (Some(t), None) => {
                PowerThreshold::Absolute(parse_power("system.power_threshold", t)?)
            }
            (None, None) => PowerThreshold::Unbounded,
        };
        let max_bits = self
            .get("system.max_bits")
            .map(|s| parse_int("system.max_bits", s))
            .transpose()?;
        let cfg = SystemConfig {
            num_subcarriers: n,
            alpha,
            ber_targets: vec![ber; n],
            noise_variance: noise,
            power_threshold: threshold,
            max_bits,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// With `fixed_channel` the generator is unused, so the tap count is clamped to N.
    fn channel(&self, n: usize, fixed_channel: bool) -> Result<ChannelModelConfig> {
        let taps: usize = parse_int("channel.num_taps", self.req("channel.num_taps")?)?;
        let cfg = ChannelModelConfig {
            num_taps: if fixed_channel { taps.min(n) } else { taps },
            decay_factor: parse_f64("channel.decay_factor", self.req("channel.decay_factor")?)?,
            num_subcarriers: n,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn realizations(&self) -> Result<usize> {
        let r: usize = parse_int("run.realizations", self.req("run.realizations")?)?;
        if r == 0 {
            return Err(Error::config("run.realizations", "must be a positive integer"));
        }
        Ok(r)
    }

    fn allocators(&self) -> Result<Vec<AllocatorKind>> {
        let text = self.req("run.allocators")?;
        let kinds = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                AllocatorKind::parse(s).ok_or_else(|| {
                    Error::config(
                        "run.allocators",
                        format!("unknown allocator `{s}` (proposed, proposed_unconstrained, baseline, oracle)"),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if kinds.is_empty() {
            return Err(Error::config("run.allocators", "must name at least one allocator"));
        }
        Ok(kinds)
    }

    fn b_max(&self) -> Result<u32> {
        let b: u32 = parse_int("oracle.b_max", self.req("oracle.b_max")?)?;
        if b < 2 {
            return Err(Error::config("oracle.b_max", format!("{b} is below the 2-bit floor")));
        }
        Ok(b)
    }
}

/// Resolves flags and an optional config file into a validated [`RunConfig`].
pub fn parse_config(command: &Command) -> Result<RunConfig> {
    let (workflow, shared, extra) = match command {
        Command::Alloc(a) => {
            let mut extra = Vec::new();
            if let Some(p) = &a.channel_file {
                extra.push(("run.channel_file", p.display().to_string()));
            }
            (Workflow::Alloc, &a.shared, extra)
        }
        Command::Sweep(s) => {
            let mut extra = Vec::new();
            if let Some(v) = &s.sweep_var {
                extra.push(("sweep.variable", v.clone()));
            }
            if let Some(v) = &s.sweep_values {
                extra.push(("sweep.values", v.clone()));
            }
            (Workflow::Sweep, &s.shared, extra)
        }
        Command::Oracle(o) => {
            let mut extra = Vec::new();
            if let Some(b) = &o.b_max {
                extra.push(("oracle.b_max", b.clone()));
            }
            if o.force {
                extra.push(("oracle.force", "true".to_string()));
            }
            (Workflow::Oracle, &o.shared, extra)
        }
    };
    let (mut map, explicit) = layered_settings(workflow, shared, extra)?;

    // a channel file fixes N unless N was given explicitly
    let channel_file = map.get("run.channel_file").map(PathBuf::from);
    let mut file_gains: Option<usize> = None;
    if let (Workflow::Alloc, Some(path)) = (workflow, &channel_file) {
        let gains = channel::read_gain_table(path)?;
        if explicit.iter().any(|k| k == "system.num_subcarriers") {
            let n: usize =
                parse_int("system.num_subcarriers", &map["system.num_subcarriers"])?;
            if n != gains.len() {
                return Err(Error::config(
                    "system.num_subcarriers",
                    format!("{n} does not match the {} rows of {}", gains.len(), path.display()),
                ));
            }
        }
        map.insert("system.num_subcarriers".into(), gains.len().to_string());
        file_gains = Some(gains.len());
    }
    let settings = Settings { map };

    let system = settings.system()?;
    let n = system.num_subcarriers;
    let channel_model = settings.channel(n, file_gains.is_some())?;
    let seed: u64 = parse_int("run.seed", settings.req("run.seed")?)?;
    let output_dir = PathBuf::from(settings.req("run.out")?);

    let mut sweep = None;
    let mut oracle = None;
    match workflow {
        Workflow::Alloc => {}
        Workflow::Sweep => {
            let var_text = settings.req("sweep.variable")?;
            let variable = SweepVariable::parse(var_text.trim()).ok_or_else(|| {
                Error::config(
                    "sweep.variable",
                    format!("`{var_text}` is not one of noise_variance, alpha, power_threshold"),
                )
            })?;
            let values = settings
                .req("sweep.values")?
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| match variable {
                    SweepVariable::Alpha => parse_f64("sweep.values", s),
                    _ => parse_power("sweep.values", s),
                })
                .collect::<Result<Vec<_>>>()?;
            let mut spec = SweepSpec::new(variable, values, system.clone());
            spec.channel = channel_model;
            spec.num_realizations = settings.realizations()?;
            spec.master_seed = seed;
            spec.allocators = settings.allocators()?;
            spec.oracle_max_bits = settings.b_max()?;
            spec.force_oracle = parse_bool("oracle.force", settings.req("oracle.force")?)?;
            spec.validate()?;
            sweep = Some(spec);
        }
        Workflow::Oracle => {
            let spec = OracleComparisonSpec {
                system: system.clone(),
                channel: channel_model,
                num_realizations: settings.realizations()?,
                master_seed: seed,
                b_max: settings.b_max()?,
                force: parse_bool("oracle.force", settings.req("oracle.force")?)?,
            };
            crate::alloc::check_oracle_size(n, spec.b_max, spec.force)?;
            oracle = Some(spec);
        }
    }

    Ok(RunConfig {
        workflow,
        system,
        channel_model,
        sweep,
        oracle,
        channel_file: if workflow == Workflow::Alloc { channel_file } else { None },
        output_dir,
        seed,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Executes a resolved configuration and returns the files written.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let out = |name: &str| cfg.output_dir.join(name);
    let mut written = Vec::new();

    match cfg.workflow {
        Workflow::Alloc => {
            let (realization, source) = match &cfg.channel_file {
                Some(path) => (
                    ChannelRealization::from_gains(
                        channel::read_gain_table(path)?,
                        cfg.system.noise_variance,
                    )?,
                    format!("file:{}", path.display()),
                ),
                None => {
                    let trial_seed = derive_trial_seed(cfg.seed, 0);
                    let mut rng = channel::trial_rng(trial_seed);
                    (
                        ChannelRealization::generate(
                            &cfg.channel_model,
                            cfg.system.noise_variance,
                            &mut rng,
                        )?,
                        format!("generated:trial_seed={trial_seed}"),
                    )
                }
            };
            let (alloc, trace) = allocate(&realization.cnrs, &cfg.system);

            let table = out("alloc.csv");
            write(&table, &format_allocation_table(&realization.cnrs, &trace))?;
            written.push(table);
            let gains = out("channel.csv");
            write(&gains, &channel::format_gain_table(&realization.gains))?;
            written.push(gains);

            let meta = serde_json::json!({
                "tool": "bitpower",
                "version": VERSION,
                "workflow": "alloc",
                "rng": RNG_NAME,
                "seed_rule": SEED_RULE,
                "config": cfg,
                "channel_source": source,
                "power_limit_w": trace.power_limit,
                "unconstrained": {
                    "total_bits": trace.initial.total_bits(),
                    "total_power_w": trace.initial.total_power(),
                    "objective": trace.initial.objective_value,
                },
                "final": {
                    "total_bits": alloc.total_bits(),
                    "total_power_w": alloc.total_power(),
                    "objective": alloc.objective_value,
                },
                "removal_steps": trace.steps.len(),
            });
            let path = out("alloc.json");
            write(&path, &(serde_json::to_string_pretty(&meta).expect("serializes") + "\n"))?;
            written.push(path);
        }
        Workflow::Sweep => {
            let spec = cfg.sweep.as_ref().expect("sweep workflow carries a sweep spec");
            let result = run_sweep(spec)?;
            let stem = format!("sweep_{}", spec.variable);
            let csv = out(&format!("{stem}.csv"));
            write(&csv, &result.to_csv())?;
            written.push(csv);
            let json = out(&format!("{stem}.json"));
            write(&json, &result.metadata_json())?;
            written.push(json);
        }
        Workflow::Oracle => {
            let spec = cfg.oracle.as_ref().expect("oracle workflow carries an oracle spec");
            let cmp = compare_to_oracle(spec)?;
            let csv = out("oracle.csv");
            write(&csv, &cmp.to_csv())?;
            written.push(csv);
            let json = out("oracle.json");
            write(&json, &cmp.metadata_json())?;
            written.push(json);
        }
    }
    Ok(written)
}
