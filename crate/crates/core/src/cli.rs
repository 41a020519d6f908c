//! `vbatt` command-line frontend.
//!
//! Every subcommand that produces results also records the effective
//! configuration (all defaults resolved), so each output directory is
//! reproducible from its own contents.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::aggregation::{self, TclParams};
use crate::controller;
use crate::exec::{self, Execution};
use crate::harness::{self, EnvelopeSource, RunOptions};
use crate::oracle;
use crate::scenario::{self, Interval, ScenarioConfig, Trace, GENERATOR_NAME};
use crate::vb::{envelope, SpecSeries};
use crate::{Error, Result};

pub const SEED_ENV: &str = "VBATT_SEED";

const DEFAULTS_HELP: &str = "\
Config file (JSON, unknown keys rejected). Required keys: price_range,
demand_range, renewable_range, b_char_range, b_dis_range, b_min_range,
b_max_range (each a [lo, hi] array). Optional keys and defaults:
  horizon 720, seed 0, r_max = renewable_range hi, seeds 20, v 10,
  v_list [10, 50, 100, 200, 300, 400], soc0 = envelope midpoint,
  projection false, delta 1, envelope \"declared\" (or \"realized\").
Without --config the built-in data-center ranges are used.
The VBATT_SEED environment variable overrides the config seed; --seed
overrides both.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    #[default]
    Declared,
    Realized,
}

fn default_horizon() -> usize {
    720
}
fn default_seeds() -> usize {
    20
}
fn default_v() -> f64 {
    10.0
}
fn default_v_list() -> Vec<f64> {
    vec![10.0, 50.0, 100.0, 200.0, 300.0, 400.0]
}
fn default_delta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    pub price_range: Interval,
    pub demand_range: Interval,
    pub renewable_range: Interval,
    pub b_char_range: Interval,
    pub b_dis_range: Interval,
    pub b_min_range: Interval,
    pub b_max_range: Interval,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_v")]
    pub v: f64,
    #[serde(default = "default_v_list")]
    pub v_list: Vec<f64>,
    #[serde(default)]
    pub soc0: Option<f64>,
    #[serde(default)]
    pub projection: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub envelope: EnvelopeMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_scenario(&ScenarioConfig::default())
    }
}

impl RunConfig {
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        Self {
            horizon: s.horizon,
            seed: s.seed,
            price_range: s.price_range,
            demand_range: s.demand_range,
            renewable_range: s.renewable_range,
            b_char_range: s.b_char_range,
            b_dis_range: s.b_dis_range,
            b_min_range: s.b_min_range,
            b_max_range: s.b_max_range,
            r_max: Some(s.r_max),
            seeds: default_seeds(),
            v: default_v(),
            v_list: default_v_list(),
            soc0: None,
            projection: false,
            delta: default_delta(),
            envelope: EnvelopeMode::Declared,
        }
        .effective()
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            horizon: self.horizon,
            seed: self.seed,
            price_range: self.price_range,
            demand_range: self.demand_range,
            renewable_range: self.renewable_range,
            b_char_range: self.b_char_range,
            b_dis_range: self.b_dis_range,
            b_min_range: self.b_min_range,
            b_max_range: self.b_max_range,
            r_max: self.r_max.unwrap_or(self.renewable_range.hi()),
        }
    }

    /// Copy with every optional field resolved.
    pub fn effective(mut self) -> Self {
        self.r_max = Some(self.r_max.unwrap_or(self.renewable_range.hi()));
        if self.soc0.is_none() && self.envelope == EnvelopeMode::Declared {
            self.soc0 = Some(self.scenario().declared_envelope().midpoint());
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario().validate()?;
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(Error::Config(format!("v: {} must be positive", self.v)));
        }
        if self.v_list.is_empty() {
            return Err(Error::Config("v_list: must not be empty".into()));
        }
        if let Some(v) = self.v_list.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("v_list: {v} must be positive")));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds: must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta: {} must be positive", self.delta)));
        }
        if let Some(s) = self.soc0 {
            if !s.is_finite() {
                return Err(Error::Config("soc0: must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn envelope_source(&self) -> EnvelopeSource {
        match self.envelope {
            EnvelopeMode::Declared => EnvelopeSource::Declared(self.scenario().declared_envelope()),
            EnvelopeMode::Realized => EnvelopeSource::Realized,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            v: self.v,
            soc0: self.soc0,
            projection: self.projection,
            envelope: self.envelope_source(),
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

/// Parses and validates a config file and resolves its defaults.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

pub fn parse_config(text: &str, source: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))?;
    cfg.validate()?;
    Ok(cfg.effective())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(name = "vbatt", version, about = "Virtual-battery electricity procurement simulator", after_help = DEFAULTS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory; primary CSV goes to stdout when omitted.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, value_name = "INT")]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic trace CSV.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the online controller on a trace or a generated scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        #[arg(long, value_name = "FLOAT")]
        v: Option<f64>,
        #[arg(long, value_enum)]
        projection: Option<OnOff>,
    },
    /// Sweep V over several seeds and report mean cost per V.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        projection: Option<OnOff>,
    },
    /// Solve the offline optimum by dynamic programming.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
        #[arg(long, value_name = "FLOAT")]
        delta: Option<f64>,
    },
    /// Turn task and TCL files into a battery spec CSV.
    Aggregate {
        /// Task CSV (`arrival,deadline,max_power,energy`); repeatable.
        #[arg(long, value_name = "PATH")]
        tasks: Vec<PathBuf>,
        /// Horizon for task batteries; defaults to the latest deadline.
        #[arg(long, value_name = "INT")]
        horizon: Option<usize>,
        /// TCL input CSV (`slot,theta_a,r`).
        #[arg(long, value_name = "PATH", requires = "tcl_params")]
        tcl: Option<PathBuf>,
        /// TCL parameter JSON.
        #[arg(long, value_name = "PATH", requires = "tcl")]
        tcl_params: Option<PathBuf>,
        /// Shift SoC bounds so the lowest becomes zero.
        #[arg(long)]
        shift_nonnegative: bool,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Print the largest V with guaranteed SoC feasibility.
    Vmax {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
    },
}

/// Entry point; returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("vbatt: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Ok(raw) = std::env::var(SEED_ENV) {
        cfg.seed = raw
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}: cannot parse {raw:?} as a seed")))?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn print_json<T: Serialize, W: Write>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out).map_err(|e| Error::io("<stdout>", e))
}

fn load_input_trace(path: &Path, cfg: Option<&RunConfig>) -> Result<Trace> {
    let r_max = cfg
        .and_then(|c| c.r_max)
        .unwrap_or(f64::INFINITY);
    scenario::load_trace(path, r_max)
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a RunConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generator_name: Option<&'a str>,
    result: T,
}

fn execute<W: Write>(command: Command, out: &mut W) -> Result<()> {
    match command {
        Command::Generate { common } => {
            let cfg = resolve_config(common.config.as_deref(), common.seed)?;
            let trace = scenario::generate(&cfg.scenario())?;
            match &common.out {
                None => scenario::write_trace(&trace, &mut *out),
                Some(dir) => {
                    create_dir(dir)?;
                    scenario::save_trace(&trace, &dir.join("trace.csv"))?;
                    write_json(&dir.join("effective_config.json"), &cfg)?;
                    print_json(
                        out,
                        &Summary {
                            command: "generate",
                            config: Some(&cfg),
                            trace: Some(dir.join("trace.csv").display().to_string()),
                            generator_name: Some(GENERATOR_NAME),
                            result: serde_json::json!({ "horizon": trace.horizon() }),
                        },
                    )
                }
            }
        }
        Command::Simulate {
            common,
            trace,
            v,
            projection,
        } => {
            let has_config = common.config.is_some();
            let mut cfg = resolve_config(common.config.as_deref(), common.seed)?;
            if let Some(v) = v {
                cfg.v = v;
            }
            if let Some(p) = projection {
                cfg.projection = p == OnOff::On;
            }
            let (tr, mut report) = match &trace {
                Some(path) => {
                    if !has_config {
                        cfg.envelope = EnvelopeMode::Realized;
                        cfg.soc0 = None;
                    }
                    let tr = load_input_trace(path, has_config.then_some(&cfg))?;
                    let report = harness::run(&tr, &cfg.run_options())?;
                    (tr, report)
                }
                None => {
                    let tr = scenario::generate(&cfg.scenario())?;
                    let mut report = harness::run(&tr, &cfg.run_options())?;
                    report.seed = Some(cfg.seed);
                    report.config_echo = Some(cfg.scenario());
                    report.generator_name = Some(GENERATOR_NAME.into());
                    (tr, report)
                }
            };
            cfg.validate()?;
            if trace.is_some() {
                report.config_echo = None;
            }
            if let Some(dir) = &common.out {
                create_dir(dir)?;
                write_json(&dir.join("report.json"), &report)?;
                harness::write_slots(&tr, &report, create_file(&dir.join("slots.csv"))?)?;
                write_json(&dir.join("effective_config.json"), &cfg)?;
            }
            print_json(
                out,
                &Summary {
                    command: "simulate",
                    config: Some(&cfg),
                    trace: trace.map(|p| p.display().to_string()),
                    generator_name: report.generator_name.as_deref(),
                    result: report.summary(),
                },
            )
        }
        Command::Sweep { common, projection } => {
            let mut cfg = resolve_config(common.config.as_deref(), common.seed)?;
            if let Some(p) = projection {
                cfg.projection = p == OnOff::On;
            }
            let seeds = cfg.seed_list();
            let rows = exec::with_jobs(common.jobs, || {
                harness::sweep_v(
                    &cfg.scenario(),
                    &cfg.v_list,
                    &seeds,
                    &cfg.run_options(),
                    Execution::Parallel,
                )
            })??;
            match &common.out {
                None => harness::write_sweep(&rows, &mut *out),
                Some(dir) => {
                    create_dir(dir)?;
                    harness::write_sweep(&rows, create_file(&dir.join("sweep.csv"))?)?;
                    write_json(&dir.join("effective_config.json"), &cfg)?;
                    print_json(
                        out,
                        &Summary {
                            command: "sweep",
                            config: Some(&cfg),
                            trace: None,
                            generator_name: Some(GENERATOR_NAME),
                            result: &rows,
                        },
                    )
                }
            }
        }
        Command::Oracle {
            common,
            trace,
            delta,
        } => {
            let has_config = common.config.is_some();
            let mut cfg = resolve_config(common.config.as_deref(), common.seed)?;
            if let Some(d) = delta {
                cfg.delta = d;
            }
            cfg.validate()?;
            let tr = match &trace {
                Some(path) => load_input_trace(path, has_config.then_some(&cfg))?,
                None => scenario::generate(&cfg.scenario())?,
            };
            let soc0 = match (cfg.soc0, has_config || trace.is_none()) {
                (Some(s), true) => s,
                _ => {
                    let env = envelope(&tr.specs, tr.max_price())?;
                    (env.midpoint() / cfg.delta).round() * cfg.delta
                }
            };
            let sol = exec::with_jobs(common.jobs, || {
                oracle::offline_optimal_with(&tr, soc0, cfg.delta, Execution::Parallel)
            })??;
            let greedy = oracle::greedy_baseline(&tr);
            match &common.out {
                None => oracle::write_schedule(&tr, &sol, &mut *out),
                Some(dir) => {
                    create_dir(dir)?;
                    oracle::write_schedule(&tr, &sol, create_file(&dir.join("schedule.csv"))?)?;
                    write_json(&dir.join("effective_config.json"), &cfg)?;
                    print_json(
                        out,
                        &Summary {
                            command: "oracle",
                            config: Some(&cfg),
                            trace: trace.map(|p| p.display().to_string()),
                            generator_name: None,
                            result: serde_json::json!({
                                "total_cost": sol.total_cost,
                                "avg_cost": sol.avg_cost,
                                "greedy_cost": greedy,
                                "soc0": soc0,
                                "delta": sol.grid_step,
                            }),
                        },
                    )
                }
            }
        }
        Command::Aggregate {
            tasks,
            horizon,
            tcl,
            tcl_params,
            shift_nonnegative,
            out: dir,
        } => {
            let series = aggregate_inputs(&tasks, horizon, tcl.as_deref(), tcl_params.as_deref())?;
            let series = if shift_nonnegative {
                series.shifted_nonnegative()
            } else {
                series
            };
            match &dir {
                None => write_specs(&series, &mut *out),
                Some(dir) => {
                    create_dir(dir)?;
                    write_specs(&series, create_file(&dir.join("specs.csv"))?)?;
                    print_json(
                        out,
                        &serde_json::json!({
                            "command": "aggregate",
                            "horizon": series.horizon(),
                            "soc_offset": series.soc_offset(),
                        }),
                    )
                }
            }
        }
        Command::Vmax { config } => {
            let cfg = resolve_config(config.as_deref(), None)?;
            let v = controller::v_max(&cfg.scenario().declared_envelope())?;
            writeln!(out, "{v}").map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn aggregate_inputs(
    tasks: &[PathBuf],
    horizon: Option<usize>,
    tcl: Option<&Path>,
    tcl_params: Option<&Path>,
) -> Result<SpecSeries> {
    let mut parts = Vec::new();
    let mut tcl_horizon = None;
    if let (Some(series_path), Some(params_path)) = (tcl, tcl_params) {
        let text = std::fs::read_to_string(params_path).map_err(|e| Error::io(params_path, e))?;
        let params: TclParams = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", params_path.display())))?;
        let (ambient, it_power) = aggregation::read_tcl_series(series_path)?;
        let battery = aggregation::tcl_to_vb(&params, &ambient, &it_power)?;
        tcl_horizon = Some(battery.series.horizon());
        parts.push(battery.series);
    }
    let task_sets = tasks
        .iter()
        .map(|p| aggregation::read_tasks(p))
        .collect::<Result<Vec<_>>>()?;
    if !task_sets.is_empty() {
        let latest = task_sets.iter().flatten().map(|t| t.deadline).max().unwrap_or(0);
        let horizon = horizon.or(tcl_horizon).unwrap_or(latest);
        for set in &task_sets {
            parts.push(aggregation::tasks_to_vb(set, horizon)?);
        }
    }
    if parts.is_empty() {
        return Err(Error::Config("aggregate: pass --tasks and/or --tcl with --tcl-params".into()));
    }
    aggregation::merge_series(&parts)
}

pub const SPEC_HEADER: [&str; 6] = ["slot", "b_char", "b_dis", "b_min", "b_max", "alpha"];

pub fn write_specs<W: Write>(series: &SpecSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SPEC_HEADER)?;
    for (t, s) in series.iter().enumerate() {
        w.write_record([
            t.to_string(),
            s.b_char.to_string(),
            s.b_dis.to_string(),
            s.b_min.to_string(),
            s.b_max.to_string(),
            s.alpha.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<specs>", e))?;
    Ok(())
}
