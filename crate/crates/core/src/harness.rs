//! Closed-loop simulation of the online controller and penalty-weight sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controller::{self, ControllerState, SlotObservation};
use crate::exec::{self, Execution};
use crate::scenario::{self, ScenarioConfig, Trace, GENERATOR_NAME};
use crate::vb::{check_feasible, envelope, DispatchAction, EnvelopeConstants, EPS};
use crate::{Error, Result};

pub const SLOT_HEADER: [&str; 12] = [
    "slot", "price", "renewable", "demand", "r_e", "r_b", "g_e", "g_b", "b_e", "soc", "queue",
    "cost",
];

pub const SWEEP_HEADER: [&str; 4] = ["v", "mean_cost", "std_cost", "violations_total"];

/// Where the controller's envelope constants come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeSource {
    /// Constants known in advance.
    Declared(EnvelopeConstants),
    /// Constants measured on the trace itself, with the trace's top price.
    Realized,
}

impl EnvelopeSource {
    pub fn resolve(&self, trace: &Trace) -> Result<EnvelopeConstants> {
        match self {
            EnvelopeSource::Declared(env) => Ok(*env),
            EnvelopeSource::Realized => envelope(&trace.specs, trace.max_price()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub v: f64,
    /// Initial SoC; the envelope midpoint when `None`.
    pub soc0: Option<f64>,
    pub projection: bool,
    pub envelope: EnvelopeSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocViolation {
    pub slot: usize,
    /// `"soc_lower"` or `"soc_upper"`.
    pub bound: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub avg_cost: f64,
    pub total_cost: f64,
    /// SoC at the start of every slot plus the final SoC (`T + 1` values).
    pub soc_series: Vec<f64>,
    /// Virtual queue aligned with `soc_series`.
    pub queue_series: Vec<f64>,
    pub violation_log: Vec<SocViolation>,
    pub v: f64,
    pub seed: Option<u64>,
    pub config_echo: Option<ScenarioConfig>,
    pub generator_name: Option<String>,
    pub envelope: EnvelopeConstants,
    pub projection: bool,
    pub actions: Vec<DispatchAction>,
    pub costs: Vec<f64>,
}

impl SimReport {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Header-level numbers without the per-slot series.
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            avg_cost: self.avg_cost,
            total_cost: self.total_cost,
            horizon: self.horizon(),
            violations: self.violation_log.len(),
            v: self.v,
            projection: self.projection,
            seed: self.seed,
            generator_name: self.generator_name.clone(),
            envelope: self.envelope,
            final_soc: self.soc_series.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub avg_cost: f64,
    pub total_cost: f64,
    pub horizon: usize,
    pub violations: usize,
    pub v: f64,
    pub projection: bool,
    pub seed: Option<u64>,
    pub generator_name: Option<String>,
    pub envelope: EnvelopeConstants,
    pub final_soc: f64,
}

/// Runs the online controller over `trace`.
pub fn run(trace: &Trace, opts: &RunOptions) -> Result<SimReport> {
    if !(opts.v > 0.0 && opts.v.is_finite()) {
        return Err(Error::InvalidParameter(format!("V = {} must be positive", opts.v)));
    }
    if let Some((slot, s)) = trace
        .specs
        .iter()
        .enumerate()
        .find(|(_, s)| (s.alpha - 1.0).abs() > 1e-12)
    {
        return Err(Error::UnsupportedDissipation {
            slot,
            alpha: s.alpha,
        });
    }
    let env = opts.envelope.resolve(trace)?;
    let soc0 = opts.soc0.unwrap_or_else(|| env.midpoint());
    let mut state = controller::init_state(soc0, opts.v, env)?;

    let n = trace.horizon();
    let mut soc_series = Vec::with_capacity(n + 1);
    let mut queue_series = Vec::with_capacity(n + 1);
    let mut actions = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut violation_log = Vec::new();
    soc_series.push(state.soc);
    queue_series.push(state.queue);

    for t in 0..n {
        let obs = SlotObservation {
            price: trace.price[t],
            renewable: trace.renewable[t],
            demand: trace.demand[t],
            spec: trace.specs.specs()[t],
        };
        let mut action = controller::dispatch(&state, &obs);
        if opts.projection {
            action = controller::project(&state, &obs, &action);
        }
        let next: ControllerState = controller::advance(&state, &action);
        for v in check_feasible(&obs.spec, next.soc, &action) {
            if v.is_soc_bound() {
                violation_log.push(SocViolation {
                    slot: t,
                    bound: v.tag().to_string(),
                    magnitude: v.magnitude(),
                });
            }
        }
        costs.push(action.cost(obs.price));
        actions.push(action);
        state = next;
        soc_series.push(state.soc);
        queue_series.push(state.queue);
    }

    let total_cost: f64 = costs.iter().sum();
    Ok(SimReport {
        avg_cost: if n == 0 { 0.0 } else { total_cost / n as f64 },
        total_cost,
        soc_series,
        queue_series,
        violation_log,
        v: opts.v,
        seed: None,
        config_echo: None,
        generator_name: None,
        envelope: env,
        projection: opts.projection,
        actions,
        costs,
    })
}

/// Generates the trace for `cfg` and runs on it, recording provenance.
pub fn run_config(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<SimReport> {
    let trace = scenario::generate(cfg)?;
    let mut report = run(&trace, opts)?;
    report.seed = Some(cfg.seed);
    report.config_echo = Some(cfg.clone());
    report.generator_name = Some(GENERATOR_NAME.to_string());
    Ok(report)
}

/// Non-SoC constraint breaches of a finished run: rate limits, signs,
/// complementarity, demand balance and the renewable budget. Empty for
/// every run produced by [`run`].
pub fn structural_violations(trace: &Trace, report: &SimReport) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let shift = report.queue_series[0] - report.soc_series[0];
    for (t, a) in report.actions.iter().enumerate() {
        let spec = trace.specs.specs()[t];
        for v in check_feasible(&spec, report.soc_series[t + 1], a) {
            if !v.is_soc_bound() {
                out.push((t, format!("{v:?}")));
            }
        }
        if (a.supplied() - trace.demand[t]).abs() > 1e-9 * trace.demand[t].max(1.0) {
            out.push((t, format!("demand balance: supplied {} vs {}", a.supplied(), trace.demand[t])));
        }
        if a.r_e + a.r_b > trace.renewable[t] + EPS {
            out.push((t, "renewable budget exceeded".into()));
        }
        let drift = report.queue_series[t + 1] - report.soc_series[t + 1] - shift;
        if drift.abs() > 1e-6 {
            out.push((t, format!("queue shift drifted by {drift}")));
        }
        let expected = report.soc_series[t] + a.net();
        if (expected - report.soc_series[t + 1]).abs() > 1e-9 * expected.abs().max(1.0) {
            out.push((t, "SoC does not follow the dynamics".into()));
        }
    }
    out
}

pub fn write_slots<W: Write>(trace: &Trace, report: &SimReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SLOT_HEADER)?;
    for (t, a) in report.actions.iter().enumerate() {
        w.write_record([
            t.to_string(),
            trace.price[t].to_string(),
            trace.renewable[t].to_string(),
            trace.demand[t].to_string(),
            a.r_e.to_string(),
            a.r_b.to_string(),
            a.g_e.to_string(),
            a.g_b.to_string(),
            a.b_e.to_string(),
            report.soc_series[t + 1].to_string(),
            report.queue_series[t + 1].to_string(),
            report.costs[t].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<slots>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v: f64,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub violations_total: usize,
}

fn aggregate_rows(v_list: &[f64], per_run: &[(usize, f64, usize)]) -> Vec<SweepRow> {
    let mut order: Vec<usize> = (0..v_list.len()).collect();
    order.sort_by(|&a, &b| v_list[a].total_cmp(&v_list[b]));
    order
        .into_iter()
        .map(|vi| {
            let costs: Vec<f64> = per_run
                .iter()
                .filter(|r| r.0 == vi)
                .map(|r| r.1)
                .collect();
            let violations_total = per_run.iter().filter(|r| r.0 == vi).map(|r| r.2).sum();
            let n = costs.len() as f64;
            let mean = costs.iter().sum::<f64>() / n;
            let std = if costs.len() > 1 {
                (costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SweepRow {
                v: v_list[vi],
                mean_cost: mean,
                std_cost: std,
                violations_total,
            }
        })
        .collect()
}

fn check_sweep_args(v_list: &[f64], runs: usize) -> Result<()> {
    if v_list.is_empty() {
        return Err(Error::InvalidParameter("empty V list".into()));
    }
    if runs == 0 {
        return Err(Error::InvalidParameter("empty seed list".into()));
    }
    Ok(())
}

/// One run per `(v, seed)` on traces generated from `cfg`. Rows reports the
/// mean and sample standard deviation of `avg_cost` over seeds, sorted by V.
/// `base.v` is ignored.
pub fn sweep_v(
    cfg: &ScenarioConfig,
    v_list: &[f64],
    seeds: &[u64],
    base: &RunOptions,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    check_sweep_args(v_list, seeds.len())?;
    let traces: Vec<Trace> = exec::map(seeds, exec, |&s| scenario::generate(&cfg.with_seed(s)))
        .into_iter()
        .collect::<Result<_>>()?;
    sweep_traces(&traces, v_list, base, exec)
}

/// Like [`sweep_v`] over explicit traces.
pub fn sweep_traces(
    traces: &[Trace],
    v_list: &[f64],
    base: &RunOptions,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    check_sweep_args(v_list, traces.len())?;
    let jobs: Vec<(usize, usize)> = (0..v_list.len())
        .flat_map(|vi| (0..traces.len()).map(move |ti| (vi, ti)))
        .collect();
    let per_run = exec::map(&jobs, exec, |&(vi, ti)| {
        let opts = RunOptions {
            v: v_list[vi],
            ..*base
        };
        run(&traces[ti], &opts).map(|r| (vi, r.avg_cost, r.violation_log.len()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_rows(v_list, &per_run))
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.v.to_string(),
            r.mean_cost.to_string(),
            r.std_cost.to_string(),
            r.violations_total.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))?;
    Ok(())
}
