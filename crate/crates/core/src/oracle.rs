//! Offline benchmarks with full knowledge of the trace.
//!
//! [`offline_optimal`] solves the finite-horizon procurement problem by
//! backward induction over SoC values on the grid `{k δ : k ∈ ℤ}`. A slot's
//! transition is described only by its net SoC change `d`. The cheapest way
//! to realise it uses renewable before grid for both demand and charging, so
//! the slot cost is `P · max(E + d - R, 0)`. A transition is either a charge
//! or a discharge, so complementarity always holds.

use std::io::Write;

use serde::Serialize;

use crate::exec::{self, Execution};
use crate::scenario::Trace;
use crate::vb::{DispatchAction, EPS};
use crate::{Error, Result};

pub const SCHEDULE_HEADER: [&str; 11] = [
    "slot", "price", "demand", "renewable", "r_e", "r_b", "g_e", "g_b", "b_e", "soc", "cost",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineSolution {
    pub total_cost: f64,
    pub avg_cost: f64,
    pub actions: Vec<DispatchAction>,
    /// SoC at the start of every slot plus the final SoC (`T + 1` values).
    pub soc_path: Vec<f64>,
    pub grid_step: f64,
}

/// Cheapest action changing the SoC by `net` in a slot with price-free
/// inputs `renewable` and `demand`. `net` must not discharge more than
/// `demand`.
pub fn realise_net(net: f64, renewable: f64, demand: f64) -> DispatchAction {
    if net >= 0.0 {
        let r_e = renewable.min(demand);
        let r_b = (renewable - r_e).min(net);
        DispatchAction {
            r_e,
            r_b,
            g_e: demand - r_e,
            g_b: net - r_b,
            b_e: 0.0,
        }
    } else {
        let b_e = -net;
        let r_e = renewable.min(demand - b_e);
        DispatchAction {
            r_e,
            r_b: 0.0,
            g_e: demand - b_e - r_e,
            g_b: 0.0,
            b_e,
        }
    }
}

fn transition_cost(price: f64, net: f64, renewable: f64, demand: f64) -> f64 {
    price * (demand + net - renewable).max(0.0)
}

fn grid_index(x: f64, delta: f64) -> Option<i64> {
    let k = (x / delta).round();
    ((x - k * delta).abs() <= 1e-9 * delta.max(1.0)).then_some(k as i64)
}

pub fn offline_optimal(trace: &Trace, soc0: f64, delta: f64) -> Result<OfflineSolution> {
    offline_optimal_with(trace, soc0, delta, Execution::default())
}

/// Same as [`offline_optimal`], with explicit control over how the states of
/// one slot are evaluated.
pub fn offline_optimal_with(
    trace: &Trace,
    soc0: f64,
    delta: f64,
    exec: Execution,
) -> Result<OfflineSolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    let k0 = grid_index(soc0, delta).ok_or_else(|| {
        Error::GridMisalignment(format!("initial SoC {soc0} is not a multiple of delta {delta}"))
    })?;
    let horizon = trace.horizon();
    let specs = trace.specs.specs();

    let lowest = specs.iter().map(|s| s.b_min).fold(soc0, f64::min);
    let highest = specs.iter().map(|s| s.b_max).fold(soc0, f64::max);
    let k_lo = ((lowest - EPS) / delta).ceil() as i64;
    let k_hi = ((highest + EPS) / delta).floor() as i64;
    let k_lo = k_lo.min(k0);
    let k_hi = k_hi.max(k0);
    let n = (k_hi - k_lo + 1) as usize;
    let soc_of = |i: usize| (k_lo + i as i64) as f64 * delta;

    // Candidate offsets ordered by |d| so that ties resolve to the smallest move.
    let mut value = vec![0.0f64; n];
    let mut choice: Vec<Vec<i32>> = Vec::with_capacity(horizon);
    for t in (0..horizon).rev() {
        let spec = specs[t];
        let (p, r, e) = (trace.price[t], trace.renewable[t], trace.demand[t]);
        let d_min = -((spec.b_dis.min(e) + EPS) / delta).floor() as i64;
        let d_max = ((spec.b_char + EPS) / delta).floor() as i64;
        let mut offsets: Vec<i64> = (d_min..=d_max).collect();
        offsets.sort_by_key(|d| (d.abs(), *d));
        let next_ok = |j: i64| {
            let s = (k_lo + j) as f64 * delta;
            j >= 0 && (j as usize) < n && s >= spec.b_min - EPS && s <= spec.b_max + EPS
        };
        let next_value = &value;
        let row = exec::map_range(n, exec, |i| {
            let mut best = f64::INFINITY;
            let mut arg = i32::MIN;
            for &d in &offsets {
                let j = i as i64 + d;
                if !next_ok(j) {
                    continue;
                }
                let v = next_value[j as usize];
                if !v.is_finite() {
                    continue;
                }
                let c = transition_cost(p, d as f64 * delta, r, e) + v;
                if arg == i32::MIN || c < best - 1e-12 * best.abs().max(1.0) {
                    best = c;
                    arg = d as i32;
                }
            }
            (best, arg)
        });
        value = row.iter().map(|x| x.0).collect();
        choice.push(row.into_iter().map(|x| x.1).collect());
    }
    choice.reverse();

    let mut i = (k0 - k_lo) as usize;
    if horizon > 0 && !value[i].is_finite() {
        return Err(Error::InvalidParameter(
            "no SoC path on the grid satisfies every slot's window".into(),
        ));
    }
    let mut actions = Vec::with_capacity(horizon);
    let mut soc_path = Vec::with_capacity(horizon + 1);
    soc_path.push(soc0);
    let mut total_cost = 0.0;
    for t in 0..horizon {
        let d = choice[t][i] as i64;
        let net = d as f64 * delta;
        let action = realise_net(net, trace.renewable[t], trace.demand[t]);
        total_cost += action.cost(trace.price[t]);
        actions.push(action);
        i = (i as i64 + d) as usize;
        soc_path.push(soc_of(i));
    }
    Ok(OfflineSolution {
        total_cost,
        avg_cost: if horizon == 0 { 0.0 } else { total_cost / horizon as f64 },
        actions,
        soc_path,
        grid_step: delta,
    })
}

/// Cost of serving demand from renewable then grid, never using the battery.
pub fn greedy_baseline(trace: &Trace) -> f64 {
    (0..trace.horizon())
        .map(|t| {
            let e = trace.demand[t];
            trace.price[t] * (e - trace.renewable[t].min(e))
        })
        .sum()
}

pub fn write_schedule<W: Write>(trace: &Trace, sol: &OfflineSolution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCHEDULE_HEADER)?;
    for (t, a) in sol.actions.iter().enumerate() {
        w.write_record([
            t.to_string(),
            trace.price[t].to_string(),
            trace.demand[t].to_string(),
            trace.renewable[t].to_string(),
            a.r_e.to_string(),
            a.r_b.to_string(),
            a.g_e.to_string(),
            a.g_b.to_string(),
            a.b_e.to_string(),
            sol.soc_path[t + 1].to_string(),
            a.cost(trace.price[t]).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<schedule>", e))?;
    Ok(())
}
