//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vbatt_core::aggregation::{Task, TclParams};
use vbatt_core::controller::p3_objective;
use vbatt_core::vb::DispatchAction;

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.0.next_u64() % n
    }
}

/// Minimum of the per-slot objective over actions whose flows lie on the
/// integer kWh grid. Charge and discharge are enumerated separately
/// (complementarity); renewable-to-demand is set to its largest feasible
/// value because its objective coefficient `-V P` is never positive.
pub fn brute_force_p3(
    queue: f64,
    v: f64,
    price: f64,
    renewable: f64,
    demand: f64,
    b_char: f64,
    b_dis: f64,
) -> (f64, DispatchAction) {
    let mut best = (f64::INFINITY, DispatchAction::default());
    let mut consider = |a: DispatchAction| {
        let obj = p3_objective(queue, v, price, &a);
        if obj < best.0 {
            best = (obj, a);
        }
    };
    let max_c = b_char.floor() as i64;
    for c in 0..=max_c {
        let max_rb = (c as f64).min(renewable).floor() as i64;
        for rb in 0..=max_rb {
            let r_b = rb as f64;
            let g_b = (c - rb) as f64;
            let r_e = (renewable - r_b).min(demand);
            consider(DispatchAction {
                r_e,
                r_b,
                g_e: demand - r_e,
                g_b,
                b_e: 0.0,
            });
        }
    }
    let max_be = b_dis.min(demand).floor() as i64;
    for be in 1..=max_be {
        let b_e = be as f64;
        let r_e = renewable.min(demand - b_e);
        consider(DispatchAction {
            r_e,
            r_b: 0.0,
            g_e: demand - b_e - r_e,
            g_b: 0.0,
            b_e,
        });
    }
    best
}

/// Worst-case objective gap between the continuous optimum and the grid
/// minimum: each enumerated flow is at most 1 kWh from its continuous value
/// and the dependent flow moves by at most the same amount.
pub fn grid_bound(queue: f64, v: f64, price: f64) -> f64 {
    let vp = v * price;
    2.0 * ((queue + vp).abs() + queue.abs() + vp)
}

/// Every per-task integer schedule: `L(t) ∈ {0..=max_power}` inside
/// `[arrival, deadline)`, zero elsewhere, summing to `energy`.
pub fn task_schedules(task: &Task, horizon: usize) -> Vec<Vec<u32>> {
    let cap = task.max_power as u32;
    let energy = task.energy as u32;
    let mut out = Vec::new();
    let mut cur = vec![0u32; horizon];
    fn rec(
        t: usize,
        left: u32,
        task: &Task,
        cap: u32,
        cur: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if t == task.deadline {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let slots_left = (task.deadline - t) as u32;
        if left > slots_left * cap {
            return;
        }
        for l in 0..=cap.min(left) {
            cur[t] = l;
            rec(t + 1, left - l, task, cap, cur, out);
        }
        cur[t] = 0;
    }
    rec(task.arrival, energy, task, cap, &mut cur, &mut out);
    out
}

/// Random TCL whose setpoint is reachable at every slot.
pub fn random_tcl(rng: &mut Rng, horizon: usize) -> (TclParams, Vec<f64>, Vec<f64>) {
    let params = TclParams {
        theta_r: rng.uniform(18.0, 27.0),
        delta: rng.uniform(0.5, 3.0),
        p_m: rng.uniform(50.0, 500.0),
        b_coef: rng.uniform(0.01, 0.5),
        c_coef: rng.uniform(0.0, 0.05),
        alpha: rng.uniform(0.5, 0.99),
    };
    let mut ambient = Vec::with_capacity(horizon);
    let mut it_power = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let p0 = rng.uniform(0.0, params.p_m);
        let r = rng.uniform(0.0, 1000.0);
        ambient.push(params.theta_r + params.b_coef * p0 - params.c_coef * r);
        it_power.push(r);
    }
    (params, ambient, it_power)
}

/// Average-rank Spearman correlation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
