mod common;

use common::Rng;
use vbatt_core::oracle::{greedy_baseline, offline_optimal, offline_optimal_with};
use vbatt_core::exec::Execution;
use vbatt_core::scenario::{self, ScenarioConfig, Trace};
use vbatt_core::vb::{check_feasible, SpecSeries, VirtualBatterySpec};

/// Exhaustive search over integer SoC paths.
fn exhaustive(trace: &Trace, soc0: i64) -> f64 {
    fn rec(trace: &Trace, t: usize, soc: i64) -> f64 {
        if t == trace.horizon() {
            return 0.0;
        }
        let spec = trace.specs.specs()[t];
        let mut best = f64::INFINITY;
        for next in spec.b_min.ceil() as i64..=spec.b_max.floor() as i64 {
            let d = (next - soc) as f64;
            if d > spec.b_char || -d > spec.b_dis || -d > trace.demand[t] {
                continue;
            }
            let cost = trace.price[t] * (trace.demand[t] + d - trace.renewable[t]).max(0.0);
            best = best.min(cost + rec(trace, t + 1, next));
        }
        best
    }
    rec(trace, 0, soc0)
}

fn random_small(rng: &mut Rng, horizon: usize) -> Trace {
    let specs = (0..horizon)
        .map(|_| {
            let b_min = rng.below(3) as f64;
            VirtualBatterySpec::new(
                1.0 + rng.below(3) as f64,
                1.0 + rng.below(3) as f64,
                b_min,
                b_min + 2.0 + rng.below(4) as f64,
                1.0,
            )
            .unwrap()
        })
        .collect();
    Trace::new(
        (0..horizon).map(|_| 1.0 + rng.below(5) as f64).collect(),
        (0..horizon).map(|_| rng.below(3) as f64).collect(),
        (0..horizon).map(|_| rng.below(4) as f64).collect(),
        SpecSeries::new(specs).unwrap(),
        f64::INFINITY,
    )
    .unwrap()
}

#[test]
fn matches_exhaustive_search_on_tiny_instances() {
    let mut rng = Rng::new(11);
    let mut solved = 0;
    for _ in 0..200 {
        let horizon = 1 + rng.below(5) as usize;
        let trace = random_small(&mut rng, horizon);
        let soc0 = 2;
        let expected = exhaustive(&trace, soc0);
        match offline_optimal(&trace, soc0 as f64, 1.0) {
            Ok(sol) => {
                assert!(expected.is_finite());
                assert!((sol.total_cost - expected).abs() < 1e-9, "{} vs {expected}", sol.total_cost);
                for (t, a) in sol.actions.iter().enumerate() {
                    let spec = trace.specs.specs()[t];
                    assert!(check_feasible(&spec, sol.soc_path[t + 1], a).is_empty());
                    assert!((a.supplied() - trace.demand[t]).abs() < 1e-9);
                }
                solved += 1;
            }
            Err(_) => assert!(expected.is_infinite()),
        }
    }
    assert!(solved > 100);
}

#[test]
fn never_worse_than_greedy() {
    for seed in 0..5 {
        let cfg = ScenarioConfig::default().with_horizon(24).with_seed(seed);
        let trace = scenario::generate(&cfg).unwrap();
        let sol = offline_optimal(&trace, 2500.0, 10.0).unwrap();
        assert!(sol.total_cost <= greedy_baseline(&trace) + 1e-6);
    }
}

#[test]
fn finer_grid_never_costs_more() {
    let cfg = ScenarioConfig::default().with_horizon(12).with_seed(4);
    let trace = scenario::generate(&cfg).unwrap();
    let coarse = offline_optimal(&trace, 2500.0, 10.0).unwrap();
    let fine = offline_optimal(&trace, 2500.0, 5.0).unwrap();
    assert!(fine.total_cost <= coarse.total_cost + 1e-6);
}

#[test]
fn sequential_and_parallel_agree() {
    let cfg = ScenarioConfig::default().with_horizon(12).with_seed(9);
    let trace = scenario::generate(&cfg).unwrap();
    let a = offline_optimal_with(&trace, 2500.0, 5.0, Execution::Sequential).unwrap();
    let b = offline_optimal_with(&trace, 2500.0, 5.0, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn constant_price_leaves_grid_charging_unused() {
    let spec = VirtualBatterySpec::new(5.0, 5.0, 0.0, 20.0, 1.0).unwrap();
    let trace = Trace::new(
        vec![1.0; 6],
        vec![0.0; 6],
        vec![4.0; 6],
        SpecSeries::constant(spec, 6).unwrap(),
        f64::INFINITY,
    )
    .unwrap();
    let sol = offline_optimal(&trace, 10.0, 1.0).unwrap();
    assert!(sol.actions.iter().all(|a| a.g_b == 0.0));
    assert!(sol.total_cost <= greedy_baseline(&trace));
}
