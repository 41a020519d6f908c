mod common;

use common::{brute_force_p3, grid_bound, Rng};
use vbatt_core::controller::{
    advance, classify, dispatch, dispatch_with_case, init_state, p3_objective, v_max,
    ControllerState, DispatchCase, SlotObservation,
};
use vbatt_core::scenario::{self, ScenarioConfig};
use vbatt_core::vb::{check_feasible, EnvelopeConstants, VirtualBatterySpec};

fn reference_env() -> EnvelopeConstants {
    ScenarioConfig::default().declared_envelope()
}

#[test]
fn closed_form_within_grid_bound_over_wide_ranges() {
    let mut rng = Rng::new(7);
    let env = reference_env();
    for _ in 0..400 {
        let v = rng.uniform(0.1, 50.0);
        let price = rng.uniform(0.0, 5.0);
        let queue = rng.uniform(-400.0, 200.0);
        let renewable = rng.uniform(0.0, 60.0);
        let demand = rng.uniform(0.0, 60.0);
        let b_char = rng.uniform(0.0, 40.0);
        let b_dis = rng.uniform(0.0, 40.0);
        let obs = SlotObservation {
            price,
            renewable,
            demand,
            spec: VirtualBatterySpec::new(b_char, b_dis, -1e6, 1e6, 1.0).unwrap(),
        };
        let state = ControllerState {
            soc: 0.0,
            queue,
            v,
            env,
        };
        let action = dispatch(&state, &obs);
        let obj = p3_objective(queue, v, price, &action);
        let (brute, _) = brute_force_p3(queue, v, price, renewable, demand, b_char, b_dis);
        assert!(obj <= brute + 1e-6 * brute.abs().max(1.0), "{obj} > {brute}");
        assert!(brute - obj <= grid_bound(queue, v, price) + 1e-9);
        assert!((action.supplied() - demand).abs() < 1e-9);
        assert!(action.r_e + action.r_b <= renewable + 1e-9);
        assert!(check_feasible(&obs.spec, action.net(), &action).is_empty());
    }
}

#[test]
fn case_boundaries() {
    assert_eq!(classify(-10.0, 5.0, 2.0), DispatchCase::Charge);
    assert_eq!(classify(-9.0, 5.0, 2.0), DispatchCase::Balanced);
    assert_eq!(classify(0.0, 5.0, 2.0), DispatchCase::Balanced);
    assert_eq!(classify(1e-12, 5.0, 2.0), DispatchCase::Discharge);
}

#[test]
fn queue_tracks_soc_over_a_generated_trace() {
    let cfg = ScenarioConfig::default().with_horizon(200).with_seed(3);
    let trace = scenario::generate(&cfg).unwrap();
    let env = cfg.declared_envelope();
    let v = v_max(&env).unwrap();
    let mut state = init_state(env.midpoint(), v, env).unwrap();
    let shift = state.queue - state.soc;
    for t in 0..trace.horizon() {
        let obs = SlotObservation {
            price: trace.price[t],
            renewable: trace.renewable[t],
            demand: trace.demand[t],
            spec: trace.specs.specs()[t],
        };
        let (action, case) = dispatch_with_case(&state, &obs);
        if case == DispatchCase::Discharge {
            assert_eq!(action.g_b + action.r_b, 0.0);
        }
        state = advance(&state, &action);
        assert!((state.queue - state.soc - shift).abs() < 1e-6);
        assert!(state.soc >= env.b_min_bar - 1e-9 && state.soc <= env.b_max_bar + 1e-9);
    }
}
