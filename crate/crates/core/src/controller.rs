//! Online drift-plus-penalty controller.
//!
//! The SoC is tracked through a virtual queue
//! `Q(t) = B(t) - b_min_bar - V p_max - b_dis_max`, a constant shift of the
//! SoC. Each slot the controller minimises
//!
//! ```text
//! (Q + V P) g_b + Q r_b - (Q + V P) b_e - V P r_e
//! ```
//!
//! subject to rate limits, complementarity, the renewable budget and demand
//! balance (the SoC window is not part of the per-slot problem). The minimiser
//! is available in closed form and depends only on the signs of `Q` and
//! `Q + V P`.

use serde::{Deserialize, Serialize};

pub use crate::vb::DispatchAction;
use crate::vb::{step_soc, EnvelopeConstants, VirtualBatterySpec, EPS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// State of charge `B(t)`.
    pub soc: f64,
    /// Virtual queue `Q(t)`.
    pub queue: f64,
    /// Penalty weight `V`.
    pub v: f64,
    pub env: EnvelopeConstants,
}

impl ControllerState {
    /// Constant `queue - soc`.
    pub fn shift(&self) -> f64 {
        queue_shift(self.v, &self.env)
    }
}

/// What the controller sees at the start of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotObservation {
    pub price: f64,
    pub renewable: f64,
    pub demand: f64,
    pub spec: VirtualBatterySpec,
}

/// Which closed-form branch a dispatch used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchCase {
    /// `Q + V P <= 0`: charge at the full rate, renewable first.
    Charge,
    /// `Q <= 0 < Q + V P`: serve demand from renewable, then either store
    /// leftover renewable or discharge, whichever scores lower.
    Balanced,
    /// `Q > 0`: discharge as much as demand allows.
    Discharge,
}

pub fn classify(queue: f64, v: f64, price: f64) -> DispatchCase {
    if queue + v * price <= 0.0 {
        DispatchCase::Charge
    } else if queue <= 0.0 {
        DispatchCase::Balanced
    } else {
        DispatchCase::Discharge
    }
}

fn queue_shift(v: f64, env: &EnvelopeConstants) -> f64 {
    -(env.b_min_bar + v * env.p_max + env.b_dis_max)
}

/// Largest penalty weight for which the SoC provably stays in its window.
///
/// A zero numerator yields `0`, which admits no positive `V`.
pub fn v_max(env: &EnvelopeConstants) -> Result<f64> {
    if !(env.p_max > 0.0) {
        return Err(Error::NonPositivePriceBound(env.p_max));
    }
    let numerator = env.b_max_bar - env.b_min_bar - env.b_dis_max - env.b_char_max;
    if numerator < 0.0 {
        return Err(Error::EnvelopeTooTight { numerator });
    }
    Ok(numerator / env.p_max)
}

pub fn init_state(soc0: f64, v: f64, env: EnvelopeConstants) -> Result<ControllerState> {
    if !(soc0 >= env.b_min_bar - EPS && soc0 <= env.b_max_bar + EPS) {
        return Err(Error::InitialSocOutsideEnvelope {
            soc0,
            lower: env.b_min_bar,
            upper: env.b_max_bar,
        });
    }
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidParameter(format!("V = {v} must be nonnegative")));
    }
    Ok(ControllerState {
        soc: soc0,
        queue: soc0 + queue_shift(v, &env),
        v,
        env,
    })
}

/// Per-slot objective minimised by [`dispatch`].
pub fn p3_objective(queue: f64, v: f64, price: f64, a: &DispatchAction) -> f64 {
    let vp = v * price;
    (queue + vp) * a.g_b + queue * a.r_b - (queue + vp) * a.b_e - vp * a.r_e
}

/// `½ max(b_char_max², b_dis_max²)`, the bound on the squared queue step.
pub fn drift_constant(env: &EnvelopeConstants) -> f64 {
    0.5 * (env.b_char_max * env.b_char_max).max(env.b_dis_max * env.b_dis_max)
}

pub fn dispatch(state: &ControllerState, obs: &SlotObservation) -> DispatchAction {
    dispatch_with_case(state, obs).0
}

pub fn dispatch_with_case(
    state: &ControllerState,
    obs: &SlotObservation,
) -> (DispatchAction, DispatchCase) {
    let q = state.queue;
    let (r, e) = (obs.renewable, obs.demand);
    let spec = &obs.spec;
    let case = classify(q, state.v, obs.price);
    let action = match case {
        DispatchCase::Charge => {
            let r_b = r.min(spec.b_char);
            let r_e = (r - r_b).min(e);
            DispatchAction {
                r_e,
                r_b,
                g_e: e - r_e,
                g_b: spec.b_char - r_b,
                b_e: 0.0,
            }
        }
        DispatchCase::Balanced => {
            let r_e = r.min(e);
            let b_e = spec.b_dis.min(e - r_e);
            let discharge = DispatchAction {
                r_e,
                r_b: 0.0,
                g_e: e - r_e - b_e,
                g_b: 0.0,
                b_e,
            };
            let charge = DispatchAction {
                r_e,
                r_b: (r - r_e).min(spec.b_char),
                g_e: e - r_e,
                g_b: 0.0,
                b_e: 0.0,
            };
            let score = |a: &DispatchAction| p3_objective(q, state.v, obs.price, a);
            if score(&discharge) < score(&charge) {
                discharge
            } else {
                charge
            }
        }
        DispatchCase::Discharge => {
            let b_e = spec.b_dis.min(e);
            let r_e = r.min(e - b_e);
            DispatchAction {
                r_e,
                r_b: 0.0,
                g_e: e - b_e - r_e,
                g_b: 0.0,
                b_e,
            }
        }
    };
    (action, case)
}

/// Applies `action`; SoC and queue move by the same net flow.
pub fn advance(state: &ControllerState, action: &DispatchAction) -> ControllerState {
    let net = action.net();
    ControllerState {
        soc: step_soc(state.soc, action.charge(), action.b_e, 1.0),
        queue: state.queue + net,
        ..*state
    }
}

/// Clips `action` so the resulting SoC lies in the slot's window intersected
/// with the envelope window `[b_min_bar, b_max_bar]`.
///
/// Overshoot is removed from grid charging first, then renewable charging
/// (the freed renewable serves demand in place of grid energy). Undershoot
/// is removed from the discharge, with the grid covering the difference.
/// If the SoC is still outside the window after that, the opposite flow is
/// added within its rate limit. Demand balance and complementarity are kept
/// throughout.
pub fn project(
    state: &ControllerState,
    obs: &SlotObservation,
    action: &DispatchAction,
) -> DispatchAction {
    let spec = &obs.spec;
    let (mut lower, mut upper) = (
        spec.b_min.max(state.env.b_min_bar),
        spec.b_max.min(state.env.b_max_bar),
    );
    if lower > upper {
        lower = spec.b_min;
        upper = spec.b_max;
    }
    let mut a = *action;
    let next = |a: &DispatchAction| state.soc + a.net();

    let excess = next(&a) - upper;
    if excess > EPS {
        let cut = excess.min(a.g_b);
        a.g_b -= cut;
        let cut_r = (excess - cut).min(a.r_b);
        a.r_b -= cut_r;
        let redirect = cut_r.min(a.g_e);
        a.r_e += redirect;
        a.g_e -= redirect;
    }
    let deficit = lower - next(&a);
    if deficit > EPS {
        let cut = deficit.min(a.b_e);
        a.b_e -= cut;
        a.g_e += cut;
    }

    // Still outside: push the other way within the rate limits.
    let deficit = lower - next(&a);
    if deficit > EPS && a.b_e <= EPS {
        let room = (spec.b_char - a.charge()).max(0.0);
        let add = deficit.min(room);
        let spare_r = (obs.renewable - a.r_e - a.r_b).max(0.0);
        let from_r = add.min(spare_r);
        a.r_b += from_r;
        a.g_b += add - from_r;
    }
    let excess = next(&a) - upper;
    if excess > EPS && a.charge() <= EPS {
        let room = (spec.b_dis.min(obs.demand) - a.b_e).max(0.0);
        let add = excess.min(room);
        let from_g = add.min(a.g_e);
        a.g_e -= from_g;
        a.r_e -= add - from_g;
        a.b_e += add;
    }
    a
}
