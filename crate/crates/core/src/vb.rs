//! Virtual battery specification, state-of-charge dynamics and feasibility.
//!
//! A battery at slot `t` is described by its charge and discharge rate
//! limits, its SoC window and its dissipation rate. Throughout the crate the
//! SoC window of slot `t` bounds the SoC reached *after* the slot's action,
//! i.e. `B(t+1)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute tolerance (kWh) for every feasibility comparison.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualBatterySpec {
    /// Charge-rate limit (kWh per slot).
    pub b_char: f64,
    /// Discharge-rate limit (kWh per slot).
    pub b_dis: f64,
    /// SoC lower bound (kWh).
    pub b_min: f64,
    /// SoC upper bound (kWh).
    pub b_max: f64,
    /// Dissipation rate in (0, 1].
    pub alpha: f64,
}

impl VirtualBatterySpec {
    pub fn new(b_char: f64, b_dis: f64, b_min: f64, b_max: f64, alpha: f64) -> Result<Self> {
        let spec = Self {
            b_char,
            b_dis,
            b_min,
            b_max,
            alpha,
        };
        spec.validate().map_err(|reason| Error::InvalidSpec { slot: 0, reason })?;
        Ok(spec)
    }

    /// A lossless battery with all parameters zero.
    pub const fn zero() -> Self {
        Self {
            b_char: 0.0,
            b_dis: 0.0,
            b_min: 0.0,
            b_max: 0.0,
            alpha: 1.0,
        }
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        let all = [self.b_char, self.b_dis, self.b_min, self.b_max, self.alpha];
        if all.iter().any(|x| !x.is_finite()) {
            return Err("non-finite parameter".into());
        }
        if self.b_char < 0.0 {
            return Err(format!("b_char = {} is negative", self.b_char));
        }
        if self.b_dis < 0.0 {
            return Err(format!("b_dis = {} is negative", self.b_dis));
        }
        if self.b_min > self.b_max {
            return Err(format!("b_min = {} exceeds b_max = {}", self.b_min, self.b_max));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("alpha = {} not in (0, 1]", self.alpha));
        }
        Ok(())
    }
}

/// Per-slot battery specifications over a finite horizon.
///
/// `soc_offset` records a constant that has been added to every SoC bound
/// (see [`SpecSeries::shifted_nonnegative`]); it is zero for series that
/// were never shifted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSeries {
    specs: Vec<VirtualBatterySpec>,
    soc_offset: f64,
}

impl SpecSeries {
    pub fn new(specs: Vec<VirtualBatterySpec>) -> Result<Self> {
        for (slot, spec) in specs.iter().enumerate() {
            spec.validate()
                .map_err(|reason| Error::InvalidSpec { slot, reason })?;
        }
        Ok(Self {
            specs,
            soc_offset: 0.0,
        })
    }

    pub fn constant(spec: VirtualBatterySpec, horizon: usize) -> Result<Self> {
        Self::new(vec![spec; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[VirtualBatterySpec] {
        &self.specs
    }

    pub fn get(&self, slot: usize) -> Option<&VirtualBatterySpec> {
        self.specs.get(slot)
    }

    pub fn soc_offset(&self) -> f64 {
        self.soc_offset
    }

    pub fn iter(&self) -> std::slice::Iter<'_, VirtualBatterySpec> {
        self.specs.iter()
    }

    /// Shifts every SoC bound by the same constant so the lowest bound over
    /// the horizon becomes zero. Series that are already nonnegative are
    /// returned unchanged. The applied shift accumulates in `soc_offset`.
    ///
    /// The shift commutes with the dynamics only for `alpha = 1`.
    pub fn shifted_nonnegative(&self) -> Self {
        let lowest = self
            .specs
            .iter()
            .map(|s| s.b_min)
            .fold(f64::INFINITY, f64::min);
        if !lowest.is_finite() || lowest >= 0.0 {
            return self.clone();
        }
        let shift = -lowest;
        let specs = self
            .specs
            .iter()
            .map(|s| VirtualBatterySpec {
                b_min: s.b_min + shift,
                b_max: s.b_max + shift,
                ..*s
            })
            .collect();
        Self {
            specs,
            soc_offset: self.soc_offset + shift,
        }
    }

    pub(crate) fn with_offset(mut self, soc_offset: f64) -> Self {
        self.soc_offset = soc_offset;
        self
    }
}

impl<'a> IntoIterator for &'a SpecSeries {
    type Item = &'a VirtualBatterySpec;
    type IntoIter = std::slice::Iter<'a, VirtualBatterySpec>;

    fn into_iter(self) -> Self::IntoIter {
        self.specs.iter()
    }
}

/// The five energy flows decided for one slot (kWh).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DispatchAction {
    /// Renewable to demand.
    pub r_e: f64,
    /// Renewable to battery.
    pub r_b: f64,
    /// Grid to demand.
    pub g_e: f64,
    /// Grid to battery.
    pub g_b: f64,
    /// Battery to demand.
    pub b_e: f64,
}

impl DispatchAction {
    pub fn charge(&self) -> f64 {
        self.g_b + self.r_b
    }

    /// Net SoC change `g_b + r_b - b_e`.
    pub fn net(&self) -> f64 {
        self.g_b + self.r_b - self.b_e
    }

    /// Energy bought from the grid.
    pub fn grid(&self) -> f64 {
        self.g_e + self.g_b
    }

    pub fn cost(&self, price: f64) -> f64 {
        price * self.grid()
    }

    /// `r_e + b_e + g_e`, which must equal the slot demand.
    pub fn supplied(&self) -> f64 {
        self.r_e + self.b_e + self.g_e
    }

    pub(crate) fn components(&self) -> [(&'static str, f64); 5] {
        [
            ("r_e", self.r_e),
            ("r_b", self.r_b),
            ("g_e", self.g_e),
            ("g_b", self.g_b),
            ("b_e", self.b_e),
        ]
    }
}

/// One violated battery constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Negative { field: &'static str, value: f64 },
    ChargeRate { charge: f64, limit: f64 },
    DischargeRate { discharge: f64, limit: f64 },
    SocLower { soc: f64, bound: f64 },
    SocUpper { soc: f64, bound: f64 },
    Complementarity { charge: f64, discharge: f64 },
}

impl Violation {
    /// Amount by which the constraint is exceeded.
    pub fn magnitude(&self) -> f64 {
        match *self {
            Violation::Negative { value, .. } => -value,
            Violation::ChargeRate { charge, limit } => charge - limit,
            Violation::DischargeRate { discharge, limit } => discharge - limit,
            Violation::SocLower { soc, bound } => bound - soc,
            Violation::SocUpper { soc, bound } => soc - bound,
            Violation::Complementarity { charge, discharge } => charge.min(discharge),
        }
    }

    pub fn is_soc_bound(&self) -> bool {
        matches!(self, Violation::SocLower { .. } | Violation::SocUpper { .. })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Violation::Negative { .. } => "negative",
            Violation::ChargeRate { .. } => "charge_rate",
            Violation::DischargeRate { .. } => "discharge_rate",
            Violation::SocLower { .. } => "soc_lower",
            Violation::SocUpper { .. } => "soc_upper",
            Violation::Complementarity { .. } => "complementarity",
        }
    }
}

/// `alpha * b + charge - discharge`.
pub fn step_soc(b: f64, charge: f64, discharge: f64, alpha: f64) -> f64 {
    alpha * b + charge - discharge
}

/// Lists every battery constraint that `action`, leading to SoC `b_next`,
/// violates under `spec`. Differences below [`EPS`] are ignored.
pub fn check_feasible(
    spec: &VirtualBatterySpec,
    b_next: f64,
    action: &DispatchAction,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (field, value) in action.components() {
        if value < -EPS {
            out.push(Violation::Negative { field, value });
        }
    }
    let charge = action.charge();
    if charge > spec.b_char + EPS {
        out.push(Violation::ChargeRate {
            charge,
            limit: spec.b_char,
        });
    }
    if action.b_e > spec.b_dis + EPS {
        out.push(Violation::DischargeRate {
            discharge: action.b_e,
            limit: spec.b_dis,
        });
    }
    if b_next < spec.b_min - EPS {
        out.push(Violation::SocLower {
            soc: b_next,
            bound: spec.b_min,
        });
    }
    if b_next > spec.b_max + EPS {
        out.push(Violation::SocUpper {
            soc: b_next,
            bound: spec.b_max,
        });
    }
    if charge > EPS && action.b_e > EPS {
        out.push(Violation::Complementarity {
            charge,
            discharge: action.b_e,
        });
    }
    out
}

/// Worst-case battery parameters over a horizon, plus the price ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    /// Largest charge-rate limit.
    pub b_char_max: f64,
    /// Largest discharge-rate limit.
    pub b_dis_max: f64,
    /// Largest SoC lower bound.
    pub b_min_bar: f64,
    /// Smallest SoC upper bound.
    pub b_max_bar: f64,
    /// Price ceiling ($/kWh).
    pub p_max: f64,
}

impl EnvelopeConstants {
    /// SoC window contained in every slot's window.
    pub fn soc_window(&self) -> (f64, f64) {
        (self.b_min_bar, self.b_max_bar)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.b_min_bar + self.b_max_bar)
    }
}

pub fn envelope(series: &SpecSeries, p_max: f64) -> Result<EnvelopeConstants> {
    let mut it = series.iter();
    let first = it.next().ok_or(Error::EmptySpecSeries)?;
    let init = EnvelopeConstants {
        b_char_max: first.b_char,
        b_dis_max: first.b_dis,
        b_min_bar: first.b_min,
        b_max_bar: first.b_max,
        p_max,
    };
    Ok(it.fold(init, |env, s| EnvelopeConstants {
        b_char_max: env.b_char_max.max(s.b_char),
        b_dis_max: env.b_dis_max.max(s.b_dis),
        b_min_bar: env.b_min_bar.max(s.b_min),
        b_max_bar: env.b_max_bar.min(s.b_max),
        p_max,
    }))
}
