//! Flexible loads expressed as virtual batteries.
//!
//! Two load classes are supported: a thermostatically controlled cooling
//! unit, whose deadband around the setpoint acts as storage, and a set of
//! deadline-constrained compute tasks, whose cumulative delivered energy
//! acts as the SoC of a lossless battery that can only charge.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::vb::{SpecSeries, VirtualBatterySpec, EPS};
use crate::{Error, Result};

/// First-order thermal model of one cooling unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TclParams {
    /// Room temperature setpoint (°C).
    pub theta_r: f64,
    /// Allowed deviation from the setpoint (°C).
    pub delta: f64,
    /// Maximum cooling power (kW).
    pub p_m: f64,
    /// Temperature drop per unit cooling power (°C/kW).
    pub b_coef: f64,
    /// Temperature rise per unit IT power (°C/kW).
    pub c_coef: f64,
    /// Thermal inertia in (0, 1).
    pub alpha: f64,
}

impl TclParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTcl(msg));
        if !(self.delta > 0.0) {
            return bad(format!("delta = {} must be positive", self.delta));
        }
        if !(self.p_m > 0.0) {
            return bad(format!("p_m = {} must be positive", self.p_m));
        }
        if !(self.b_coef > 0.0) {
            return bad(format!("b_coef = {} must be positive", self.b_coef));
        }
        if !(self.c_coef >= 0.0) {
            return bad(format!("c_coef = {} must be nonnegative", self.c_coef));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} not in (0, 1)", self.alpha));
        }
        if !self.theta_r.is_finite() {
            return bad("theta_r must be finite".into());
        }
        Ok(())
    }

    /// Cooling power that returns the room to the setpoint in one slot.
    pub fn nominal_power(&self, ambient: f64, it_power: f64) -> f64 {
        (ambient + self.c_coef * it_power - self.theta_r) / self.b_coef
    }

    /// Half-width of the SoC window, `Δ / ((1 - α) b)`.
    pub fn soc_half_width(&self) -> f64 {
        self.delta / ((1.0 - self.alpha) * self.b_coef)
    }

    /// One step of the room temperature dynamics.
    pub fn next_temperature(&self, theta: f64, ambient: f64, it_power: f64, power: f64) -> f64 {
        self.alpha * theta
            + (1.0 - self.alpha) * (ambient + self.c_coef * it_power - self.b_coef * power)
    }

    /// SoC corresponding to room temperature `theta`.
    pub fn soc_of_temperature(&self, theta: f64) -> f64 {
        (self.theta_r - theta) / ((1.0 - self.alpha) * self.b_coef)
    }
}

/// Battery view of a cooling unit over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TclBattery {
    pub series: SpecSeries,
    /// Nominal power `p_0(t)`; the battery input is `U(t) = p(t) - p_0(t)`.
    pub nominal_power: Vec<f64>,
}

pub fn tcl_to_vb(params: &TclParams, ambient: &[f64], it_power: &[f64]) -> Result<TclBattery> {
    params.validate()?;
    if ambient.len() != it_power.len() {
        return Err(Error::LengthMismatch(format!(
            "ambient has {} slots, IT power has {}",
            ambient.len(),
            it_power.len()
        )));
    }
    let half = params.soc_half_width();
    let mut specs = Vec::with_capacity(ambient.len());
    let mut nominal = Vec::with_capacity(ambient.len());
    for (slot, (&theta_a, &r)) in ambient.iter().zip(it_power).enumerate() {
        let p0 = params.nominal_power(theta_a, r);
        if !(p0 >= -EPS && p0 <= params.p_m + EPS) {
            return Err(Error::NominalPowerOutOfRange {
                slot,
                value: p0,
                p_max: params.p_m,
            });
        }
        let p0 = p0.clamp(0.0, params.p_m);
        nominal.push(p0);
        specs.push(VirtualBatterySpec {
            b_char: params.p_m - p0,
            b_dis: p0,
            b_min: -half,
            b_max: half,
            alpha: params.alpha,
        });
    }
    Ok(TclBattery {
        series: SpecSeries::new(specs)?,
        nominal_power: nominal,
    })
}

/// A compute job that must receive `energy` within `[arrival, deadline)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub arrival: usize,
    pub deadline: usize,
    /// Power at full processing speed (kWh per slot).
    pub max_power: f64,
    pub energy: f64,
}

impl Task {
    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidTask { index, reason });
        if self.arrival >= self.deadline {
            return bad(format!(
                "arrival {} must precede deadline {}",
                self.arrival, self.deadline
            ));
        }
        if !(self.max_power > 0.0) || !self.max_power.is_finite() {
            return bad(format!("max_power = {} must be positive", self.max_power));
        }
        let capacity = (self.deadline - self.arrival) as f64 * self.max_power;
        if !(self.energy > 0.0) || self.energy > capacity + EPS {
            return bad(format!(
                "energy = {} not in (0, {capacity}]",
                self.energy
            ));
        }
        Ok(())
    }

    fn is_active(&self, t: usize) -> bool {
        self.arrival <= t && t < self.deadline
    }
}

/// Aggregate bounds of a task set.
///
/// `u_max[t]` bounds the total power in slot `t` (length `T`); the SoC
/// bounds apply to the cumulative energy delivered before slot `t`
/// (length `T + 1`, so the last entry covers the end of the horizon).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEnvelope {
    pub u_max: Vec<f64>,
    pub soc_lower: Vec<f64>,
    pub soc_upper: Vec<f64>,
}

pub fn task_envelope(tasks: &[Task], horizon: usize) -> Result<TaskEnvelope> {
    for (index, task) in tasks.iter().enumerate() {
        task.validate(index)?;
        if task.deadline > horizon {
            return Err(Error::TaskExceedsHorizon {
                index,
                deadline: task.deadline,
                horizon,
            });
        }
    }
    let u_max = (0..horizon)
        .map(|t| {
            tasks
                .iter()
                .filter(|j| j.is_active(t))
                .map(|j| j.max_power)
                .sum()
        })
        .collect();
    let mut soc_lower = Vec::with_capacity(horizon + 1);
    let mut soc_upper = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let (mut lo, mut hi) = (0.0, 0.0);
        for j in tasks {
            if j.deadline <= t {
                lo += j.energy;
                hi += j.energy;
            } else if j.is_active(t) {
                let remaining = (j.deadline - t) as f64 * j.max_power;
                let elapsed = (t - j.arrival) as f64 * j.max_power;
                lo += (j.energy - remaining).max(0.0);
                hi += j.energy.min(elapsed);
            }
        }
        soc_lower.push(lo);
        soc_upper.push(hi);
    }
    Ok(TaskEnvelope {
        u_max,
        soc_lower,
        soc_upper,
    })
}

/// Battery whose charge is task energy delivery. Slot `t` carries charge
/// limit `u_max(t)`, no discharge, and the SoC window reached after the
/// slot's delivery.
pub fn tasks_to_vb(tasks: &[Task], horizon: usize) -> Result<SpecSeries> {
    let env = task_envelope(tasks, horizon)?;
    let specs = (0..horizon)
        .map(|t| VirtualBatterySpec {
            b_char: env.u_max[t],
            b_dis: 0.0,
            b_min: env.soc_lower[t + 1],
            b_max: env.soc_upper[t + 1],
            alpha: 1.0,
        })
        .collect();
    SpecSeries::new(specs)
}

fn same_alpha(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// Sums batteries that share one dissipation rate.
pub fn merge(specs: &[VirtualBatterySpec]) -> Result<VirtualBatterySpec> {
    let first = specs
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to merge".into()))?;
    let mut out = VirtualBatterySpec {
        alpha: first.alpha,
        ..VirtualBatterySpec::zero()
    };
    for s in specs {
        if !same_alpha(s.alpha, first.alpha) {
            return Err(Error::DissipationMismatch {
                first: first.alpha,
                other: s.alpha,
            });
        }
        out.b_char += s.b_char;
        out.b_dis += s.b_dis;
        out.b_min += s.b_min;
        out.b_max += s.b_max;
    }
    Ok(out)
}

/// Slot-wise [`merge`] of series with equal horizons. SoC offsets add.
pub fn merge_series(series: &[SpecSeries]) -> Result<SpecSeries> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to merge".into()))?;
    let horizon = first.horizon();
    if let Some(s) = series.iter().find(|s| s.horizon() != horizon) {
        return Err(Error::LengthMismatch(format!(
            "cannot merge series of {} and {} slots",
            horizon,
            s.horizon()
        )));
    }
    let mut slot = Vec::with_capacity(series.len());
    let mut merged = Vec::with_capacity(horizon);
    for t in 0..horizon {
        slot.clear();
        slot.extend(series.iter().map(|s| s.specs()[t]));
        merged.push(merge(&slot)?);
    }
    let offset = series.iter().map(SpecSeries::soc_offset).sum();
    Ok(SpecSeries::new(merged)?.with_offset(offset))
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        message: message.into(),
    }
}

/// Reads `arrival,deadline,max_power,energy` rows.
pub fn read_tasks(path: &Path) -> Result<Vec<Task>> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["arrival", "deadline", "max_power", "energy"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            path,
            0,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    let mut tasks = Vec::new();
    for (i, record) in reader.deserialize::<Task>().enumerate() {
        let row = i + 1;
        let task = record.map_err(|e| parse_err(path, row, e.to_string()))?;
        task.validate(i)
            .map_err(|e| parse_err(path, row, e.to_string()))?;
        tasks.push(task);
    }
    Ok(tasks)
}

#[derive(Debug, Deserialize)]
struct TclRow {
    slot: usize,
    theta_a: f64,
    r: f64,
}

/// Reads `slot,theta_a,r` rows into (ambient, IT power) series.
pub fn read_tcl_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["slot", "theta_a", "r"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(
            path,
            0,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    let (mut ambient, mut it_power) = (Vec::new(), Vec::new());
    for (i, record) in reader.deserialize::<TclRow>().enumerate() {
        let row = i + 1;
        let rec = record.map_err(|e| parse_err(path, row, e.to_string()))?;
        if rec.slot != i {
            return Err(parse_err(path, row, format!("expected slot {i}, found {}", rec.slot)));
        }
        if rec.r < 0.0 {
            return Err(parse_err(path, row, format!("negative IT power {}", rec.r)));
        }
        ambient.push(rec.theta_a);
        it_power.push(rec.r);
    }
    Ok((ambient, it_power))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tcl() -> TclParams {
        TclParams {
            theta_r: 22.0,
            delta: 1.0,
            p_m: 10.0,
            b_coef: 2.0,
            c_coef: 0.01,
            alpha: 0.9,
        }
    }

    #[test]
    fn setpoint_already_met() {
        let out = tcl_to_vb(&tcl(), &[22.0], &[0.0]).unwrap();
        assert_eq!(out.nominal_power, vec![0.0]);
        let s = out.series.specs()[0];
        assert_eq!((s.b_char, s.b_dis), (10.0, 0.0));
    }

    #[test]
    fn nominal_power_formula() {
        let out = tcl_to_vb(&tcl(), &[26.0], &[200.0]).unwrap();
        assert!((out.nominal_power[0] - 3.0).abs() < 1e-12);
        let s = out.series.specs()[0];
        assert!((s.b_char - 7.0).abs() < 1e-12);
        assert!((s.b_dis - 3.0).abs() < 1e-12);
    }

    #[test]
    fn soc_bounds_formula() {
        let s = tcl_to_vb(&tcl(), &[22.0], &[0.0]).unwrap().series.specs()[0];
        assert!((s.b_min + 5.0).abs() < 1e-9);
        assert!((s.b_max - 5.0).abs() < 1e-9);
        assert_eq!(s.alpha, 0.9);
    }

    #[test]
    fn unreachable_setpoint() {
        // too cold: p0 < 0
        match tcl_to_vb(&tcl(), &[22.0, 18.0], &[0.0, 0.0]) {
            Err(Error::NominalPowerOutOfRange { slot, .. }) => assert_eq!(slot, 1),
            other => panic!("unexpected {other:?}"),
        }
        // too hot: p0 > p_m
        assert!(matches!(
            tcl_to_vb(&tcl(), &[50.0], &[0.0]),
            Err(Error::NominalPowerOutOfRange { slot: 0, .. })
        ));
        assert!(matches!(
            tcl_to_vb(&tcl(), &[22.0], &[]),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn tcl_param_validation() {
        assert!(TclParams { alpha: 1.0, ..tcl() }.validate().is_err());
        assert!(TclParams { delta: 0.0, ..tcl() }.validate().is_err());
        assert!(TclParams { c_coef: -0.1, ..tcl() }.validate().is_err());
    }

    #[test]
    fn single_task_forces_midpoint() {
        let task = Task {
            arrival: 0,
            deadline: 2,
            max_power: 1.0,
            energy: 2.0,
        };
        let env = task_envelope(&[task], 2).unwrap();
        assert_eq!(env.u_max, vec![1.0, 1.0]);
        assert_eq!(env.soc_lower, vec![0.0, 1.0, 2.0]);
        assert_eq!(env.soc_upper, vec![0.0, 1.0, 2.0]);

        let series = tasks_to_vb(&[task], 2).unwrap();
        let s0 = series.specs()[0];
        assert_eq!((s0.b_char, s0.b_dis, s0.b_min, s0.b_max, s0.alpha), (1.0, 0.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_task_set() {
        let env = task_envelope(&[], 4).unwrap();
        assert!(env.u_max.iter().chain(&env.soc_lower).chain(&env.soc_upper).all(|&x| x == 0.0));
    }

    #[test]
    fn duplicated_task_doubles_bounds() {
        let task = Task {
            arrival: 0,
            deadline: 2,
            max_power: 1.0,
            energy: 2.0,
        };
        let one = task_envelope(&[task], 3).unwrap();
        let two = task_envelope(&[task, task], 3).unwrap();
        for t in 0..3 {
            assert_eq!(two.u_max[t], 2.0 * one.u_max[t]);
        }
        for t in 0..=3 {
            assert_eq!(two.soc_lower[t], 2.0 * one.soc_lower[t]);
            assert_eq!(two.soc_upper[t], 2.0 * one.soc_upper[t]);
        }
    }

    #[test]
    fn task_errors() {
        let late = Task {
            arrival: 1,
            deadline: 5,
            max_power: 1.0,
            energy: 1.0,
        };
        let err = tasks_to_vb(&[late], 4).unwrap_err();
        assert!(err.to_string().starts_with("task exceeds horizon"));
        let greedy = Task { energy: 10.0, ..late };
        assert!(matches!(tasks_to_vb(&[greedy], 8), Err(Error::InvalidTask { .. })));
        let backwards = Task { arrival: 5, ..late };
        assert!(matches!(tasks_to_vb(&[backwards], 8), Err(Error::InvalidTask { .. })));
    }

    #[test]
    fn merge_examples() {
        let a = VirtualBatterySpec::new(100.0, 50.0, 0.0, 500.0, 1.0).unwrap();
        let b = VirtualBatterySpec::new(50.0, 50.0, 100.0, 300.0, 1.0).unwrap();
        let m = merge(&[a, b]).unwrap();
        assert_eq!(m, VirtualBatterySpec::new(150.0, 100.0, 100.0, 800.0, 1.0).unwrap());
        assert_eq!(merge(&[a]).unwrap(), a);
        assert_eq!(merge(&[a, VirtualBatterySpec::zero()]).unwrap(), a);
    }

    #[test]
    fn merge_rejects_mixed_alpha() {
        let a = VirtualBatterySpec::new(1.0, 1.0, 0.0, 5.0, 1.0).unwrap();
        let b = VirtualBatterySpec { alpha: 0.9, ..a };
        let err = merge(&[a, b]).unwrap_err();
        assert!(err.to_string().starts_with("dissipation mismatch"));
        assert!(merge(&[]).is_err());
    }

    #[test]
    fn merge_series_adds_offsets() {
        let s = VirtualBatterySpec::new(1.0, 1.0, -2.0, 2.0, 1.0).unwrap();
        let a = SpecSeries::constant(s, 3).unwrap().shifted_nonnegative();
        let b = SpecSeries::constant(s, 3).unwrap();
        let m = merge_series(&[a, b]).unwrap();
        assert_eq!(m.soc_offset(), 2.0);
        assert_eq!(m.specs()[1].b_max, 6.0);
        let short = SpecSeries::constant(s, 2).unwrap();
        assert!(matches!(
            merge_series(&[m, short]),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn task_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.csv");
        std::fs::write(&path, "arrival,deadline,max_power,energy\n0,2,1,2\n1,4,2.5,3\n").unwrap();
        let tasks = read_tasks(&path).unwrap();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[1].max_power, 2.5);

        std::fs::write(&path, "arrival,deadline,max_power,energy\n0,2,1,2\n3,2,1,1\n").unwrap();
        match read_tasks(&path) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "arrival,deadline,power,energy\n").unwrap();
        assert!(read_tasks(&path).is_err());
    }

    #[test]
    fn tcl_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tcl.csv");
        std::fs::write(&path, "slot,theta_a,r\n0,26,200\n1,24.5,100\n").unwrap();
        let (amb, r) = read_tcl_series(&path).unwrap();
        assert_eq!(amb, vec![26.0, 24.5]);
        assert_eq!(r, vec![200.0, 100.0]);
        std::fs::write(&path, "slot,theta_a,r\n0,26,200\n5,24.5,100\n").unwrap();
        assert!(matches!(read_tcl_series(&path), Err(Error::Parse { row: 2, .. })));
    }

    fn arb_spec() -> impl Strategy<Value = VirtualBatterySpec> {
        (0.0..10.0f64, 0.0..10.0f64, -10.0..10.0f64, 0.0..10.0f64).prop_map(|(c, d, lo, w)| {
            VirtualBatterySpec {
                b_char: c,
                b_dis: d,
                b_min: lo,
                b_max: lo + w,
                alpha: 1.0,
            }
        })
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(a in arb_spec(), b in arb_spec(), c in arb_spec()) {
            let close = |x: VirtualBatterySpec, y: VirtualBatterySpec| {
                (x.b_char - y.b_char).abs() < 1e-9
                    && (x.b_dis - y.b_dis).abs() < 1e-9
                    && (x.b_min - y.b_min).abs() < 1e-9
                    && (x.b_max - y.b_max).abs() < 1e-9
            };
            prop_assert!(close(merge(&[a, b]).unwrap(), merge(&[b, a]).unwrap()));
            let left = merge(&[merge(&[a, b]).unwrap(), c]).unwrap();
            let right = merge(&[a, merge(&[b, c]).unwrap()]).unwrap();
            prop_assert!(close(left, right));
        }
    }
}
