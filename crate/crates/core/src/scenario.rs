//! Synthetic traces and trace files.
//!
//! Every series is drawn i.i.d. uniform over its configured interval from a
//! ChaCha8 stream seeded with [`ChaCha8Rng::seed_from_u64`]. A uniform
//! variate is `lo + (hi - lo) * u` with `u = (next_u64() >> 11) * 2^-53`.
//! Per slot the draws are taken in the order price, renewable, demand,
//! b_char, b_dis, b_min, b_max.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::vb::{SpecSeries, VirtualBatterySpec, EnvelopeConstants};
use crate::{Error, Result};

/// Name of the pseudo-random generator, recorded in every report.
pub const GENERATOR_NAME: &str = "chacha8 (rand_chacha seed_from_u64, 53-bit uniform)";

pub const TRACE_HEADER: [&str; 8] = [
    "slot", "price", "renewable", "demand", "b_char", "b_dis", "b_min", "b_max",
];

/// Closed interval `[lo, hi]`, serialised as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.0 + self.1)
    }

    pub fn width(&self) -> f64 {
        self.1 - self.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.0 <= x && x <= self.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon: usize,
    pub seed: u64,
    pub price_range: Interval,
    pub demand_range: Interval,
    pub renewable_range: Interval,
    pub b_char_range: Interval,
    pub b_dis_range: Interval,
    pub b_min_range: Interval,
    pub b_max_range: Interval,
    pub r_max: f64,
}

impl Default for ScenarioConfig {
    /// Thirty days of hourly slots with the reference data-center ranges.
    fn default() -> Self {
        Self {
            horizon: 720,
            seed: 0,
            price_range: Interval(0.5, 1.5),
            demand_range: Interval(10_000.0, 20_000.0),
            renewable_range: Interval(0.0, 3000.0),
            b_char_range: Interval(100.0, 200.0),
            b_dis_range: Interval(100.0, 200.0),
            b_min_range: Interval(1000.0, 2000.0),
            b_max_range: Interval(3000.0, 4000.0),
            r_max: 3000.0,
        }
    }
}

impl ScenarioConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    fn ranges(&self) -> [(&'static str, Interval); 7] {
        [
            ("price_range", self.price_range),
            ("demand_range", self.demand_range),
            ("renewable_range", self.renewable_range),
            ("b_char_range", self.b_char_range),
            ("b_dis_range", self.b_dis_range),
            ("b_min_range", self.b_min_range),
            ("b_max_range", self.b_max_range),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (key, r) in self.ranges() {
            if !r.lo().is_finite() || !r.hi().is_finite() {
                return Err(Error::Config(format!("{key}: bounds must be finite")));
            }
            if r.lo() > r.hi() {
                return Err(Error::Config(format!(
                    "{key}: lo ({}) exceeds hi ({})",
                    r.lo(),
                    r.hi()
                )));
            }
        }
        for (key, r) in [
            ("price_range", self.price_range),
            ("demand_range", self.demand_range),
            ("renewable_range", self.renewable_range),
            ("b_char_range", self.b_char_range),
            ("b_dis_range", self.b_dis_range),
        ] {
            if r.lo() < 0.0 {
                return Err(Error::Config(format!("{key}: lo ({}) is negative", r.lo())));
            }
        }
        if !(self.r_max >= self.renewable_range.hi()) {
            return Err(Error::Config(format!(
                "r_max: {} is below renewable_range hi ({})",
                self.r_max,
                self.renewable_range.hi()
            )));
        }
        if self.b_min_range.hi() > self.b_max_range.lo() {
            return Err(Error::Config(format!(
                "b_min_range: hi ({}) exceeds b_max_range lo ({})",
                self.b_min_range.hi(),
                self.b_max_range.lo()
            )));
        }
        Ok(())
    }

    /// Envelope constants implied by the configured ranges alone.
    pub fn declared_envelope(&self) -> EnvelopeConstants {
        EnvelopeConstants {
            b_char_max: self.b_char_range.hi(),
            b_dis_max: self.b_dis_range.hi(),
            b_min_bar: self.b_min_range.hi(),
            b_max_bar: self.b_max_range.lo(),
            p_max: self.price_range.hi(),
        }
    }
}

/// Prices, renewable availability, demand and battery specs per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub price: Vec<f64>,
    pub renewable: Vec<f64>,
    pub demand: Vec<f64>,
    pub specs: SpecSeries,
    /// Renewable capacity; `f64::INFINITY` when unknown.
    pub r_max: f64,
}

impl Trace {
    pub fn new(
        price: Vec<f64>,
        renewable: Vec<f64>,
        demand: Vec<f64>,
        specs: SpecSeries,
        r_max: f64,
    ) -> Result<Self> {
        let n = price.len();
        if renewable.len() != n || demand.len() != n || specs.horizon() != n {
            return Err(Error::LengthMismatch(format!(
                "price {}, renewable {}, demand {}, specs {}",
                n,
                renewable.len(),
                demand.len(),
                specs.horizon()
            )));
        }
        let trace = Self {
            price,
            renewable,
            demand,
            specs,
            r_max,
        };
        if let Some((slot, msg)) = trace.first_invalid_slot() {
            return Err(Error::InvalidParameter(format!("slot {slot}: {msg}")));
        }
        Ok(trace)
    }

    fn check_slot(&self, t: usize) -> std::result::Result<(), String> {
        let (p, r, e) = (self.price[t], self.renewable[t], self.demand[t]);
        if !(p >= 0.0 && p.is_finite()) {
            return Err(format!("price {p} must be nonnegative"));
        }
        if !(e >= 0.0 && e.is_finite()) {
            return Err(format!("demand {e} must be nonnegative"));
        }
        if !(r >= 0.0 && r <= self.r_max) {
            return Err(format!("renewable {r} not in [0, {}]", self.r_max));
        }
        Ok(())
    }

    fn first_invalid_slot(&self) -> Option<(usize, String)> {
        (0..self.horizon()).find_map(|t| self.check_slot(t).err().map(|m| (t, m)))
    }

    pub fn horizon(&self) -> usize {
        self.price.len()
    }

    pub fn max_price(&self) -> f64 {
        self.price.iter().copied().fold(0.0, f64::max)
    }

    /// Trace with no demand, no renewable and a constant battery.
    pub fn idle(horizon: usize, price: f64, spec: VirtualBatterySpec) -> Result<Self> {
        Self::new(
            vec![price; horizon],
            vec![0.0; horizon],
            vec![0.0; horizon],
            SpecSeries::constant(spec, horizon)?,
            f64::INFINITY,
        )
    }
}

struct Uniform01(ChaCha8Rng);

impl Uniform01 {
    fn sample(&mut self, range: Interval) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        range.lo() + range.width() * u
    }
}

/// Draws a trace from `cfg`. Identical configs give identical traces.
pub fn generate(cfg: &ScenarioConfig) -> Result<Trace> {
    cfg.validate()?;
    let mut rng = Uniform01(ChaCha8Rng::seed_from_u64(cfg.seed));
    let n = cfg.horizon;
    let (mut price, mut renewable, mut demand) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut specs = Vec::with_capacity(n);
    for _ in 0..n {
        price.push(rng.sample(cfg.price_range));
        renewable.push(rng.sample(cfg.renewable_range));
        demand.push(rng.sample(cfg.demand_range));
        specs.push(VirtualBatterySpec {
            b_char: rng.sample(cfg.b_char_range),
            b_dis: rng.sample(cfg.b_dis_range),
            b_min: rng.sample(cfg.b_min_range),
            b_max: rng.sample(cfg.b_max_range),
            alpha: 1.0,
        });
    }
    Trace::new(price, renewable, demand, SpecSeries::new(specs)?, cfg.r_max)
}

pub fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for t in 0..trace.horizon() {
        let s = trace.specs.specs()[t];
        w.write_record([
            t.to_string(),
            trace.price[t].to_string(),
            trace.renewable[t].to_string(),
            trace.demand[t].to_string(),
            s.b_char.to_string(),
            s.b_dis.to_string(),
            s.b_min.to_string(),
            s.b_max.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

pub fn save_trace(trace: &Trace, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(trace, std::io::BufWriter::new(file))
}

/// Reads a trace CSV. Renewable values above `r_max` are rejected.
pub fn load_trace(path: &Path, r_max: f64) -> Result<Trace> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace(file, &path.display().to_string(), r_max)
}

/// Parses trace CSV from any reader; `source` names it in error messages.
/// Row numbers count data rows from 1.
pub fn parse_trace<R: Read>(input: R, source: &str, r_max: f64) -> Result<Trace> {
    let err = |row: usize, message: String| Error::Parse {
        path: source.to_string(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers().map_err(|e| err(0, e.to_string()))?.clone();
    let mut columns = [0usize; 8];
    for (i, name) in TRACE_HEADER.iter().enumerate() {
        columns[i] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| err(0, format!("missing column `{name}`")))?;
    }

    let (mut price, mut renewable, mut demand, mut specs) = (vec![], vec![], vec![], vec![]);
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| err(row, e.to_string()))?;
        let mut vals = [0.0f64; 8];
        for (k, &col) in columns.iter().enumerate() {
            let raw = record
                .get(col)
                .ok_or_else(|| err(row, format!("missing value for `{}`", TRACE_HEADER[k])))?;
            vals[k] = raw.parse::<f64>().map_err(|e| {
                err(row, format!("`{}`: cannot parse {raw:?}: {e}", TRACE_HEADER[k]))
            })?;
        }
        let [slot, p, r, e, b_char, b_dis, b_min, b_max] = vals;
        if slot != i as f64 {
            return Err(err(row, format!("expected slot {i}, found {slot}")));
        }
        if !(p >= 0.0) {
            return Err(err(row, format!("negative price {p}")));
        }
        if !(e >= 0.0) {
            return Err(err(row, format!("negative demand {e}")));
        }
        if !(r >= 0.0) {
            return Err(err(row, format!("negative renewable {r}")));
        }
        if r > r_max {
            return Err(err(row, format!("renewable {r} exceeds r_max {r_max}")));
        }
        let spec = VirtualBatterySpec {
            b_char,
            b_dis,
            b_min,
            b_max,
            alpha: 1.0,
        };
        spec.validate().map_err(|m| err(row, m))?;
        price.push(p);
        renewable.push(r);
        demand.push(e);
        specs.push(spec);
    }
    if price.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Trace::new(price, renewable, demand, SpecSeries::new(specs)?, r_max)
}
