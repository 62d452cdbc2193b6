//! Synthetic zones and gravity-law OD flows with known structure.
//!
//! Zone magnitudes follow the published descriptive statistics of the real
//! zone table:
//!
//! * population is log-normal with median 295,000 and log-sd
//!   `sqrt(2 ln(710,678.5 / 295,000)) = 1.326`, which puts the mean near the
//!   observed 710,679,
//! * employees = 0.39 x population (mean employees 277,258.9 over mean
//!   population 710,678.5),
//! * establishments = employees / 16 (277,258.9 / 17,041.9),
//! * payroll = 56.3 x employees, in thousands of dollars
//!   (15,610,480.7 / 277,258.9),
//!
//! each ratio multiplied by independent log-normal noise with log-sd 0.2.
//! Centroids are uniform over the box lat 25..49, lon -124..-67.
//!
//! Flows follow `T_ij = round(k P_i^alpha P_j^beta d_ij^-gamma exp(eps))`
//! with `eps ~ N(0, sigma^2)` over ordered pairs `i != j`; zero flows are
//! dropped. Every zone and every pair draws from its own seeded sub-stream,
//! so output does not depend on generation order.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::features::great_circle_distance;
use crate::ingest::{OdRecord, ZoneAttributes};
use crate::rng;

pub const MEDIAN_POPULATION: f64 = 295_000.0;
pub const LOG_SD_POPULATION: f64 = 1.326;
pub const EMPLOYEES_PER_PERSON: f64 = 0.39;
pub const EMPLOYEES_PER_ESTABLISHMENT: f64 = 16.0;
pub const PAYROLL_PER_EMPLOYEE: f64 = 56.3;
pub const RATIO_NOISE_SD: f64 = 0.2;
/// Median annual trips per OD pair used as the calibration target.
pub const TARGET_MEDIAN_TRIPS: f64 = 278.0;
/// Distances are floored at one mile so coincident centroids stay finite.
pub const MIN_DISTANCE_MILES: f64 = 1.0;

const ZONE_STREAM: u64 = 10;
const PAIR_STREAM: u64 = 11;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("need at least 2 zones, got {0}")]
    TooFewZones(usize),
    #[error("invalid gravity parameter: {0}")]
    InvalidParams(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq)]
pub struct GravityParams {
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for GravityParams {
    /// `k` puts the median flow of a 60-zone table in the low hundreds of trips.
    fn default() -> Self {
        GravityParams {
            k: 3.0e-3,
            alpha: 1.0,
            beta: 1.0,
            gamma: 2.0,
            sigma: 0.5,
            seed: 0,
        }
    }
}

impl GravityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(SynthError::InvalidParams(format!("k must be positive, got {}", self.k)));
        }
        if !(self.gamma >= 0.0) {
            return Err(SynthError::InvalidParams(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.sigma >= 0.0) {
            return Err(SynthError::InvalidParams(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(SynthError::InvalidParams("alpha and beta must be finite".into()));
        }
        Ok(())
    }
}

fn lognormal(rng: &mut rng::Prng, median: f64, log_sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    median * (log_sd * z).exp()
}

fn count(x: f64) -> u64 {
    (x.round() as u64).max(1)
}

fn micro_degrees(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn zone_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(3);
    format!("Z{:0width$}", i + 1)
}

pub fn generate_zones(n: usize, seed: u64) -> Result<Vec<ZoneAttributes>> {
    if n < 2 {
        return Err(SynthError::TooFewZones(n));
    }
    Ok((0..n)
        .map(|i| {
            let mut r = rng::stream(seed, &[ZONE_STREAM, i as u64]);
            let lat = micro_degrees(25.0 + 24.0 * r.random::<f64>());
            let lon = micro_degrees(-124.0 + 57.0 * r.random::<f64>());
            let population = count(lognormal(&mut r, MEDIAN_POPULATION, LOG_SD_POPULATION));
            let employees = count(lognormal(&mut r, EMPLOYEES_PER_PERSON * population as f64, RATIO_NOISE_SD));
            let establishments = count(lognormal(
                &mut r,
                employees as f64 / EMPLOYEES_PER_ESTABLISHMENT,
                RATIO_NOISE_SD,
            ));
            let annual_payroll = count(lognormal(&mut r, PAYROLL_PER_EMPLOYEE * employees as f64, RATIO_NOISE_SD));
            ZoneAttributes {
                zone_id: zone_id(i, n),
                centroid_lat: lat,
                centroid_lon: lon,
                population,
                establishments,
                employees,
                annual_payroll,
            }
        })
        .collect())
}

/// Unrounded gravity flow `k P_o^alpha P_d^beta d^-gamma exp(noise)`.
pub fn gravity_value(params: &GravityParams, p_origin: f64, p_destination: f64, distance: f64, noise: f64) -> f64 {
    params.k
        * p_origin.powf(params.alpha)
        * p_destination.powf(params.beta)
        * distance.max(MIN_DISTANCE_MILES).powf(-params.gamma)
        * noise.exp()
}

/// Flow for every ordered pair with `k = 1`, before rounding.
fn unit_flows(zones: &[ZoneAttributes], params: &GravityParams) -> Vec<(usize, usize, f64)> {
    let unit = GravityParams {
        k: 1.0,
        ..params.clone()
    };
    let mut out = Vec::with_capacity(zones.len() * zones.len().saturating_sub(1));
    for (i, o) in zones.iter().enumerate() {
        for (j, d) in zones.iter().enumerate() {
            if i == j {
                continue;
            }
            let noise = if params.sigma > 0.0 {
                let z: f64 = rng::stream(params.seed, &[PAIR_STREAM, i as u64, j as u64]).sample(StandardNormal);
                params.sigma * z
            } else {
                0.0
            };
            let dist = great_circle_distance(o.centroid(), d.centroid()).expect("zone coordinates are validated");
            out.push((i, j, gravity_value(&unit, o.population as f64, d.population as f64, dist, noise)));
        }
    }
    out
}

fn rounded_flows(zones: &[ZoneAttributes], unit: &[(usize, usize, f64)], k: f64) -> Vec<OdRecord> {
    unit.iter()
        .filter_map(|&(i, j, v)| {
            let trips = (k * v).round();
            (trips >= 1.0).then(|| OdRecord {
                origin_zone: zones[i].zone_id.clone(),
                destination_zone: zones[j].zone_id.clone(),
                annual_total_trips: trips as u64,
            })
        })
        .collect()
}

fn median_trips(flows: &[OdRecord]) -> Option<f64> {
    if flows.is_empty() {
        return None;
    }
    let mut t: Vec<u64> = flows.iter().map(|f| f.annual_total_trips).collect();
    t.sort_unstable();
    let n = t.len();
    Some(if n % 2 == 1 {
        t[n / 2] as f64
    } else {
        (t[n / 2 - 1] + t[n / 2]) as f64 / 2.0
    })
}

/// Flows for every ordered zone pair; pairs rounding to zero are dropped.
pub fn generate_gravity_flows(zones: &[ZoneAttributes], params: &GravityParams) -> Result<Vec<OdRecord>> {
    if zones.len() < 2 {
        return Err(SynthError::TooFewZones(zones.len()));
    }
    params.validate()?;
    Ok(rounded_flows(zones, &unit_flows(zones, params), params.k))
}

/// Finds `k` by bisection on `ln k` so that the median retained flow lands
/// within 10% of `target_median`.
pub fn calibrate_k(zones: &[ZoneAttributes], params: &GravityParams, target_median: f64) -> Result<f64> {
    if zones.len() < 2 {
        return Err(SynthError::TooFewZones(zones.len()));
    }
    params.validate()?;
    let unit = unit_flows(zones, params);
    let mut raw: Vec<f64> = unit.iter().map(|u| u.2).collect();
    raw.sort_by(f64::total_cmp);
    let raw_median = raw[raw.len() / 2];
    if !(raw_median > 0.0 && raw_median.is_finite()) {
        return Err(SynthError::Calibration("degenerate unscaled flows".into()));
    }
    let k0 = target_median / raw_median;
    let median_at = |k: f64| median_trips(&rounded_flows(zones, &unit, k));
    let (mut lo, mut hi) = ((k0 / 1e3).ln(), (k0 * 1e3).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match median_at(mid.exp()) {
            Some(m) if m >= target_median => hi = mid,
            _ => lo = mid,
        }
    }
    let k = hi.exp();
    match median_at(k) {
        None => Err(SynthError::Calibration("all flows round to zero".into())),
        Some(m) if (m - target_median).abs() <= 0.1 * target_median => Ok(k),
        Some(m) => Err(SynthError::Calibration(format!(
            "median {m} misses target {target_median} by more than 10%"
        ))),
    }
}
