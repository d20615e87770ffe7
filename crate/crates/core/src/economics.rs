//! Battery-limited vehicle lifetime and amortized daily cost.
//!
//! The battery is treated as the lifetime bottleneck. Cycle life does not
//! depend on depth of discharge.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EamodError, Result};
use crate::io::{write_csv, CsvRecord};
use crate::milp::{consumption_per_km, EconomicParams, REFERENCE_BATTERY_KWH, REFERENCE_DAILY_ENERGY_KWH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeModel {
    pub tau_cycle: f64,
    pub econ: EconomicParams,
}

impl LifetimeModel {
    pub fn new(econ: &EconomicParams) -> Result<Self> {
        if !(econ.tau_cycle > 0.0) {
            return Err(EamodError::InvalidParameter("tau_cycle must be positive".into()));
        }
        Ok(Self {
            tau_cycle: econ.tau_cycle,
            econ: *econ,
        })
    }
}

/// Full-cycle equivalents per day.
pub fn daily_cycles(daily_energy_kwh: f64, e_b_kwh: f64) -> Result<f64> {
    if !(e_b_kwh > 0.0) {
        return Err(EamodError::ZeroBattery);
    }
    if !(daily_energy_kwh >= 0.0) {
        return Err(EamodError::InvalidParameter("daily energy must be non-negative".into()));
    }
    Ok(daily_energy_kwh / e_b_kwh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmortizedCost {
    /// `+inf` when the vehicle never cycles.
    pub lifetime_days: f64,
    pub cost_eur_per_day: f64,
}

pub fn amortized_daily_cost(e_b_kwh: f64, daily_distance_km: f64, model: &LifetimeModel) -> Result<AmortizedCost> {
    if !(e_b_kwh > 0.0) {
        return Err(EamodError::ZeroBattery);
    }
    if !(daily_distance_km >= 0.0) {
        return Err(EamodError::InvalidParameter("daily distance must be non-negative".into()));
    }
    let energy = daily_distance_km * consumption_per_km(e_b_kwh, &model.econ);
    let cycles = daily_cycles(energy, e_b_kwh)?;
    if cycles == 0.0 {
        return Ok(AmortizedCost {
            lifetime_days: f64::INFINITY,
            cost_eur_per_day: 0.0,
        });
    }
    let lifetime_days = model.tau_cycle / cycles;
    Ok(AmortizedCost {
        lifetime_days,
        cost_eur_per_day: (model.econ.p_v_eur + model.econ.p_b_eur_per_kwh * e_b_kwh) / lifetime_days,
    })
}

/// Amortized purchase cost per driven km.
pub fn per_km_cost(e_b_kwh: f64, model: &LifetimeModel) -> Result<f64> {
    if !(e_b_kwh > 0.0) {
        return Err(EamodError::ZeroBattery);
    }
    let e = &model.econ;
    Ok((e.p_v_eur + e.p_b_eur_per_kwh * e_b_kwh) * consumption_per_km(e_b_kwh, e) / (model.tau_cycle * e_b_kwh))
}

/// Closed-form minimizer of [`per_km_cost`].
pub fn optimal_battery_unit_cost(model: &LifetimeModel) -> f64 {
    let e = &model.econ;
    let denom = e.p_b_eur_per_kwh * e.delta_eb_per_km;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    (e.p_v_eur * e.delta_e0_kwh_per_km / denom).sqrt()
}

/// Daily distance that draws the reference daily energy at the reference
/// battery size.
pub fn reference_daily_distance_km(econ: &EconomicParams) -> f64 {
    REFERENCE_DAILY_ENERGY_KWH / consumption_per_km(REFERENCE_BATTERY_KWH, econ)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCurveRow {
    pub e_b_kwh: f64,
    pub lifetime_days: f64,
    pub cost_eur_per_day: f64,
    pub cycles_per_day: f64,
}

impl CsvRecord for CostCurveRow {
    const HEADER: &'static [&'static str] = &["e_b_kwh", "lifetime_days", "cost_eur_per_day", "cycles_per_day"];
}

pub fn cost_curve(grid: &[f64], daily_distance_km: f64, model: &LifetimeModel) -> Result<Vec<CostCurveRow>> {
    grid.iter()
        .map(|&e_b| {
            let c = amortized_daily_cost(e_b, daily_distance_km, model)?;
            Ok(CostCurveRow {
                e_b_kwh: e_b,
                lifetime_days: c.lifetime_days,
                cost_eur_per_day: c.cost_eur_per_day,
                cycles_per_day: daily_cycles(daily_distance_km * consumption_per_km(e_b, &model.econ), e_b)?,
            })
        })
        .collect()
}

pub fn write_cost_curve(path: &Path, rows: &[CostCurveRow]) -> Result<()> {
    write_csv(path, rows)
}

/// Evenly spaced grid `start, start + step, ...` up to `stop` inclusive.
pub fn battery_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    // Rounded so grid points print as their decimal values.
    (0..=n).map(|i| ((start + step * i as f64) * 1e9).round() / 1e9).collect()
}
