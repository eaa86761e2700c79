//! System parameters.
//!
//! All quantities are SI: seconds, hertz, bits, watts, joules. Values quoted
//! in dB/dBm by convention are converted once, in the presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convert a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert a dimensionless gain in dB to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Physical and algorithmic parameters of one hybrid computing system.
///
/// Field names in the on-disk form mirror the symbols of the system model
/// (`horizon_T`, `num_slots_I`, ...). Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Time horizon `T` in seconds.
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
    /// Number of slots `I`.
    #[serde(rename = "num_slots_I")]
    pub num_slots: usize,
    /// Channel bandwidth `B` in Hz.
    #[serde(rename = "bandwidth_B")]
    pub bandwidth: f64,
    /// Bits each edge UE must offload over the horizon.
    #[serde(rename = "data_demand_Dk")]
    pub data_demand: f64,
    /// CPU cycles required per offloaded bit.
    #[serde(rename = "cycles_per_bit_c0")]
    pub cycles_per_bit: f64,
    /// Maximum BS computation frequency in cycles/s.
    #[serde(rename = "max_cpu_f")]
    pub max_cpu_freq: f64,
    /// Effective capacitance coefficient of the BS CPU.
    #[serde(rename = "capacitance_gamma")]
    pub capacitance: f64,
    /// Receiver noise power in watts.
    #[serde(rename = "noise_power_sigma0sq")]
    pub noise_power: f64,
    /// Rician K-factor (linear), identical in every slot.
    pub rician_kappa: f64,
    /// Path-loss power gain at the 1 m reference distance (linear).
    #[serde(rename = "pathloss_ref_beta0")]
    pub pathloss_ref: f64,
    /// Edge UE transmit power budget in watts.
    pub p_max_edge: f64,
    /// AirComp UE budget on `|b|^2`, in watts.
    pub p_max_aircomp: f64,
    /// Per-slot aggregation MSE threshold.
    #[serde(rename = "mse_threshold_zeta")]
    pub mse_threshold: f64,
    /// Side length of the square deployment area in metres.
    pub area_side: f64,
    #[serde(rename = "num_aircomp_J")]
    pub num_aircomp: usize,
    #[serde(rename = "num_edge_K")]
    pub num_edge: usize,
    /// Relative energy-decrease threshold that stops the BCD loop.
    #[serde(rename = "bcd_epsilon0")]
    pub bcd_epsilon: f64,
    pub bcd_max_iters: usize,
    pub solver_feas_tol: f64,
    pub solver_opt_tol: f64,
    pub rng_seed: u64,
    /// Channel-inversion baseline: conjugate the channel phase instead of
    /// replicating it.
    #[serde(default)]
    pub conjugate_phase: bool,
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Full-size simulation table (200 slots, 10 + 10 UEs).
    Full,
    /// Reduced instance that solves in seconds (20 slots, 5 + 5 UEs).
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "desk" => Ok(Self::Desk),
            other => Err(Error::Usage(format!("unknown preset `{other}`"))),
        }
    }
}

impl SystemConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => Self::full(),
            Preset::Desk => Self::desk(),
        }
    }

    pub fn full() -> Self {
        Self {
            horizon: 200.0,
            num_slots: 200,
            bandwidth: 5e6,
            data_demand: 6e6,
            cycles_per_bit: 1e3,
            max_cpu_freq: 6e9,
            capacitance: 1e-27,
            noise_power: dbm_to_watts(-120.0),
            rician_kappa: 15.0,
            pathloss_ref: db_to_linear(-60.0),
            p_max_edge: 1.0,
            p_max_aircomp: 1.0,
            mse_threshold: 1.0,
            area_side: 1000.0,
            num_aircomp: 10,
            num_edge: 10,
            bcd_epsilon: 1e-3,
            bcd_max_iters: 50,
            solver_feas_tol: 1e-8,
            solver_opt_tol: 1e-6,
            rng_seed: 42,
            conjugate_phase: false,
        }
    }

    pub fn desk() -> Self {
        Self {
            horizon: 20.0,
            num_slots: 20,
            data_demand: 0.6e6,
            num_aircomp: 5,
            num_edge: 5,
            ..Self::full()
        }
    }

    /// Slot duration `T / I`.
    pub fn slot_duration(&self) -> f64 {
        self.horizon / self.num_slots as f64
    }

    /// Largest number of bits the BS can process in one slot.
    pub fn max_bits_per_slot(&self) -> f64 {
        self.slot_duration() * self.max_cpu_freq / self.cycles_per_bit
    }

    pub fn num_users(&self) -> usize {
        self.num_aircomp + self.num_edge
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("horizon_T", self.horizon),
            ("bandwidth_B", self.bandwidth),
            ("cycles_per_bit_c0", self.cycles_per_bit),
            ("max_cpu_f", self.max_cpu_freq),
            ("capacitance_gamma", self.capacitance),
            ("noise_power_sigma0sq", self.noise_power),
            ("rician_kappa", self.rician_kappa),
            ("pathloss_ref_beta0", self.pathloss_ref),
            ("p_max_edge", self.p_max_edge),
            ("p_max_aircomp", self.p_max_aircomp),
            ("mse_threshold_zeta", self.mse_threshold),
            ("area_side", self.area_side),
            ("bcd_epsilon0", self.bcd_epsilon),
            ("solver_feas_tol", self.solver_feas_tol),
            ("solver_opt_tol", self.solver_opt_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.data_demand.is_finite() && self.data_demand >= 0.0) {
            return Err(Error::Config(format!(
                "data_demand_Dk must be finite and >= 0, got {}",
                self.data_demand
            )));
        }
        if self.num_slots == 0 {
            return Err(Error::Config("num_slots_I must be >= 1".into()));
        }
        if self.num_edge == 0 {
            return Err(Error::Config("num_edge_K must be >= 1".into()));
        }
        if self.bcd_max_iters == 0 {
            return Err(Error::Config("bcd_max_iters must be >= 1".into()));
        }
        Ok(())
    }

    /// Parse a TOML config and validate it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
