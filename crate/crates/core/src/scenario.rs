//! Node placement and Rician channel generation.
//!
//! Every random draw comes from a ChaCha8 generator keyed by the run seed.
//! The channel of UE `s` in slot `i` uses its own stream `s * I + i`, so a
//! scenario is reproducible entry by entry regardless of generation order.

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};

const PLACEMENT_STREAM: u64 = u64::MAX - 1;
/// Stream reserved for randomized initial points of the optimizer.
pub const INIT_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    AirComp,
    Edge,
}

/// Network geometry and per-slot channel gains.
///
/// UEs are ordered with the `J` AirComp users first, then the `K` edge users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub bs_position: [f64; 2],
    pub ue_positions: Vec<[f64; 2]>,
    pub ue_roles: Vec<Role>,
    /// Complex gains, shape `(J + K, I)`.
    pub channels: Array2<Complex64>,
}

/// Generator seeded for a given stream of the run seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform UE placement over the square, BS at its centre. Channels are left
/// empty (`(S, 0)`).
pub fn generate_placement<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Scenario {
    let side = config.area_side;
    let s = config.num_users();
    let ue_positions = (0..s)
        .map(|_| loop {
            let p = [rng.random::<f64>() * side, rng.random::<f64>() * side];
            // the BS sits exactly at the centre; a zero distance is a measure-zero draw
            if p != [side / 2.0, side / 2.0] {
                break p;
            }
        })
        .collect();
    let ue_roles = (0..s)
        .map(|u| if u < config.num_aircomp { Role::AirComp } else { Role::Edge })
        .collect();
    Scenario {
        bs_position: [side / 2.0, side / 2.0],
        ue_positions,
        ue_roles,
        channels: Array2::zeros((s, 0)),
    }
}

/// One draw of the Rician channel at distance `d`.
///
/// `h = sqrt(beta0 / d^2) * (sqrt(k/(k+1)) * h_los + sqrt(1/(k+1)) * h_nlos)` with
/// `h_los = 1` and `h_nlos ~ CN(0, 1)`.
pub fn rician_channel<R: Rng + ?Sized>(d: f64, config: &SystemConfig, rng: &mut R) -> Result<Complex64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("distance must be > 0, got {d}")));
    }
    let kappa = config.rician_kappa;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let nlos = Complex64::new(re, im) / std::f64::consts::SQRT_2;
    let los = Complex64::new(1.0, 0.0);
    let fading = los * (kappa / (kappa + 1.0)).sqrt() + nlos * (1.0 / (kappa + 1.0)).sqrt();
    Ok(fading * (config.pathloss_ref / (d * d)).sqrt())
}

/// Placement plus independent per-slot channels for every UE.
pub fn build_scenario(config: &SystemConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut placement_rng = stream_rng(seed, PLACEMENT_STREAM);
    let mut scenario = generate_placement(config, &mut placement_rng);
    let slots = config.num_slots;
    let users = config.num_users();
    let mut channels = Array2::zeros((users, slots));
    for s in 0..users {
        let d = scenario.distance(s);
        for i in 0..slots {
            let mut rng = stream_rng(seed, (s * slots + i) as u64);
            channels[[s, i]] = rician_channel(d, config, &mut rng)?;
        }
    }
    scenario.channels = channels;
    Ok(scenario)
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn num_aircomp(&self) -> usize {
        self.ue_roles.iter().filter(|r| **r == Role::AirComp).count()
    }

    pub fn num_edge(&self) -> usize {
        self.ue_roles.iter().filter(|r| **r == Role::Edge).count()
    }

    pub fn num_slots(&self) -> usize {
        self.channels.ncols()
    }

    pub fn distance(&self, ue: usize) -> f64 {
        let [x, y] = self.ue_positions[ue];
        (x - self.bs_position[0]).hypot(y - self.bs_position[1])
    }

    pub fn aircomp_channel(&self, j: usize, slot: usize) -> Complex64 {
        self.channels[[j, slot]]
    }

    pub fn edge_channel(&self, k: usize, slot: usize) -> Complex64 {
        self.channels[[self.num_aircomp() + k, slot]]
    }

    /// Check the structural invariants: roles are `J` AirComp then `K` edge,
    /// the channel array is `S x I`, and every distance is positive.
    pub fn validate(&self) -> Result<()> {
        let s = self.ue_positions.len();
        if self.ue_roles.len() != s || self.channels.nrows() != s {
            return Err(Error::Shape(format!(
                "{} positions, {} roles, {} channel rows",
                s,
                self.ue_roles.len(),
                self.channels.nrows()
            )));
        }
        let j = self.num_aircomp();
        if self.ue_roles[..j].iter().any(|r| *r != Role::AirComp) {
            return Err(Error::Shape("AirComp UEs must precede edge UEs".into()));
        }
        if let Some(u) = (0..s).find(|&u| self.distance(u) <= 0.0) {
            return Err(Error::Domain(format!("UE {u} coincides with the BS")));
        }
        Ok(())
    }

    /// Check that the scenario matches the dimensions of `config`.
    pub fn check_against(&self, config: &SystemConfig) -> Result<()> {
        self.validate()?;
        if self.num_aircomp() != config.num_aircomp
            || self.num_edge() != config.num_edge
            || self.num_slots() != config.num_slots
        {
            return Err(Error::Shape(format!(
                "scenario is J={} K={} I={}, config wants J={} K={} I={}",
                self.num_aircomp(),
                self.num_edge(),
                self.num_slots(),
                config.num_aircomp,
                config.num_edge,
                config.num_slots
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SystemConfig {
        SystemConfig {
            num_slots: 200,
            num_aircomp: 10,
            num_edge: 10,
            ..SystemConfig::desk()
        }
    }

    #[test]
    fn placement_inside_square_and_deterministic() {
        let cfg = small();
        let a = generate_placement(&cfg, &mut stream_rng(42, PLACEMENT_STREAM));
        let b = generate_placement(&cfg, &mut stream_rng(42, PLACEMENT_STREAM));
        assert_eq!(a, b);
        assert_eq!(a.ue_positions.len(), 20);
        for p in &a.ue_positions {
            assert!((0.0..=1000.0).contains(&p[0]) && (0.0..=1000.0).contains(&p[1]));
        }
        assert_eq!(a.bs_position, [500.0, 500.0]);
        assert_eq!(a.num_aircomp(), 10);
        assert_eq!(a.ue_roles[10], Role::Edge);
    }

    #[test]
    fn scenario_shape_and_positive_gains() {
        let cfg = small();
        let sc = build_scenario(&cfg, 7).unwrap();
        assert_eq!(sc.channels.len(), 4000);
        assert!(sc.channels.iter().all(|h| h.norm_sqr() > 0.0));
        assert_eq!(sc, build_scenario(&cfg, 7).unwrap());
        assert_ne!(sc, build_scenario(&cfg, 8).unwrap());
    }

    #[test]
    fn rejects_nonpositive_distance() {
        let cfg = small();
        let mut rng = stream_rng(1, 0);
        assert!(matches!(rician_channel(0.0, &cfg, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(rician_channel(-3.0, &cfg, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn pure_los_limit() {
        let cfg = SystemConfig {
            rician_kappa: 1e300,
            ..small()
        };
        let mut rng = stream_rng(3, 0);
        for _ in 0..100 {
            let h = rician_channel(250.0, &cfg, &mut rng).unwrap();
            assert!((h.norm() - cfg.pathloss_ref.sqrt() / 250.0).abs() < 1e-15);
        }
    }

    #[test]
    fn json_roundtrip() {
        let cfg = SystemConfig::desk();
        let sc = build_scenario(&cfg, 11).unwrap();
        let back = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(sc, back);
    }
}
