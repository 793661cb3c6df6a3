//! Air-to-ground and air-to-air channel models, SINR and Shannon rate.
//!
//! The UAV-to-network (U2N) channel mixes a LoS and an NLoS power law with an
//! elevation-dependent LoS probability. Optimizers work on the expected linear
//! gain; realized transmissions draw a LoS state plus a Rician (LoS) or
//! Rayleigh (NLoS) power fade. The UAV-to-UAV (U2U) channel is a deterministic
//! LoS power law.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, elevation_angle, Point3};
use crate::protocol::{Assignment, Mode};

/// Distances below this are rejected by the path-loss models.
pub const REFERENCE_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    /// Hz per subchannel.
    pub bandwidth_per_subchannel: f64,
    /// Receiver noise power spectral density, dBm/Hz.
    pub noise_psd: f64,
    pub los_sigmoid_a: f64,
    pub los_sigmoid_b: f64,
    pub pathloss_exponent_los: f64,
    pub pathloss_exponent_nlos: f64,
    /// Path loss at 1 m, dB.
    pub pathloss_intercept_los_db: f64,
    pub pathloss_intercept_nlos_db: f64,
    pub rician_k_db: f64,
    pub u2u_pathloss_exponent: f64,
    pub u2u_intercept_db: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            bandwidth_per_subchannel: 180e3,
            noise_psd: -164.0,
            los_sigmoid_a: 9.61,
            los_sigmoid_b: 0.16,
            pathloss_exponent_los: 2.0,
            pathloss_exponent_nlos: 2.2,
            pathloss_intercept_los_db: 41.0,
            pathloss_intercept_nlos_db: 58.0,
            rician_k_db: 6.0,
            u2u_pathloss_exponent: 2.0,
            u2u_intercept_db: 40.0,
        }
    }
}

impl RadioParams {
    /// Noise power over one subchannel, watts.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_psd) * self.bandwidth_per_subchannel
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("bandwidth_per_subchannel", self.bandwidth_per_subchannel),
            ("noise_psd", self.noise_psd),
            ("los_sigmoid_a", self.los_sigmoid_a),
            ("los_sigmoid_b", self.los_sigmoid_b),
            ("pathloss_exponent_los", self.pathloss_exponent_los),
            ("pathloss_exponent_nlos", self.pathloss_exponent_nlos),
            ("pathloss_intercept_los_db", self.pathloss_intercept_los_db),
            ("pathloss_intercept_nlos_db", self.pathloss_intercept_nlos_db),
            ("u2u_pathloss_exponent", self.u2u_pathloss_exponent),
            ("u2u_intercept_db", self.u2u_intercept_db),
        ];
        for (k, v) in fields {
            if !v.is_finite() {
                return Err(Error::validation(format!("radio.{k}"), "must be finite"));
            }
        }
        if self.rician_k_db.is_nan() || self.rician_k_db == f64::INFINITY {
            return Err(Error::validation("radio.rician_k_db", "must be finite or -inf"));
        }
        if self.bandwidth_per_subchannel <= 0.0 {
            return Err(Error::validation("radio.bandwidth_per_subchannel", "must be > 0"));
        }
        if self.pathloss_exponent_nlos < self.pathloss_exponent_los {
            return Err(Error::validation(
                "radio.pathloss_exponent_nlos",
                "must be >= pathloss_exponent_los",
            ));
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// LoS probability for an elevation angle in degrees:
/// `1 / (1 + a exp(-b (theta - a)))`.
pub fn los_probability(elevation_deg: f64, params: &RadioParams) -> f64 {
    let a = params.los_sigmoid_a;
    let b = params.los_sigmoid_b;
    1.0 / (1.0 + a * (-b * (elevation_deg - a)).exp())
}

fn power_law_gain(d: f64, intercept_db: f64, exponent: f64) -> f64 {
    10f64.powf(-(intercept_db + 10.0 * exponent * d.log10()) / 10.0)
}

fn check_distance(d: f64) -> Result<()> {
    if d < REFERENCE_DISTANCE {
        Err(Error::TooClose { distance: d })
    } else {
        Ok(())
    }
}

/// Deterministic LoS and NLoS gains plus the LoS probability of a U2N path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct U2nComponents {
    pub los_probability: f64,
    pub gain_los: f64,
    pub gain_nlos: f64,
}

impl U2nComponents {
    pub fn expected(&self) -> f64 {
        self.los_probability * self.gain_los + (1.0 - self.los_probability) * self.gain_nlos
    }
}

pub fn u2n_components(uav: Point3, bs: Point3, params: &RadioParams) -> Result<U2nComponents> {
    let d = distance(uav, bs);
    check_distance(d)?;
    let theta = elevation_angle(bs, uav)?;
    Ok(U2nComponents {
        los_probability: los_probability(theta, params),
        gain_los: power_law_gain(d, params.pathloss_intercept_los_db, params.pathloss_exponent_los),
        gain_nlos: power_law_gain(
            d,
            params.pathloss_intercept_nlos_db,
            params.pathloss_exponent_nlos,
        ),
    })
}

/// Expected linear power gain of the U2N path, averaged over the LoS state.
pub fn u2n_expected_gain(uav: Point3, bs: Point3, params: &RadioParams) -> Result<f64> {
    Ok(u2n_components(uav, bs, params)?.expected())
}

/// Draw a unit-mean Rician power fade `|h|^2`. `k_db = -inf` gives Rayleigh.
pub fn sample_rician<R: Rng + ?Sized>(k_db: f64, rng: &mut R) -> f64 {
    let k = if k_db == f64::NEG_INFINITY {
        0.0
    } else {
        db_to_linear(k_db)
    };
    let los = (k / (k + 1.0)).sqrt();
    let sigma = (1.0 / (2.0 * (k + 1.0))).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let hr = los + sigma * re;
    let hi = sigma * im;
    hr * hr + hi * hi
}

/// One stochastic realization of the U2N gain: LoS state, then fade.
pub fn u2n_realized_gain<R: Rng + ?Sized>(c: &U2nComponents, params: &RadioParams, rng: &mut R) -> f64 {
    let los = rng.random::<f64>() < c.los_probability;
    if los {
        c.gain_los * sample_rician(params.rician_k_db, rng)
    } else {
        c.gain_nlos * sample_rician(f64::NEG_INFINITY, rng)
    }
}

/// Deterministic LoS power-law gain between two UAVs.
pub fn u2u_gain(tx: Point3, rx: Point3, params: &RadioParams) -> Result<f64> {
    let d = distance(tx, rx);
    check_distance(d)?;
    Ok(power_law_gain(d, params.u2u_intercept_db, params.u2u_pathloss_exponent))
}

/// A radio endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Uav(usize),
    Bs,
}

/// Per-(transmitter, receiver, subchannel) linear power gains for one slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GainTable {
    entries: BTreeMap<(Node, Node, usize), f64>,
}

impl GainTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tx: Node, rx: Node, subchannel: usize, gain: f64) {
        self.entries.insert((tx, rx, subchannel), gain);
    }

    /// Insert the same gain on subchannels `0..n`.
    pub fn insert_flat(&mut self, tx: Node, rx: Node, n: usize, gain: f64) {
        for k in 0..n {
            self.insert(tx, rx, k, gain);
        }
    }

    pub fn get(&self, tx: Node, rx: Node, subchannel: usize) -> Result<f64> {
        self.entries
            .get(&(tx, rx, subchannel))
            .copied()
            .ok_or(Error::MissingGain { tx, rx, subchannel })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Expected gains between every UAV and the BS and between every ordered
    /// UAV pair, flat across `subchannels`.
    pub fn expected(
        positions: &[Point3],
        bs: Point3,
        subchannels: usize,
        params: &RadioParams,
    ) -> Result<Self> {
        let mut t = GainTable::new();
        for (i, &pi) in positions.iter().enumerate() {
            let g = u2n_expected_gain(pi, bs, params)?;
            t.insert_flat(Node::Uav(i), Node::Bs, subchannels, g);
            for (j, &pj) in positions.iter().enumerate() {
                if i != j {
                    t.insert_flat(Node::Uav(i), Node::Uav(j), subchannels, u2u_gain(pi, pj, params)?);
                }
            }
        }
        Ok(t)
    }

    /// A realized table: each UAV-to-BS entry gets an independent LoS draw
    /// and fade per subchannel; UAV-to-UAV entries are deterministic.
    pub fn realized<R: Rng + ?Sized>(
        positions: &[Point3],
        bs: Point3,
        subchannels: usize,
        params: &RadioParams,
        rng: &mut R,
    ) -> Result<Self> {
        let mut t = GainTable::new();
        for (i, &pi) in positions.iter().enumerate() {
            let c = u2n_components(pi, bs, params)?;
            for k in 0..subchannels {
                t.insert(Node::Uav(i), Node::Bs, k, u2n_realized_gain(&c, params, rng));
            }
            for (j, &pj) in positions.iter().enumerate() {
                if i != j {
                    t.insert_flat(Node::Uav(i), Node::Uav(j), subchannels, u2u_gain(pi, pj, params)?);
                }
            }
        }
        Ok(t)
    }
}

/// Receiving node of an assignment.
pub fn receiver(a: &Assignment) -> Node {
    match a.mode {
        Mode::U2n => Node::Bs,
        Mode::U2u { relay } => Node::Uav(relay),
    }
}

/// SINR of `link` on `subchannel`: own received power over co-channel
/// interference plus noise. Every other assignment holding the subchannel
/// interferes at the link's receiver.
pub fn sinr(
    link: &Assignment,
    subchannel: usize,
    assignments: &[Assignment],
    gains: &GainTable,
    params: &RadioParams,
) -> Result<f64> {
    let rx = receiver(link);
    let signal = link.tx_power * gains.get(Node::Uav(link.uav), rx, subchannel)?;
    let mut interference = 0.0;
    for other in assignments {
        if other.uav == link.uav || !other.subchannels.contains(&subchannel) {
            continue;
        }
        interference += other.tx_power * gains.get(Node::Uav(other.uav), rx, subchannel)?;
    }
    Ok(signal / (interference + params.noise_power()))
}

/// Sum rate of `link` over all its subchannels.
pub fn link_rate(
    link: &Assignment,
    assignments: &[Assignment],
    gains: &GainTable,
    params: &RadioParams,
) -> Result<f64> {
    let mut total = 0.0;
    for &k in &link.subchannels {
        total += rate(sinr(link, k, assignments, gains, params)?, params.bandwidth_per_subchannel);
    }
    Ok(total)
}

/// Shannon rate `B log2(1 + sinr)` in bits/s.
pub fn rate(sinr: f64, bandwidth: f64) -> f64 {
    bandwidth * (1.0 + sinr).log2()
}
