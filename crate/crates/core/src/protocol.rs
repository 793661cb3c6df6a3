//! The slotted sense-and-send protocol: beacons, mode selection and relay
//! pairing. The per-slot engine lives in [`crate::sim`]; [`run_slot`] is its
//! entry point.

use serde::{Deserialize, Serialize};

use crate::channel::{linear_to_db, u2n_expected_gain, RadioParams};
use crate::error::{Error, Result};
use crate::geometry::{distance, Point3};
use crate::rrm::LinkKind;

pub use crate::sim::run_slot;

/// Mode-selection threshold used when a scenario does not set one.
pub const DEFAULT_SNR_THRESHOLD_DB: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotPhase {
    Report,
    ModeSelection,
    DesignAndAllocate,
    Transmission,
}

impl SlotPhase {
    pub const ORDER: [SlotPhase; 4] = [
        SlotPhase::Report,
        SlotPhase::ModeSelection,
        SlotPhase::DesignAndAllocate,
        SlotPhase::Transmission,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    U2n,
    U2u { relay: usize },
}

impl Mode {
    pub fn kind(self) -> LinkKind {
        match self {
            Mode::U2n => LinkKind::U2n,
            Mode::U2u { .. } => LinkKind::U2u,
        }
    }

    pub fn relay(self) -> Option<usize> {
        match self {
            Mode::U2n => None,
            Mode::U2u { relay } => Some(relay),
        }
    }
}

/// One link's decision for a slot. `tx_power` applies on each held
/// subchannel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub uav: usize,
    pub mode: Mode,
    pub subchannels: Vec<usize>,
    pub tx_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub uav: usize,
    pub position: Point3,
    pub timestamp: u64,
}

/// One beacon per UAV, in id order.
pub fn collect_reports(uavs: &[(usize, Point3)], slot: u64) -> Vec<Beacon> {
    let mut out: Vec<Beacon> = uavs
        .iter()
        .map(|&(uav, position)| Beacon {
            uav,
            position,
            timestamp: slot,
        })
        .collect();
    out.sort_by_key(|b| b.uav);
    out
}

/// Interference-free SNR (dB) of a single-subchannel U2N link at `p_max`,
/// using the expected gain.
pub fn expected_snr_db(position: Point3, bs: Point3, params: &RadioParams, p_max: f64) -> Result<f64> {
    let g = u2n_expected_gain(position, bs, params)?;
    Ok(linear_to_db(p_max * g / params.noise_power()))
}

/// U2N when the SNR reaches the threshold (boundary included), else U2U.
pub fn select_mode(snr_db: f64, threshold_db: f64) -> LinkKind {
    if snr_db >= threshold_db {
        LinkKind::U2n
    } else {
        LinkKind::U2u
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayCandidate {
    pub uav: usize,
    pub position: Point3,
    pub snr_db: f64,
}

/// Nearest candidate whose own U2N SNR meets the threshold; ties go to the
/// lowest id.
pub fn pair_relay(
    requester: usize,
    position: Point3,
    candidates: &[RelayCandidate],
    threshold_db: f64,
) -> Result<usize> {
    candidates
        .iter()
        .filter(|c| c.uav != requester && c.snr_db >= threshold_db)
        .map(|c| (distance(position, c.position), c.uav))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .ok_or(Error::NoRelayAvailable { requester })
}
