//! Distance-dependent sensing success, the feasible sensing crown, and
//! per-slot sensing progress.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Point3, SphericalCrown};

const MEMBERSHIP_TOL: f64 = 1e-6;

/// `p_success(d) = exp(-decay * d)` plus the altitude floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingModel {
    /// 1/m.
    pub decay: f64,
    pub min_altitude: f64,
    /// Upper bound on the crown radius for very loose tolerances.
    pub max_radius: f64,
}

impl Default for SensingModel {
    fn default() -> Self {
        SensingModel {
            decay: 0.004,
            min_altitude: 50.0,
            max_radius: 1000.0,
        }
    }
}

impl SensingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::validation("sensing.decay", "must be > 0"));
        }
        if !(self.min_altitude >= 0.0 && self.min_altitude.is_finite()) {
            return Err(Error::validation("sensing.min_altitude", "must be >= 0"));
        }
        if !(self.max_radius > 0.0) {
            return Err(Error::validation("sensing.max_radius", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskState {
    Pending,
    Active,
    Sensed,
    Delivered,
}

impl TaskState {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskState::Pending => "pending",
            TaskState::Active => "active",
            TaskState::Sensed => "sensed",
            TaskState::Delivered => "delivered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingTask {
    pub id: usize,
    pub center: Point3,
    pub failure_tolerance: f64,
    /// Total payload in bits.
    pub data_volume: f64,
    /// Bits sensed so far and available for upload.
    pub collected: f64,
    /// Bits that reached the BS.
    pub delivered: f64,
    pub sensed_slots: u32,
    pub sense_slots_required: u32,
    pub state: TaskState,
}

impl SensingTask {
    pub fn new(
        id: usize,
        center: Point3,
        failure_tolerance: f64,
        data_volume: f64,
        sense_slots_required: u32,
    ) -> Self {
        SensingTask {
            id,
            center,
            failure_tolerance,
            data_volume,
            collected: 0.0,
            delivered: 0.0,
            sensed_slots: 0,
            sense_slots_required,
            state: TaskState::Pending,
        }
    }

    /// Bits collected but not yet delivered.
    pub fn backlog(&self) -> f64 {
        (self.collected - self.delivered).max(0.0)
    }

    pub fn activate(&mut self) {
        if self.state == TaskState::Pending {
            self.state = TaskState::Active;
        }
    }

    /// Account `bits` as delivered, capped at the backlog. Returns the bits
    /// actually taken.
    pub fn deliver(&mut self, bits: f64) -> f64 {
        let take = bits.min(self.backlog()).max(0.0);
        self.delivered += take;
        if self.backlog() <= self.data_volume * 1e-12 {
            self.delivered = self.collected;
        }
        self.maybe_complete();
        take
    }

    fn maybe_complete(&mut self) {
        if self.state == TaskState::Sensed && self.delivered >= self.data_volume {
            self.state = TaskState::Delivered;
        }
    }
}

pub fn success_probability(model: &SensingModel, uav: Point3, task: &SensingTask) -> f64 {
    (-model.decay * distance(uav, task.center)).exp()
}

/// The crown where the failure probability stays within the task tolerance.
pub fn feasible_region(model: &SensingModel, task: &SensingTask) -> Result<SphericalCrown> {
    if !(task.failure_tolerance > 0.0 && task.failure_tolerance < 1.0) {
        return Err(Error::validation("task.failure_tolerance", "must be in (0, 1)"));
    }
    let radius = (-(1.0 - task.failure_tolerance).ln() / model.decay).min(model.max_radius);
    let crown = SphericalCrown::new(task.center, radius, model.min_altitude);
    if crown.is_empty() {
        return Err(Error::InfeasibleTask { task: task.id });
    }
    Ok(crown)
}

/// One sensing slot at `uav`. Returns whether the slot succeeded.
pub fn record_sensing<R: Rng + ?Sized>(
    task: &mut SensingTask,
    uav: Point3,
    model: &SensingModel,
    rng: &mut R,
) -> Result<bool> {
    if task.state != TaskState::Active {
        return Err(Error::TaskNotActive {
            task: task.id,
            state: task.state.as_str(),
        });
    }
    let crown = feasible_region(model, task)?;
    if distance(uav, crown.center) > crown.radius + MEMBERSHIP_TOL
        || uav.z < crown.min_altitude - MEMBERSHIP_TOL
    {
        return Err(Error::OutOfRegion { task: task.id });
    }
    let success = rng.random::<f64>() < success_probability(model, uav, task);
    if success {
        task.sensed_slots += 1;
        if task.sensed_slots >= task.sense_slots_required {
            task.collected = task.data_volume;
            task.state = TaskState::Sensed;
            task.maybe_complete();
        } else {
            let per_slot = task.data_volume / task.sense_slots_required as f64;
            task.collected = (per_slot * task.sensed_slots as f64).min(task.data_volume);
        }
    }
    Ok(success)
}
