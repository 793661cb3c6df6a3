//! Scenario files (TOML). Unknown keys are rejected; validation errors name
//! the offending key.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::RadioParams;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::protocol::DEFAULT_SNR_THRESHOLD_DB;
use crate::rrm::{DEFAULT_NODE_BUDGET, MAX_SUBCHANNELS};
use crate::sensing::SensingModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Cooperative,
    Noncooperative,
    Separate,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Cooperative, Scheme::Noncooperative, Scheme::Separate];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Cooperative => "cooperative",
            Scheme::Noncooperative => "noncooperative",
            Scheme::Separate => "separate",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cooperative" | "coop" => Ok(Scheme::Cooperative),
            "noncooperative" | "noncoop" => Ok(Scheme::Noncooperative),
            "separate" => Ok(Scheme::Separate),
            _ => Err(Error::validation(
                "scheme",
                format!("unknown scheme `{s}` (expected cooperative, noncooperative or separate)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BsSpec {
    position: Option<Point3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSpec {
    pub id: usize,
    pub position: Point3,
    /// Task ids, in execution order.
    pub tasks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: usize,
    pub center: Point3,
    pub failure_tolerance: f64,
    /// Bits.
    pub data_volume: f64,
    #[serde(default = "one")]
    pub sense_slots_required: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: Option<u64>,
    scheme: Option<Scheme>,
    subchannels: Option<usize>,
    snr_threshold_db: Option<f64>,
    r_min: Option<f64>,
    p_max: Option<f64>,
    v_max: Option<f64>,
    slot_duration: Option<f64>,
    total_slots: Option<u64>,
    completion_budget: Option<f64>,
    node_budget: Option<u64>,
    bs: Option<BsSpec>,
    #[serde(default)]
    radio: RadioParams,
    #[serde(default)]
    sensing: SensingModel,
    #[serde(default)]
    uav: Vec<UavSpec>,
    #[serde(default)]
    task: Vec<TaskSpec>,
}

/// A validated scenario. UAVs are sorted by id; `uavs[i]` is UAV index `i`
/// everywhere in the engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub seed: u64,
    pub scheme: Scheme,
    pub subchannels: usize,
    pub snr_threshold_db: f64,
    /// Minimum link rate, bits/s.
    pub r_min: f64,
    /// Per-subchannel transmit power cap, W.
    pub p_max: f64,
    pub v_max: f64,
    /// Seconds.
    pub slot_duration: f64,
    pub total_slots: u64,
    /// Seconds from the start by which every task should be finished.
    pub completion_budget: f64,
    pub node_budget: u64,
    pub bs: Point3,
    pub radio: RadioParams,
    pub sensing: SensingModel,
    pub uavs: Vec<UavSpec>,
    pub tasks: Vec<TaskSpec>,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::validation(key, "must be a finite number > 0"))
    }
}

fn required<T>(key: &str, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| Error::validation(key, "missing"))
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text)?;
        let bs = required("bs.position", f.bs.and_then(|b| b.position))?;
        let subchannels = required("subchannels", f.subchannels)?;
        let total_slots = required("total_slots", f.total_slots)?;
        if total_slots == 0 {
            return Err(Error::validation("total_slots", "must be > 0"));
        }
        let slot_duration = positive("slot_duration", f.slot_duration.unwrap_or(0.1))?;
        let snr_threshold_db = f.snr_threshold_db.unwrap_or(DEFAULT_SNR_THRESHOLD_DB);
        if !snr_threshold_db.is_finite() {
            return Err(Error::validation("snr_threshold_db", "must be finite"));
        }
        let r_min = f.r_min.unwrap_or(0.0);
        if !(r_min >= 0.0 && r_min.is_finite()) {
            return Err(Error::validation("r_min", "must be >= 0"));
        }
        let completion_budget = match f.completion_budget {
            Some(b) => positive("completion_budget", b)?,
            None => total_slots as f64 * slot_duration,
        };
        let s = Scenario {
            seed: f.seed.unwrap_or(0),
            scheme: f.scheme.unwrap_or(Scheme::Cooperative),
            subchannels,
            snr_threshold_db,
            r_min,
            p_max: positive("p_max", f.p_max.unwrap_or(0.2))?,
            v_max: positive("v_max", f.v_max.unwrap_or(20.0))?,
            slot_duration,
            total_slots,
            completion_budget,
            node_budget: f.node_budget.unwrap_or(DEFAULT_NODE_BUDGET),
            bs,
            radio: f.radio,
            sensing: f.sensing,
            uavs: f.uav,
            tasks: f.task,
        };
        s.validate()?;
        let mut s = s;
        s.uavs.sort_by_key(|u| u.id);
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        self.sensing.validate()?;
        if self.subchannels == 0 || self.subchannels > MAX_SUBCHANNELS {
            return Err(Error::validation(
                "subchannels",
                format!("must be between 1 and {MAX_SUBCHANNELS}"),
            ));
        }
        if !self.bs.is_finite() || self.bs.z < 0.0 {
            return Err(Error::validation("bs.position", "must be finite with z >= 0"));
        }
        if self.node_budget == 0 {
            return Err(Error::validation("node_budget", "must be > 0"));
        }
        if self.uavs.is_empty() {
            return Err(Error::validation("uav", "at least one UAV is required"));
        }
        let mut task_ids = BTreeSet::new();
        for t in &self.tasks {
            if !task_ids.insert(t.id) {
                return Err(Error::validation("task.id", format!("duplicate id {}", t.id)));
            }
            if !t.center.is_finite() || t.center.z < 0.0 {
                return Err(Error::validation("task.center", format!("task {}: must be finite with z >= 0", t.id)));
            }
            if !(t.failure_tolerance > 0.0 && t.failure_tolerance < 1.0) {
                return Err(Error::validation(
                    "task.failure_tolerance",
                    format!("task {}: must lie in (0, 1)", t.id),
                ));
            }
            if !(t.data_volume >= 0.0 && t.data_volume.is_finite()) {
                return Err(Error::validation("task.data_volume", format!("task {}: must be >= 0", t.id)));
            }
            if t.sense_slots_required == 0 {
                return Err(Error::validation(
                    "task.sense_slots_required",
                    format!("task {}: must be > 0", t.id),
                ));
            }
        }
        let mut uav_ids = BTreeSet::new();
        let mut claimed = BTreeSet::new();
        for u in &self.uavs {
            if !uav_ids.insert(u.id) {
                return Err(Error::validation("uav.id", format!("duplicate id {}", u.id)));
            }
            if !u.position.is_finite() || u.position.z <= self.bs.z {
                return Err(Error::validation(
                    "uav.position",
                    format!("UAV {}: must be finite and above the BS", u.id),
                ));
            }
            for t in &u.tasks {
                if !task_ids.contains(t) {
                    return Err(Error::validation("uav.tasks", format!("UAV {}: unknown task {t}", u.id)));
                }
                if !claimed.insert(*t) {
                    return Err(Error::validation("uav.tasks", format!("task {t} is assigned twice")));
                }
            }
        }
        if self.sensing.min_altitude <= self.bs.z {
            return Err(Error::validation("sensing.min_altitude", "must be above the BS height"));
        }
        Ok(())
    }

    pub fn task_index(&self, id: usize) -> usize {
        self.tasks.iter().position(|t| t.id == id).expect("validated task id")
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_subchannels(mut self, k: usize) -> Self {
        self.subchannels = k;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
total_slots = 10
subchannels = 2
[bs]
position = [0.0, 0.0, 25.0]
[[uav]]
id = 0
position = [0.0, 0.0, 100.0]
tasks = [1]
[[task]]
id = 1
center = [100.0, 0.0, 0.0]
failure_tolerance = 0.5
data_volume = 1e6
"#;

    #[test]
    fn minimal_defaults() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.snr_threshold_db, 20.0);
        assert_eq!(s.scheme, Scheme::Cooperative);
        assert_eq!(s.slot_duration, 0.1);
        assert_eq!(s.v_max, 20.0);
        assert_eq!(s.tasks[0].sense_slots_required, 1);
        assert!((s.completion_budget - 1.0).abs() < 1e-12);
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Validation { key, .. } => key,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn missing_bs_names_key() {
        let text = MINIMAL.replace("[bs]\nposition = [0.0, 0.0, 25.0]\n", "");
        assert_eq!(key_of(Scenario::parse(&text).unwrap_err()), "bs.position");
    }

    #[test]
    fn zero_subchannels_rejected() {
        let text = MINIMAL.replace("subchannels = 2", "subchannels = 0");
        assert_eq!(key_of(Scenario::parse(&text).unwrap_err()), "subchannels");
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = MINIMAL.replace("total_slots = 10", "total_slots = 10\nsubchanels = 3");
        let e = Scenario::parse(&text).unwrap_err();
        assert!(matches!(e, Error::Parse(_)));
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("subchanels"));
        let text = MINIMAL.replace("[bs]", "[radio]\nbandwith = 1.0\n[bs]");
        assert!(Scenario::parse(&text).unwrap_err().to_string().contains("bandwith"));
    }

    #[test]
    fn unknown_task_reference() {
        let text = MINIMAL.replace("tasks = [1]", "tasks = [1, 9]");
        assert_eq!(key_of(Scenario::parse(&text).unwrap_err()), "uav.tasks");
    }

    #[test]
    fn scheme_names() {
        assert_eq!("noncooperative".parse::<Scheme>().unwrap(), Scheme::Noncooperative);
        assert!("bogus".parse::<Scheme>().is_err());
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
    }
}
