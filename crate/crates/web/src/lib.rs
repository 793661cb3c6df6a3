//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string. The same functions are plain Rust
//! underneath so they can be tested natively.

use serde::Serialize;
use uavcoop::channel::{linear_to_db, los_probability, u2n_expected_gain, RadioParams};
use uavcoop::geometry::{elevation_angle, Point3};
use uavcoop::protocol::expected_snr_db;
use uavcoop::sensing::{feasible_region, SensingModel, SensingTask};
use uavcoop::trajectory::plan_next_sensing_point;
use uavcoop::{Scenario, Scheme};
use wasm_bindgen::prelude::*;

const COMPARISON: &str = include_str!("../../../scenarios/comparison.toml");
const BS: Point3 = Point3 { x: 0.0, y: 0.0, z: 25.0 };
const P_MAX: f64 = 0.2;

#[derive(Serialize)]
struct ProfilePoint {
    range: f64,
    elevation_deg: f64,
    los: f64,
    gain_db: f64,
    snr_db: f64,
}

pub fn gain_profile_json(altitude: f64, max_range: f64, steps: usize) -> Result<String, String> {
    if !(altitude > BS.z) || !(max_range > 0.0) || steps < 2 {
        return Err("altitude must exceed the BS height, range must be positive".into());
    }
    let params = RadioParams::default();
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let range = max_range * i as f64 / (steps - 1) as f64;
        let p = Point3::new(range, 0.0, altitude);
        let elevation_deg = elevation_angle(BS, p).map_err(|e| e.to_string())?;
        let gain = u2n_expected_gain(p, BS, &params).map_err(|e| e.to_string())?;
        out.push(ProfilePoint {
            range,
            elevation_deg,
            los: los_probability(elevation_deg, &params),
            gain_db: linear_to_db(gain),
            snr_db: expected_snr_db(p, BS, &params, P_MAX).map_err(|e| e.to_string())?,
        });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SensingView {
    center: Point3,
    radius: f64,
    min_altitude: f64,
    best: Point3,
    closest: Point3,
    best_snr_db: f64,
    closest_snr_db: f64,
}

pub fn sensing_point_json(task_x: f64, task_y: f64, tolerance: f64, decay: f64) -> Result<String, String> {
    let params = RadioParams::default();
    let model = SensingModel {
        decay,
        ..SensingModel::default()
    };
    model.validate().map_err(|e| e.to_string())?;
    let task = SensingTask::new(0, Point3::new(task_x, task_y, 0.0), tolerance, 1.0, 1);
    let crown = feasible_region(&model, &task).map_err(|e| e.to_string())?;
    let best = plan_next_sensing_point(crown.apex(), &task, &model, BS, &params).map_err(|e| e.to_string())?;
    let closest = crown.closest_to_center();
    let snr = |p| expected_snr_db(p, BS, &params, P_MAX).map_err(|e| e.to_string());
    let view = SensingView {
        center: crown.center,
        radius: crown.radius,
        min_altitude: crown.min_altitude,
        best,
        closest,
        best_snr_db: snr(best)?,
        closest_snr_db: snr(closest)?,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Track {
    id: usize,
    xy: Vec<[f64; 2]>,
    relayed_slots: usize,
}

#[derive(Serialize)]
struct SimulationView {
    scheme: String,
    subchannels: usize,
    seed: u64,
    mean_sum_rate: f64,
    completion_time: Option<f64>,
    delivered_bits: f64,
    bs: [f64; 2],
    tasks: Vec<[f64; 2]>,
    tracks: Vec<Track>,
    sum_rate: Vec<f64>,
}

pub fn simulate_json(scheme: &str, subchannels: usize, seed: u64) -> Result<String, String> {
    let scheme: Scheme = scheme.parse().map_err(|e: uavcoop::Error| e.to_string())?;
    let s = Scenario::parse(COMPARISON)
        .map_err(|e| e.to_string())?
        .with_scheme(scheme)
        .with_seed(seed)
        .with_subchannels(subchannels);
    s.validate().map_err(|e| e.to_string())?;
    let out = uavcoop::run(&s).map_err(|e| e.to_string())?;
    let mut tracks: Vec<Track> = s
        .uavs
        .iter()
        .map(|u| Track {
            id: u.id,
            xy: vec![[u.position.x, u.position.y]],
            relayed_slots: 0,
        })
        .collect();
    for r in &out.records {
        for (t, u) in tracks.iter_mut().zip(&r.uavs) {
            t.xy.push([u.position.x, u.position.y]);
            if u.relay.is_some() && r.link(u.id).is_some() {
                t.relayed_slots += 1;
            }
        }
    }
    let sm = &out.summary;
    let view = SimulationView {
        scheme: scheme.to_string(),
        subchannels,
        seed,
        mean_sum_rate: sm.mean_sum_rate,
        completion_time: sm.completion_time.is_finite().then_some(sm.completion_time),
        delivered_bits: sm.delivered_bits,
        bs: [s.bs.x, s.bs.y],
        tasks: s.tasks.iter().map(|t| [t.center.x, t.center.y]).collect(),
        tracks,
        sum_rate: out.records.iter().map(|r| r.sum_rate).collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Expected LoS probability, gain and SNR against horizontal range.
#[wasm_bindgen]
pub fn gain_profile(altitude: f64, max_range: f64, steps: usize) -> Result<String, JsError> {
    gain_profile_json(altitude, max_range, steps).map_err(|e| JsError::new(&e))
}

/// Feasible sensing region of a task and the planner's sensing point.
#[wasm_bindgen]
pub fn sensing_point(task_x: f64, task_y: f64, tolerance: f64, decay: f64) -> Result<String, JsError> {
    sensing_point_json(task_x, task_y, tolerance, decay).map_err(|e| JsError::new(&e))
}

/// Run the built-in five-UAV scenario and return tracks and sum rates.
#[wasm_bindgen]
pub fn simulate(scheme: &str, subchannels: usize, seed: u64) -> Result<String, JsError> {
    simulate_json(scheme, subchannels, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_snr_falls_with_range() {
        let v: serde_json::Value = serde_json::from_str(&gain_profile_json(100.0, 2000.0, 50).unwrap()).unwrap();
        let snr: Vec<f64> = v.as_array().unwrap().iter().map(|p| p["snr_db"].as_f64().unwrap()).collect();
        assert_eq!(snr.len(), 50);
        assert!(snr.windows(2).skip(5).all(|w| w[1] < w[0]));
        assert!(gain_profile_json(10.0, 2000.0, 50).is_err());
    }

    #[test]
    fn sensing_point_beats_closest() {
        let v: serde_json::Value = serde_json::from_str(&sensing_point_json(800.0, 300.0, 0.5, 0.004).unwrap()).unwrap();
        assert!(v["best_snr_db"].as_f64().unwrap() >= v["closest_snr_db"].as_f64().unwrap());
        assert!(sensing_point_json(800.0, 300.0, 1.5, 0.004).is_err());
    }

    #[test]
    fn simulate_returns_tracks() {
        let v: serde_json::Value = serde_json::from_str(&simulate_json("noncooperative", 4, 1).unwrap()).unwrap();
        assert_eq!(v["tracks"].as_array().unwrap().len(), 5);
        assert_eq!(v["sum_rate"].as_array().unwrap().len(), 400);
        assert!(simulate_json("bogus", 4, 1).is_err());
    }
}
