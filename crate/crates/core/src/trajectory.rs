//! Trajectory design: next sensing point, communication detours, and per-slot
//! speed control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{rate, u2n_expected_gain, u2u_gain, RadioParams};
use crate::error::{Error, Result};
use crate::geometry::{advance, distance, Point3, Segment, SphericalCrown};
use crate::sensing::{feasible_region, SensingModel, SensingTask};

const RANDOM_STARTS: usize = 8;
const ASCENT_MAX_ITERS: usize = 2000;
const ASCENT_REL_TOL: f64 = 1e-6;
/// Elevation samples in the coarse detour scan.
const DETOUR_SCAN: usize = 360;
const SPEED_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaypointKind {
    Sense(usize),
    Communicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub point: Point3,
    pub kind: WaypointKind,
}

/// A UAV's route. `next` indexes the waypoint currently flown toward;
/// `segment` runs from where the leg started to that waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub uav: usize,
    pub waypoints: Vec<Waypoint>,
    pub next: usize,
    pub segment: Segment,
    /// Absolute time (s) by which the active segment should be finished.
    pub segment_deadline: f64,
    /// Overall completion budget (s).
    pub completion_deadline: f64,
}

impl Plan {
    pub fn new(uav: usize, start: Point3, waypoints: Vec<Waypoint>, completion_deadline: f64) -> Self {
        let segment = Segment::new(start, waypoints.first().map_or(start, |w| w.point));
        Plan {
            uav,
            waypoints,
            next: 0,
            segment,
            segment_deadline: completion_deadline,
            completion_deadline,
        }
    }

    pub fn target(&self) -> Option<&Waypoint> {
        self.waypoints.get(self.next)
    }

    /// Route length from `from` through every waypoint not yet reached.
    pub fn remaining_length(&self, from: Point3) -> f64 {
        let mut total = 0.0;
        let mut at = from;
        for w in &self.waypoints[self.next.min(self.waypoints.len())..] {
            total += distance(at, w.point);
            at = w.point;
        }
        total
    }

    /// Start a leg from `from` to the current target. The leg's deadline is
    /// its length-proportional share of the time left after `reserved`
    /// seconds of planned hovering, never shorter than flying at `v_max`.
    pub fn start_leg(&mut self, from: Point3, now: f64, reserved: f64, v_max: f64) {
        let Some(target) = self.target().map(|w| w.point) else {
            self.segment = Segment::hover(from);
            self.segment_deadline = now;
            return;
        };
        self.segment = Segment::new(from, target);
        let len = self.segment.length();
        let total = self.remaining_length(from);
        let available = (self.completion_deadline - now - reserved).max(0.0);
        let share = if total > 0.0 { available * len / total } else { 0.0 };
        self.segment_deadline = now + share.max(len / v_max);
    }

    /// Insert a waypoint to be flown to before the current target.
    pub fn insert_before_next(&mut self, w: Waypoint) {
        self.waypoints.insert(self.next, w);
    }
}

fn log_gain(p: Point3, bs: Point3, params: &RadioParams) -> f64 {
    match u2n_expected_gain(p, bs, params) {
        Ok(g) if g > 0.0 => g.ln(),
        _ => f64::NEG_INFINITY,
    }
}

fn numeric_gradient(f: &impl Fn(Point3) -> f64, p: Point3, h: f64) -> Point3 {
    let d = |e: Point3| (f(p.add(e.scale(h))) - f(p.sub(e.scale(h)))) / (2.0 * h);
    Point3::new(
        d(Point3::new(1., 0., 0.)),
        d(Point3::new(0., 1., 0.)),
        d(Point3::new(0., 0., 1.)),
    )
}

/// Projected gradient ascent on `f` over `crown` from `start`. The step moves
/// along the normalized gradient, doubling after an improvement and halving
/// after a failure, until the step is negligible.
fn crown_ascent(crown: &SphericalCrown, f: &impl Fn(Point3) -> f64, start: Point3) -> (Point3, f64) {
    let scale = crown.radius.max(1.0);
    let mut p = crown.project(start);
    let mut val = f(p);
    let mut step = 0.5 * scale;
    for _ in 0..ASCENT_MAX_ITERS {
        if step < ASCENT_REL_TOL * 1e-3 * scale {
            break;
        }
        let g = numeric_gradient(f, p, 1e-4 * scale.min(10.0));
        let norm = g.norm();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        let trial = crown.project(p.add(g.scale(step / norm)));
        let tv = f(trial);
        if tv > val {
            p = trial;
            val = tv;
            step = (step * 2.0).min(scale);
        } else {
            step *= 0.5;
        }
    }
    (p, val)
}

fn random_member(crown: &SphericalCrown, rng: &mut ChaCha8Rng) -> Point3 {
    let (lo, hi) = crown.bounding_box();
    for _ in 0..1000 {
        let p = Point3::new(
            rng.random_range(lo.x..=hi.x),
            rng.random_range(lo.y..=hi.y),
            rng.random_range(lo.z..=hi.z),
        );
        if crown.contains(p) {
            return p;
        }
    }
    crown.closest_to_center()
}

/// Point of the task's feasible crown with the best expected U2N gain,
/// found by multi-start projected gradient ascent (from the crown point
/// nearest the BS, the apex, and eight pseudo-random members seeded by the
/// task id).
pub fn plan_next_sensing_point(
    current: Point3,
    next_task: &SensingTask,
    model: &SensingModel,
    bs: Point3,
    params: &RadioParams,
) -> Result<Point3> {
    let crown = feasible_region(model, next_task)?;
    if crown.radius == 0.0 {
        return Ok(crown.center);
    }
    let f = |p: Point3| log_gain(p, bs, params);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e75_0000 ^ next_task.id as u64);
    let mut starts = vec![crown.project(bs), crown.apex(), crown.project(current)];
    starts.extend((0..RANDOM_STARTS).map(|_| random_member(&crown, &mut rng)));
    let mut best = (crown.apex(), f64::NEG_INFINITY);
    for s in starts {
        let (p, v) = crown_ascent(&crown, &f, s);
        if v > best.1 {
            best = (p, v);
        }
    }
    Ok(best.0)
}

/// Crown point with the highest sensing success probability.
pub fn best_sensing_location(next_task: &SensingTask, model: &SensingModel) -> Result<Point3> {
    Ok(feasible_region(model, next_task)?.closest_to_center())
}

/// Interference-free expected U2N rate on one subchannel at `tx_power`.
pub fn expected_u2n_rate(p: Point3, bs: Point3, params: &RadioParams, tx_power: f64) -> f64 {
    match u2n_expected_gain(p, bs, params) {
        Ok(g) => rate(tx_power * g / params.noise_power(), params.bandwidth_per_subchannel),
        Err(_) => 0.0,
    }
}

/// Nearest point to `sensing_point` (at or above `min_altitude`) whose
/// expected single-subchannel U2N rate reaches `r_min`.
///
/// The gain is symmetric about the BS's vertical axis, so the search runs in
/// the vertical half-plane through that axis and the sensing point. Along a
/// ray from the BS at fixed elevation the expected gain is strictly
/// decreasing, so each ray's feasible part is an interval whose outer end is
/// found by bisection. The distance to that interval is minimized over the
/// elevation by a coarse scan followed by golden-section refinement.
pub fn plan_communication_detour(
    sensing_point: Point3,
    bs: Point3,
    params: &RadioParams,
    tx_power: f64,
    r_min: f64,
    min_altitude: f64,
) -> Result<Point3> {
    if r_min <= 0.0 || expected_u2n_rate(sensing_point, bs, params, tx_power) >= r_min {
        return Ok(sensing_point);
    }
    let noise = params.noise_power();
    let g_req = (2f64.powf(r_min / params.bandwidth_per_subchannel) - 1.0) * noise / tx_power;
    let floor_h = min_altitude - bs.z;
    let overhead = Point3::new(bs.x, bs.y, bs.z + floor_h.max(1.0));
    let best_rate = expected_u2n_rate(overhead, bs, params, tx_power);
    if best_rate < r_min {
        return Err(Error::UnreachableQos {
            best: best_rate,
            required: r_min,
        });
    }

    let h = sensing_point.horizontal_distance(bs);
    let (ux, uy) = if h > 0.0 {
        ((sensing_point.x - bs.x) / h, (sensing_point.y - bs.y) / h)
    } else {
        (1.0, 0.0)
    };
    let s = (h, sensing_point.z - bs.z);
    let at = |rho: f64, up: f64| Point3::new(bs.x + rho * ux, bs.y + rho * uy, bs.z + up);
    let gain_at = |r: f64, phi: f64| -> f64 {
        u2n_expected_gain(at(r * phi.cos(), r * phi.sin()), bs, params).unwrap_or(0.0)
    };

    // Closest feasible point on the ray at elevation phi (radians).
    let ray = |phi: f64| -> Option<(f64, f64)> {
        let sin = phi.sin();
        let r_lo = if floor_h > 0.0 { (floor_h / sin).max(1.0) } else { 1.0 };
        if !r_lo.is_finite() || gain_at(r_lo, phi) < g_req {
            return None;
        }
        let mut hi = r_lo * 2.0;
        while gain_at(hi, phi) >= g_req {
            hi *= 2.0;
        }
        let mut lo = r_lo;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if gain_at(mid, phi) >= g_req {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let proj = (s.0 * phi.cos() + s.1 * sin).clamp(r_lo, lo);
        let d = (proj * phi.cos() - s.0).hypot(proj * sin - s.1);
        Some((d, proj))
    };

    let half_pi = std::f64::consts::FRAC_PI_2;
    let dphi = half_pi / DETOUR_SCAN as f64;
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 1..=DETOUR_SCAN {
        let phi = i as f64 * dphi;
        if let Some((d, r)) = ray(phi) {
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, phi, r));
            }
        }
    }
    let (mut bd, mut bphi, mut br) = best.expect("overhead point is feasible");
    // Golden-section refinement around the best scanned elevation.
    let (mut a, mut b) = ((bphi - dphi).max(1e-9), (bphi + dphi).min(half_pi));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |phi: f64| ray(phi).map_or(f64::INFINITY, |(d, _)| d);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }
    for phi in [c, d] {
        if let Some((dist, r)) = ray(phi) {
            if dist < bd {
                bd = dist;
                bphi = phi;
                br = r;
            }
        }
    }
    Ok(at(br * bphi.cos(), br * bphi.sin()))
}

/// Receiver of the link whose rate constrains a UAV's speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Peer {
    Bs(Point3),
    Uav(Point3),
}

/// Inputs to per-slot speed control. Interference is frozen: each entry of
/// `interference_plus_noise` is the total received interference plus noise on
/// one of the link's subchannels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProblem<'a> {
    pub position: Point3,
    pub segment: Segment,
    pub peer: Peer,
    pub tx_power: f64,
    pub interference_plus_noise: &'a [f64],
    pub r_min: f64,
    pub v_max: f64,
    pub dt: f64,
}

/// Time bookkeeping for the active segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlineState {
    pub now: f64,
    pub segment_deadline: f64,
}

impl SpeedProblem<'_> {
    /// Link rate after flying at `v` for one slot.
    pub fn rate_after(&self, v: f64, params: &RadioParams) -> f64 {
        let Ok(p) = advance(self.position, &self.segment, v, self.dt) else {
            return 0.0;
        };
        let gain = match self.peer {
            Peer::Bs(bs) => u2n_expected_gain(p, bs, params),
            Peer::Uav(q) => u2u_gain(p, q, params),
        };
        let Ok(g) = gain else { return 0.0 };
        self.interference_plus_noise
            .iter()
            .map(|i| rate(self.tx_power * g / i, params.bandwidth_per_subchannel))
            .sum()
    }

    /// Lowest speed that still finishes the segment by its deadline.
    pub fn v_floor(&self, deadline: DeadlineState) -> f64 {
        let remaining = distance(self.position, self.segment.end);
        let left = deadline.segment_deadline - deadline.now;
        if remaining == 0.0 {
            0.0
        } else if left <= 0.0 {
            self.v_max
        } else {
            (remaining / left).min(self.v_max)
        }
    }
}

/// Largest speed in `[v_floor, v_max]` whose end-of-slot position keeps the
/// link rate at or above `r_min`.
///
/// Distance to a fixed peer is convex along a straight leg, so the feasible
/// speeds form an interval. The rate is maximized over the speed range by
/// golden section; if even that maximum misses `r_min` the deadline and the
/// rate constraint conflict. Otherwise the upper end of the feasible
/// interval is located by bisection.
pub fn control_speed(sp: &SpeedProblem, params: &RadioParams, deadline: DeadlineState) -> Result<f64> {
    let v_floor = sp.v_floor(deadline);
    let v_max = sp.v_max;
    if sp.segment.is_hover() || distance(sp.position, sp.segment.end) == 0.0 {
        return Ok(0.0);
    }
    let r = |v: f64| sp.rate_after(v, params);
    if sp.r_min <= 0.0 || r(v_max) >= sp.r_min {
        return Ok(v_max);
    }
    // Golden-section search for the rate-maximizing speed.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (v_floor, v_max);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (r(c), r(d));
    while b - a > SPEED_TOL * 1e-2 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = r(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = r(d);
        }
    }
    let mut v_best = 0.5 * (a + b);
    for v in [v_floor, a, b] {
        if r(v) > r(v_best) {
            v_best = v;
        }
    }
    if r(v_best) < sp.r_min {
        return Err(Error::DeadlineQosConflict { v_floor });
    }
    let (mut lo, mut hi) = (v_best, v_max);
    while hi - lo > SPEED_TOL * 0.5 {
        let mid = 0.5 * (lo + hi);
        if r(mid) >= sp.r_min {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
