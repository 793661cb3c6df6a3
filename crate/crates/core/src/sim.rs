//! Scheme orchestration: world state, the per-slot engine, full runs and
//! seeded replication.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{link_rate, u2n_components, u2n_expected_gain, u2n_realized_gain, Node};
use crate::error::{Error, Result};
use crate::geometry::{advance, distance, Point3, Segment};
use crate::protocol::{
    collect_reports, expected_snr_db, pair_relay, select_mode, Assignment, Mode, RelayCandidate,
};
use crate::rrm::{BnbOptions, Link, LinkKind};
use crate::scenario::{Scenario, Scheme};
use crate::sensing::{feasible_region, record_sensing, SensingTask, TaskState};
use crate::slot_opt::{link_gain_table, optimize_slot, SlotProblem, SlotUav};
use crate::trajectory::{
    best_sensing_location, plan_communication_detour, plan_next_sensing_point, DeadlineState, Plan,
    Waypoint, WaypointKind,
};

const ARRIVAL_TOL: f64 = 1e-6;
const FADING_STREAM: u64 = 1;
const SENSING_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Activity {
    Flying,
    /// Hovering at a sensing point; holds the task index.
    Sensing(usize),
    /// Hovering at a communication point until the backlog is empty.
    Uploading,
    Done,
}

impl Activity {
    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Flying => "flying",
            Activity::Sensing(_) => "sensing",
            Activity::Uploading => "uploading",
            Activity::Done => "done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UavState {
    pub id: usize,
    pub position: Point3,
    pub speed: f64,
    pub activity: Activity,
    pub plan: Plan,
    /// Task indices in execution order.
    pub tasks: Vec<usize>,
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkRecord {
    pub uav: usize,
    pub kind: LinkKind,
    /// Relay UAV id for U2U links.
    pub relay: Option<usize>,
    pub subchannels: Vec<usize>,
    pub power: f64,
    /// Effective per-subchannel SINR of the realized rate.
    pub sinr: f64,
    pub rate: f64,
    pub delivered_bits: f64,
    pub qos_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UavRecord {
    pub id: usize,
    pub position: Point3,
    pub speed: f64,
    pub activity: &'static str,
    pub mode: Option<LinkKind>,
    pub relay: Option<usize>,
    pub backlog: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: u64,
    /// End of the slot, seconds.
    pub time: f64,
    pub sum_rate: f64,
    pub links: Vec<LinkRecord>,
    pub uavs: Vec<UavRecord>,
    pub task_states: Vec<TaskState>,
    /// UAV ids that sensed in this slot.
    pub sensing: Vec<usize>,
    pub qos_violations: usize,
    pub delivered_bits: f64,
    pub bnb_nodes: u64,
    pub dc_iterations: usize,
    pub rounds: usize,
    pub suboptimal: bool,
}

impl SlotRecord {
    pub fn link(&self, uav: usize) -> Option<&LinkRecord> {
        self.links.iter().find(|l| l.uav == uav)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub record_tree: bool,
}

/// Complete simulation state for one run.
#[derive(Debug, Clone)]
pub struct World {
    pub scenario: Scenario,
    pub uavs: Vec<UavState>,
    pub tasks: Vec<SensingTask>,
    /// Last completed slot.
    pub slot: u64,
    pub completion_slot: Option<u64>,
    pub tree_dumps: Vec<(u64, String)>,
    opts: RunOptions,
    fading: ChaCha8Rng,
    sensing: ChaCha8Rng,
}

/// Sum that is `+0.0` when empty.
fn total(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(0.0, |a, b| a + b)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl World {
    pub fn new(scenario: Scenario, opts: RunOptions) -> Result<Self> {
        scenario.validate()?;
        let tasks: Vec<SensingTask> = scenario
            .tasks
            .iter()
            .map(|t| SensingTask::new(t.id, t.center, t.failure_tolerance, t.data_volume, t.sense_slots_required))
            .collect();
        let budget = scenario.completion_budget;
        let mut uavs = Vec::with_capacity(scenario.uavs.len());
        for u in &scenario.uavs {
            let order: Vec<usize> = u.tasks.iter().map(|&t| scenario.task_index(t)).collect();
            let mut waypoints = Vec::with_capacity(order.len());
            let mut at = u.position;
            for &ti in &order {
                let task = &tasks[ti];
                let point = match scenario.scheme {
                    Scheme::Cooperative => {
                        plan_next_sensing_point(at, task, &scenario.sensing, scenario.bs, &scenario.radio)?
                    }
                    // Shortest flight: the nearest feasible sensing point.
                    Scheme::Noncooperative => feasible_region(&scenario.sensing, task)?.project(at),
                    Scheme::Separate => best_sensing_location(task, &scenario.sensing)?,
                };
                waypoints.push(Waypoint {
                    point,
                    kind: WaypointKind::Sense(ti),
                });
                at = point;
            }
            uavs.push(UavState {
                id: u.id,
                position: u.position,
                speed: 0.0,
                activity: Activity::Flying,
                plan: Plan::new(u.id, u.position, waypoints, budget),
                tasks: order,
                mode: None,
            });
        }
        let seed = scenario.seed;
        let mut w = World {
            scenario,
            uavs,
            tasks,
            slot: 0,
            completion_slot: None,
            tree_dumps: Vec::new(),
            opts,
            fading: stream(seed, FADING_STREAM),
            sensing: stream(seed, SENSING_STREAM),
        };
        for i in 0..w.uavs.len() {
            w.depart(i, 0.0);
        }
        Ok(w)
    }

    pub fn backlog(&self, i: usize) -> f64 {
        total(self.uavs[i].tasks.iter().map(|&t| self.tasks[t].backlog()))
    }

    pub fn all_delivered(&self) -> bool {
        self.tasks.iter().all(|t| t.state == TaskState::Delivered)
    }

    /// Sensing time still ahead of UAV `i`, assuming every slot succeeds.
    fn reserved_hover(&self, i: usize) -> f64 {
        let slots: u32 = self.uavs[i]
            .tasks
            .iter()
            .map(|&t| &self.tasks[t])
            .filter(|t| t.state <= TaskState::Active)
            .map(|t| t.sense_slots_required - t.sensed_slots.min(t.sense_slots_required))
            .sum();
        slots as f64 * self.scenario.slot_duration
    }

    /// Leave for the next waypoint, or stop when none is left.
    fn depart(&mut self, i: usize, now: f64) {
        let reserved = self.reserved_hover(i);
        let v_max = self.scenario.v_max;
        let u = &mut self.uavs[i];
        if u.plan.target().is_none() {
            u.plan.start_leg(u.position, now, reserved, v_max);
            u.activity = Activity::Done;
            return;
        }
        u.plan.start_leg(u.position, now, reserved, v_max);
        u.activity = Activity::Flying;
        if u.plan.segment.length() <= ARRIVAL_TOL {
            self.arrive(i, now);
        }
    }

    fn arrive(&mut self, i: usize, now: f64) {
        let u = &mut self.uavs[i];
        let wp = *u.plan.target().expect("arrival requires a target");
        u.position = wp.point;
        u.plan.next += 1;
        u.plan.segment = Segment::hover(wp.point);
        match wp.kind {
            WaypointKind::Sense(ti) => {
                self.tasks[ti].activate();
                self.uavs[i].activity = Activity::Sensing(ti);
            }
            WaypointKind::Communicate => {
                self.uavs[i].activity = Activity::Uploading;
                if self.backlog(i) <= 0.0 {
                    self.depart(i, now);
                }
            }
        }
    }

    fn after_sensing(&mut self, i: usize, now: f64) -> Result<()> {
        let s = &self.scenario;
        if s.scheme == Scheme::Cooperative || self.backlog(i) <= 0.0 {
            self.depart(i, now);
            return Ok(());
        }
        let here = self.uavs[i].position;
        let comm = match plan_communication_detour(here, s.bs, &s.radio, s.p_max, s.r_min, s.sensing.min_altitude) {
            Ok(p) => p,
            // Upload in place at whatever rate the channel gives.
            Err(Error::UnreachableQos { .. }) => here,
            Err(e) => return Err(e),
        };
        if distance(comm, here) <= ARRIVAL_TOL {
            self.uavs[i].activity = Activity::Uploading;
        } else {
            self.uavs[i].plan.insert_before_next(Waypoint {
                point: comm,
                kind: WaypointKind::Communicate,
            });
            self.depart(i, now);
        }
        Ok(())
    }

    /// Take `bits` from UAV `i`'s tasks in order. Returns the bits taken.
    fn deliver(&mut self, i: usize, bits: f64) -> f64 {
        let mut left = bits;
        for k in 0..self.uavs[i].tasks.len() {
            if left <= 0.0 {
                break;
            }
            let t = self.uavs[i].tasks[k];
            left -= self.tasks[t].deliver(left);
        }
        bits - left.max(0.0)
    }
}

/// Round-robin orthogonal schedule of `n` links over `k` subchannels.
pub fn orthogonal_schedule(n: usize, k: usize, slot: u64) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n];
    if n == 0 || k == 0 {
        return out;
    }
    if n > k {
        let start = ((slot.saturating_sub(1)) as usize).wrapping_mul(k) % n;
        for j in 0..k {
            out[(start + j) % n].push(j);
        }
    } else {
        for ch in 0..k {
            out[(ch + slot as usize) % n].push(ch);
        }
    }
    out
}

/// Indices (into `items`) of at most `cap` entries chosen round robin.
fn round_robin_pick(count: usize, cap: usize, slot: u64) -> Vec<usize> {
    if count <= cap {
        return (0..count).collect();
    }
    let start = (slot.saturating_sub(1) as usize).wrapping_mul(cap) % count;
    let mut v: Vec<usize> = (0..cap).map(|j| (start + j) % count).collect();
    v.sort_unstable();
    v
}

/// Execute one slot: report, mode selection, design and allocation,
/// transmission. Sensing progress is recorded after transmission.
pub fn run_slot(world: &mut World) -> Result<SlotRecord> {
    let slot = world.slot + 1;
    step(world, slot).map_err(|e| e.at_slot(slot))
}

fn step(world: &mut World, slot: u64) -> Result<SlotRecord> {
    let sc = world.scenario.clone();
    let dt = sc.slot_duration;
    let t0 = (slot - 1) as f64 * dt;
    let n_uav = world.uavs.len();
    let k = sc.subchannels;

    // Report.
    let reports: Vec<(usize, Point3)> = world.uavs.iter().enumerate().map(|(i, u)| (i, u.position)).collect();
    let beacons = collect_reports(&reports, slot);

    // Mode selection.
    let backlog: Vec<f64> = (0..n_uav).map(|i| world.backlog(i)).collect();
    let eligible: Vec<bool> = (0..n_uav)
        .map(|i| {
            backlog[i] > 0.0 && !(sc.scheme == Scheme::Separate && matches!(world.uavs[i].activity, Activity::Sensing(_)))
        })
        .collect();
    let mut modes = vec![Mode::U2n; n_uav];
    let mut fallback = vec![false; n_uav];
    if sc.scheme == Scheme::Cooperative && k >= 2 {
        let snr: Vec<f64> = beacons
            .iter()
            .map(|b| expected_snr_db(b.position, sc.bs, &sc.radio, sc.p_max))
            .collect::<Result<_>>()?;
        let kinds: Vec<LinkKind> = snr.iter().map(|&s| select_mode(s, sc.snr_threshold_db)).collect();
        let mut free: Vec<RelayCandidate> = beacons
            .iter()
            .filter(|b| kinds[b.uav] == LinkKind::U2n)
            .map(|b| RelayCandidate {
                uav: b.uav,
                position: b.position,
                snr_db: snr[b.uav],
            })
            .collect();
        let mut requesters: Vec<usize> = (0..n_uav).filter(|&i| kinds[i] == LinkKind::U2u).collect();
        requesters.sort_by_key(|&i| (!eligible[i], i));
        for r in requesters {
            match pair_relay(r, beacons[r].position, &free, sc.snr_threshold_db) {
                Ok(relay) => {
                    modes[r] = Mode::U2u { relay };
                    free.retain(|c| c.uav != relay);
                }
                Err(Error::NoRelayAvailable { .. }) => fallback[r] = true,
                Err(e) => return Err(e),
            }
        }
    }
    for (u, m) in world.uavs.iter_mut().zip(&modes) {
        u.mode = Some(*m);
    }

    // Active links: U2N-type first (capped at k, round robin), then U2U links
    // whose relay transmits.
    let serving = |relay: usize| modes.iter().enumerate().any(|(j, m)| *m == Mode::U2u { relay } && eligible[j]);
    let u2n_uavs: Vec<usize> = (0..n_uav)
        .filter(|&i| modes[i] == Mode::U2n && (eligible[i] || serving(i)))
        .collect();
    let mut link_uav: Vec<usize> = round_robin_pick(u2n_uavs.len(), k, slot)
        .into_iter()
        .map(|j| u2n_uavs[j])
        .collect();
    for i in 0..n_uav {
        if let Mode::U2u { relay } = modes[i] {
            if eligible[i] && link_uav.contains(&relay) {
                link_uav.push(i);
            }
        }
    }
    link_uav.sort_unstable();
    let links: Vec<Link> = link_uav
        .iter()
        .map(|&i| match modes[i] {
            Mode::U2n => Link {
                kind: LinkKind::U2n,
                tx: Node::Uav(i),
                rx: Node::Bs,
                r_min: sc.r_min,
            },
            Mode::U2u { relay } => Link {
                kind: LinkKind::U2u,
                tx: Node::Uav(i),
                rx: Node::Uav(relay),
                r_min: sc.r_min,
            },
        })
        .collect();

    // Design and allocate.
    let slot_uavs: Vec<SlotUav> = world
        .uavs
        .iter()
        .map(|u| SlotUav {
            position: u.position,
            segment: if u.activity == Activity::Flying {
                u.plan.segment
            } else {
                Segment::hover(u.position)
            },
            deadline: DeadlineState {
                now: t0,
                segment_deadline: u.plan.segment_deadline,
            },
        })
        .collect();
    let mut qos_flag = vec![false; links.len()];
    let (speeds, subchannels, powers, bnb_nodes, dc_iterations, rounds, suboptimal) =
        if sc.scheme == Scheme::Cooperative {
            let prob = SlotProblem {
                uavs: &slot_uavs,
                links: &links,
                bs: sc.bs,
                params: &sc.radio,
                subchannels: k,
                p_max: sc.p_max,
                v_max: sc.v_max,
                dt,
                bnb: BnbOptions {
                    node_budget: sc.node_budget,
                    record_tree: world.opts.record_tree,
                },
            };
            let sol = optimize_slot(&prob)?;
            if let Some(dump) = sol.tree_dump.clone() {
                world.tree_dumps.push((slot, dump));
            }
            for (l, &i) in link_uav.iter().enumerate() {
                qos_flag[l] = sol.flagged[l] || sol.speed_conflicts[i];
            }
            let subs = (0..links.len()).map(|l| sol.allocation.subchannels(l)).collect();
            (sol.speeds, subs, sol.powers, sol.bnb.nodes, sol.dc_iterations, sol.rounds, sol.suboptimal)
        } else {
            let speeds = vec![sc.v_max; n_uav];
            let subs = orthogonal_schedule(links.len(), k, slot);
            (speeds, subs, vec![sc.p_max; links.len()], 0, 0, 0, false)
        };

    // Move.
    let mut recorded_speed = vec![0.0; n_uav];
    for (i, u) in world.uavs.iter_mut().enumerate() {
        if u.activity == Activity::Flying {
            u.position = advance(u.position, &u.plan.segment, speeds[i], dt)?;
            recorded_speed[i] = speeds[i];
        }
        u.speed = recorded_speed[i];
    }
    let positions: Vec<Point3> = world.uavs.iter().map(|u| u.position).collect();

    // Transmission over the realized channel at the end-of-slot positions.
    let mut realized_u2n = Vec::with_capacity(n_uav);
    for &p in &positions {
        let c = u2n_components(p, sc.bs, &sc.radio)?;
        realized_u2n.push((0..k).map(|_| u2n_realized_gain(&c, &sc.radio, &mut world.fading)).collect::<Vec<_>>());
    }
    let realized = link_gain_table(&links, &positions, k, &sc.radio, &mut |i| Ok(realized_u2n[i].clone()))?;
    let expected = link_gain_table(&links, &positions, k, &sc.radio, &mut |i| {
        Ok(vec![u2n_expected_gain(positions[i], sc.bs, &sc.radio)?; k])
    })?;
    let assignments: Vec<Assignment> = link_uav
        .iter()
        .enumerate()
        .map(|(l, &i)| Assignment {
            uav: i,
            mode: modes[i],
            subchannels: subchannels[l].clone(),
            tx_power: powers[l],
        })
        .collect();
    let mut rates = Vec::with_capacity(links.len());
    for (l, a) in assignments.iter().enumerate() {
        rates.push(link_rate(a, &assignments, &realized, &sc.radio)?);
        let expected_rate = link_rate(a, &assignments, &expected, &sc.radio)?;
        if expected_rate < sc.r_min * (1.0 - 1e-9) || fallback[a.uav] {
            qos_flag[l] = true;
        }
    }
    let sum_rate = total(rates.iter().copied());

    let mut delivered = vec![0.0; links.len()];
    let mut residual = vec![0.0; n_uav];
    for (l, a) in assignments.iter().enumerate() {
        if a.mode == Mode::U2n {
            let capacity = rates[l] * dt;
            delivered[l] = world.deliver(a.uav, capacity);
            residual[a.uav] = capacity - delivered[l];
        }
    }
    for (l, a) in assignments.iter().enumerate() {
        if let Mode::U2u { relay } = a.mode {
            let bits = (rates[l] * dt).min(residual[relay]);
            delivered[l] = world.deliver(a.uav, bits);
            residual[relay] -= delivered[l];
        }
    }

    // Sensing, then trajectory bookkeeping.
    let t1 = t0 + dt;
    let mut sensed_by = Vec::new();
    for i in 0..n_uav {
        if let Activity::Sensing(ti) = world.uavs[i].activity {
            record_sensing(&mut world.tasks[ti], world.uavs[i].position, &sc.sensing, &mut world.sensing)?;
            sensed_by.push(world.uavs[i].id);
            if world.tasks[ti].state >= TaskState::Sensed {
                world.after_sensing(i, t1)?;
            }
        }
    }
    for i in 0..n_uav {
        match world.uavs[i].activity {
            Activity::Flying => {
                if distance(world.uavs[i].position, world.uavs[i].plan.segment.end) <= ARRIVAL_TOL {
                    world.arrive(i, t1);
                }
            }
            Activity::Uploading => {
                if world.backlog(i) <= 0.0 {
                    world.depart(i, t1);
                }
            }
            _ => {}
        }
    }
    world.slot = slot;
    if world.completion_slot.is_none() && world.all_delivered() {
        world.completion_slot = Some(slot);
    }

    let id = |i: usize| world.uavs[i].id;
    let link_records: Vec<LinkRecord> = assignments
        .iter()
        .enumerate()
        .map(|(l, a)| {
            let n_sub = a.subchannels.len().max(1) as f64;
            LinkRecord {
                uav: id(a.uav),
                kind: a.mode.kind(),
                relay: a.mode.relay().map(id),
                subchannels: a.subchannels.clone(),
                power: a.tx_power,
                sinr: 2f64.powf(rates[l] / (sc.radio.bandwidth_per_subchannel * n_sub)) - 1.0,
                rate: rates[l],
                delivered_bits: delivered[l],
                qos_violation: qos_flag[l],
            }
        })
        .collect();
    let uav_records = (0..n_uav)
        .map(|i| {
            let u = &world.uavs[i];
            UavRecord {
                id: u.id,
                position: u.position,
                speed: u.speed,
                activity: u.activity.as_str(),
                mode: u.mode.map(Mode::kind),
                relay: u.mode.and_then(Mode::relay).map(id),
                backlog: world.backlog(i),
            }
        })
        .collect();
    Ok(SlotRecord {
        slot,
        time: t1,
        sum_rate,
        qos_violations: qos_flag.iter().filter(|&&f| f).count(),
        delivered_bits: total(delivered.iter().copied()),
        links: link_records,
        uavs: uav_records,
        task_states: world.tasks.iter().map(|t| t.state).collect(),
        sensing: sensed_by,
        bnb_nodes,
        dc_iterations,
        rounds,
        suboptimal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub seed: u64,
    pub subchannels: usize,
    pub slots: u64,
    pub mean_sum_rate: f64,
    /// Seconds until every task was delivered; infinite if never.
    pub completion_time: f64,
    pub completion_slot: Option<u64>,
    pub qos_violations: u64,
    pub delivered_bits: f64,
    pub u2u_link_slots: u64,
    pub bnb_nodes: u64,
    pub dc_iterations: u64,
    pub suboptimal_slots: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub records: Vec<SlotRecord>,
    pub tree_dumps: Vec<(u64, String)>,
}

pub fn summarize(world: &World, records: &[SlotRecord]) -> RunSummary {
    let sc = &world.scenario;
    let n = records.len().max(1) as f64;
    RunSummary {
        scheme: sc.scheme,
        seed: sc.seed,
        subchannels: sc.subchannels,
        slots: records.len() as u64,
        mean_sum_rate: total(records.iter().map(|r| r.sum_rate)) / n,
        completion_time: world
            .completion_slot
            .map_or(f64::INFINITY, |s| s as f64 * sc.slot_duration),
        completion_slot: world.completion_slot,
        qos_violations: records.iter().map(|r| r.qos_violations as u64).sum(),
        delivered_bits: total(records.iter().map(|r| r.delivered_bits)),
        u2u_link_slots: records
            .iter()
            .map(|r| r.links.iter().filter(|l| l.kind == LinkKind::U2u).count() as u64)
            .sum(),
        bnb_nodes: records.iter().map(|r| r.bnb_nodes).sum(),
        dc_iterations: records.iter().map(|r| r.dc_iterations as u64).sum(),
        suboptimal_slots: records.iter().filter(|r| r.suboptimal).count() as u64,
    }
}

pub fn run_with(scenario: &Scenario, opts: RunOptions) -> Result<RunOutput> {
    let mut world = World::new(scenario.clone(), opts)?;
    let mut records = Vec::with_capacity(scenario.total_slots as usize);
    for _ in 0..scenario.total_slots {
        records.push(run_slot(&mut world)?);
    }
    Ok(RunOutput {
        summary: summarize(&world, &records),
        tree_dumps: std::mem::take(&mut world.tree_dumps),
        records,
    })
}

pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    run_with(scenario, RunOptions::default())
}

/// Mean and 95% normal-approximation interval of one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub metric: &'static str,
    pub n: usize,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn of(metric: &'static str, xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Interval {
                metric,
                n,
                mean: f64::NAN,
                low: f64::NAN,
                high: f64::NAN,
            };
        }
        let constant = xs.iter().all(|&x| x == xs[0]);
        let mean = if constant { xs[0] } else { xs.iter().sum::<f64>() / n as f64 };
        let half = if n > 1 && !constant {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Interval {
            metric,
            n,
            mean,
            low: mean - half,
            high: mean + half,
        }
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

#[derive(Debug)]
pub struct Replication {
    pub runs: Vec<(u64, Result<RunSummary>)>,
    pub aggregate: Vec<Interval>,
}

impl Replication {
    pub fn summaries(&self) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter_map(|(_, r)| r.as_ref().ok())
    }
}

pub fn aggregate(summaries: &[&RunSummary]) -> Vec<Interval> {
    let col = |f: fn(&RunSummary) -> f64| summaries.iter().map(|s| f(s)).collect::<Vec<_>>();
    let finite_completion: Vec<f64> = summaries
        .iter()
        .map(|s| s.completion_time)
        .filter(|t| t.is_finite())
        .collect();
    vec![
        Interval::of("mean_sum_rate", &col(|s| s.mean_sum_rate)),
        Interval::of("completion_time", &finite_completion),
        Interval::of("qos_violations", &col(|s| s.qos_violations as f64)),
        Interval::of("delivered_bits", &col(|s| s.delivered_bits)),
    ]
}

/// Independent runs per seed, in parallel. A failing seed does not stop the
/// others.
pub fn replicate(scenario: &Scenario, seeds: &[u64]) -> Replication {
    let runs: Vec<(u64, Result<RunSummary>)> = seeds
        .par_iter()
        .map(|&seed| {
            let s = scenario.clone().with_seed(seed);
            (seed, run(&s).map(|o| o.summary))
        })
        .collect();
    let ok: Vec<&RunSummary> = runs.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let aggregate = aggregate(&ok);
    Replication { runs, aggregate }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_schedule_shapes() {
        let s = orthogonal_schedule(3, 8, 1);
        let mut all: Vec<usize> = s.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        assert!(s.iter().all(|v| !v.is_empty()));
        let s = orthogonal_schedule(5, 2, 1);
        assert_eq!(s.iter().filter(|v| !v.is_empty()).count(), 2);
        assert!(s.iter().all(|v| v.len() <= 1));
        // every link gets a turn over a few slots
        let mut served = [false; 5];
        for slot in 1..=5 {
            for (l, v) in orthogonal_schedule(5, 2, slot).iter().enumerate() {
                served[l] |= !v.is_empty();
            }
        }
        assert!(served.iter().all(|&x| x));
    }

    #[test]
    fn interval_basics() {
        let one = Interval::of("x", &[3.0]);
        assert_eq!((one.mean, one.width()), (3.0, 0.0));
        let same = Interval::of("x", &[2.0; 5]);
        assert_eq!(same.width(), 0.0);
        let iv = Interval::of("x", &[1.0, 2.0, 3.0, 4.0]);
        assert!((iv.mean - 2.5).abs() < 1e-12);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((iv.high - iv.mean - 1.96 * sd / 2.0).abs() < 1e-12);
    }
}
