//! Per-slot alternation between speed control, subchannel allocation and
//! power control.

use crate::channel::{u2n_expected_gain, u2u_gain, GainTable, Node, RadioParams};
use crate::error::{Error, Result};
use crate::geometry::{advance, Point3, Segment};
use crate::rrm::{
    allocate, dc_power_control, initial_allocation, sum_rate, Allocation, BnbOptions, BnbStats, Link,
    RrmInstance,
};
use crate::trajectory::{control_speed, DeadlineState, Peer, SpeedProblem};

pub const OUTER_REL_TOL: f64 = 1e-3;
pub const OUTER_MAX_ROUNDS: usize = 20;

/// Movement state of one UAV for the slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotUav {
    pub position: Point3,
    pub segment: Segment,
    pub deadline: DeadlineState,
}

#[derive(Debug, Clone)]
pub struct SlotProblem<'a> {
    pub uavs: &'a [SlotUav],
    /// Transmitters and receivers are `Node::Uav(i)` with `i` indexing `uavs`.
    pub links: &'a [Link],
    pub bs: Point3,
    pub params: &'a RadioParams,
    pub subchannels: usize,
    pub p_max: f64,
    pub v_max: f64,
    pub dt: f64,
    pub bnb: BnbOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSolution {
    pub speeds: Vec<f64>,
    pub end_positions: Vec<Point3>,
    pub allocation: Allocation,
    pub powers: Vec<f64>,
    pub objective: f64,
    /// Objective after the greedy start and after each round.
    pub trace: Vec<f64>,
    pub rounds: usize,
    /// Links exempted from the rate requirement.
    pub flagged: Vec<bool>,
    /// UAVs whose deadline speed could not keep their link rate.
    pub speed_conflicts: Vec<bool>,
    pub bnb: BnbStats,
    pub suboptimal: bool,
    pub dc_iterations: usize,
    pub tree_dump: Option<String>,
}

/// Gain table covering every link's direct pair and every cross pair that
/// may share a subchannel. `u2n(i)` supplies UAV `i`'s per-subchannel gain to
/// the BS.
pub fn link_gain_table(
    links: &[Link],
    positions: &[Point3],
    subchannels: usize,
    params: &RadioParams,
    u2n: &mut dyn FnMut(usize) -> Result<Vec<f64>>,
) -> Result<GainTable> {
    let mut t = GainTable::new();
    let mut put = |t: &mut GainTable, tx: Node, rx: Node| -> Result<()> {
        if t.get(tx, rx, 0).is_ok() {
            return Ok(());
        }
        let Node::Uav(i) = tx else { unreachable!("the BS never transmits") };
        match rx {
            Node::Bs => {
                for (k, g) in u2n(i)?.into_iter().enumerate() {
                    t.insert(tx, rx, k, g);
                }
            }
            Node::Uav(j) => t.insert_flat(tx, rx, subchannels, u2u_gain(positions[i], positions[j], params)?),
        }
        Ok(())
    };
    for l in links {
        put(&mut t, l.tx, l.rx)?;
    }
    for a in links {
        for b in links {
            if a != b && !crate::rrm::conflicts(a, b) {
                put(&mut t, a.tx, b.rx)?;
            }
        }
    }
    Ok(t)
}

fn uav_index(n: Node) -> Option<usize> {
    match n {
        Node::Uav(i) => Some(i),
        Node::Bs => None,
    }
}

impl SlotProblem<'_> {
    fn end_positions(&self, speeds: &[f64]) -> Result<Vec<Point3>> {
        self.uavs
            .iter()
            .zip(speeds)
            .map(|(u, &v)| advance(u.position, &u.segment, v, self.dt))
            .collect()
    }

    fn instance(&self, positions: &[Point3]) -> Result<RrmInstance> {
        let (bs, params, k) = (self.bs, self.params, self.subchannels);
        let gains = link_gain_table(self.links, positions, k, params, &mut |i| {
            Ok(vec![u2n_expected_gain(positions[i], bs, params)?; k])
        })?;
        RrmInstance::from_gains(self.links.to_vec(), &gains, params, k, self.p_max)
    }

    fn v_floor(&self, i: usize) -> f64 {
        let u = &self.uavs[i];
        SpeedProblem {
            position: u.position,
            segment: u.segment,
            peer: Peer::Bs(self.bs),
            tx_power: 0.0,
            interference_plus_noise: &[],
            r_min: 0.0,
            v_max: self.v_max,
            dt: self.dt,
        }
        .v_floor(u.deadline)
    }
}

/// Speeds maximizing each UAV's progress while its link keeps `r_min`, with
/// interference frozen at the current iterate.
fn speed_block(
    prob: &SlotProblem,
    inst: &RrmInstance,
    alloc: &Allocation,
    powers: &[f64],
    positions: &[Point3],
    flagged: &[bool],
) -> (Vec<f64>, Vec<bool>) {
    let n = prob.uavs.len();
    let mut speeds: Vec<f64> = (0..n).map(|_| prob.v_max).collect();
    let mut conflicts = vec![false; n];
    for (l, link) in prob.links.iter().enumerate() {
        let Some(i) = uav_index(link.tx) else { continue };
        let u = &prob.uavs[i];
        let peer = match link.rx {
            Node::Bs => Peer::Bs(prob.bs),
            Node::Uav(j) => Peer::Uav(positions[j]),
        };
        let ifn: Vec<f64> = alloc
            .subchannels(l)
            .into_iter()
            .map(|k| {
                let col = alloc.column(k);
                inst.noise
                    + (0..inst.len())
                        .filter(|&j| j != l && col >> j & 1 == 1)
                        .map(|j| powers[j] * inst.cross[j][l][k])
                        .sum::<f64>()
            })
            .collect();
        let sp = SpeedProblem {
            position: u.position,
            segment: u.segment,
            peer,
            tx_power: powers[l],
            interference_plus_noise: &ifn,
            r_min: if flagged[l] || ifn.is_empty() { 0.0 } else { link.r_min },
            v_max: prob.v_max,
            dt: prob.dt,
        };
        speeds[i] = match control_speed(&sp, prob.params, u.deadline) {
            Ok(v) => v,
            Err(Error::DeadlineQosConflict { v_floor }) => {
                conflicts[i] = true;
                v_floor
            }
            Err(_) => sp.v_floor(u.deadline),
        };
    }
    (speeds, conflicts)
}

/// Alternate speed control, branch and bound, and DC power control until the
/// expected end-of-slot sum rate stops improving. A block's result is kept
/// only if it does not lower the objective.
pub fn optimize_slot(prob: &SlotProblem) -> Result<SlotSolution> {
    let n_uav = prob.uavs.len();
    let n = prob.links.len();
    let mut speeds: Vec<f64> = (0..n_uav).map(|i| prob.v_floor(i)).collect();
    let mut positions = prob.end_positions(&speeds)?;
    let mut sol = SlotSolution {
        speeds: speeds.clone(),
        end_positions: positions.clone(),
        allocation: Allocation::empty(n),
        powers: vec![prob.p_max; n],
        objective: 0.0,
        trace: Vec::new(),
        rounds: 0,
        flagged: vec![false; n],
        speed_conflicts: vec![false; n_uav],
        bnb: BnbStats::default(),
        suboptimal: false,
        dc_iterations: 0,
        tree_dump: None,
    };
    if n == 0 {
        sol.speeds = (0..n_uav).map(|_| prob.v_max).collect();
        sol.end_positions = prob.end_positions(&sol.speeds)?;
        return Ok(sol);
    }

    let mut inst = prob.instance(&positions)?;
    let init = initial_allocation(&inst);
    sol.flagged = init.flagged.clone();
    sol.allocation = init.allocation;
    sol.objective = sum_rate(&inst, &sol.allocation, &sol.powers);
    sol.trace.push(sol.objective);

    for round in 1..=OUTER_MAX_ROUNDS {
        let start = sol.objective;
        sol.rounds = round;

        // Speed block.
        let (cand_speeds, conflicts) =
            speed_block(prob, &inst, &sol.allocation, &sol.powers, &positions, &sol.flagged);
        if cand_speeds != speeds {
            let cand_pos = prob.end_positions(&cand_speeds)?;
            let cand_inst = prob.instance(&cand_pos)?;
            let obj = sum_rate(&cand_inst, &sol.allocation, &sol.powers);
            if obj >= sol.objective {
                speeds = cand_speeds;
                positions = cand_pos;
                inst = cand_inst;
                sol.objective = obj;
                sol.speed_conflicts = conflicts;
            }
        } else {
            sol.speed_conflicts = conflicts;
        }

        // Allocation block.
        let (init, relaxed, res) = allocate(&inst, &sol.powers, prob.bnb);
        sol.bnb.nodes += res.stats.nodes;
        sol.bnb.pruned_bound += res.stats.pruned_bound;
        sol.bnb.pruned_infeasible += res.stats.pruned_infeasible;
        sol.bnb.solved += res.stats.solved;
        sol.bnb.forced_fixings += res.stats.forced_fixings;
        sol.bnb.max_depth = sol.bnb.max_depth.max(res.stats.max_depth);
        sol.bnb.incumbent_updates += res.stats.incumbent_updates;
        sol.suboptimal |= res.suboptimal;
        if prob.bnb.record_tree {
            sol.tree_dump = Some(res.tree_dump());
        }
        let obj = sum_rate(&relaxed, &res.allocation, &sol.powers);
        if obj >= sol.objective {
            sol.allocation = res.allocation;
            sol.flagged = init.flagged;
            sol.objective = obj;
        }

        // Power block.
        let relaxed = inst.relaxed(&sol.flagged);
        match dc_power_control(&relaxed, &sol.allocation) {
            Ok(out) => {
                sol.dc_iterations += out.iterations;
                if out.objective >= sol.objective {
                    sol.objective = out.objective;
                    sol.powers = out.powers;
                }
            }
            Err(Error::InfeasibleStart { .. }) => {}
            Err(e) => return Err(e),
        }

        sol.trace.push(sol.objective);
        if sol.objective - start <= OUTER_REL_TOL * start.abs() {
            break;
        }
    }
    sol.speeds = speeds;
    sol.end_positions = positions;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rrm::LinkKind;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    fn uav(at: Point3, to: Point3) -> SlotUav {
        SlotUav {
            position: at,
            segment: Segment::new(at, to),
            deadline: DeadlineState {
                now: 0.0,
                segment_deadline: 1e4,
            },
        }
    }

    fn problem<'a>(uavs: &'a [SlotUav], links: &'a [Link], params: &'a RadioParams) -> SlotProblem<'a> {
        SlotProblem {
            uavs,
            links,
            bs: p(0., 0., 25.),
            params,
            subchannels: 4,
            p_max: 0.2,
            v_max: 20.0,
            dt: 0.5,
            bnb: BnbOptions::default(),
        }
    }

    fn u2n(i: usize, r_min: f64) -> Link {
        Link {
            kind: LinkKind::U2n,
            tx: Node::Uav(i),
            rx: Node::Bs,
            r_min,
        }
    }

    #[test]
    fn single_u2n_converges_quickly() {
        let params = RadioParams::default();
        let uavs = [uav(p(300., 0., 100.), p(200., 0., 100.))];
        let links = [u2n(0, 1e5)];
        let sol = optimize_slot(&problem(&uavs, &links, &params)).unwrap();
        assert!(sol.rounds <= 2, "{sol:?}");
        assert_eq!(sol.allocation.subchannels(0), vec![0, 1, 2, 3]);
        assert!((sol.powers[0] - 0.2).abs() < 1e-9);
        // flying toward the BS only helps
        assert_eq!(sol.speeds[0], 20.0);
    }

    #[test]
    fn three_uavs_monotone_and_beats_greedy() {
        let params = RadioParams::default();
        let uavs = [
            uav(p(300., 0., 100.), p(300., 400., 100.)),
            uav(p(-200., 100., 120.), p(-600., 100., 120.)),
            uav(p(900., 0., 80.), p(900., 300., 80.)),
        ];
        let links = [
            u2n(0, 2e5),
            u2n(1, 2e5),
            Link {
                kind: LinkKind::U2u,
                tx: Node::Uav(2),
                rx: Node::Uav(0),
                r_min: 2e5,
            },
        ];
        let prob = problem(&uavs, &links, &params);
        let sol = optimize_slot(&prob).unwrap();
        assert!(sol.trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", sol.trace);
        assert!(sol.rounds <= OUTER_MAX_ROUNDS);
        assert!(sol.objective >= sol.trace[0]);
        for l in 0..links.len() {
            assert!(!sol.allocation.subchannels(l).is_empty());
        }
        assert!(sol.powers.iter().all(|&x| (0.0..=0.2 + 1e-12).contains(&x)));
    }

    #[test]
    fn no_links_fly_at_full_speed() {
        let params = RadioParams::default();
        let uavs = [uav(p(300., 0., 100.), p(200., 0., 100.))];
        let sol = optimize_slot(&problem(&uavs, &[], &params)).unwrap();
        assert_eq!(sol.speeds, vec![20.0]);
        assert_eq!(sol.objective, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn coord() -> impl Strategy<Value = (f64, f64)> {
            (-1500.0..1500.0f64, -1500.0..1500.0f64)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn rounds_never_lower_the_objective(
                a in coord(), b in coord(), c in coord(), d in coord(),
                relay in any::<bool>(), r_min in 0.0..5e5f64,
            ) {
                let params = RadioParams::default();
                let uavs = [
                    uav(p(a.0, a.1, 100.), p(b.0, b.1, 100.)),
                    uav(p(c.0, c.1, 120.), p(d.0, d.1, 120.)),
                    uav(p(b.0, a.1, 90.), p(a.0, b.1, 90.)),
                    uav(p(d.0, c.1, 110.), p(c.0, d.1, 110.)),
                ];
                let third = if relay {
                    Link { kind: LinkKind::U2u, tx: Node::Uav(2), rx: Node::Uav(0), r_min }
                } else {
                    Link { kind: LinkKind::U2u, tx: Node::Uav(2), rx: Node::Uav(3), r_min }
                };
                let links = [u2n(0, r_min), u2n(1, r_min), third];
                let prob = problem(&uavs, &links, &params);
                let sol = optimize_slot(&prob).unwrap();
                prop_assert!(sol.trace.windows(2).all(|w| w[1] >= w[0]), "{:?}", sol.trace);
                prop_assert!(sol.rounds <= OUTER_MAX_ROUNDS);
                prop_assert!(sol.speeds.iter().all(|&v| (0.0..=20.0).contains(&v)));
                prop_assert!(sol.powers.iter().all(|&x| (0.0..=0.2).contains(&x)));
                prop_assert_eq!(sol.allocation.masks[0] & sol.allocation.masks[1], 0);
            }
        }
    }
}
