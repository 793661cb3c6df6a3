//! Radio resource management: greedy subchannel initialization, exact
//! branch-and-bound subchannel allocation, and difference-of-concave power
//! control.
//!
//! All three operate on an [`RrmInstance`], a dense snapshot of one slot's
//! links and expected gains. U2N links are mutually orthogonal; U2U links may
//! underlay any subchannel except those used by a link whose transmitter is
//! their receiver (a relay cannot transmit and receive on one subchannel).
//! Power is applied per occupied subchannel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::{GainTable, Node, RadioParams};
use crate::error::{Error, Result};

pub use crate::slot_opt::{optimize_slot, SlotProblem, SlotSolution, SlotUav};

/// Subchannel indices are stored as bits of a `u64`.
pub const MAX_SUBCHANNELS: usize = 64;

pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    U2n,
    U2u,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub kind: LinkKind,
    pub tx: Node,
    pub rx: Node,
    /// Minimum rate in bits/s; zero when the link is exempt.
    pub r_min: f64,
}

/// Dense single-slot problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct RrmInstance {
    pub links: Vec<Link>,
    pub subchannels: usize,
    pub bandwidth: f64,
    pub noise: f64,
    pub p_max: f64,
    /// `direct[l][k]`: gain from the transmitter of `l` to its receiver.
    pub direct: Vec<Vec<f64>>,
    /// `cross[j][l][k]`: gain from the transmitter of `j` to the receiver of
    /// `l`. Entries for conflicting pairs are unused.
    pub cross: Vec<Vec<Vec<f64>>>,
}

impl RrmInstance {
    pub fn from_gains(
        links: Vec<Link>,
        gains: &GainTable,
        params: &RadioParams,
        subchannels: usize,
        p_max: f64,
    ) -> Result<Self> {
        assert!(subchannels <= MAX_SUBCHANNELS);
        let n = links.len();
        let mut direct = vec![vec![0.0; subchannels]; n];
        let mut cross = vec![vec![vec![0.0; subchannels]; n]; n];
        for (l, link) in links.iter().enumerate() {
            for k in 0..subchannels {
                direct[l][k] = gains.get(link.tx, link.rx, k)?;
            }
        }
        for j in 0..n {
            for l in 0..n {
                if j == l || conflicts(&links[j], &links[l]) {
                    continue;
                }
                for k in 0..subchannels {
                    cross[j][l][k] = gains.get(links[j].tx, links[l].rx, k)?;
                }
            }
        }
        Ok(RrmInstance {
            links,
            subchannels,
            bandwidth: params.bandwidth_per_subchannel,
            noise: params.noise_power(),
            p_max,
            direct,
            cross,
        })
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn conflict(&self, a: usize, b: usize) -> bool {
        a != b && conflicts(&self.links[a], &self.links[b])
    }

    /// Copy with the rate requirement of every flagged link removed.
    pub fn relaxed(&self, flagged: &[bool]) -> Self {
        let mut out = self.clone();
        for (link, &f) in out.links.iter_mut().zip(flagged) {
            if f {
                link.r_min = 0.0;
            }
        }
        out
    }

    fn full_mask(&self) -> u64 {
        if self.subchannels == 64 {
            u64::MAX
        } else {
            (1u64 << self.subchannels) - 1
        }
    }

    /// Rate of `l` on subchannel `k` given the set `on_k` of links (bitmask
    /// over link indices) sharing it.
    fn rate_on(&self, l: usize, k: usize, on_k: u64, powers: &[f64]) -> f64 {
        let mut interference = 0.0;
        let mut rest = on_k & !(1u64 << l);
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            interference += powers[j] * self.cross[j][l][k];
        }
        let sinr = powers[l] * self.direct[l][k] / (interference + self.noise);
        self.bandwidth * (1.0 + sinr).log2()
    }

    fn interference_free_rate(&self, l: usize, k: usize, power: f64) -> f64 {
        self.bandwidth * (1.0 + power * self.direct[l][k] / self.noise).log2()
    }
}

/// Two links may not share a subchannel when both are U2N or when one
/// transmits from the other's receiver (or they share a transmitter).
pub fn conflicts(a: &Link, b: &Link) -> bool {
    (a.kind == LinkKind::U2n && b.kind == LinkKind::U2n)
        || a.tx == b.rx
        || b.tx == a.rx
        || a.tx == b.tx
}

/// Subchannel sets, one bitmask per link.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    pub masks: Vec<u64>,
}

impl Allocation {
    pub fn empty(links: usize) -> Self {
        Allocation {
            masks: vec![0; links],
        }
    }

    pub fn has(&self, l: usize, k: usize) -> bool {
        self.masks[l] >> k & 1 == 1
    }

    pub fn set(&mut self, l: usize, k: usize) {
        self.masks[l] |= 1 << k;
    }

    pub fn subchannels(&self, l: usize) -> Vec<usize> {
        bits(self.masks[l]).collect()
    }

    /// Bitmask over links that occupy subchannel `k`.
    pub fn column(&self, k: usize) -> u64 {
        self.masks
            .iter()
            .enumerate()
            .filter(|(_, m)| *m >> k & 1 == 1)
            .fold(0, |acc, (l, _)| acc | 1 << l)
    }

    /// Structural feasibility: at least one subchannel per link, no
    /// conflicting pair sharing a subchannel, indices in range.
    pub fn is_structurally_feasible(&self, inst: &RrmInstance) -> bool {
        let full = inst.full_mask();
        for (l, &m) in self.masks.iter().enumerate() {
            if m == 0 || m & !full != 0 {
                return false;
            }
            for j in l + 1..self.masks.len() {
                if self.masks[j] & m != 0 && inst.conflict(l, j) {
                    return false;
                }
            }
        }
        true
    }
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let b = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(b)
        }
    })
}

/// Per-link rates of an allocation under the given powers.
pub fn link_rates(inst: &RrmInstance, alloc: &Allocation, powers: &[f64]) -> Vec<f64> {
    let cols: Vec<u64> = (0..inst.subchannels).map(|k| alloc.column(k)).collect();
    (0..inst.len())
        .map(|l| {
            bits(alloc.masks[l])
                .map(|k| inst.rate_on(l, k, cols[k], powers))
                .sum()
        })
        .collect()
}

pub fn sum_rate(inst: &RrmInstance, alloc: &Allocation, powers: &[f64]) -> f64 {
    link_rates(inst, alloc, powers).iter().sum()
}

/// All rate requirements met (exempt links have `r_min = 0`).
pub fn meets_qos(inst: &RrmInstance, alloc: &Allocation, powers: &[f64]) -> bool {
    link_rates(inst, alloc, powers)
        .iter()
        .zip(&inst.links)
        .all(|(r, link)| *r >= link.r_min)
}

/// Neediness of a link: required rate over its best interference-free
/// single-subchannel rate at full power. Larger values are served first.
pub fn priority(inst: &RrmInstance, l: usize) -> f64 {
    let best = (0..inst.subchannels)
        .map(|k| inst.interference_free_rate(l, k, inst.p_max))
        .fold(0.0, f64::max);
    if best > 0.0 {
        inst.links[l].r_min / best
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialAllocation {
    pub allocation: Allocation,
    /// Links that miss their rate requirement (or hold no subchannel).
    pub flagged: Vec<bool>,
}

/// Greedy feasible start. Every link first takes its single best admissible
/// subchannel (U2N links before U2U links, neediest first); links still short
/// of `r_min` then add subchannels one at a time by largest own-rate gain.
/// Powers are at `p_max`.
pub fn initial_allocation(inst: &RrmInstance) -> InitialAllocation {
    let n = inst.len();
    let powers = vec![inst.p_max; n];
    let mut order: Vec<usize> = (0..n).collect();
    let prio: Vec<f64> = (0..n).map(|l| priority(inst, l)).collect();
    order.sort_by(|&a, &b| prio[b].partial_cmp(&prio[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));

    let mut alloc = Allocation::empty(n);
    let admissible = |alloc: &Allocation, l: usize, k: usize| -> bool {
        if alloc.has(l, k) {
            return false;
        }
        let col = alloc.column(k);
        bits(col).all(|j| !inst.conflict(l, j))
    };
    let own_rate = |alloc: &Allocation, l: usize| -> f64 {
        bits(alloc.masks[l])
            .map(|k| inst.rate_on(l, k, alloc.column(k), &powers))
            .sum()
    };
    let best_addition = |alloc: &Allocation, l: usize| -> Option<(usize, f64)> {
        let base = own_rate(alloc, l);
        let mut best: Option<(usize, f64)> = None;
        for k in 0..inst.subchannels {
            if !admissible(alloc, l, k) {
                continue;
            }
            let mut trial = alloc.clone();
            trial.set(l, k);
            let gain = own_rate(&trial, l) - base;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((k, gain));
            }
        }
        best
    };

    for kind in [LinkKind::U2n, LinkKind::U2u] {
        for &l in order.iter().filter(|&&l| inst.links[l].kind == kind) {
            if let Some((k, _)) = best_addition(&alloc, l) {
                alloc.set(l, k);
            }
        }
    }
    for &l in &order {
        while own_rate(&alloc, l) < inst.links[l].r_min {
            match best_addition(&alloc, l) {
                Some((k, g)) if g > 0.0 => alloc.set(l, k),
                _ => break,
            }
        }
    }
    let rates = link_rates(inst, &alloc, &powers);
    let flagged = (0..n)
        .map(|l| alloc.masks[l] == 0 || rates[l] < inst.links[l].r_min)
        .collect();
    InitialAllocation {
        allocation: alloc,
        flagged,
    }
}

/// Why a node left the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeOutcome {
    Branched,
    PrunedBound,
    PrunedInfeasible,
    /// The relaxation's maximizer was itself feasible.
    Solved,
    Unexplored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub parent: Option<u64>,
    pub depth: u32,
    pub bound: f64,
    pub outcome: NodeOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BnbStats {
    pub nodes: u64,
    pub pruned_bound: u64,
    pub pruned_infeasible: u64,
    pub solved: u64,
    pub forced_fixings: u64,
    pub max_depth: u32,
    pub incumbent_updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    pub allocation: Allocation,
    pub objective: f64,
    /// Node budget ran out; the allocation is the best found so far.
    pub suboptimal: bool,
    pub stats: BnbStats,
    pub tree: Vec<NodeRecord>,
}

impl BnbResult {
    /// Plain-text dump of the search, one node per line.
    pub fn tree_dump(&self) -> String {
        let s = &self.stats;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# nodes={} pruned_bound={} pruned_infeasible={} solved={} forced={} max_depth={} incumbent_updates={} suboptimal={} objective={}",
            s.nodes, s.pruned_bound, s.pruned_infeasible, s.solved, s.forced_fixings, s.max_depth,
            s.incumbent_updates, self.suboptimal, self.objective
        );
        let _ = writeln!(out, "id\tparent\tdepth\tbound\toutcome");
        for r in &self.tree {
            let parent = r.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{:?}", r.id, parent, r.depth, r.bound, r.outcome);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbOptions {
    pub node_budget: u64,
    pub record_tree: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            node_budget: DEFAULT_NODE_BUDGET,
            record_tree: false,
        }
    }
}

#[derive(Clone)]
struct Node_ {
    id: u64,
    parent: Option<u64>,
    depth: u32,
    one: Vec<u64>,
    zero: Vec<u64>,
    col_bound: Vec<f64>,
    col_best: Vec<u64>,
    bound: f64,
}

struct Queued(Node_);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .bound
            .total_cmp(&other.0.bound)
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

struct Search<'a> {
    inst: &'a RrmInstance,
    powers: &'a [f64],
    full: u64,
}

impl Search<'_> {
    fn free(&self, node: &Node_, l: usize) -> u64 {
        self.full & !node.one[l] & !node.zero[l]
    }

    fn column_sets(&self, node: &Node_, k: usize) -> (u64, u64) {
        let mut ones = 0u64;
        let mut free = 0u64;
        for l in 0..self.inst.len() {
            if node.one[l] >> k & 1 == 1 {
                ones |= 1 << l;
            } else if node.zero[l] >> k & 1 == 0 {
                free |= 1 << l;
            }
        }
        (ones, free)
    }

    fn set_ok(&self, set: u64) -> bool {
        let mut a = set;
        while a != 0 {
            let i = a.trailing_zeros() as usize;
            a &= a - 1;
            let mut b = a;
            while b != 0 {
                let j = b.trailing_zeros() as usize;
                b &= b - 1;
                if self.inst.conflict(i, j) {
                    return false;
                }
            }
        }
        true
    }

    fn column_value(&self, k: usize, set: u64) -> f64 {
        bits(set).map(|l| self.inst.rate_on(l, k, set, self.powers)).sum()
    }

    /// Best sum rate on subchannel `k` over all conflict-free link sets that
    /// contain the fixed ones and draw the rest from the free ones.
    fn column_bound(&self, node: &Node_, k: usize) -> Option<(f64, u64)> {
        let (ones, free) = self.column_sets(node, k);
        if !self.set_ok(ones) {
            return None;
        }
        let free_list: Vec<usize> = bits(free).collect();
        let mut best = (f64::NEG_INFINITY, 0u64);
        for sub in 0u64..(1u64 << free_list.len()) {
            let mut set = ones;
            for (i, &l) in free_list.iter().enumerate() {
                if sub >> i & 1 == 1 {
                    set |= 1 << l;
                }
            }
            if !self.set_ok(set) {
                continue;
            }
            let v = self.column_value(k, set);
            if v > best.0 {
                best = (v, set);
            }
        }
        Some(best)
    }

    fn refresh_columns(&self, node: &mut Node_, cols: u64) -> bool {
        for k in bits(cols) {
            match self.column_bound(node, k) {
                Some((v, set)) => {
                    node.col_bound[k] = v;
                    node.col_best[k] = set;
                }
                None => return false,
            }
        }
        node.bound = node.col_bound.iter().sum();
        true
    }

    /// Best-case rate of `l` if it took every non-excluded subchannel with
    /// only the certain (fixed-one) interferers present, optionally without
    /// subchannel `skip`.
    fn optimistic_rate(&self, node: &Node_, l: usize, skip: Option<usize>) -> f64 {
        let cand = node.one[l] | self.free(node, l);
        bits(cand)
            .filter(|&k| Some(k) != skip)
            .map(|k| {
                let (ones, _) = self.column_sets(node, k);
                self.inst.rate_on(l, k, ones | 1 << l, self.powers)
            })
            .sum()
    }

    /// Fix variables that admit only one value. Returns false when the node
    /// is infeasible.
    fn propagate(&self, node: &mut Node_, stats: &mut BnbStats) -> bool {
        let n = self.inst.len();
        loop {
            let mut changed = 0u64;
            for k in 0..self.inst.subchannels {
                let (ones, free) = self.column_sets(node, k);
                if !self.set_ok(ones) {
                    return false;
                }
                for l in bits(free) {
                    if bits(ones).any(|j| self.inst.conflict(l, j)) {
                        node.zero[l] |= 1 << k;
                        changed |= 1 << k;
                        stats.forced_fixings += 1;
                    }
                }
            }
            for l in 0..n {
                let free = self.free(node, l);
                let cand = node.one[l] | free;
                if cand == 0 {
                    return false;
                }
                let r_min = self.inst.links[l].r_min;
                if r_min > 0.0 && self.optimistic_rate(node, l, None) < r_min {
                    return false;
                }
                if node.one[l] == 0 && free.count_ones() == 1 {
                    node.one[l] |= free;
                    changed |= free;
                    stats.forced_fixings += 1;
                    continue;
                }
                if r_min > 0.0 {
                    for k in bits(free) {
                        if self.optimistic_rate(node, l, Some(k)) < r_min {
                            node.one[l] |= 1 << k;
                            changed |= 1 << k;
                            stats.forced_fixings += 1;
                        }
                    }
                }
            }
            if changed == 0 {
                return true;
            }
            if !self.refresh_columns(node, changed) {
                return false;
            }
        }
    }

    fn assemble(&self, node: &Node_) -> Allocation {
        let n = self.inst.len();
        let mut alloc = Allocation::empty(n);
        for (k, &set) in node.col_best.iter().enumerate() {
            for l in bits(set) {
                alloc.set(l, k);
            }
        }
        alloc
    }

    /// First link of the assembled relaxation maximizer that breaks a link
    /// constraint, if any.
    fn violated_link(&self, alloc: &Allocation, rates: &[f64]) -> Option<usize> {
        (0..self.inst.len()).find(|&l| alloc.masks[l] == 0 || rates[l] < self.inst.links[l].r_min)
    }

    fn branch_variable(&self, node: &Node_, alloc: &Allocation, l: usize) -> Option<(usize, usize)> {
        let free = self.free(node, l);
        if free != 0 {
            let k = bits(free)
                .max_by(|&a, &b| {
                    self.inst.direct[l][a]
                        .total_cmp(&self.inst.direct[l][b])
                        .then(b.cmp(&a))
                })
                .expect("non-empty");
            return Some((l, k));
        }
        // Otherwise the shortfall comes from free interferers on l's subchannels.
        let mut best: Option<(f64, usize, usize)> = None;
        for k in bits(alloc.masks[l]) {
            for j in bits(alloc.column(k)) {
                if j == l || self.free(node, j) >> k & 1 == 0 {
                    continue;
                }
                let harm = self.powers[j] * self.inst.cross[j][l][k];
                if best.is_none_or(|(h, _, _)| harm > h) {
                    best = Some((harm, j, k));
                }
            }
        }
        best.map(|(_, j, k)| (j, k))
    }
}

/// Exact sum-rate maximization over subchannel assignments at fixed powers,
/// subject to per-link `r_min`, U2N orthogonality, the relay conflict rule and
/// at least one subchannel per link.
///
/// The bound at a node is the sum over subchannels of the best achievable
/// per-subchannel sum rate among link sets consistent with the node's fixed
/// variables (interference accounted within the subchannel, link constraints
/// relaxed). When the maximizer of that relaxation satisfies every link
/// constraint the node is solved outright. Nodes are expanded best-bound
/// first; variables with a single admissible value are fixed by propagation.
pub fn branch_and_bound(
    inst: &RrmInstance,
    powers: &[f64],
    incumbent: &Allocation,
    opts: BnbOptions,
) -> BnbResult {
    let n = inst.len();
    let search = Search {
        inst,
        powers,
        full: inst.full_mask(),
    };
    let mut stats = BnbStats::default();
    let mut tree = Vec::new();
    let record = |tree: &mut Vec<NodeRecord>, node: &Node_, outcome| {
        if opts.record_tree {
            tree.push(NodeRecord {
                id: node.id,
                parent: node.parent,
                depth: node.depth,
                bound: node.bound,
                outcome,
            });
        }
    };

    let incumbent_ok =
        incumbent.is_structurally_feasible(inst) && meets_qos(inst, incumbent, powers);
    let mut best_alloc = incumbent.clone();
    let mut best_val = if incumbent_ok {
        sum_rate(inst, incumbent, powers)
    } else {
        f64::NEG_INFINITY
    };

    let mut root = Node_ {
        id: 0,
        parent: None,
        depth: 0,
        one: vec![0; n],
        zero: vec![0; n],
        col_bound: vec![0.0; inst.subchannels],
        col_best: vec![0; inst.subchannels],
        bound: f64::INFINITY,
    };
    let mut next_id = 1u64;
    let mut heap = BinaryHeap::new();
    if search.refresh_columns(&mut root, search.full) && search.propagate(&mut root, &mut stats) {
        heap.push(Queued(root));
    } else {
        stats.pruned_infeasible += 1;
    }

    let mut suboptimal = false;
    while let Some(Queued(node)) = heap.pop() {
        if node.bound <= best_val {
            stats.pruned_bound += 1;
            record(&mut tree, &node, NodeOutcome::PrunedBound);
            continue;
        }
        if stats.nodes >= opts.node_budget {
            suboptimal = true;
            record(&mut tree, &node, NodeOutcome::Unexplored);
            for Queued(rest) in heap.drain() {
                record(&mut tree, &rest, NodeOutcome::Unexplored);
            }
            break;
        }
        stats.nodes += 1;
        stats.max_depth = stats.max_depth.max(node.depth);

        let alloc = search.assemble(&node);
        let rates = link_rates(inst, &alloc, powers);
        let Some(l) = search.violated_link(&alloc, &rates) else {
            // The relaxation maximizer is feasible, so the bound is attained.
            let value: f64 = rates.iter().sum();
            if value > best_val {
                best_val = value;
                best_alloc = alloc;
                stats.incumbent_updates += 1;
            }
            stats.solved += 1;
            record(&mut tree, &node, NodeOutcome::Solved);
            continue;
        };
        let Some((bl, bk)) = search.branch_variable(&node, &alloc, l) else {
            stats.pruned_infeasible += 1;
            record(&mut tree, &node, NodeOutcome::PrunedInfeasible);
            continue;
        };
        record(&mut tree, &node, NodeOutcome::Branched);
        for value in [true, false] {
            let mut child = node.clone();
            child.id = next_id;
            next_id += 1;
            child.parent = Some(node.id);
            child.depth = node.depth + 1;
            if value {
                child.one[bl] |= 1 << bk;
            } else {
                child.zero[bl] |= 1 << bk;
            }
            if !search.refresh_columns(&mut child, 1 << bk) || !search.propagate(&mut child, &mut stats) {
                stats.pruned_infeasible += 1;
                record(&mut tree, &child, NodeOutcome::PrunedInfeasible);
                continue;
            }
            if child.bound <= best_val {
                stats.pruned_bound += 1;
                record(&mut tree, &child, NodeOutcome::PrunedBound);
                continue;
            }
            heap.push(Queued(child));
        }
    }

    let objective = if best_val.is_finite() {
        best_val
    } else {
        sum_rate(inst, &best_alloc, powers)
    };
    BnbResult {
        allocation: best_alloc,
        objective,
        suboptimal,
        stats,
        tree,
    }
}

/// Greedy start, relax the links it could not serve, then branch and bound.
/// Returns the relaxed instance actually solved alongside the result.
pub fn allocate(inst: &RrmInstance, powers: &[f64], opts: BnbOptions) -> (InitialAllocation, RrmInstance, BnbResult) {
    let init = initial_allocation(inst);
    let relaxed = inst.relaxed(&init.flagged);
    let res = branch_and_bound(&relaxed, powers, &init.allocation, opts);
    (init, relaxed, res)
}

// ---------------------------------------------------------------------------
// Power control
// ---------------------------------------------------------------------------

pub const DC_REL_TOL: f64 = 1e-4;
pub const DC_MAX_OUTER: usize = 100;
const INNER_MAX: usize = 200;
const INNER_MIN_STEP: f64 = 1e-7;
/// Low power level of the corner starts, as a fraction of `p_max`.
const CORNER_LOW: f64 = 1e-3;
/// Rounds of minimum-power repair applied to an infeasible corner.
const REPAIR_ROUNDS: usize = 20;
const SCALE_BISECTIONS: usize = 20;
/// Corner multi-start is used up to this many links.
const MAX_CORNER_LINKS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerOutcome {
    pub powers: Vec<f64>,
    pub objective: f64,
    /// Sum rate after each outer iteration of the winning run, starting with
    /// its initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Per-link data for fast evaluation at a fixed allocation.
struct PowerModel<'a> {
    inst: &'a RrmInstance,
    /// For each link, (subchannel, co-channel interferers).
    terms: Vec<Vec<(usize, Vec<usize>)>>,
}

impl<'a> PowerModel<'a> {
    fn new(inst: &'a RrmInstance, alloc: &Allocation) -> Self {
        let cols: Vec<u64> = (0..inst.subchannels).map(|k| alloc.column(k)).collect();
        let terms = (0..inst.len())
            .map(|l| {
                bits(alloc.masks[l])
                    .map(|k| (k, bits(cols[k] & !(1 << l)).collect()))
                    .collect()
            })
            .collect();
        PowerModel { inst, terms }
    }

    fn interference(&self, l: usize, k: usize, others: &[usize], p: &[f64]) -> f64 {
        self.inst.noise + others.iter().map(|&j| p[j] * self.inst.cross[j][l][k]).sum::<f64>()
    }

    fn rates(&self, p: &[f64]) -> Vec<f64> {
        let b = self.inst.bandwidth;
        (0..self.inst.len())
            .map(|l| {
                self.terms[l]
                    .iter()
                    .map(|(k, others)| {
                        let i = self.interference(l, *k, others, p);
                        b * (1.0 + p[l] * self.inst.direct[l][*k] / i).log2()
                    })
                    .sum()
            })
            .collect()
    }

    /// Gradient of the subtracted concave part `log2(I + N)` of each link's
    /// rate, as rows per link.
    fn h_grad(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let n = self.inst.len();
        let c = self.inst.bandwidth / std::f64::consts::LN_2;
        (0..n)
            .map(|l| {
                let mut g = vec![0.0; n];
                for (k, others) in &self.terms[l] {
                    let i = self.interference(l, *k, others, p);
                    for &j in others {
                        g[j] += c * self.inst.cross[j][l][*k] / i;
                    }
                }
                g
            })
            .collect()
    }

    fn h_value(&self, l: usize, p: &[f64]) -> f64 {
        self.terms[l]
            .iter()
            .map(|(k, others)| self.inst.bandwidth * self.interference(l, *k, others, p).log2())
            .sum()
    }

    /// Concave part `log2(S + I + N)` of link `l` and its gradient.
    fn g_value_grad(&self, l: usize, p: &[f64], grad: &mut [f64]) -> f64 {
        let b = self.inst.bandwidth;
        let c = b / std::f64::consts::LN_2;
        let mut v = 0.0;
        for (k, others) in &self.terms[l] {
            let total = self.interference(l, *k, others, p) + p[l] * self.inst.direct[l][*k];
            v += b * total.log2();
            grad[l] += c * self.inst.direct[l][*k] / total;
            for &j in others {
                grad[j] += c * self.inst.cross[j][l][*k] / total;
            }
        }
        v
    }
}

/// Linearization of the subtracted concave terms at an anchor point.
struct Surrogate {
    h_at: Vec<f64>,
    h_grad: Vec<Vec<f64>>,
    anchor: Vec<f64>,
}

impl Surrogate {
    fn lin(&self, l: usize, p: &[f64]) -> f64 {
        self.h_at[l]
            + self.h_grad[l]
                .iter()
                .zip(p.iter().zip(&self.anchor))
                .map(|(g, (x, a))| g * (x - a))
                .sum::<f64>()
    }
}

/// Surrogate objective, its gradient and per-link surrogate rates.
fn surrogate_eval(m: &PowerModel, s: &Surrogate, p: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = p.len();
    let mut grad = vec![0.0; n];
    let mut total = 0.0;
    let mut per_link = Vec::with_capacity(n);
    for l in 0..n {
        let g = m.g_value_grad(l, p, &mut grad);
        let r = g - s.lin(l, p);
        per_link.push(r);
        total += r;
        for (gj, hj) in grad.iter_mut().zip(&s.h_grad[l]) {
            *gj -= hj;
        }
    }
    (total, grad, per_link)
}

fn feasible_rates(inst: &RrmInstance, rates: &[f64]) -> bool {
    rates.iter().zip(&inst.links).all(|(r, link)| *r >= link.r_min)
}

/// One convexified subproblem: maximize the concave surrogate over the box
/// and the inner-approximated rate constraints by projected gradient ascent
/// with step halving, starting from the (feasible) anchor.
fn solve_surrogate(m: &PowerModel, s: &Surrogate, p_max: f64) -> Vec<f64> {
    let inst = m.inst;
    let mut p = s.anchor.clone();
    let (mut val, mut grad, _) = surrogate_eval(m, s, &p);
    let mut step = p_max;
    for _ in 0..INNER_MAX {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let mut accepted = false;
        while step >= INNER_MIN_STEP * p_max {
            let trial: Vec<f64> = p
                .iter()
                .zip(&grad)
                .map(|(x, g)| (x + step * g / norm).clamp(0.0, p_max))
                .collect();
            let (tv, tg, tr) = surrogate_eval(m, s, &trial);
            if tv > val && feasible_rates(inst, &tr) {
                p = trial;
                val = tv;
                grad = tg;
                accepted = true;
                step = (step * 2.0).min(p_max);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    p
}

fn dc_run(m: &PowerModel, start: Vec<f64>, p_max: f64) -> PowerOutcome {
    let mut p = start;
    let mut obj: f64 = m.rates(&p).iter().sum();
    let mut trace = vec![obj];
    let mut iterations = 0;
    for _ in 0..DC_MAX_OUTER {
        iterations += 1;
        let s = Surrogate {
            h_at: (0..p.len()).map(|l| m.h_value(l, &p)).collect(),
            h_grad: m.h_grad(&p),
            anchor: p.clone(),
        };
        let next = solve_surrogate(m, &s, p_max);
        let next_obj: f64 = m.rates(&next).iter().sum();
        if next_obj < obj {
            // Only possible through rounding; keep the previous iterate.
            break;
        }
        let rel = (next_obj - obj) / obj.abs().max(f64::MIN_POSITIVE);
        p = next;
        obj = next_obj;
        trace.push(obj);
        if rel < DC_REL_TOL {
            break;
        }
    }
    PowerOutcome {
        powers: p,
        objective: obj,
        trace,
        iterations,
    }
}

/// Raise each link that misses its rate requirement to the smallest power
/// that meets it with the others held fixed, until every requirement holds.
/// A link's own rate increases with its own power, so each raise is a
/// bisection.
fn repair_corner(m: &PowerModel, mut p: Vec<f64>, p_max: f64) -> Option<Vec<f64>> {
    let inst = m.inst;
    for _ in 0..REPAIR_ROUNDS {
        let rates = m.rates(&p);
        if feasible_rates(inst, &rates) {
            return Some(p);
        }
        for l in 0..p.len() {
            let need = inst.links[l].r_min;
            if m.rates(&p)[l] >= need {
                continue;
            }
            let (mut lo, mut hi) = (p[l], p_max);
            p[l] = hi;
            if m.rates(&p)[l] < need {
                return None;
            }
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                p[l] = mid;
                if m.rates(&p)[l] >= need {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            p[l] = hi;
        }
    }
    feasible_rates(inst, &m.rates(&p)).then_some(p)
}

/// Feasible start near a high/low corner. When raising the low links cannot
/// meet every requirement, the high links are scaled down by the largest
/// factor (found by bisection) for which the repair succeeds.
fn corner_start(m: &PowerModel, corner: Vec<f64>, p_max: f64) -> Option<Vec<f64>> {
    if let Some(p) = repair_corner(m, corner.clone(), p_max) {
        return Some(p);
    }
    let scaled = |f: f64| -> Vec<f64> {
        corner
            .iter()
            .map(|&x| if x == p_max { f * p_max } else { x })
            .collect()
    };
    let low = CORNER_LOW * p_max;
    let (mut lo, mut hi) = (CORNER_LOW, 1.0);
    let mut found = repair_corner(m, scaled(lo), p_max);
    found.as_ref()?;
    for _ in 0..SCALE_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid * p_max <= low {
            break;
        }
        match repair_corner(m, scaled(mid), p_max) {
            Some(p) => {
                lo = mid;
                found = Some(p);
            }
            None => hi = mid,
        }
    }
    found
}

/// Smoothed minimum of normalized rate slacks, for the feasibility phase.
fn min_slack(inst: &RrmInstance, rates: &[f64]) -> f64 {
    rates
        .iter()
        .zip(&inst.links)
        .filter(|(_, l)| l.r_min > 0.0)
        .map(|(r, l)| (r - l.r_min) / l.r_min)
        .fold(f64::INFINITY, f64::min)
}

/// Search for a power vector meeting every rate requirement by maximizing the
/// minimum normalized slack with a coordinate-wise pattern search.
fn feasibility_phase(m: &PowerModel, p_max: f64) -> std::result::Result<Vec<f64>, f64> {
    let inst = m.inst;
    let n = inst.len();
    let mut p = vec![p_max; n];
    let mut best = min_slack(inst, &m.rates(&p));
    let mut step = 0.5 * p_max;
    while step > 1e-6 * p_max && best < 0.0 {
        let mut improved = false;
        for i in 0..n {
            for dir in [-1.0, 1.0] {
                let mut t = p.clone();
                t[i] = (t[i] + dir * step).clamp(0.0, p_max);
                let s = min_slack(inst, &m.rates(&t));
                if s > best {
                    best = s;
                    p = t;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    if best >= 0.0 {
        Ok(p)
    } else {
        Err(best)
    }
}

/// Difference-of-concave power control at a fixed allocation.
///
/// Each link rate is `log2(S + I + N) - log2(I + N)` (per subchannel); the
/// subtracted term is linearized at the current iterate, which gives a
/// concave lower bound that is tight at the iterate, and the resulting
/// problem is solved by projected gradient ascent. The sum rate is therefore
/// non-decreasing across outer iterations. Runs start from `p_max` on every
/// link and, for small link counts, from every feasible high/low corner; the
/// best final iterate is returned.
pub fn dc_power_control(inst: &RrmInstance, alloc: &Allocation) -> Result<PowerOutcome> {
    let n = inst.len();
    let p_max = inst.p_max;
    let m = PowerModel::new(inst, alloc);
    let full = vec![p_max; n];
    let mut starts = Vec::new();
    if feasible_rates(inst, &m.rates(&full)) {
        starts.push(full);
    } else {
        match feasibility_phase(&m, p_max) {
            Ok(p) => starts.push(p),
            Err(slack) => return Err(Error::InfeasibleStart { slack }),
        }
    }
    if (2..=MAX_CORNER_LINKS).contains(&n) {
        for mask in 0u32..(1 << n) - 1 {
            let corner: Vec<f64> = (0..n)
                .map(|i| if mask >> i & 1 == 1 { p_max } else { CORNER_LOW * p_max })
                .collect();
            if let Some(p) = corner_start(&m, corner, p_max) {
                starts.push(p);
            }
        }
    }
    let mut best: Option<PowerOutcome> = None;
    for s in starts {
        let out = dc_run(&m, s, p_max);
        if best.as_ref().is_none_or(|b| out.objective > b.objective) {
            best = Some(out);
        }
    }
    Ok(best.expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random instance in the small-oracle size class. Link `i` transmits from
    /// UAV `i`; U2U links point at UAVs outside the link set, or at the
    /// transmitter of an earlier U2N link (a relay).
    pub(crate) fn random_instance(rng: &mut ChaCha8Rng, n: usize, k: usize, r_min: f64) -> RrmInstance {
        let params = RadioParams::default();
        let mut links = Vec::new();
        for i in 0..n {
            let u2n = rng.random_bool(0.5);
            let rx = if u2n {
                Node::Bs
            } else if i > 0 && rng.random_bool(0.5) {
                Node::Uav(rng.random_range(0..i))
            } else {
                Node::Uav(100 + i)
            };
            links.push(Link {
                kind: if u2n { LinkKind::U2n } else { LinkKind::U2u },
                tx: Node::Uav(i),
                rx,
                r_min,
            });
        }
        let mut t = GainTable::new();
        for i in 0..n {
            for k in 0..k {
                t.insert(Node::Uav(i), Node::Bs, k, 10f64.powf(rng.random_range(-13.0..-10.0)));
                for j in (0..n).chain(100..100 + n) {
                    if i != j {
                        t.insert(Node::Uav(i), Node::Uav(j), k, 10f64.powf(rng.random_range(-13.0..-9.0)));
                    }
                }
            }
        }
        RrmInstance::from_gains(links, &t, &params, k, 0.2).unwrap()
    }

    fn structurally_ok(inst: &RrmInstance) -> bool {
        // U2N links must fit orthogonally and every U2U link needs a
        // subchannel its relay does not use.
        let u2n = inst.links.iter().filter(|l| l.kind == LinkKind::U2n).count();
        u2n <= inst.subchannels && (inst.subchannels >= 2 || u2n + inst.len() <= 1)
    }

    #[test]
    fn single_link_single_subchannel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instance(&mut rng, 1, 1, 0.0);
        let p = vec![inst.p_max];
        let (_, relaxed, res) = allocate(&inst, &p, BnbOptions::default());
        assert_eq!(res.allocation.masks, vec![1]);
        assert!(!res.suboptimal);
        assert!((res.objective - sum_rate(&relaxed, &res.allocation, &p)).abs() < 1e-9);
    }

    #[test]
    fn greedy_singleton_takes_best_channel() {
        let params = RadioParams::default();
        let mut t = GainTable::new();
        t.insert(Node::Uav(0), Node::Bs, 0, 1e-12);
        t.insert(Node::Uav(0), Node::Bs, 1, 5e-12);
        let links = vec![Link {
            kind: LinkKind::U2n,
            tx: Node::Uav(0),
            rx: Node::Bs,
            r_min: 1e5,
        }];
        let inst = RrmInstance::from_gains(links, &t, &params, 2, 0.2).unwrap();
        let init = initial_allocation(&inst);
        assert_eq!(init.allocation.masks, vec![0b10]);
        assert_eq!(init.flagged, vec![false]);
    }

    #[test]
    fn greedy_keeps_u2n_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = RadioParams::default();
        let mut t = GainTable::new();
        for i in 0..2 {
            for k in 0..3 {
                t.insert(Node::Uav(i), Node::Bs, k, 10f64.powf(rng.random_range(-13.0..-10.0)));
            }
        }
        let links = (0..2)
            .map(|i| Link {
                kind: LinkKind::U2n,
                tx: Node::Uav(i),
                rx: Node::Bs,
                r_min: 5e6,
            })
            .collect();
        let inst = RrmInstance::from_gains(links, &t, &params, 3, 0.2).unwrap();
        let init = initial_allocation(&inst);
        assert_eq!(init.allocation.masks[0] & init.allocation.masks[1], 0);
        assert!(init.allocation.is_structurally_feasible(&inst));
    }

    #[test]
    fn interference_free_u2u_takes_everything() {
        let params = RadioParams::default();
        let mut t = GainTable::new();
        let k = 3;
        for i in 0..3 {
            t.insert_flat(Node::Uav(i), Node::Uav(10 + i), k, 1e-10 * (i + 1) as f64);
            for j in 0..3 {
                if i != j {
                    t.insert_flat(Node::Uav(i), Node::Uav(10 + j), k, 0.0);
                }
            }
        }
        let links: Vec<Link> = (0..3)
            .map(|i| Link {
                kind: LinkKind::U2u,
                tx: Node::Uav(i),
                rx: Node::Uav(10 + i),
                r_min: 1e5,
            })
            .collect();
        let inst = RrmInstance::from_gains(links, &t, &params, k, 0.2).unwrap();
        let p = vec![0.2; 3];
        let (_, relaxed, res) = allocate(&inst, &p, BnbOptions::default());
        assert!(res.allocation.masks.iter().all(|&m| m == 0b111));
        let isolated: f64 = (0..3)
            .map(|l| 3.0 * params.bandwidth_per_subchannel * (1.0 + 0.2 * 1e-10 * (l + 1) as f64 / params.noise_power()).log2())
            .sum();
        assert!((res.objective / isolated - 1.0).abs() < 1e-12);
        assert!(meets_qos(&relaxed, &res.allocation, &p));
    }

    #[test]
    fn bnb_matches_exhaustive_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 100 {
            let n = rng.random_range(1..=5);
            let k = rng.random_range(1..=3);
            let r_min = rng.random_range(0.0..1.5e6);
            let inst = random_instance(&mut rng, n, k, r_min);
            if !structurally_ok(&inst) {
                continue;
            }
            let p = vec![inst.p_max; n];
            let (init, relaxed, res) = allocate(&inst, &p, BnbOptions::default());
            if init.allocation.masks.contains(&0) {
                continue;
            }
            let (_, best) = oracle::exhaustive_allocation(&relaxed).unwrap().expect("greedy is feasible");
            assert!(
                (res.objective - best).abs() <= 1e-9 * best.abs().max(1.0),
                "bnb {} vs oracle {}",
                res.objective,
                best
            );
            assert!(res.allocation.is_structurally_feasible(&relaxed));
            assert!(meets_qos(&relaxed, &res.allocation, &p));
            let greedy = sum_rate(&relaxed, &init.allocation, &p);
            assert!(res.objective >= greedy - 1e-9 * greedy.abs());
            checked += 1;
        }
    }

    #[test]
    fn node_budget_returns_incumbent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inst = loop {
            let i = random_instance(&mut rng, 5, 3, 2e5);
            if structurally_ok(&i) {
                break i;
            }
        };
        let p = vec![inst.p_max; inst.len()];
        let init = initial_allocation(&inst);
        let relaxed = inst.relaxed(&init.flagged);
        let res = branch_and_bound(
            &relaxed,
            &p,
            &init.allocation,
            BnbOptions {
                node_budget: 0,
                record_tree: true,
            },
        );
        assert!(res.suboptimal);
        assert_eq!(res.allocation, init.allocation);
        assert!(res.tree_dump().contains("suboptimal=true"));
    }

    #[test]
    fn dc_single_link_full_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 1, 2, 1e5);
        let mut alloc = Allocation::empty(1);
        alloc.set(0, 0);
        let out = dc_power_control(&inst, &alloc).unwrap();
        assert!((out.powers[0] - inst.p_max).abs() < 1e-12);
    }

    #[test]
    fn dc_symmetric_links_mirror_objective() {
        let params = RadioParams::default();
        let mut t = GainTable::new();
        for (a, b) in [(0, 1), (1, 0)] {
            t.insert(Node::Uav(a), Node::Uav(10 + a), 0, 1e-10);
            t.insert(Node::Uav(a), Node::Uav(10 + b), 0, 3e-12);
        }
        let links: Vec<Link> = (0..2)
            .map(|i| Link {
                kind: LinkKind::U2u,
                tx: Node::Uav(i),
                rx: Node::Uav(10 + i),
                r_min: 1e5,
            })
            .collect();
        let inst = RrmInstance::from_gains(links, &t, &params, 1, 0.2).unwrap();
        let mut alloc = Allocation::empty(2);
        alloc.set(0, 0);
        alloc.set(1, 0);
        let out = dc_power_control(&inst, &alloc).unwrap();
        let mirrored = vec![out.powers[1], out.powers[0]];
        assert!((sum_rate(&inst, &alloc, &mirrored) - out.objective).abs() <= 1e-9 * out.objective);
        let (_, grid) = oracle::grid_power_search(&inst, &alloc, 0.02 * inst.p_max).unwrap().unwrap();
        assert!(out.objective >= grid * (1.0 - 1e-3), "{} vs {grid}", out.objective);
    }

    #[test]
    fn dc_infeasible_start_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = random_instance(&mut rng, 2, 1, 1e9);
        let mut alloc = Allocation::empty(2);
        alloc.set(0, 0);
        alloc.set(1, 0);
        assert!(matches!(dc_power_control(&inst, &alloc), Err(Error::InfeasibleStart { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dc_trace_non_decreasing_and_boxed(seed in 0u64..10_000, n in 2usize..5, r_min in 0.0..4e5f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_instance(&mut rng, n, 2, r_min);
            let mut alloc = Allocation::empty(n);
            for l in 0..n {
                alloc.set(l, l % 2);
            }
            if let Ok(out) = dc_power_control(&inst, &alloc) {
                for w in out.trace.windows(2) {
                    prop_assert!(w[1] >= w[0]);
                }
                prop_assert!(out.powers.iter().all(|&p| (0.0..=inst.p_max).contains(&p)));
                prop_assert!(out.iterations <= DC_MAX_OUTER);
            }
        }

        #[test]
        fn bnb_allocations_respect_structure(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..=4);
            let k = rng.random_range(2..=4);
            let inst = random_instance(&mut rng, n, k, 3e5);
            prop_assume!(structurally_ok(&inst));
            let p = vec![inst.p_max; n];
            let (init, relaxed, res) = allocate(&inst, &p, BnbOptions::default());
            prop_assume!(!init.allocation.masks.contains(&0));
            prop_assert!(res.allocation.is_structurally_feasible(&relaxed));
            let greedy = sum_rate(&relaxed, &init.allocation, &p);
            prop_assert!(res.objective >= greedy * (1.0 - 1e-12));
        }
    }
}
