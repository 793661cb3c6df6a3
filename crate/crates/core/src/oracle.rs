//! Brute-force reference solvers. These re-derive rates and structural rules
//! in place and share no code with the optimizers they check.

use serde::{Deserialize, Serialize};

use crate::channel::Node;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::rrm::{Allocation, LinkKind, RrmInstance};

/// Largest number of allocation candidates enumerated.
pub const ALLOCATION_BUDGET: u64 = 1 << 24;
/// Largest number of power grid points evaluated.
pub const POWER_GRID_BUDGET: u64 = 5_000_000;

/// Size-checked wrapper around an allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallInstance(pub RrmInstance);

impl SmallInstance {
    pub const MAX_LINKS: usize = 6;
    pub const MAX_SUBCHANNELS: usize = 4;

    pub fn new(inst: RrmInstance) -> Result<Self> {
        if inst.len() > Self::MAX_LINKS || inst.subchannels > Self::MAX_SUBCHANNELS {
            return Err(Error::BudgetExceeded {
                limit: ALLOCATION_BUDGET,
            });
        }
        Ok(SmallInstance(inst))
    }
}

fn shares_forbidden(inst: &RrmInstance, a: usize, b: usize) -> bool {
    let (la, lb) = (&inst.links[a], &inst.links[b]);
    let both_cellular = matches!(la.kind, LinkKind::U2n) && matches!(lb.kind, LinkKind::U2n);
    let relay_clash = la.tx == lb.rx || lb.tx == la.rx;
    both_cellular || relay_clash || la.tx == lb.tx
}

fn rates_at(inst: &RrmInstance, rows: &[u64], powers: &[f64]) -> Vec<f64> {
    let n = rows.len();
    let mut out = vec![0.0; n];
    for (l, out_l) in out.iter_mut().enumerate() {
        for k in 0..inst.subchannels {
            if rows[l] & (1 << k) == 0 {
                continue;
            }
            let mut denom = inst.noise;
            for j in 0..n {
                if j != l && rows[j] & (1 << k) != 0 {
                    denom += powers[j] * inst.cross[j][l][k];
                }
            }
            let snr = powers[l] * inst.direct[l][k] / denom;
            *out_l += inst.bandwidth * (1.0 + snr).ln() / std::f64::consts::LN_2;
        }
    }
    out
}

/// Global optimum of the subchannel assignment at full power by enumerating
/// every binary link-by-subchannel matrix. `Ok(None)` when no candidate meets
/// the structure and rate constraints.
pub fn exhaustive_allocation(inst: &RrmInstance) -> Result<Option<(Allocation, f64)>> {
    let n = inst.len();
    let k = inst.subchannels;
    let total_bits = (n * k) as u32;
    if total_bits > 24 {
        return Err(Error::BudgetExceeded {
            limit: ALLOCATION_BUDGET,
        });
    }
    let powers = vec![inst.p_max; n];
    let row_mask = (1u64 << k) - 1;
    let mut best: Option<(Vec<u64>, f64)> = None;
    let mut rows = vec![0u64; n];
    'outer: for code in 0u64..(1u64 << total_bits) {
        for (l, r) in rows.iter_mut().enumerate() {
            *r = (code >> (l * k)) & row_mask;
            if *r == 0 {
                continue 'outer;
            }
        }
        for a in 0..n {
            for b in a + 1..n {
                if rows[a] & rows[b] != 0 && shares_forbidden(inst, a, b) {
                    continue 'outer;
                }
            }
        }
        let rates = rates_at(inst, &rows, &powers);
        if rates.iter().zip(&inst.links).any(|(r, l)| *r < l.r_min) {
            continue;
        }
        let total: f64 = rates.iter().sum();
        if best.as_ref().is_none_or(|(_, v)| total > *v) {
            best = Some((rows.clone(), total));
        }
    }
    Ok(best.map(|(masks, v)| (Allocation { masks }, v)))
}

/// Best power vector on the grid `{0, res, 2 res, ..., p_max}^n` that meets
/// every rate requirement. `Ok(None)` when no grid point is feasible.
pub fn grid_power_search(
    inst: &RrmInstance,
    alloc: &Allocation,
    resolution: f64,
) -> Result<Option<(Vec<f64>, f64)>> {
    let n = inst.len();
    let steps = (inst.p_max / resolution).round() as u64;
    let levels: Vec<f64> = (0..=steps)
        .map(|i| (i as f64 * resolution).min(inst.p_max))
        .collect();
    let count = (levels.len() as u64).checked_pow(n as u32);
    if count.is_none_or(|c| c > POWER_GRID_BUDGET) {
        return Err(Error::BudgetExceeded {
            limit: POWER_GRID_BUDGET,
        });
    }
    let count = count.unwrap();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut p = vec![0.0; n];
    for code in 0..count {
        let mut c = code;
        for slot in p.iter_mut() {
            *slot = levels[(c % levels.len() as u64) as usize];
            c /= levels.len() as u64;
        }
        let rates = rates_at(inst, &alloc.masks, &p);
        if rates.iter().zip(&inst.links).any(|(r, l)| *r < l.r_min) {
            continue;
        }
        let total: f64 = rates.iter().sum();
        if best.as_ref().is_none_or(|(_, v)| total > *v) {
            best = Some((p.clone(), total));
        }
    }
    Ok(best)
}

/// Axis-aligned grid box. Axes with `min == max` are degenerate (one level).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub min: Point3,
    pub max: Point3,
}

fn levels(lo: f64, hi: f64, res: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / res).floor().max(0.0) as u64;
    (0..=n).map(move |i| lo + i as f64 * res)
}

/// Best grid point of `region` under `objective` (maximized), scanning x,
/// then y, then z in increasing order; ties keep the first point scanned.
pub fn grid_point_search(
    region: GridBox,
    contains: impl Fn(Point3) -> bool,
    objective: impl Fn(Point3) -> f64,
    resolution: f64,
) -> Option<(Point3, f64)> {
    let mut best: Option<(Point3, f64)> = None;
    for x in levels(region.min.x, region.max.x, resolution) {
        for y in levels(region.min.y, region.max.y, resolution) {
            for z in levels(region.min.z, region.max.z, resolution) {
                let p = Point3::new(x, y, z);
                if !contains(p) {
                    continue;
                }
                let v = objective(p);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((p, v));
                }
            }
        }
    }
    best
}

/// Reference values printed by the `oracle` CLI subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub allocation: Option<Vec<Vec<usize>>>,
    pub allocation_objective: Option<f64>,
    pub powers: Option<Vec<f64>>,
    pub power_objective: Option<f64>,
}

/// Instance file for the `oracle` subcommand.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub subchannels: usize,
    pub p_max: f64,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub noise_psd: Option<f64>,
    /// Power grid resolution as a fraction of `p_max`.
    #[serde(default = "default_resolution")]
    pub power_resolution: f64,
    pub link: Vec<InstanceLink>,
}

fn default_resolution() -> f64 {
    0.02
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceLink {
    pub kind: LinkKind,
    /// Transmitting UAV id.
    pub tx: usize,
    /// Receiving UAV id; absent for U2N links.
    #[serde(default)]
    pub rx: Option<usize>,
    #[serde(default)]
    pub r_min: f64,
    /// Own gain per subchannel.
    pub gain: Vec<f64>,
    /// Gain from this link's transmitter to each link's receiver (one entry
    /// per link, same gain on every subchannel; own entry ignored).
    pub cross: Vec<f64>,
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_instance(&self) -> Result<RrmInstance> {
        let defaults = crate::channel::RadioParams::default();
        let bandwidth = self.bandwidth.unwrap_or(defaults.bandwidth_per_subchannel);
        let noise = crate::channel::dbm_to_watts(self.noise_psd.unwrap_or(defaults.noise_psd)) * bandwidth;
        let n = self.link.len();
        if n == 0 {
            return Err(Error::validation("link", "at least one link required"));
        }
        let mut links = Vec::with_capacity(n);
        let mut direct = Vec::with_capacity(n);
        for (i, l) in self.link.iter().enumerate() {
            if l.gain.len() != self.subchannels {
                return Err(Error::validation(format!("link[{i}].gain"), "needs one entry per subchannel"));
            }
            if l.cross.len() != n {
                return Err(Error::validation(format!("link[{i}].cross"), "needs one entry per link"));
            }
            let rx = match (l.kind, l.rx) {
                (LinkKind::U2n, _) => Node::Bs,
                (LinkKind::U2u, Some(r)) => Node::Uav(r),
                (LinkKind::U2u, None) => return Err(Error::validation(format!("link[{i}].rx"), "required for U2U")),
            };
            links.push(crate::rrm::Link {
                kind: l.kind,
                tx: Node::Uav(l.tx),
                rx,
                r_min: l.r_min,
            });
            direct.push(l.gain.clone());
        }
        let cross = (0..n)
            .map(|j| (0..n).map(|l| vec![self.link[j].cross[l]; self.subchannels]).collect())
            .collect();
        Ok(RrmInstance {
            links,
            subchannels: self.subchannels,
            bandwidth,
            noise,
            p_max: self.p_max,
            direct,
            cross,
        })
    }
}

/// Exhaustive allocation plus, for up to three links, the power grid search
/// at the optimal allocation.
pub fn report(file: &InstanceFile) -> Result<OracleReport> {
    let inst = SmallInstance::new(file.to_instance()?)?.0;
    let alloc = exhaustive_allocation(&inst)?;
    let (powers, power_objective) = match &alloc {
        Some((a, _)) if inst.len() <= 3 => {
            match grid_power_search(&inst, a, file.power_resolution * inst.p_max)? {
                Some((p, v)) => (Some(p), Some(v)),
                None => (None, None),
            }
        }
        _ => (None, None),
    };
    Ok(OracleReport {
        allocation: alloc.as_ref().map(|(a, _)| (0..inst.len()).map(|l| a.subchannels(l)).collect()),
        allocation_objective: alloc.map(|(_, v)| v),
        powers,
        power_objective,
    })
}
