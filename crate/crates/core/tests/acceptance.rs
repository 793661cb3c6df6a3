//! Acceptance checks. Each check prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any check fails.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavcoop::channel::{los_probability, sample_rician, u2n_expected_gain, GainTable, Node, RadioParams};
use uavcoop::geometry::{distance, Point3};
use uavcoop::metrics::slot_csv;
use uavcoop::oracle::{exhaustive_allocation, grid_point_search, grid_power_search, GridBox};
use uavcoop::protocol::expected_snr_db;
use uavcoop::rrm::{allocate, dc_power_control, Allocation, BnbOptions, Link, LinkKind, RrmInstance};
use uavcoop::sensing::{feasible_region, SensingModel, SensingTask};
use uavcoop::sim::{run, RunSummary};
use uavcoop::trajectory::{expected_u2n_rate, plan_communication_detour, plan_next_sensing_point};
use uavcoop::{Scenario, Scheme};

type Check = std::result::Result<String, String>;

fn comparison() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/comparison.toml");
    Scenario::load(path).expect("comparison scenario")
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Random allocation instance: U2N links never outnumber the subchannels;
/// U2U links either point at a UAV outside the link set or at the
/// transmitter of an earlier U2N link.
fn random_instance(rng: &mut ChaCha8Rng) -> RrmInstance {
    let params = RadioParams::default();
    let k = rng.random_range(1..=3usize);
    let n = rng.random_range(1..=5usize);
    let mut links: Vec<Link> = Vec::new();
    let mut relays = Vec::new();
    for i in 0..n {
        let u2n = relays.len() < k && rng.random_bool(0.5);
        let rx = if u2n {
            relays.push(i);
            Node::Bs
        } else if !relays.is_empty() && rng.random_bool(0.5) {
            Node::Uav(relays[rng.random_range(0..relays.len())])
        } else {
            Node::Uav(100 + i)
        };
        links.push(Link {
            kind: if u2n { LinkKind::U2n } else { LinkKind::U2u },
            tx: Node::Uav(i),
            rx,
            r_min: 0.0,
        });
    }
    let mut t = GainTable::new();
    for i in 0..n {
        for s in 0..k {
            t.insert(Node::Uav(i), Node::Bs, s, 10f64.powf(rng.random_range(-13.0..-10.0)));
            for j in (0..n).chain(100..100 + n) {
                if i != j {
                    t.insert(Node::Uav(i), Node::Uav(j), s, 10f64.powf(rng.random_range(-13.0..-9.0)));
                }
            }
        }
    }
    let mut inst = RrmInstance::from_gains(links, &t, &params, k, 0.2).unwrap();
    // Requirements between zero and a share of the best single-subchannel
    // interference-free rate, so some instances bind and a few are infeasible.
    for l in 0..n {
        if rng.random_bool(0.6) {
            let best = inst.direct[l].iter().cloned().fold(0.0, f64::max);
            let solo = inst.bandwidth * (1.0 + inst.p_max * best / inst.noise).log2();
            inst.links[l].r_min = solo * rng.random_range(0.05..0.6);
        }
    }
    inst
}

fn allocation_matches_exhaustive() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa110c);
    let start = Instant::now();
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    let mut drawn = 0;
    while compared < 120 {
        drawn += 1;
        let inst = random_instance(&mut rng);
        let powers = vec![inst.p_max; inst.len()];
        let (_, relaxed, res) = allocate(&inst, &powers, BnbOptions::default());
        let Some((_, best)) = exhaustive_allocation(&relaxed).map_err(|e| e.to_string())? else {
            continue;
        };
        if res.suboptimal {
            return Err(format!("instance {drawn}: search reported a budget stop"));
        }
        let e = rel_err(res.objective, best);
        worst = worst.max(e);
        if e > 1e-9 {
            return Err(format!(
                "instance {drawn}: branch-and-bound {:.12e} vs exhaustive {:.12e}",
                res.objective, best
            ));
        }
        compared += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("{compared} instances took {secs:.1} s"));
    }
    Ok(format!("{compared} instances, worst rel err {worst:.2e}, {secs:.2} s"))
}

/// Two links sharing every subchannel: a U2N link and a U2U link to an
/// outside receiver, or two U2U links.
fn two_link_instance(rng: &mut ChaCha8Rng) -> (RrmInstance, Allocation) {
    let params = RadioParams::default();
    let k = rng.random_range(1..=2usize);
    let first_u2n = rng.random_bool(0.5);
    let links = vec![
        Link {
            kind: if first_u2n { LinkKind::U2n } else { LinkKind::U2u },
            tx: Node::Uav(0),
            rx: if first_u2n { Node::Bs } else { Node::Uav(10) },
            r_min: 0.0,
        },
        Link {
            kind: LinkKind::U2u,
            tx: Node::Uav(1),
            rx: Node::Uav(11),
            r_min: 0.0,
        },
    ];
    let mut t = GainTable::new();
    for i in 0..2 {
        for s in 0..k {
            t.insert(Node::Uav(i), Node::Bs, s, 10f64.powf(rng.random_range(-12.0..-9.0)));
            for j in [10, 11] {
                t.insert(Node::Uav(i), Node::Uav(j), s, 10f64.powf(rng.random_range(-12.0..-8.0)));
            }
        }
    }
    let mut inst = RrmInstance::from_gains(links, &t, &params, k, 0.2).unwrap();
    for l in 0..2 {
        if rng.random_bool(0.5) {
            let best = inst.direct[l].iter().cloned().fold(0.0, f64::max);
            let solo = inst.bandwidth * (1.0 + inst.p_max * best / inst.noise).log2();
            inst.links[l].r_min = solo * rng.random_range(0.02..0.3);
        }
    }
    let mut alloc = Allocation::empty(2);
    for l in 0..2 {
        for s in 0..k {
            alloc.set(l, s);
        }
    }
    (inst, alloc)
}

fn power_control_near_grid() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdc);
    let mut compared = 0;
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    let mut drawn = 0;
    while compared < 120 {
        drawn += 1;
        let (inst, alloc) = two_link_instance(&mut rng);
        let grid = grid_power_search(&inst, &alloc, 0.02 * inst.p_max).map_err(|e| e.to_string())?;
        let Some((_, g)) = grid else { continue };
        let out = match dc_power_control(&inst, &alloc) {
            Ok(o) => o,
            Err(e) => return Err(format!("instance {drawn}: grid feasible but power control failed: {e}")),
        };
        if let Some(w) = out.trace.windows(2).find(|w| w[1] < w[0]) {
            return Err(format!("instance {drawn}: objective decreased {:.12e} -> {:.12e}", w[0], w[1]));
        }
        let gap = (g - out.objective) / g;
        worst_gap = worst_gap.max(gap);
        if out.objective < g * (1.0 - 0.02) {
            return Err(format!("instance {drawn}: {:.6e} vs grid {:.6e}", out.objective, g));
        }
        compared += 1;
    }
    Ok(format!(
        "{compared} instances, worst shortfall vs grid {:.3}%",
        100.0 * worst_gap.max(0.0)
    ))
}

fn planners_near_grid() -> Check {
    let params = RadioParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e0);
    let mut worst_gain: f64 = 0.0;
    let mut worst_dist: f64 = 0.0;
    for case in 0..20 {
        let bs = Point3::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), rng.random_range(10.0..40.0));
        let model = SensingModel {
            decay: rng.random_range(0.003..0.006),
            min_altitude: rng.random_range(30.0..70.0),
            max_radius: 1e4,
        };
        let az = rng.random_range(0.0..std::f64::consts::TAU);
        let r = rng.random_range(200.0..1200.0);
        let center = Point3::new(bs.x + r * az.cos(), bs.y + r * az.sin(), 0.0);
        let task = SensingTask::new(case, center, rng.random_range(0.4..0.7), 1e6, 1);
        let crown = feasible_region(&model, &task).map_err(|e| e.to_string())?;
        let got = plan_next_sensing_point(Point3::new(0.0, 0.0, 100.0), &task, &model, bs, &params)
            .map_err(|e| e.to_string())?;
        if !crown.contains(got) {
            return Err(format!("geometry {case}: sensing point outside the feasible region"));
        }
        let (lo, hi) = crown.bounding_box();
        let res = ((hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z) / 1e6).cbrt();
        let (_, best) = grid_point_search(
            GridBox { min: lo, max: hi },
            |q| crown.contains(q),
            |q| u2n_expected_gain(q, bs, &params).unwrap(),
            res,
        )
        .ok_or("empty grid")?;
        let g = u2n_expected_gain(got, bs, &params).unwrap();
        worst_gain = worst_gain.max((best - g) / best);
        if g < best * (1.0 - 1e-3) {
            return Err(format!("geometry {case}: gain {g:e} vs grid {best:e}"));
        }

        // Detour: the sensing point lies in the plane y = bs.y on a random
        // side, beyond the range where the rate requirement holds.
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let h = rng.random_range(1300.0..2200.0);
        let s = Point3::new(bs.x + side * h, bs.y, rng.random_range(60.0..250.0));
        let anchor = Point3::new(bs.x + rng.random_range(400.0..900.0), bs.y, 100.0);
        let r_min = expected_u2n_rate(anchor, bs, &params, 0.2);
        let d_got = match plan_communication_detour(s, bs, &params, 0.2, r_min, model.min_altitude) {
            Ok(q) => {
                if expected_u2n_rate(q, bs, &params, 0.2) < r_min * (1.0 - 1e-9) || q.z < model.min_altitude - 1e-9 {
                    return Err(format!("geometry {case}: detour point misses the rate requirement"));
                }
                distance(q, s)
            }
            Err(e) => return Err(format!("geometry {case}: {e}")),
        };
        let (x0, x1) = if side > 0.0 { (bs.x, s.x) } else { (s.x, bs.x) };
        let (_, neg) = grid_point_search(
            GridBox {
                min: Point3::new(x0, bs.y, model.min_altitude),
                max: Point3::new(x1, bs.y, 700.0),
            },
            |q| expected_u2n_rate(q, bs, &params, 0.2) >= r_min,
            |q| -distance(q, s),
            1.0,
        )
        .ok_or("no feasible grid point")?;
        let d_grid = -neg;
        worst_dist = worst_dist.max((d_got - d_grid) / d_grid);
        if d_got > d_grid * 1.005 {
            return Err(format!("geometry {case}: detour {d_got:.2} m vs grid {d_grid:.2} m"));
        }
    }
    Ok(format!(
        "20 geometries, worst gain shortfall {:.4}%, worst detour excess {:.4}%",
        100.0 * worst_gain.max(0.0),
        100.0 * worst_dist.max(0.0)
    ))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn run_seeds(base: &Scenario, scheme: Scheme, seeds: &[u64]) -> Result<Vec<RunSummary>, String> {
    seeds
        .iter()
        .map(|&s| {
            run(&base.clone().with_scheme(scheme).with_seed(s))
                .map(|o| o.summary)
                .map_err(|e| format!("{scheme} seed {s}: {e}"))
        })
        .collect()
}

fn scheme_ranking() -> Check {
    let start = Instant::now();
    let base = comparison();
    let seeds: Vec<u64> = (0..50).collect();
    let coop = run_seeds(&base, Scheme::Cooperative, &seeds)?;
    let non = run_seeds(&base, Scheme::Noncooperative, &seeds)?;
    let sep = run_seeds(&base, Scheme::Separate, &seeds)?;
    let m = |v: &[RunSummary]| mean(&v.iter().map(|s| s.mean_sum_rate).collect::<Vec<_>>());
    let (mc, mn, ms) = (m(&coop), m(&non), m(&sep));
    let wins = coop
        .iter()
        .zip(&non)
        .filter(|(c, n)| c.mean_sum_rate > n.mean_sum_rate)
        .count();
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "means coop {mc:.4e} > noncoop {mn:.4e} > separate {ms:.4e}; coop wins {wins}/50; {secs:.1} s"
    );
    if mc > mn && mn > ms && wins >= 40 && secs < 600.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cooperation_gain_grows() -> Check {
    let base = comparison();
    let seeds: Vec<u64> = (0..10).collect();
    let gain = |k: usize| -> Result<f64, String> {
        let s = base.clone().with_subchannels(k);
        let c = run_seeds(&s, Scheme::Cooperative, &seeds)?;
        let n = run_seeds(&s, Scheme::Noncooperative, &seeds)?;
        let m = |v: &[RunSummary]| mean(&v.iter().map(|s| s.mean_sum_rate).collect::<Vec<_>>());
        Ok(m(&c) - m(&n))
    };
    let (g4, g12) = (gain(4)?, gain(12)?);
    let detail = format!("gain at 4 subchannels {g4:.4e} bit/s, at 12 subchannels {g12:.4e} bit/s");
    if g12 > g4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn channel_statistics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfade);
    let mut means = Vec::new();
    for k_db in [f64::NEG_INFINITY, 0.0, 6.0, 15.0] {
        let n = 100_000;
        let m = (0..n).map(|_| sample_rician(k_db, &mut rng)).sum::<f64>() / n as f64;
        if !(0.98..=1.02).contains(&m) {
            return Err(format!("fade mean {m:.4} at K = {k_db} dB"));
        }
        means.push(format!("{m:.4}"));
    }
    let params = RadioParams::default();
    for _ in 0..10_000 {
        let a = rng.random_range(0.0..90.0);
        let b = rng.random_range(0.0..90.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if los_probability(lo, &params) > los_probability(hi, &params) {
            return Err(format!("LoS probability decreases between {lo} and {hi} degrees"));
        }
    }
    Ok(format!("fade means [{}], LoS monotone on 10000 pairs", means.join(", ")))
}

fn csv_reproducible() -> Check {
    let s = comparison().with_seed(7);
    let a = slot_csv(&s, &run(&s).map_err(|e| e.to_string())?.records).map_err(|e| e.to_string())?;
    let b = slot_csv(&s, &run(&s).map_err(|e| e.to_string())?.records).map_err(|e| e.to_string())?;
    if a == b {
        Ok(format!("two runs of seed 7 produced identical {} byte CSVs", a.len()))
    } else {
        Err("per-slot CSVs differ between runs".into())
    }
}

/// Horizontal distance from the BS at 100 m altitude where the expected SNR
/// equals `target_db`.
fn range_for_snr(bs: Point3, params: &RadioParams, p_max: f64, target_db: f64) -> f64 {
    let snr = |h: f64| expected_snr_db(Point3::new(bs.x + h, bs.y, 100.0), bs, params, p_max).unwrap();
    let (mut lo, mut hi) = (10.0, 20_000.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if snr(mid) > target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn threshold_mode_split() -> Check {
    let params = RadioParams::default();
    let bs = Point3::new(0.0, 0.0, 25.0);
    let strong = range_for_snr(bs, &params, 0.2, 21.0);
    let weak = range_for_snr(bs, &params, 0.2, 19.0);
    let text = format!(
        "subchannels = 4\nsnr_threshold_db = 20.0\ntotal_slots = 3\n\
         [bs]\nposition = [0.0, 0.0, 25.0]\n\
         [[uav]]\nid = 0\nposition = [{strong}, 0.0, 100.0]\ntasks = []\n\
         [[uav]]\nid = 1\nposition = [{weak}, 0.0, 100.0]\ntasks = []\n"
    );
    let s = Scenario::parse(&text).map_err(|e| e.to_string())?;
    let out = run(&s).map_err(|e| e.to_string())?;
    let first = out.records.first().ok_or("no slots")?;
    let snr0 = expected_snr_db(first.uavs[0].position, bs, &params, 0.2).unwrap();
    let u0 = &first.uavs[0];
    let u1 = &first.uavs[1];
    let detail = format!(
        "uav0 {snr0:.2} dB -> {:?}, uav1 -> {:?} relay {:?}",
        u0.mode, u1.mode, u1.relay
    );
    if u0.mode == Some(LinkKind::U2n) && u1.mode == Some(LinkKind::U2u) && u1.relay == Some(0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("branch-and-bound matches exhaustive allocation", allocation_matches_exhaustive),
        ("power control within 2% of power grid", power_control_near_grid),
        ("trajectory planners match grid search", planners_near_grid),
        ("scheme ranking on the comparison scenario", scheme_ranking),
        ("cooperation gain grows with subchannels", cooperation_gain_grows),
        ("fading and LoS statistics", channel_statistics),
        ("per-slot CSV is reproducible", csv_reproducible),
        ("mode selection splits at the SNR threshold", threshold_mode_split),
    ];
    let mut failed = 0;
    for &(name, f) in &checks {
        match f() {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
