use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uavcoop::metrics::{aggregate_csv, slot_csv, summary_csv, write_atomic};
use uavcoop::oracle::{report, InstanceFile};
use uavcoop::rrm::{allocate, dc_power_control, BnbOptions};
use uavcoop::sim::{aggregate, replicate, run_with, RunOptions, RunSummary};
use uavcoop::{Error, Result, Scenario, Scheme};

mod plot;

#[derive(Parser)]
#[command(name = "uavcoop", version, about = "Cooperative cellular UAV sense-and-send simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seed and write the per-slot CSV.
    Run(RunArgs),
    /// Simulate several seeds and write per-seed summaries and aggregates.
    Replicate(ReplicateArgs),
    /// Print brute-force reference values for a small allocation instance.
    Oracle(OracleArgs),
    /// Render sum-rate and trajectory plots as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// cooperative, noncooperative or separate.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the branch-and-bound search tree of every slot.
    #[arg(long)]
    dump_search_tree: bool,
}

#[derive(Args)]
struct ReplicateArgs {
    #[command(flatten)]
    common: Common,
    /// A count N (seeds 0..N) or a comma-separated list.
    #[arg(long, default_value = "10")]
    seeds: String,
    /// Run every scheme on the same seeds.
    #[arg(long)]
    all_schemes: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// Instance file (TOML).
    instance: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "5")]
    seeds: String,
    /// Seed used for the trajectory plot.
    #[arg(long)]
    seed: Option<u64>,
    /// Subchannel counts for the sum-rate sweep.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10,12")]
    subchannels: Vec<usize>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::validation("--seeds", format!("expected a count or a comma-separated list, got `{s}`"));
    if s.contains(',') {
        s.split(',')
            .map(|x| x.trim().parse::<u64>().map_err(|_| bad()))
            .collect()
    } else {
        let n: u64 = s.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        Ok((0..n).collect())
    }
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = Scenario::load(&common.scenario)?;
    if let Some(name) = &common.scheme {
        s.scheme = name.parse()?;
    }
    Ok(s)
}

fn print_summary(s: &RunSummary) {
    println!(
        "{} seed={} mean_sum_rate={:.6e} completion_time={} qos_violations={} delivered_bits={:.6e} u2u_link_slots={} bnb_nodes={} dc_iterations={}",
        s.scheme,
        s.seed,
        s.mean_sum_rate,
        s.completion_time,
        s.qos_violations,
        s.delivered_bits,
        s.u2u_link_slots,
        s.bnb_nodes,
        s.dc_iterations
    );
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut s = load(&a.common)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    let out = run_with(
        &s,
        RunOptions {
            record_tree: a.dump_search_tree,
        },
    )?;
    let name = format!("run_{}_seed{}.csv", s.scheme, s.seed);
    write_atomic(&a.common.out.join(&name), &slot_csv(&s, &out.records)?)?;
    if a.dump_search_tree {
        let dir = a.common.out.join(format!("search_tree_{}_seed{}", s.scheme, s.seed));
        for (slot, dump) in &out.tree_dumps {
            write_atomic(&dir.join(format!("slot_{slot:06}.txt")), dump.as_bytes())?;
        }
    }
    print_summary(&out.summary);
    if out.summary.suboptimal_slots > 0 {
        return Err(Error::BudgetExceeded { limit: s.node_budget });
    }
    Ok(())
}

fn cmd_replicate(a: ReplicateArgs) -> Result<()> {
    let base = load(&a.common)?;
    let seeds = parse_seeds(&a.seeds)?;
    let schemes: Vec<Scheme> = if a.all_schemes { Scheme::ALL.to_vec() } else { vec![base.scheme] };
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    let mut failed = 0;
    for scheme in schemes {
        let rep = replicate(&base.clone().with_scheme(scheme), &seeds);
        for (seed, r) in &rep.runs {
            match r {
                Ok(s) => print_summary(s),
                Err(e) => {
                    failed += 1;
                    eprintln!("{scheme} seed={seed}: {e}");
                }
            }
        }
        let ok: Vec<&RunSummary> = rep.summaries().collect();
        for iv in aggregate(&ok) {
            println!(
                "{scheme} {}: mean={:.6e} 95% CI=[{:.6e}, {:.6e}] n={}",
                iv.metric, iv.mean, iv.low, iv.high, iv.n
            );
            groups.push((scheme.to_string(), iv));
        }
        rows.extend(
            rep.runs
                .into_iter()
                .map(|(seed, r)| (seed, r.map_err(|e| e.to_string()))),
        );
    }
    write_atomic(&a.common.out.join("summaries.csv"), &summary_csv(&rows)?)?;
    write_atomic(&a.common.out.join("aggregate.csv"), &aggregate_csv(&groups)?)?;
    if failed > 0 {
        return Err(Error::RunsFailed {
            failed,
            total: rows.len(),
        });
    }
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let file = InstanceFile::parse(&std::fs::read_to_string(&a.instance)?)?;
    let inst = file.to_instance()?;
    let rep = report(&file)?;
    match (&rep.allocation, rep.allocation_objective) {
        (Some(alloc), Some(v)) => {
            println!("exhaustive_allocation objective={v:.12e}");
            for (l, subs) in alloc.iter().enumerate() {
                println!("  link {l}: subchannels {subs:?}");
            }
        }
        _ => println!("exhaustive_allocation: no feasible allocation"),
    }
    if let (Some(p), Some(v)) = (&rep.powers, rep.power_objective) {
        println!("grid_power_search objective={v:.12e} powers={p:?}");
    }
    let powers = vec![inst.p_max; inst.len()];
    let (_, relaxed, bnb) = allocate(&inst, &powers, BnbOptions::default());
    println!(
        "branch_and_bound objective={:.12e} nodes={} suboptimal={}",
        bnb.objective, bnb.stats.nodes, bnb.suboptimal
    );
    if let Ok(dc) = dc_power_control(&relaxed, &bnb.allocation) {
        println!("dc_power_control objective={:.12e} powers={:?}", dc.objective, dc.powers);
    }
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let base = load(&a.common)?;
    let seeds = parse_seeds(&a.seeds)?;
    std::fs::create_dir_all(&a.common.out)?;
    let mut series = Vec::new();
    for scheme in Scheme::ALL {
        let mut pts = Vec::new();
        for &k in &a.subchannels {
            let s = base.clone().with_scheme(scheme).with_subchannels(k);
            s.validate()?;
            let rep = replicate(&s, &seeds);
            let ok: Vec<&RunSummary> = rep.summaries().collect();
            let iv = &aggregate(&ok)[0];
            pts.push((k as f64, iv.mean, iv.low, iv.high));
        }
        series.push((scheme, pts));
    }
    let path = a.common.out.join("sum_rate_vs_subchannels.svg");
    plot::sum_rate(&path, &series)?;
    println!("wrote {}", path.display());

    let seed = a.seed.unwrap_or(base.seed);
    for scheme in Scheme::ALL {
        let s = base.clone().with_scheme(scheme).with_seed(seed);
        let out = run_with(&s, RunOptions::default())?;
        let path = a.common.out.join(format!("trajectories_{scheme}.svg"));
        plot::trajectories(&path, &s, &out.records)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Replicate(a) => cmd_replicate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
