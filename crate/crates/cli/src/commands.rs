use std::path::Path;

use anyhow::Result;
use blin_core::analysis::{cumulative_regret, BoundReport};
use blin_core::engine::{run_blin, run_zooming_baseline, RunConfig, RunTrace};
use blin_core::environments::{
    adaptive_lower_bound_world, static_lower_bound_instance, zooming_dimension_estimate,
    AdaptiveGrid, EnvironmentDocument, PeakFamilyParams, RewardInstance,
};
use blin_core::report::{partition_snapshots, regret_csv, snapshot_svg, trace_csv, RunSummary};
use blin_core::sequences::LogBase;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{resolve_env, usage, Algorithm, EnvSpec, ExperimentConfig, UsageError};
use crate::output::{ensure_dir, json_bytes, write_atomic};
use crate::Family;

fn execute(
    cfg: &ExperimentConfig,
    alg: Algorithm,
    seed: u64,
    inst: &RewardInstance,
) -> Result<RunTrace> {
    Ok(match cfg.schedule(alg, inst.dim())? {
        Some(schedule) => {
            let mut rc =
                RunConfig::new(cfg.horizon, schedule, seed).with_arm_policy(cfg.arm_policy);
            rc.noise_scale = cfg.noise_scale;
            let mut trace = run_blin(&rc, inst)?;
            trace.algorithm = alg.name().into();
            trace
        }
        None => run_zooming_baseline(cfg.horizon, seed, cfg.noise_scale, inst)?,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let [alg] = cfg.algorithms[..] else {
        return usage("run takes exactly one --alg (use compare for several)");
    };
    let [seed] = cfg.seeds[..] else {
        return usage("run takes exactly one --seed (use compare for several)");
    };
    let inst = cfg.instance()?;
    let trace = execute(cfg, alg, seed, &inst)?;
    let regret = cumulative_regret(&trace, &inst);
    ensure_dir(&cfg.out)?;
    write_atomic(&cfg.out.join("trace.csv"), &trace_csv(&trace, &regret)?)?;
    write_atomic(&cfg.out.join("regret.csv"), &regret_csv(&regret)?)?;
    let summary = RunSummary::new(&trace, inst.descriptor(), &regret);
    write_atomic(&cfg.out.join("summary.json"), &summary.to_json()?)?;
    if cfg.snapshots {
        if inst.dim() > 2 {
            eprintln!("warning: partition snapshots need d <= 2; skipped");
        } else {
            for snap in partition_snapshots(&trace) {
                let path = cfg.out.join(format!("partition_batch_{}.svg", snap.batch));
                write_atomic(&path, snapshot_svg(&snap)?.as_bytes())?;
            }
        }
    }
    println!(
        "{} on {}: T={} rounds={} final regret={:.3} -> {}",
        alg.name(),
        inst.name(),
        cfg.horizon,
        summary.rounds_used,
        summary.final_regret,
        cfg.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CompareEntry {
    algorithm: &'static str,
    seed: u64,
    final_regret: f64,
    rounds_used: usize,
    batch_boundaries: Vec<u64>,
}

pub fn compare(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.algorithms.len() < 2 && cfg.seeds.len() < 2 {
        return usage("compare needs at least two algorithms or two seeds");
    }
    let inst = cfg.instance()?;
    // validate schedules up front so a bad dz is a usage error, not a worker failure
    for &alg in &cfg.algorithms {
        cfg.schedule(alg, inst.dim())?;
    }
    let jobs: Vec<(Algorithm, u64)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(alg, seed)| {
            let trace = execute(cfg, alg, seed, &inst)?;
            let regret = cumulative_regret(&trace, &inst);
            Ok((alg, seed, trace, regret))
        })
        .collect::<Result<Vec<_>>>()?;

    ensure_dir(&cfg.out)?;
    let mut merged = csv::Writer::from_writer(Vec::new());
    merged.write_record(["algorithm", "seed", "t", "batch", "regret"])?;
    let mut finals = Vec::with_capacity(results.len());
    for (alg, seed, trace, regret) in &results {
        let path = cfg
            .out
            .join(format!("regret_{}_seed{}.csv", alg.name(), seed));
        write_atomic(&path, &regret_csv(regret)?)?;
        for (p, r) in trace.pulls.iter().zip(regret) {
            merged.write_record([
                alg.name().to_string(),
                seed.to_string(),
                p.t.to_string(),
                p.batch.to_string(),
                r.to_string(),
            ])?;
        }
        finals.push(CompareEntry {
            algorithm: alg.name(),
            seed: *seed,
            final_regret: regret.last().copied().unwrap_or(0.0),
            rounds_used: trace.rounds_used(),
            batch_boundaries: trace.grid.clone(),
        });
    }
    let merged = merged
        .into_inner()
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    write_atomic(&cfg.out.join("regret_long.csv"), &merged)?;
    write_atomic(&cfg.out.join("final_regrets.json"), &json_bytes(&finals)?)?;
    for f in &finals {
        println!(
            "{} seed {}: rounds={} final regret={:.3}",
            f.algorithm, f.seed, f.rounds_used, f.final_regret
        );
    }
    Ok(())
}

/// Deepest dyadic level the branch-and-bound oracle is run to, per dimension.
fn oracle_floor(dim: usize) -> u32 {
    match dim {
        1 => 24,
        2 => 12,
        3 => 7,
        _ => 5,
    }
}

#[derive(Serialize)]
struct OracleRow {
    r: f64,
    depth: u32,
    n_r: u64,
    exact: bool,
}

#[derive(Serialize)]
struct OracleReport {
    instance: blin_core::environments::InstanceDescriptor,
    table: Vec<OracleRow>,
    dz_hat: f64,
    cz_hat: f64,
    fit_depths: Vec<u32>,
    truncated: bool,
}

pub fn zooming_oracle(env: &str, d: Option<u32>, r_min: f64, out: Option<&Path>) -> Result<()> {
    let depth_f = -r_min.log2();
    if !(r_min > 0.0 && r_min < 1.0) || (depth_f - depth_f.round()).abs() > 1e-9 {
        return usage(format!("--r-min must be 2^-i with i >= 1 (got {r_min})"));
    }
    let desc = resolve_env(&EnvSpec::Name(env.to_string()), d)?;
    let inst = desc.build().map_err(|e| UsageError(e.to_string()))?;
    let mut depth = depth_f.round() as u32;
    let floor = oracle_floor(inst.dim());
    let truncated = depth > floor;
    if truncated {
        eprintln!(
            "warning: r_min = 2^-{depth} is below the resolution floor 2^-{floor} for d = {}; table truncated",
            inst.dim()
        );
        depth = floor;
    }
    let est = zooming_dimension_estimate(&inst, depth).map_err(|e| UsageError(e.to_string()))?;
    let report = OracleReport {
        instance: desc,
        table: est
            .table
            .iter()
            .map(|z| OracleRow {
                r: 0.5f64.powi(z.depth as i32),
                depth: z.depth,
                n_r: z.count,
                exact: z.exact,
            })
            .collect(),
        dz_hat: est.dz_hat,
        cz_hat: est.cz_hat,
        fit_depths: est.fit_depths,
        truncated,
    };
    let bytes = json_bytes(&report)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_atomic(&dir.join("zooming.json"), &bytes)?;
    }
    print!("{}", String::from_utf8(bytes)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn bounds(
    d: u32,
    dz: f64,
    cz: f64,
    horizon: f64,
    batches: u32,
    base: LogBase,
    optimality_factor: f64,
    out: Option<&Path>,
) -> Result<()> {
    let report = BoundReport::with_options(d, dz, cz, horizon, batches, base, optimality_factor)
        .map_err(|e| UsageError(e.to_string()))?;
    let bytes = json_bytes(&report)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_atomic(&dir.join("bounds.json"), &bytes)?;
    }
    print!("{}", String::from_utf8(bytes)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn lower_bound_env(
    family: Family,
    d: u32,
    horizon: u64,
    batches: u32,
    k: u32,
    instance: u64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let grid = AdaptiveGrid::new(d, horizon, batches).map_err(|e| UsageError(e.to_string()))?;
    if k == 0 || k > batches {
        return usage(format!("--k must lie in 1..={batches}"));
    }
    let built = match family {
        Family::Static => {
            let t_prev = grid.reference_point(k - 1).round() as u64;
            PeakFamilyParams::from_static_grid(d, t_prev)
                .and_then(|p| static_lower_bound_instance(&p, instance))
        }
        Family::Adaptive => adaptive_lower_bound_world(&grid, k, instance),
    }
    .map_err(|e| UsageError(e.to_string()))?;
    let doc = EnvironmentDocument {
        instance: built.descriptor().clone(),
        seed,
        noise_scale: 1.0,
    };
    let bytes = json_bytes(&doc)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_atomic(&dir.join("instance.json"), &bytes)?;
    }
    print!("{}", String::from_utf8(bytes)?);
    Ok(())
}
