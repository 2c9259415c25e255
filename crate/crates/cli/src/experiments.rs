//! Experiment drivers. Each one computes in memory (possibly in parallel)
//! and then writes its files in a fixed order from the calling thread.

use std::path::Path;
use std::sync::Mutex;

use kacsim::chaos::{
    chaos_gap, mehler_marginal_check, sample_initial, wn_functional, wn_sobolev, Dictionary, LlnDistance, LlnOptions,
};
use kacsim::io::{write_results, write_trajectory, ResultRow};
use kacsim::limit::{contraction_check, mean_field_reference, ContractionConfig, ReferenceConfig};
use kacsim::measures::NormKind;
use kacsim::metrics::{gaussian_pairs, inequality_battery, BatteryConfig, Directions, FourierGrid};
use kacsim::rng::child_seed;
use kacsim::{simulate, SimulationPlan};

use crate::config::{ExperimentConfig, Kind};

/// Stage ids for deriving per-experiment seeds from the master seed.
mod stage {
    pub const SIMULATE: u64 = 10;
    pub const LLN: u64 = 20;
    pub const CHAOS_REF: u64 = 30;
    pub const CHAOS_RUN: u64 = 31;
    pub const CHAOS_BOOT: u64 = 32;
    pub const CONTRACTION: u64 = 40;
    pub const MEHLER: u64 = 50;
    pub const BATTERY: u64 = 60;
}

#[derive(Debug)]
pub struct Outputs {
    /// Paths relative to the run directory, in write order.
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

type Res<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn execute(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Res<Outputs> {
    let mut out = Outputs { files: Vec::new(), warnings: Vec::new() };
    match cfg.experiment {
        Kind::Simulate => run_simulate(cfg, dir, hash, &mut out)?,
        Kind::Lln => run_lln(cfg, dir, &mut out)?,
        Kind::Chaos => run_chaos(cfg, dir, hash, &mut out)?,
        Kind::Contraction => run_contraction(cfg, dir, &mut out)?,
        Kind::Mehler => run_mehler(cfg, dir, &mut out)?,
        Kind::Battery => run_battery(cfg, dir, &mut out)?,
    }
    Ok(out)
}

fn grid_of(cfg: &ExperimentConfig) -> Option<FourierGrid> {
    cfg.metric.grid.as_ref().map(|g| FourierGrid {
        r_min: g.r_min,
        r_max: g.r_max,
        radii: g.radii,
        directions: Directions::Default(g.directions),
    })
}

fn simulate_ensemble(cfg: &ExperimentConfig, n: usize, seed: u64, out: &mut Outputs) -> Res<Vec<kacsim::Trajectory>> {
    let kernel = cfg.kernel_spec().map_err(err)?;
    let spec = cfg.initial_spec().map_err(err)?;
    let selection = cfg.kernel.as_ref().unwrap().selection;
    let plan = SimulationPlan { times: cfg.run.times.clone(), replicas: cfg.run.replicas, seed, selection };
    let warnings = Mutex::new(Vec::new());
    let trajs = simulate(
        |r, rng| {
            let s = sample_initial(&spec, n, rng).expect("validated initial data");
            if let Some(w) = s.warning {
                warnings.lock().unwrap().push((r, w));
            }
            s.velocities
        },
        &kernel,
        &plan,
    )
    .map_err(err)?;
    let mut w = warnings.into_inner().unwrap();
    w.sort();
    out.warnings.extend(w.into_iter().map(|(r, m)| format!("N={n} replica {r}: {m}")));
    Ok(trajs)
}

fn run_simulate(cfg: &ExperimentConfig, dir: &Path, hash: &str, out: &mut Outputs) -> Res<()> {
    for (ni, &n) in cfg.run.n.iter().enumerate() {
        let trajs = simulate_ensemble(cfg, n, child_seed(cfg.seed, stage::SIMULATE, ni as u64), out)?;
        for t in &trajs {
            let stem = format!("trajectory_N{n}_r{:04}", t.replica);
            write_trajectory(dir, &stem, t, "trajectory", hash).map_err(err)?;
            out.files.push(format!("{stem}.csv"));
            out.files.push(format!("{stem}.json"));
        }
    }
    Ok(())
}

fn run_lln(cfg: &ExperimentConfig, dir: &Path, out: &mut Outputs) -> Res<()> {
    let law = cfg.initial_spec().map_err(err)?.base;
    let m = &cfg.metric;
    let mut rows = Vec::new();
    for (di, dist) in m.distance.iter().enumerate() {
        for (ni, &n) in cfg.run.n.iter().enumerate() {
            let mut opts = LlnOptions::new(cfg.run.replicas, child_seed(cfg.seed, stage::LLN + di as u64, ni as u64));
            opts.ref_factor = m.ref_factor;
            let entries = match dist.as_str() {
                "hneg" => wn_sobolev(&law, &m.s, n, &opts).map_err(err)?,
                "w1" => vec![wn_functional(&law, LlnDistance::W1, n, &opts).map_err(err)?],
                _ => vec![wn_functional(&law, LlnDistance::W2Squared, n, &opts).map_err(err)?],
            };
            for e in entries {
                let id = e.distance.label();
                rows.push(ResultRow { n, t: 0.0, ell: 1, estimator: "mc".into(), value: e.mean, stderr: e.stderr, dictionary_id: id.clone() });
                if let Some(x) = e.exact {
                    rows.push(ResultRow { n, t: 0.0, ell: 1, estimator: "exact_identity".into(), value: x, stderr: 0.0, dictionary_id: id });
                }
            }
        }
    }
    write_results(&dir.join("lln.csv"), &rows).map_err(err)?;
    out.files.push("lln.csv".into());
    Ok(())
}

fn run_chaos(cfg: &ExperimentConfig, dir: &Path, hash: &str, out: &mut Outputs) -> Res<()> {
    let kernel = cfg.kernel_spec().map_err(err)?;
    let spec = cfg.initial_spec().map_err(err)?;
    let m = &cfg.metric;
    let d = cfg.dim();
    let rc = ReferenceConfig {
        times: cfg.run.times.clone(),
        n_ref: m.n_ref,
        replicas: m.ref_replicas,
        seed: child_seed(cfg.seed, stage::CHAOS_REF, 0),
        selection: cfg.kernel.as_ref().unwrap().selection,
        center: false,
    };
    let reference = mean_field_reference(&spec, &kernel, &rc).map_err(err)?;
    let kind = match m.dictionary.as_str() {
        "fourier" => NormKind::FourierF,
        "lipschitz" => NormKind::Lipschitz,
        _ => NormKind::Sup,
    };
    let dict = Dictionary::standard(d, kind, cfg.seed);
    let mut rows = Vec::new();
    for (ni, &n) in cfg.run.n.iter().enumerate() {
        let trajs = simulate_ensemble(cfg, n, child_seed(cfg.seed, stage::CHAOS_RUN, ni as u64), out)?;
        for (ti, &t) in cfg.run.times.iter().enumerate() {
            let reps: Vec<Vec<f64>> = trajs.iter().map(|tr| tr.snapshots[ti].clone()).collect();
            let refm = reference.snapshot(ti);
            for &ell in &m.ell {
                let key = ((ni * cfg.run.times.len() + ti) * 16 + ell) as u64;
                let g = chaos_gap(&reps, d, &refm, &dict, ell, m.bootstrap, child_seed(cfg.seed, stage::CHAOS_BOOT, key)).map_err(err)?;
                rows.push(ResultRow { n, t, ell, estimator: "chaos_gap".into(), value: g.value, stderr: g.stderr, dictionary_id: g.argmax });
            }
        }
    }
    write_results(&dir.join("chaos.csv"), &rows).map_err(err)?;
    out.files.push("chaos.csv".into());
    for t in &reference.trajectories {
        let stem = format!("reference_r{:04}", t.replica);
        write_trajectory(dir, &stem, t, "reference", hash).map_err(err)?;
        out.files.push(format!("{stem}.csv"));
        out.files.push(format!("{stem}.json"));
    }
    Ok(())
}

fn run_contraction(cfg: &ExperimentConfig, dir: &Path, out: &mut Outputs) -> Res<()> {
    let kernel = cfg.kernel_spec().map_err(err)?;
    let f0 = cfg.initial_spec().map_err(err)?.base;
    let g0 = cfg.other_spec().map_err(err)?.base;
    let mut cc = ContractionConfig::new(cfg.run.times.clone(), child_seed(cfg.seed, stage::CONTRACTION, 0));
    cc.n_ref = cfg.metric.n_ref;
    cc.replicas = cfg.metric.ref_replicas;
    if let Some(&s) = cfg.metric.s.first() {
        cc.s = s;
    }
    if let Some(g) = grid_of(cfg) {
        cc.grid = g;
    }
    let r = contraction_check(&f0, &g0, &kernel, &cc).map_err(err)?;
    let mut csv = String::from("t,toscani,toscani_floor,w2,w2_floor\n");
    for k in 0..r.times.len() {
        csv.push_str(&format!("{},{},{},{},{}\n", r.times[k], r.toscani[k], r.toscani_floor[k], r.w2[k], r.w2_floor[k]));
    }
    std::fs::write(dir.join("contraction.csv"), csv).map_err(err)?;
    std::fs::write(dir.join("contraction.json"), serde_json::to_string_pretty(&r).map_err(err)?).map_err(err)?;
    out.files.push("contraction.csv".into());
    out.files.push("contraction.json".into());
    if !r.is_clean() {
        out.warnings.push(format!(
            "contraction violations: {} toscani pairs, {} w2 times",
            r.toscani_violations.len(),
            r.w2_violations.len()
        ));
    }
    Ok(())
}

fn run_mehler(cfg: &ExperimentConfig, dir: &Path, out: &mut Outputs) -> Res<()> {
    let m = &cfg.metric;
    let rows = mehler_marginal_check(&cfg.run.n, m.d, m.ell[0], m.points, m.batches, child_seed(cfg.seed, stage::MEHLER, 0)).map_err(err)?;
    let mut csv = String::from("N,ell,w1,stderr,batches\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.n, m.ell[0], r.w1, r.stderr, r.batches));
    }
    std::fs::write(dir.join("mehler.csv"), csv).map_err(err)?;
    out.files.push("mehler.csv".into());
    Ok(())
}

fn run_battery(cfg: &ExperimentConfig, dir: &Path, out: &mut Outputs) -> Res<()> {
    let m = &cfg.metric;
    let mut bc = BatteryConfig::new(m.d, m.trials, child_seed(cfg.seed, stage::BATTERY, 0));
    bc.q = m.q;
    if let Some(g) = grid_of(cfg) {
        bc.grid = g;
    }
    let report = inequality_battery(&gaussian_pairs(m.d, m.pair_points), &bc).map_err(err)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(err)?;
    std::fs::write(dir.join("battery.csv"), buf).map_err(err)?;
    std::fs::write(dir.join("battery_summary.json"), serde_json::to_string_pretty(&report.summary).map_err(err)?).map_err(err)?;
    out.files.push("battery.csv".into());
    out.files.push("battery_summary.json".into());
    Ok(())
}
