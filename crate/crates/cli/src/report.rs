//! `report`: slope fits, threshold checks and plot-data files for a run
//! directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kacsim::io::{read_results, read_trajectory, ResultRow};
use kacsim::metrics::InequalitySummary;
use kacsim::stats::weighted_linear_fit;

use crate::config::{AcceptanceBlock, ExperimentConfig, Kind};
use crate::record::{RunRecord, MANIFEST};

pub struct Report {
    pub text: String,
    /// Outputs listed in the manifest but absent on disk.
    pub missing: Vec<String>,
    pub plot_files: Vec<String>,
}

/// Fitted `log value = a + slope log N` with a 95% half-width.
struct Slope {
    slope: f64,
    ci: f64,
}

fn fit(points: &[(usize, f64, f64)]) -> Option<Slope> {
    let pts: Vec<_> = points.iter().filter(|p| p.1 > 0.0).collect();
    if pts.len() < 2 {
        return None;
    }
    let x: Vec<f64> = pts.iter().map(|p| (p.0 as f64).ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    // delta method: var(log m) ≈ (se / m)²
    let w: Vec<f64> = pts.iter().map(|p| if p.2 > 0.0 { (p.1 / p.2).powi(2) } else { 1.0 }).collect();
    let f = weighted_linear_fit(&x, &y, &w);
    Some(Slope { slope: f.slope, ci: f.slope_ci95 })
}

fn verdict(s: &Slope, acc: &AcceptanceBlock) -> &'static str {
    if acc.slope_max.is_none() && acc.slope_min.is_none() {
        return "";
    }
    let ok = acc.slope_max.is_none_or(|m| s.slope <= m) && acc.slope_min.is_none_or(|m| s.slope >= m);
    if ok { " PASS" } else { " FAIL" }
}

fn thresholds(acc: &AcceptanceBlock) -> String {
    match (acc.slope_min, acc.slope_max) {
        (None, None) => String::new(),
        (lo, hi) => format!(
            " (accept {} <= slope <= {})",
            lo.map_or("-inf".into(), |v| v.to_string()),
            hi.map_or("inf".into(), |v| v.to_string())
        ),
    }
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Writer<'_> {
    fn plot(&mut self, name: &str, header: &str, rows: &[String]) -> Result<(), String> {
        let mut s = format!("{header}\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        fs::write(self.dir.join(name), s).map_err(|e| format!("{name}: {e}"))?;
        self.files.push(name.into());
        Ok(())
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

pub fn report(dir: &Path) -> Result<Report, String> {
    let record = RunRecord::load(dir)?;
    let cfg: ExperimentConfig = serde_json::from_value(record.config.clone()).map_err(|e| format!("{MANIFEST}: config: {e}"))?;
    let mut text = String::new();
    writeln!(text, "run {} ({:?}), config {}, {} files, {:.1}s", dir.display(), record.experiment, &record.config_hash[..12], record.files.len(), record.wall_time_s).unwrap();
    for w in &record.warnings {
        writeln!(text, "warning: {w}").unwrap();
    }
    let missing: Vec<String> = record.files.iter().filter(|f| !dir.join(&f.path).exists()).map(|f| f.path.clone()).collect();
    for m in &missing {
        writeln!(text, "missing output: {m}").unwrap();
    }
    let present = |name: &str| dir.join(name).exists();
    let mut w = Writer { dir, files: Vec::new() };
    let acc = &cfg.acceptance;
    let section = match record.experiment {
        Kind::Lln if present("lln.csv") => lln(dir, &cfg, acc, &mut w, &mut text),
        Kind::Chaos if present("chaos.csv") => chaos(dir, acc, &mut w, &mut text),
        Kind::Battery if present("battery_summary.json") => battery(dir, &mut text),
        Kind::Mehler if present("mehler.csv") => mehler(dir, acc, &mut w, &mut text),
        Kind::Contraction if present("contraction.json") => contraction(dir, &mut w, &mut text),
        Kind::Simulate => simulate(dir, &record, &mut w, &mut text),
        _ => Ok(()),
    };
    if let Err(e) = section {
        writeln!(text, "error: {e}").unwrap();
    }
    fs::write(dir.join("report.txt"), &text).map_err(|e| e.to_string())?;
    Ok(Report { text, missing, plot_files: w.files })
}

fn lln(dir: &Path, cfg: &ExperimentConfig, acc: &AcceptanceBlock, w: &mut Writer, text: &mut String) -> Result<(), String> {
    let rows = read_results(&dir.join("lln.csv")).map_err(|e| e.to_string())?;
    let mut by_id: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in &rows {
        by_id.entry(r.dictionary_id.clone()).or_default().push(r);
    }
    for (id, rs) in by_id {
        let mc: Vec<(usize, f64, f64)> = rs.iter().filter(|r| r.estimator == "mc").map(|r| (r.n, r.value, r.stderr)).collect();
        let exact: BTreeMap<usize, f64> = rs.iter().filter(|r| r.estimator == "exact_identity").map(|r| (r.n, r.value)).collect();
        let mut line = format!("lln {id} d={}:", cfg.dim());
        match fit(&mc) {
            Some(s) => write!(line, " slope {:.3} ± {:.3}{}{}", s.slope, s.ci, thresholds(acc), verdict(&s, acc)).unwrap(),
            None => line.push_str(" slope n/a (fewer than 2 points)"),
        }
        if !exact.is_empty() {
            let within = mc.iter().filter(|(n, v, se)| exact.get(n).is_some_and(|x| (v - x).abs() <= 3.0 * se)).count();
            write!(line, "; exact identity within 3σ at {within}/{} N", exact.len()).unwrap();
        }
        writeln!(text, "{line}").unwrap();
        let plot: Vec<String> = mc
            .iter()
            .map(|(n, v, se)| format!("{n} {v} {se} {}", exact.get(n).map_or("nan".into(), |x| x.to_string())))
            .collect();
        w.plot(&format!("plot_lln_{}.dat", sanitize(&id)), "# N mean stderr exact", &plot)?;
    }
    Ok(())
}

fn chaos(dir: &Path, acc: &AcceptanceBlock, w: &mut Writer, text: &mut String) -> Result<(), String> {
    let rows = read_results(&dir.join("chaos.csv")).map_err(|e| e.to_string())?;
    let mut by_t: BTreeMap<(usize, u64), Vec<&ResultRow>> = BTreeMap::new();
    let mut by_n: BTreeMap<(usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in &rows {
        by_t.entry((r.ell, r.t.to_bits())).or_default().push(r);
        by_n.entry((r.ell, r.n)).or_default().push(r);
    }
    for ((ell, tb), rs) in &by_t {
        let t = f64::from_bits(*tb);
        let pts: Vec<_> = rs.iter().map(|r| (r.n, r.value, r.stderr)).collect();
        let mut line = format!("chaos gap vs N, ell={ell} t={t}:");
        match fit(&pts) {
            Some(s) => write!(line, " slope {:.3} ± {:.3}{}{}", s.slope, s.ci, thresholds(acc), verdict(&s, acc)).unwrap(),
            None => line.push_str(" slope n/a"),
        }
        writeln!(text, "{line}").unwrap();
        let plot: Vec<String> = rs.iter().map(|r| format!("{} {} {} {}", r.n, r.value, r.stderr, r.dictionary_id)).collect();
        w.plot(&format!("plot_chaos_vs_N_ell{ell}_t{}.dat", sanitize(&t.to_string())), "# N gap stderr dictionary_id", &plot)?;
    }
    for ((ell, n), rs) in &by_n {
        let plot: Vec<String> = rs.iter().map(|r| format!("{} {} {} {}", r.t, r.value, r.stderr, r.dictionary_id)).collect();
        let worst = rs.iter().map(|r| r.value).fold(0.0, f64::max);
        writeln!(text, "chaos gap vs t, ell={ell} N={n}: max {worst:.3e}").unwrap();
        w.plot(&format!("plot_chaos_vs_t_ell{ell}_N{n}.dat"), "# t gap stderr dictionary_id", &plot)?;
    }
    Ok(())
}

fn battery(dir: &Path, text: &mut String) -> Result<(), String> {
    let s = fs::read_to_string(dir.join("battery_summary.json")).map_err(|e| e.to_string())?;
    let summary: Vec<InequalitySummary> = serde_json::from_str(&s).map_err(|e| e.to_string())?;
    for s in summary {
        let id = s.inequality.id();
        if s.inequality.explicit() {
            writeln!(text, "battery {id}: {} violations (explicit constant){}", s.violations, if s.violations == 0 { " PASS" } else { " FAIL" }).unwrap();
        } else {
            writeln!(
                text,
                "battery {id}: fitted constant {:.3e}, ratio slope {}, {}",
                s.constant,
                s.ratio_slope.map_or("n/a".into(), |v| format!("{v:.3} ± {:.3}", s.ratio_slope_ci95.unwrap_or(0.0))),
                if s.exponent_consistent { "exponent consistent PASS" } else { "exponent mismatch FAIL" }
            )
            .unwrap();
        }
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let s = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    s.lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse::<f64>().map_err(|e| format!("{}: {e}", path.display()))).collect())
        .collect()
}

fn mehler(dir: &Path, acc: &AcceptanceBlock, w: &mut Writer, text: &mut String) -> Result<(), String> {
    let t = read_table(&dir.join("mehler.csv"))?;
    let pts: Vec<(usize, f64, f64)> = t.iter().map(|r| (r[0] as usize, r[2], r[3])).collect();
    let mut line = String::from("mehler marginal W1 vs N:");
    if let Some(s) = fit(&pts) {
        write!(line, " slope {:.3} ± {:.3}{}{}", s.slope, s.ci, thresholds(acc), verdict(&s, acc)).unwrap();
    }
    let decreasing = pts.windows(2).all(|p| p[0].1 - p[1].1 > 3.0 * (p[0].2.powi(2) + p[1].2.powi(2)).sqrt());
    write!(line, "; strictly decreasing beyond 3σ: {decreasing}").unwrap();
    writeln!(text, "{line}").unwrap();
    let plot: Vec<String> = pts.iter().map(|(n, v, se)| format!("{n} {v} {se}")).collect();
    w.plot("plot_mehler.dat", "# N w1 stderr", &plot)
}

fn contraction(dir: &Path, w: &mut Writer, text: &mut String) -> Result<(), String> {
    let s = fs::read_to_string(dir.join("contraction.json")).map_err(|e| e.to_string())?;
    let r: serde_json::Value = serde_json::from_str(&s).map_err(|e| e.to_string())?;
    let count = |k: &str| r[k].as_array().map_or(0, |a| a.len());
    let (tv, wv) = (count("toscani_violations"), count("w2_violations"));
    writeln!(text, "contraction: {tv} toscani violations, {wv} w2 violations{}", if tv + wv == 0 { " PASS" } else { " FAIL" }).unwrap();
    let t = read_table(&dir.join("contraction.csv"))?;
    let plot: Vec<String> = t.iter().map(|r| format!("{} {} {} {} {}", r[0], r[1], r[2], r[3], r[4])).collect();
    w.plot("plot_contraction.dat", "# t toscani toscani_floor w2 w2_floor", &plot)
}

fn simulate(dir: &Path, record: &RunRecord, w: &mut Writer, text: &mut String) -> Result<(), String> {
    let mut energy: BTreeMap<(usize, u64), (f64, usize)> = BTreeMap::new();
    let mut drift = 0.0f64;
    let mut count = 0;
    for f in record.files.iter().filter(|f| f.path.starts_with("trajectory_") && f.path.ends_with(".csv")) {
        let path = dir.join(&f.path);
        if !path.exists() {
            continue;
        }
        let (traj, _) = read_trajectory(&path).map_err(|e| e.to_string())?;
        count += 1;
        let e: Vec<f64> = traj.snapshots.iter().map(|s| s.iter().map(|x| x * x).sum::<f64>() / traj.n as f64).collect();
        for (k, t) in traj.times.iter().enumerate() {
            let slot = energy.entry((traj.n, t.to_bits())).or_insert((0.0, 0));
            slot.0 += e[k];
            slot.1 += 1;
            drift = drift.max((e[k] - e[0]).abs() / e[0].max(f64::MIN_POSITIVE));
        }
    }
    writeln!(text, "simulate: {count} trajectories, max relative energy drift {drift:.2e}").unwrap();
    let plot: Vec<String> = energy.iter().map(|((n, t), (s, c))| format!("{n} {} {}", f64::from_bits(*t), s / *c as f64)).collect();
    w.plot("plot_energy.dat", "# N t mean_energy_per_particle", &plot)
}
