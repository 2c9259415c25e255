//! Portable CSV + JSON persistence for trajectories and result tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle::Trajectory;

/// JSON sidecar describing one trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    /// `"trajectory"` for experiment runs, `"reference"` for limit references.
    pub role: String,
    pub replica: usize,
    pub seed: u64,
    pub config_hash: String,
    pub dim: usize,
    pub n: usize,
    pub times: Vec<f64>,
    /// Cumulative event count at each snapshot.
    pub events: Vec<u64>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Write `traj` as `<stem>.csv` (columns `replica,t,particle_index,v_1..v_d`)
/// and `<stem>.json`; returns both paths.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory<f64>, role: &str, config_hash: &str) -> Result<[PathBuf; 2]> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(csv_err)?;
    let mut header = vec!["replica".to_string(), "t".into(), "particle_index".into()];
    header.extend((1..=traj.dim).map(|k| format!("v_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut rec: Vec<String> = Vec::with_capacity(3 + traj.dim);
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        for (i, v) in snap.chunks_exact(traj.dim).enumerate() {
            rec.clear();
            rec.push(traj.replica.to_string());
            rec.push(t.to_string());
            rec.push(i.to_string());
            rec.extend(v.iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    let meta = TrajectoryMeta {
        role: role.into(),
        replica: traj.replica,
        seed: traj.seed,
        config_hash: config_hash.into(),
        dim: traj.dim,
        n: traj.n,
        times: traj.times.clone(),
        events: traj.events.clone(),
    };
    fs::write(&json_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok([csv_path, json_path])
}

/// Read back a trajectory written by [`write_trajectory`].
pub fn read_trajectory(csv_path: &Path) -> Result<(Trajectory<f64>, TrajectoryMeta)> {
    let meta: TrajectoryMeta = serde_json::from_str(&fs::read_to_string(csv_path.with_extension("json"))?)?;
    let mut r = csv::Reader::from_path(csv_path).map_err(csv_err)?;
    let d = meta.dim;
    if r.headers().map_err(csv_err)?.len() != 3 + d {
        return Err(Error::Invalid(format!("{}: expected {} columns", csv_path.display(), 3 + d)));
    }
    let mut snapshots = vec![vec![0.0; meta.n * d]; meta.times.len()];
    let mut seen = vec![0usize; meta.times.len()];
    let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Invalid(format!("bad number {s:?}: {e}")));
    for row in r.records() {
        let row = row.map_err(csv_err)?;
        let t = parse(&row[1])?;
        let k = meta
            .times
            .iter()
            .position(|&x| x == t)
            .ok_or_else(|| Error::Invalid(format!("time {t} not listed in the sidecar")))?;
        let i: usize = row[2].parse().map_err(|_| Error::Invalid(format!("bad particle index {:?}", &row[2])))?;
        if i >= meta.n {
            return Err(Error::Invalid(format!("particle index {i} out of range")));
        }
        for c in 0..d {
            snapshots[k][i * d + c] = parse(&row[3 + c])?;
        }
        seen[k] += 1;
    }
    if seen.iter().any(|&c| c != meta.n) {
        return Err(Error::Invalid(format!("{}: incomplete snapshots", csv_path.display())));
    }
    let traj = Trajectory {
        replica: meta.replica,
        seed: meta.seed,
        dim: d,
        n: meta.n,
        times: meta.times.clone(),
        snapshots,
        events: meta.events.clone(),
    };
    Ok((traj, meta))
}

/// One row of an LLN or chaos-gap table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
    pub ell: usize,
    pub estimator: String,
    pub value: f64,
    pub stderr: f64,
    pub dictionary_id: String,
}

/// Write rows with header `N,t,ell,estimator,value,stderr,dictionary_id`.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["N", "t", "ell", "estimator", "value", "stderr", "dictionary_id"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.t.to_string(),
            r.ell.to_string(),
            r.estimator.clone(),
            r.value.to_string(),
            r.stderr.to_string(),
            r.dictionary_id.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let traj = Trajectory {
            replica: 3,
            seed: 42,
            dim: 2,
            n: 2,
            times: vec![0.0, 0.5],
            snapshots: vec![vec![1.0, -0.1, 0.1 + 0.2, 1e-300], vec![0.0, 1.0, -2.5, 3.0]],
            events: vec![0, 7],
        };
        let [csv, json] = write_trajectory(dir.path(), "traj_r3", &traj, "reference", "abc").unwrap();
        assert!(json.exists());
        let head = fs::read_to_string(&csv).unwrap();
        assert!(head.starts_with("replica,t,particle_index,v_1,v_2\n"));
        let (back, meta) = read_trajectory(&csv).unwrap();
        assert_eq!(back.snapshots, traj.snapshots);
        assert_eq!(meta.role, "reference");
        assert_eq!(meta.events, vec![0, 7]);
    }

    #[test]
    fn results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lln.csv");
        let rows = vec![ResultRow {
            n: 10,
            t: 0.0,
            ell: 1,
            estimator: "mc".into(),
            value: 0.125,
            stderr: 0.01,
            dictionary_id: "".into(),
        }];
        write_results(&p, &rows).unwrap();
        assert_eq!(read_results(&p).unwrap(), rows);
    }
}
