//! `compare` verb: per-time discrepancies between engines of a finished run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::Engine;
use crate::error::CliError;
use crate::run::{align, Row, SummaryRow};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub seed: u64,
    pub left: String,
    pub right: String,
    pub t: f64,
    pub mean_gap: f64,
    pub variance_gap: f64,
    /// L2 distance between final densities, on the last row of an mpf/grid pair.
    pub l2_density: Option<f64>,
}

/// Aligned discrepancies of two trajectories; an empty overlap is an error.
pub fn compare_rows(seed: u64, left: &str, a: &[Row], right: &str, b: &[Row]) -> Result<Vec<Discrepancy>, CliError> {
    let pairs = align(a, b);
    if pairs.is_empty() {
        return Err(CliError::Alignment {
            left: format!("{left} (seed {seed})"),
            right: format!("{right} (seed {seed})"),
            message: "no common record times".into(),
        });
    }
    Ok(pairs
        .into_iter()
        .map(|(x, y)| Discrepancy {
            seed,
            left: left.to_string(),
            right: right.to_string(),
            t: x.t,
            mean_gap: (x.mean - y.mean).abs(),
            variance_gap: (x.variance - y.variance).abs(),
            l2_density: None,
        })
        .collect())
}

/// Engine CSVs of a run directory keyed by (seed, engine).
pub fn load_dir(dir: &Path) -> Result<BTreeMap<(u64, Engine), Vec<Row>>, CliError> {
    let io = |e: &dyn std::fmt::Display| CliError::Io { path: dir.display().to_string(), message: e.to_string() };
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| io(&e))? {
        let path = entry.map_err(|e| io(&e))?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        if path.extension().and_then(|s| s.to_str()) != Some("csv") {
            continue;
        }
        let Some((name, seed)) = stem.rsplit_once("-s") else { continue };
        let (Some(engine), Ok(seed)) = (Engine::from_name(name), seed.parse::<u64>()) else { continue };
        let mut rdr = csv::Reader::from_path(&path)
            .map_err(|e| CliError::Parse { source_name: path.display().to_string(), message: e.to_string() })?;
        let rows = rdr
            .deserialize::<Row>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Parse { source_name: path.display().to_string(), message: e.to_string() })?;
        out.insert((seed, engine), rows);
    }
    Ok(out)
}

fn load_summary(dir: &Path) -> Vec<SummaryRow> {
    csv::Reader::from_path(dir.join("summary.csv"))
        .map(|mut r| r.deserialize().filter_map(|x| x.ok()).collect())
        .unwrap_or_default()
}

/// Compares every engine against mpf (or the first engine present) seed by
/// seed. Engines whose files hold no rows failed during the run and are skipped.
pub fn compare_dir(dir: &Path) -> Result<Vec<Discrepancy>, CliError> {
    let runs = load_dir(dir)?;
    let summary = load_summary(dir);
    let mut seeds: Vec<u64> = runs.keys().map(|k| k.0).collect();
    seeds.dedup();
    let mut out = Vec::new();
    let mut pairs = 0;
    for seed in seeds {
        let present: Vec<Engine> =
            runs.iter().filter(|((s, _), rows)| *s == seed && !rows.is_empty()).map(|((_, e), _)| *e).collect();
        let Some(&reference) = present.iter().find(|&&e| e == Engine::Mpf).or(present.first()) else { continue };
        for &other in present.iter().filter(|&&e| e != reference) {
            let mut d =
                compare_rows(seed, reference.name(), &runs[&(seed, reference)], other.name(), &runs[&(seed, other)])?;
            if reference == Engine::Mpf && other == Engine::Grid {
                let l2 = summary
                    .iter()
                    .find(|r| r.seed == seed && r.engine == Engine::Grid.name())
                    .and_then(|r| r.final_l2_vs_mpf);
                if let Some(last) = d.last_mut() {
                    last.l2_density = l2;
                }
            }
            out.extend(d);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(CliError::Alignment {
            left: dir.display().to_string(),
            right: String::new(),
            message: "need at least two engines with records for the same seed".into(),
        });
    }
    Ok(out)
}

pub fn write_table(rows: &[Discrepancy], out: impl std::io::Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: &dyn std::fmt::Display| CliError::Io { path: "<stdout>".into(), message: e.to_string() };
    for r in rows {
        w.serialize(r).map_err(|e| err(&e))?;
    }
    w.flush().map_err(|e| err(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, mean: f64) -> Row {
        Row { t, engine: "x".into(), mean, variance: 1.0 + mean, l2_residual_drift: None, ess: None, events: 0 }
    }

    #[test]
    fn self_comparison_is_zero() {
        let a: Vec<Row> = (0..5).map(|k| row(0.1 * k as f64, k as f64)).collect();
        let d = compare_rows(0, "mpf", &a, "mpf", &a).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.iter().all(|x| x.mean_gap == 0.0 && x.variance_gap == 0.0));
    }

    #[test]
    fn disjoint_grids_do_not_align() {
        let a = vec![row(0.0, 0.0), row(1.0, 0.0)];
        let b = vec![row(0.5, 0.0), row(1.5, 0.0)];
        assert!(matches!(compare_rows(0, "a", &a, "b", &b), Err(CliError::Alignment { .. })));
    }

    #[test]
    fn partial_overlap_uses_common_times() {
        let a = vec![row(0.0, 0.0), row(0.5, 1.0), row(1.0, 2.0)];
        let b = vec![row(0.5, 1.5), row(1.0, 2.0)];
        let d = compare_rows(0, "a", &a, "b", &b).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].mean_gap, 0.5);
    }
}
