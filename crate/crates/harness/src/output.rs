//! Result directory layout:
//!
//! - `config.json`: the experiment configuration
//! - `suite.json`: problem manifests
//! - `runs.json`: one entry per (problem, algorithm, run)
//! - `summary.csv`: best/worst/median/mean/std, rank and mark per cell
//! - `ranks.csv`: rank matrix with an average row
//! - `traces.json`: full run records (`--trace`)
//! - `gnuplot/*.dat`: best-so-far traces (`--gnuplot`)
//! - `trees/*.txt`: archive dumps (`--dump-tree`)

use std::fs;
use std::io::Write;
use std::path::Path;

use histarch_core::{Algorithm, ProblemManifest, RunRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::experiment::{ExperimentConfig, ExperimentResult, RunEntry, StatsTable};

pub const SUMMARY_HEADER: [&str; 10] = ["problem", "algorithm", "best", "worst", "median", "mean", "std", "rank", "mark", "failed"];

#[derive(Serialize, Deserialize)]
struct TraceEntry {
    problem: String,
    algorithm: Algorithm,
    run: usize,
    record: RunRecord,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| HarnessError::Json { path: path.into(), source: e })?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Json { path: path.into(), source: e })
}

fn num(v: f64) -> String {
    format!("{v:.6e}")
}

fn cell_stem(problem: &str, algorithm: Algorithm, run: usize) -> String {
    format!("{problem}__{algorithm}__r{run:03}")
}

pub fn write_tables(dir: &Path, table: &StatsTable) -> Result<()> {
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| HarnessError::Csv { path: path.clone(), source: e }
    };

    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err(&path))?;
    for r in &table.rows {
        let stats = match r.summary {
            Some(s) => [s.best, s.worst, s.median, s.mean, s.std].map(num),
            None => Default::default(),
        };
        let mark = r.mark.map_or(String::new(), |m| m.symbol().to_string());
        let mut rec = vec![r.problem.clone(), r.algorithm.to_string()];
        rec.extend(stats);
        rec.extend([format!("{}", r.rank), mark, r.failed.to_string()]);
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;

    let path = dir.join("ranks.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header = vec!["problem".to_string()];
    header.extend(table.algorithms.iter().map(|a| a.to_string()));
    w.write_record(&header).map_err(csv_err(&path))?;
    for p in &table.problems {
        let mut rec = vec![p.clone()];
        for a in &table.algorithms {
            let row = table.row(p, *a).expect("row for every cell");
            let mark = row.mark.map_or(String::new(), |m| format!(" ({m})"));
            rec.push(format!("{}{mark}", row.rank));
        }
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    let mut avg = vec!["avg".to_string()];
    avg.extend(table.algorithms.iter().map(|a| format!("{:.3}", table.average_rank(*a))));
    w.write_record(&avg).map_err(csv_err(&path))?;
    w.flush().map_err(|e| HarnessError::io(&path, e))
}

/// Writes every artifact requested by `config` into `config.out`.
pub fn write_results(config: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    let dir = &config.out;
    create_dir(dir)?;
    write_json(&dir.join("config.json"), config)?;
    let manifests: Vec<ProblemManifest> = result.problems.iter().map(|p| p.manifest()).collect();
    write_json(&dir.join("suite.json"), &manifests)?;
    write_json(&dir.join("runs.json"), &result.entries())?;
    write_tables(dir, &result.table)?;

    if config.trace {
        let traces: Vec<TraceEntry> = result
            .cells
            .iter()
            .filter_map(|c| {
                c.record.clone().map(|record| TraceEntry {
                    problem: c.entry.problem.clone(),
                    algorithm: c.entry.algorithm,
                    run: c.entry.run,
                    record,
                })
            })
            .collect();
        write_json(&dir.join("traces.json"), &traces)?;
    }

    if config.gnuplot {
        let gdir = dir.join("gnuplot");
        create_dir(&gdir)?;
        for c in &result.cells {
            let Some(rec) = &c.record else { continue };
            let path = gdir.join(format!("{}.dat", cell_stem(&c.entry.problem, c.entry.algorithm, c.entry.run)));
            let mut text = String::from("# evaluation best_fitness\n");
            for (i, f) in &rec.best_fitness_trace {
                text.push_str(&format!("{i} {f:.17e}\n"));
            }
            fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        }
    }

    if config.dump_tree {
        let tdir = dir.join("trees");
        create_dir(&tdir)?;
        for c in &result.cells {
            let Some(dump) = &c.tree_dump else { continue };
            let path = tdir.join(format!("{}.txt", cell_stem(&c.entry.problem, c.entry.algorithm, c.entry.run)));
            fs::write(&path, dump).map_err(|e| HarnessError::io(&path, e))?;
        }
    }
    Ok(())
}

/// Loads a result directory written by [`write_results`].
pub fn load_results(dir: &Path) -> Result<(ExperimentConfig, Vec<RunEntry>)> {
    let config: ExperimentConfig = read_json(&dir.join("config.json"))?;
    let entries: Vec<RunEntry> = read_json(&dir.join("runs.json"))?;
    Ok((config, entries))
}

/// Recomputes the tables of a result directory from its stored runs and
/// rewrites the CSV files.
pub fn recompute_tables(dir: &Path) -> Result<StatsTable> {
    let (config, entries) = load_results(dir)?;
    config.validate()?;
    let manifests: Vec<ProblemManifest> = read_json(&dir.join("suite.json"))?;
    let problems: Vec<String> = manifests.into_iter().map(|m| m.name).collect();
    let table = StatsTable::build(&entries, &problems, &config.algorithms, config.reference(), config.alpha);
    write_tables(dir, &table)?;
    Ok(table)
}

pub fn read_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

/// Human-readable rendering of the summary table.
pub fn render_table(table: &StatsTable) -> String {
    let mut out = format!(
        "{:<22} {:<10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>5} {:>4}\n",
        "problem", "algorithm", "best", "worst", "median", "mean", "std", "rank", "mark"
    );
    for r in &table.rows {
        let s = r.summary.map_or([f64::NAN; 5], |s| [s.best, s.worst, s.median, s.mean, s.std]);
        out.push_str(&format!(
            "{:<22} {:<10} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>5} {:>4}{}\n",
            r.problem,
            r.algorithm.id(),
            s[0],
            s[1],
            s[2],
            s[3],
            s[4],
            r.rank,
            r.mark.map_or("", |m| m.symbol()),
            if r.failed > 0 { format!("  ({} failed)", r.failed) } else { String::new() },
        ));
    }
    out.push_str("average rank:");
    for a in &table.algorithms {
        out.push_str(&format!(" {a}={:.3}", table.average_rank(*a)));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_experiment;

    #[test]
    fn round_trip_through_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            algorithms: vec![Algorithm::Hr, Algorithm::Cnrga],
            dim: 2,
            problems: vec!["sphere".into()],
            budget: 300,
            runs: 2,
            out: tmp.path().join("res"),
            trace: true,
            gnuplot: true,
            dump_tree: true,
            workers: Some(1),
            ..Default::default()
        };
        let result = run_experiment(&config).unwrap();
        write_results(&config, &result).unwrap();
        let dir = &config.out;
        for f in ["config.json", "suite.json", "runs.json", "summary.csv", "ranks.csv", "traces.json"] {
            assert!(dir.join(f).is_file(), "{f}");
        }
        assert_eq!(fs::read_dir(dir.join("gnuplot")).unwrap().count(), 4);
        assert_eq!(fs::read_dir(dir.join("trees")).unwrap().count(), 4);

        let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
        assert!(summary.starts_with("problem,algorithm,best,worst,median,mean,std,rank,mark,failed\n"));
        let table = recompute_tables(dir).unwrap();
        assert_eq!(table, result.table);
        assert_eq!(fs::read_to_string(dir.join("summary.csv")).unwrap(), summary);
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let err = load_results(Path::new("/nonexistent/histarch")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("/nonexistent/histarch/config.json"));
    }
}
