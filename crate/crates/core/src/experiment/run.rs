//! Training runs, sweeps and their CSV artifacts.
//!
//! A single run directory holds `epochs.csv` (columns [`EPOCH_COLUMNS`]),
//! `summary.csv` (one row, columns [`SUMMARY_COLUMNS`]), `checkpoint.json`,
//! one `plan_<secret>.txt` per secret and optionally `trace.csv`.
//!
//! A sweep directory holds `runs/<config>/<mode>/seed<k>/` run directories
//! plus `runs.csv` (one row per run), `summary.csv` (one row per config and
//! mode, averaged over seeds), `derived.csv` (per-config delta and time
//! ratio) and `geomean.csv`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{geometric_mean, ExperimentConfig, ExperimentError, Mode};
use crate::env::Secret;
use crate::ppo::{Checkpoint, TrainReport, Trainer};

pub const EPOCH_COLUMNS: [&str; 6] = [
    "epoch",
    "episodes",
    "correct_rate",
    "useless_actions",
    "total_actions",
    "wall_time_s",
];

pub const SUMMARY_COLUMNS: [&str; 7] = [
    "config",
    "mode",
    "converged",
    "epochs",
    "total_actions",
    "useless_ratio_pct",
    "wall_time_s",
];

fn plan_file_name(secret: Secret) -> String {
    format!("plan_{secret}.txt")
}

/// Trains one policy and writes the run artifacts into `out`.
///
/// `mode` only decides whether the useless-action penalty is active.
/// Wall time covers the training loop, not the file output.
pub fn run_train(
    cfg: &ExperimentConfig,
    mode: Mode,
    seed: u64,
    out: &Path,
    trace: bool,
) -> Result<TrainReport, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut env = cfg.env.clone();
    env.useless_penalty_enabled = mode.penalty_enabled();

    let mut trainer = Trainer::new(&env, &cfg.policy, &cfg.hyper, seed)?;
    if trace {
        trainer.enable_trace(BufWriter::new(File::create(out.join("trace.csv"))?));
    }
    let mut epochs = csv::Writer::from_path(out.join("epochs.csv"))?;
    epochs.write_record(EPOCH_COLUMNS)?;
    let mut csv_error = None;
    let started = Instant::now();
    let result = trainer.run_with(|n, stats| {
        let row = [
            n.to_string(),
            stats.episodes_completed.to_string(),
            stats.correct_rate().to_string(),
            stats.useless_actions.to_string(),
            stats.total_actions.to_string(),
            format!("{:.6}", stats.wall_time),
        ];
        // Flushed per row so progress is visible while training.
        if let Err(e) = epochs.write_record(&row).and_then(|_| Ok(epochs.flush()?)) {
            csv_error.get_or_insert(e);
        }
    });
    let wall_time = started.elapsed().as_secs_f64();
    let report = result?;
    if let Some(e) = csv_error {
        return Err(e.into());
    }
    epochs.flush()?;

    let mut summary = csv::Writer::from_path(out.join("summary.csv"))?;
    summary.write_record(SUMMARY_COLUMNS)?;
    summary.write_record([
        cfg.name.clone(),
        mode.to_string(),
        report.converged.to_string(),
        report.epochs_run.to_string(),
        report.total_actions.to_string(),
        format!("{:.2}", 100.0 * report.useless_ratio),
        format!("{wall_time:.3}"),
    ])?;
    summary.flush()?;

    Checkpoint::new(trainer.params(), &cfg.hyper, seed).save(&out.join("checkpoint.json"))?;
    for (plan, secret) in report.extracted_plans.iter().zip(env.secret_domain()) {
        fs::write(out.join(plan_file_name(secret)), plan.to_text())?;
    }
    Ok(TrainReport { wall_time, ..report })
}

/// One training run of a sweep. A failed run keeps its error message and
/// zeroed metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: String,
    pub mode: Mode,
    pub seed: u64,
    pub converged: bool,
    pub epochs: usize,
    pub total_actions: u64,
    pub useless_actions: u64,
    pub wall_time_s: f64,
    pub plan_accuracy: f64,
    pub error: Option<String>,
}

impl RunRecord {
    fn from_report(config: &str, mode: Mode, seed: u64, report: &TrainReport) -> Self {
        Self {
            config: config.to_string(),
            mode,
            seed,
            converged: report.converged,
            epochs: report.epochs_run,
            total_actions: report.total_actions,
            useless_actions: report.total_useless,
            wall_time_s: report.wall_time,
            plan_accuracy: report.plan_accuracy,
            error: None,
        }
    }

    fn failed(config: &str, mode: Mode, seed: u64, error: String) -> Self {
        Self {
            config: config.to_string(),
            mode,
            seed,
            converged: false,
            epochs: 0,
            total_actions: 0,
            useless_actions: 0,
            wall_time_s: 0.0,
            plan_accuracy: 0.0,
            error: Some(error),
        }
    }
}

/// Seed-averaged result for one config under one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub config: String,
    pub mode: Mode,
    pub runs: usize,
    pub failed: usize,
    /// At least one run finished and every finished run converged.
    pub converged: bool,
    pub mean_epochs: f64,
    pub mean_total_actions: f64,
    /// `100 * sum(useless) / sum(total)` over finished runs.
    pub useless_ratio_pct: f64,
    pub mean_wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedRow {
    pub config: String,
    /// Proposal minus baseline useless ratio, in percentage points.
    pub delta_pts: Option<f64>,
    /// Proposal mean wall time over baseline mean wall time.
    pub time_ratio: Option<f64>,
    pub both_converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub runs: Vec<RunRecord>,
    pub rows: Vec<SummaryRow>,
    pub derived: Vec<DerivedRow>,
    /// Over configs convergent in both modes; `None` if there are none.
    pub geomean_time_ratio: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub repeats: usize,
    /// Concurrent training runs; 0 means one per available CPU.
    pub jobs: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            repeats: 10,
            jobs: 0,
        }
    }
}

/// Trains every config under both modes with seeds `0..repeats` and writes
/// the sweep artifacts into `out`. A failing run is recorded and the sweep
/// continues.
pub fn run_sweep(
    cfgs: &[ExperimentConfig],
    opts: &SweepOptions,
    out: &Path,
) -> Result<SweepSummary, ExperimentError> {
    if cfgs.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    if opts.repeats == 0 {
        return Err(ExperimentError::invalid("repeats", "must be at least 1"));
    }
    for cfg in cfgs {
        cfg.validate()?;
    }
    fs::create_dir_all(out)?;

    let mut jobs: Vec<(&ExperimentConfig, Mode, u64)> = Vec::new();
    for cfg in cfgs {
        for mode in Mode::ALL {
            for seed in 0..opts.repeats as u64 {
                jobs.push((cfg, mode, seed));
            }
        }
    }
    let workers = match opts.jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len());

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunRecord>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(cfg, mode, seed)) = jobs.get(i) else {
                    break;
                };
                let dir = run_dir(out, &cfg.name, mode, seed);
                let record = match run_train(cfg, mode, seed, &dir, false) {
                    Ok(report) => RunRecord::from_report(&cfg.name, mode, seed, &report),
                    Err(e) => RunRecord::failed(&cfg.name, mode, seed, e.to_string()),
                };
                results.lock().expect("no worker panicked")[i] = Some(record);
            });
        }
    });
    let runs: Vec<RunRecord> = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();

    let mut w = csv::Writer::from_path(out.join("runs.csv"))?;
    for r in &runs {
        w.serialize(r)?;
    }
    w.flush()?;
    let summary = summarize(runs);
    write_summary(&summary, out)?;
    Ok(summary)
}

fn run_dir(out: &Path, config: &str, mode: Mode, seed: u64) -> PathBuf {
    out.join("runs")
        .join(config)
        .join(mode.name())
        .join(format!("seed{seed}"))
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let runs = r.deserialize().collect::<Result<Vec<RunRecord>, _>>()?;
    Ok(runs)
}

/// Recomputes the sweep summary from `dir/runs.csv` and rewrites the
/// summary files next to it.
pub fn report(dir: &Path) -> Result<SweepSummary, ExperimentError> {
    let summary = summarize(read_runs(&dir.join("runs.csv"))?);
    write_summary(&summary, dir)?;
    Ok(summary)
}

/// Groups runs by config and mode, in order of first appearance of each
/// config.
pub fn summarize(runs: Vec<RunRecord>) -> SweepSummary {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<(String, Mode), Vec<&RunRecord>> = BTreeMap::new();
    for r in &runs {
        if !order.contains(&r.config) {
            order.push(r.config.clone());
        }
        groups.entry((r.config.clone(), r.mode)).or_default().push(r);
    }

    let mut rows = Vec::new();
    for config in &order {
        for mode in Mode::ALL {
            let Some(group) = groups.get(&(config.clone(), mode)) else {
                continue;
            };
            let done: Vec<&&RunRecord> = group.iter().filter(|r| r.error.is_none()).collect();
            let n = done.len().max(1) as f64;
            let total: u64 = done.iter().map(|r| r.total_actions).sum();
            let useless: u64 = done.iter().map(|r| r.useless_actions).sum();
            rows.push(SummaryRow {
                config: config.clone(),
                mode,
                runs: group.len(),
                failed: group.len() - done.len(),
                converged: !done.is_empty() && done.iter().all(|r| r.converged),
                mean_epochs: done.iter().map(|r| r.epochs as f64).sum::<f64>() / n,
                mean_total_actions: total as f64 / n,
                useless_ratio_pct: if total > 0 {
                    100.0 * useless as f64 / total as f64
                } else {
                    0.0
                },
                mean_wall_time_s: done.iter().map(|r| r.wall_time_s).sum::<f64>() / n,
            });
        }
    }

    let mut derived = Vec::new();
    let mut ratios = Vec::new();
    for config in &order {
        let find = |mode| rows.iter().find(|r: &&SummaryRow| &r.config == config && r.mode == mode);
        let (Some(b), Some(p)) = (find(Mode::Baseline), find(Mode::Proposal)) else {
            continue;
        };
        let both = b.converged && p.converged;
        let time_ratio = (both && b.mean_wall_time_s > 0.0).then(|| p.mean_wall_time_s / b.mean_wall_time_s);
        if let Some(t) = time_ratio {
            ratios.push(t);
        }
        derived.push(DerivedRow {
            config: config.clone(),
            delta_pts: both.then_some(p.useless_ratio_pct - b.useless_ratio_pct),
            time_ratio,
            both_converged: both,
        });
    }

    SweepSummary {
        geomean_time_ratio: geometric_mean(&ratios),
        runs,
        rows,
        derived,
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

fn write_summary(s: &SweepSummary, out: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record(SUMMARY_COLUMNS.iter().chain(&["runs", "failed"]))?;
    for r in &s.rows {
        w.write_record([
            r.config.clone(),
            r.mode.to_string(),
            r.converged.to_string(),
            format!("{:.1}", r.mean_epochs),
            format!("{:.1}", r.mean_total_actions),
            format!("{:.2}", r.useless_ratio_pct),
            format!("{:.3}", r.mean_wall_time_s),
            r.runs.to_string(),
            r.failed.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("derived.csv"))?;
    w.write_record(["config", "both_converged", "delta_pts", "time_ratio"])?;
    for d in &s.derived {
        w.write_record([
            d.config.clone(),
            d.both_converged.to_string(),
            opt(d.delta_pts, 2),
            opt(d.time_ratio, 4),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("geomean.csv"))?;
    w.write_record(["configs", "geomean_time_ratio"])?;
    let used = s.derived.iter().filter(|d| d.time_ratio.is_some()).count();
    w.write_record([used.to_string(), opt(s.geomean_time_ratio, 4)])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(config: &str, mode: Mode, converged: bool, total: u64, useless: u64, wall: f64) -> RunRecord {
        RunRecord {
            config: config.into(),
            mode,
            seed: 0,
            converged,
            epochs: if converged { 3 } else { 999 },
            total_actions: total,
            useless_actions: useless,
            wall_time_s: wall,
            plan_accuracy: 1.0,
            error: None,
        }
    }

    #[test]
    fn summary_means_and_geomean() {
        let runs = vec![
            rec("a", Mode::Baseline, true, 100, 30, 2.0),
            rec("a", Mode::Baseline, true, 300, 50, 2.0),
            rec("a", Mode::Proposal, true, 200, 20, 1.0),
            rec("b", Mode::Baseline, true, 100, 10, 1.0),
            rec("b", Mode::Proposal, true, 100, 10, 2.0),
            rec("c", Mode::Baseline, true, 100, 10, 1.0),
            rec("c", Mode::Proposal, false, 100, 10, 9.0),
        ];
        let s = summarize(runs);
        assert_eq!(s.rows.len(), 6);
        let a = &s.rows[0];
        assert_eq!((a.runs, a.mean_total_actions), (2, 200.0));
        assert!((a.useless_ratio_pct - 20.0).abs() < 1e-12);
        assert!((s.derived[0].delta_pts.unwrap() + 10.0).abs() < 1e-12);
        assert_eq!(s.derived[0].time_ratio, Some(0.5));
        assert_eq!(s.derived[1].time_ratio, Some(2.0));
        assert!(!s.derived[2].both_converged);
        assert_eq!(s.derived[2].time_ratio, None);
        assert!((s.geomean_time_ratio.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn failed_runs_are_excluded_from_means() {
        let mut bad = RunRecord::failed("a", Mode::Baseline, 1, "boom".into());
        bad.seed = 1;
        let s = summarize(vec![rec("a", Mode::Baseline, true, 100, 25, 1.0), bad]);
        let row = &s.rows[0];
        assert_eq!((row.runs, row.failed), (2, 1));
        assert!(row.converged);
        assert_eq!(row.mean_total_actions, 100.0);
        assert!(s.derived.is_empty());
        assert_eq!(s.geomean_time_ratio, None);
    }

    #[test]
    fn runs_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![
            rec("a", Mode::Proposal, true, 100, 25, 1.25),
            RunRecord::failed("a", Mode::Baseline, 0, "bad, \"quoted\" error".into()),
        ];
        let mut w = csv::Writer::from_path(dir.path().join("runs.csv")).unwrap();
        for r in &runs {
            w.serialize(r).unwrap();
        }
        w.flush().unwrap();
        assert_eq!(read_runs(&dir.path().join("runs.csv")).unwrap(), runs);
        let s = report(dir.path()).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!(dir.path().join("derived.csv").exists());
    }
}
