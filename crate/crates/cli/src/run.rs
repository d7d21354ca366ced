//! Sweep execution and output files.
//!
//! For the `cil`/`dil` scenarios every (head, seed) cell writes
//! `{scenario}_{head}_seed{seed}.json` (report), `..._accuracy.csv` and
//! `..._checkpoint.json`; `summary.csv` has one row per cell with columns
//! `scenario,head,steps,seed,avg,last`. The `peaks` scenario writes
//! `peaks_{model}_seed{seed}.json` per cell and a summary with columns
//! `scenario,model,steps,seed,median_prev_rmse,max_locality_ratio`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use kac::checkpoint;
use kac::continual::{run_continual, ContinualReport, TaskStream, TrainConfig};
use kac::datagen::{make_cil_stream, make_dil_stream, run_peaks_experiment, PeaksConfig, PeaksOutcome, RegressorKind};
use kac::heads::HeadSpec;

use crate::config::{ExperimentConfig, Scenario, StreamConfig};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// `v` with exactly six significant digits, plain decimal notation.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0.00000".into() } else { v.to_string() };
    }
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    let magnitude = rounded.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{rounded:.decimals$}")
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamEcho {
    #[serde(flatten)]
    pub config: StreamConfig,
    pub effective_seed: u64,
}

/// Contents of one classification report file.
#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub scenario: Scenario,
    pub head: String,
    pub seed: u64,
    pub stream: StreamEcho,
    pub report: ContinualReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeaksCellReport {
    pub scenario: Scenario,
    pub model: RegressorKind,
    pub seed: u64,
    pub config: PeaksConfig,
    pub outcome: PeaksOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum CellResult {
    Continual(CellReport),
    Peaks(PeaksCellReport),
}

#[derive(Debug)]
pub struct RunOutput {
    pub cells: Vec<CellResult>,
    pub files: Vec<PathBuf>,
}

fn build_stream(cfg: &ExperimentConfig, seed: u64) -> kac::Result<TaskStream> {
    let s = &cfg.stream;
    let seed = s.seed.unwrap_or(seed);
    match cfg.scenario {
        Scenario::Cil => make_cil_stream(s.num_tasks, s.classes_per_task, s.d_latent, s.n_feature, seed, &s.params),
        _ => make_dil_stream(s.num_tasks, s.num_classes, s.d_latent, s.n_feature, seed, &s.params),
    }
}

fn cell_continual(cfg: &ExperimentConfig, head: &HeadSpec, seed: u64) -> kac::Result<(CellReport, String)> {
    let started = Instant::now();
    let stream = build_stream(cfg, seed)?;
    let train = TrainConfig {
        head: head.clone(),
        seed,
        ..cfg.train.clone()
    };
    let run = run_continual(&stream, &train)?;
    let mut report = run.report;
    if cfg.record_wall_clock {
        report.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
    }
    let ckpt = checkpoint::to_json(&run.model.head)?;
    Ok((
        CellReport {
            scenario: cfg.scenario,
            head: head.label(),
            seed,
            stream: StreamEcho {
                config: cfg.stream.clone(),
                effective_seed: cfg.stream.seed.unwrap_or(seed),
            },
            report,
        },
        ckpt,
    ))
}

fn cell_peaks(cfg: &ExperimentConfig, model: RegressorKind, seed: u64) -> kac::Result<PeaksCellReport> {
    let started = Instant::now();
    let peaks = PeaksConfig {
        seed,
        ..cfg.peaks.clone()
    };
    let outcome = run_peaks_experiment(model, &peaks)?;
    Ok(PeaksCellReport {
        scenario: Scenario::Peaks,
        model,
        seed,
        config: peaks,
        outcome,
        wall_clock_seconds: cfg.record_wall_clock.then(|| started.elapsed().as_secs_f64()),
    })
}

fn pretty<T: Serialize>(value: &T) -> kac::Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every cell of the sweep in parallel and writes all artifacts into
/// `out` (created if needed). Cells are independent and outputs are
/// collected in config order, so the files do not depend on scheduling.
pub fn execute(cfg: &ExperimentConfig, out: &Path) -> kac::Result<RunOutput> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut write = |name: String, bytes: &[u8]| -> kac::Result<()> {
        let path = out.join(name);
        write_atomic(&path, bytes)?;
        files.push(path);
        Ok(())
    };
    write("resolved_config.json".into(), &pretty(cfg)?)?;

    let scenario = cfg.scenario.name();
    let mut cells = Vec::new();
    let mut summary = String::new();
    match cfg.scenario {
        Scenario::Cil | Scenario::Dil => {
            let jobs: Vec<(&HeadSpec, u64)> = cfg
                .heads
                .iter()
                .flat_map(|h| cfg.seeds.iter().map(move |&s| (h, s)))
                .collect();
            let results = jobs
                .par_iter()
                .map(|(h, s)| cell_continual(cfg, h, *s))
                .collect::<kac::Result<Vec<_>>>()?;
            summary.push_str("scenario,head,steps,seed,avg,last\n");
            for (cell, ckpt) in results {
                let stem = format!("{scenario}_{}_seed{}", cell.head, cell.seed);
                write(format!("{stem}.json"), &pretty(&cell)?)?;
                write(format!("{stem}_accuracy.csv"), cell.report.accuracy_matrix.to_csv().as_bytes())?;
                write(format!("{stem}_checkpoint.json"), ckpt.as_bytes())?;
                summary.push_str(&format!(
                    "{scenario},{},{},{},{},{}\n",
                    cell.head,
                    cell.report.steps,
                    cell.seed,
                    sig6(cell.report.avg),
                    sig6(cell.report.last)
                ));
                cells.push(CellResult::Continual(cell));
            }
        }
        Scenario::Peaks => {
            let jobs: Vec<(RegressorKind, u64)> = cfg
                .models
                .iter()
                .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
                .collect();
            let results = jobs
                .par_iter()
                .map(|(m, s)| cell_peaks(cfg, *m, *s))
                .collect::<kac::Result<Vec<_>>>()?;
            summary.push_str("scenario,model,steps,seed,median_prev_rmse,max_locality_ratio\n");
            for cell in results {
                let name = cell.model.name();
                write(format!("peaks_{name}_seed{}.json", cell.seed), &pretty(&cell)?)?;
                let locality = cell
                    .outcome
                    .locality
                    .iter()
                    .map(|r| r.ratio)
                    .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
                summary.push_str(&format!(
                    "peaks,{name},{},{},{},{}\n",
                    cell.outcome.rmse.len(),
                    cell.seed,
                    sig6(median(cell.outcome.previous_peaks_rmse())),
                    locality.map(sig6).unwrap_or_default()
                ));
                cells.push(CellResult::Peaks(cell));
            }
        }
    }
    write("summary.csv".into(), summary.as_bytes())?;
    Ok(RunOutput { cells, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.8), "0.800000");
        assert_eq!(sig6(0.7), "0.700000");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(0.123456789), "0.123457");
        assert_eq!(sig6(12345.678), "12345.7");
        assert_eq!(sig6(0.0), "0.00000");
        assert_eq!(sig6(0.00012345678), "0.000123457");
        assert_eq!(sig6(0.9999996), "1.00000");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
