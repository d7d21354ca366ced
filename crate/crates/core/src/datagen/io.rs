//! Streams as a directory of CSV files plus `manifest.json`.
//!
//! Each task contributes `task{t}_train.csv` and `task{t}_test.csv` with
//! columns `f0..f{n-1},label`. Values use Rust's shortest round-trip float
//! formatting, so export -> import -> export reproduces the same bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continual::{Dataset, StreamMode, Task, TaskStream};
use crate::error::{KacError, Result};
use crate::numerics::Matrix;

pub const GENERATOR: &str = "kac-datagen";
pub const GENERATOR_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub class_ids: Vec<usize>,
    pub train_file: String,
    pub train_rows: usize,
    pub test_file: String,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub version: u32,
    pub mode: StreamMode,
    pub seed: Option<u64>,
    pub feature_dim: usize,
    /// Free-form generator settings echoed for auditability.
    #[serde(default)]
    pub params: serde_json::Value,
    pub tasks: Vec<TaskEntry>,
}

fn write_split(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let (f, label) = data.sample(i);
        let mut rec: Vec<String> = f.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_split(path: &Path, dim: usize, rows: usize) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width != dim + 1 {
        return Err(KacError::dim(
            "read_split",
            format!("{} columns expected", dim + 1),
            format!("{width} in {}", path.display()),
        ));
    }
    let mut data = Vec::with_capacity(rows * dim);
    let mut labels = Vec::with_capacity(rows);
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter().take(dim) {
            data.push(field.parse::<f64>().map_err(|e| {
                KacError::param(format!("{}: bad value {field:?}: {e}", path.display()))
            })?);
        }
        let label = &rec[dim];
        labels.push(label.parse::<usize>().map_err(|e| {
            KacError::param(format!("{}: bad label {label:?}: {e}", path.display()))
        })?);
    }
    if labels.len() != rows {
        return Err(KacError::dim(
            "read_split",
            format!("{rows} rows in manifest"),
            format!("{} in {}", labels.len(), path.display()),
        ));
    }
    Dataset::new(Matrix::from_vec(rows, dim, data)?, labels)
}

/// Writes the stream into `dir` (created if missing).
pub fn export_stream(
    stream: &TaskStream,
    dir: &Path,
    seed: Option<u64>,
    params: serde_json::Value,
) -> Result<Manifest> {
    stream.validate()?;
    fs::create_dir_all(dir)?;
    let mut tasks = Vec::with_capacity(stream.tasks.len());
    for (t, task) in stream.tasks.iter().enumerate() {
        let entry = TaskEntry {
            class_ids: task.class_ids.clone(),
            train_file: format!("task{t}_train.csv"),
            train_rows: task.train.len(),
            test_file: format!("task{t}_test.csv"),
            test_rows: task.test.len(),
        };
        write_split(&dir.join(&entry.train_file), &task.train)?;
        write_split(&dir.join(&entry.test_file), &task.test)?;
        tasks.push(entry);
    }
    let manifest = Manifest {
        generator: GENERATOR.into(),
        version: GENERATOR_VERSION,
        mode: stream.mode,
        seed,
        feature_dim: stream.feature_dim(),
        params,
        tasks,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST), text)?;
    Ok(manifest)
}

pub fn import_stream(dir: &Path) -> Result<(TaskStream, Manifest)> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    if manifest.generator != GENERATOR || manifest.version != GENERATOR_VERSION {
        return Err(KacError::param(format!(
            "unsupported manifest {} v{}",
            manifest.generator, manifest.version
        )));
    }
    let dim = manifest.feature_dim;
    let tasks = manifest
        .tasks
        .iter()
        .map(|e| {
            Ok(Task {
                train: read_split(&dir.join(&e.train_file), dim, e.train_rows)?,
                test: read_split(&dir.join(&e.test_file), dim, e.test_rows)?,
                class_ids: e.class_ids.clone(),
            })
        })
        .collect::<Result<Vec<Task>>>()?;
    let stream = TaskStream {
        mode: manifest.mode,
        tasks,
    };
    stream.validate()?;
    Ok((stream, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_cil_stream, make_dil_stream, StreamParams};

    fn bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn round_trip_is_exact() {
        let p = StreamParams {
            train_per_class: 4,
            test_per_class: 2,
            ..StreamParams::default()
        };
        for stream in [
            make_cil_stream(3, 2, 5, 7, 11, &p).unwrap(),
            make_dil_stream(2, 3, 5, 7, 11, &p).unwrap(),
        ] {
            let a = tempfile::tempdir().unwrap();
            let b = tempfile::tempdir().unwrap();
            let params = serde_json::to_value(&p).unwrap();
            export_stream(&stream, a.path(), Some(11), params.clone()).unwrap();
            let (back, manifest) = import_stream(a.path()).unwrap();
            assert_eq!(back, stream);
            assert_eq!(manifest.seed, Some(11));
            export_stream(&back, b.path(), Some(11), params).unwrap();
            assert_eq!(bytes(a.path()), bytes(b.path()));
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = StreamParams {
            train_per_class: 3,
            test_per_class: 2,
            ..StreamParams::default()
        };
        let stream = make_cil_stream(1, 2, 3, 4, 0, &p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_stream(&stream, dir.path(), None, serde_json::Value::Null).unwrap();
        let path = dir.path().join("task0_test.csv");
        let text = fs::read_to_string(&path).unwrap();
        let cut: Vec<&str> = text.lines().take(2).collect();
        fs::write(&path, cut.join("\n") + "\n").unwrap();
        assert!(import_stream(dir.path()).is_err());
    }
}
