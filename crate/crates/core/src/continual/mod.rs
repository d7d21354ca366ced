//! Task streams, the incremental training protocol and its metrics.
//!
//! A [`TaskStream`] is an ordered list of tasks. In class-incremental mode
//! (CIL) every task brings a disjoint block of new class ids; in
//! domain-incremental mode (DIL) every task shares the same class ids and
//! only the input distribution moves.
//!
//! After step `t` the protocol records `a[t][k]`, the accuracy on task
//! `k`'s test split for every `k <= t`, and `seen_acc[t]`, the accuracy on
//! the pooled test splits of tasks `0..=t` (sample-weighted). The average
//! incremental accuracy is `mean(seen_acc)`; the last accuracy is
//! `seen_acc[T - 1]`.

mod protocol;
mod train;

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

pub use protocol::{
    run_continual, run_protocol, ContinualReport, ContinualRun, HeadLearner, Learner, ProtocolOutcome,
};
pub use train::{evaluate, predict, train_task, Backbone, Model, TrainConfig, TrainLog};

use crate::error::{KacError, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamMode {
    Cil,
    Dil,
}

/// Labeled feature rows; `features.row(i)` carries `labels[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(KacError::dim(
                "Dataset",
                format!("{} feature rows", features.rows()),
                format!("{} labels", labels.len()),
            ));
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub train: Dataset,
    pub test: Dataset,
    /// Sorted class ids owned by (CIL) or present in (DIL) this task.
    pub class_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub mode: StreamMode,
    pub tasks: Vec<Task>,
}

impl TaskStream {
    pub fn feature_dim(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.train.dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(KacError::param("stream has no tasks"));
        }
        let dim = self.feature_dim();
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        for (t, task) in self.tasks.iter().enumerate() {
            if task.train.dim() != dim || task.test.dim() != dim {
                return Err(KacError::dim(
                    "TaskStream",
                    format!("feature dimension {dim}"),
                    format!("task {t} with {} / {}", task.train.dim(), task.test.dim()),
                ));
            }
            if task.class_ids.is_empty() || task.class_ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(KacError::param(format!(
                    "task {t}: class ids must be nonempty, sorted and unique"
                )));
            }
            let ids: BTreeSet<usize> = task.class_ids.iter().copied().collect();
            for (split, data) in [("train", &task.train), ("test", &task.test)] {
                if let Some(bad) = data.labels.iter().find(|l| !ids.contains(l)) {
                    return Err(KacError::Protocol(format!(
                        "task {t} {split} label {bad} is not one of the task's classes"
                    )));
                }
            }
            match self.mode {
                StreamMode::Cil => {
                    if !seen.is_disjoint(&ids) {
                        return Err(KacError::Protocol(format!(
                            "task {t} reuses class ids from an earlier task"
                        )));
                    }
                }
                StreamMode::Dil => {
                    if t > 0 && task.class_ids != self.tasks[0].class_ids {
                        return Err(KacError::Protocol(format!(
                            "DIL task {t} has a different class set"
                        )));
                    }
                }
            }
            seen.extend(ids);
        }
        Ok(())
    }
}

/// Correct/total counts behind an accuracy value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Mean of the accuracies, computed exactly over rationals and rounded
/// once.
pub fn average_accuracy(accs: &[Accuracy]) -> Result<f64> {
    if accs.is_empty() || accs.iter().any(|a| a.total == 0) {
        return Err(KacError::param("average needs at least one nonempty accuracy"));
    }
    let sum = accs.iter().fold(BigRational::from_integer(BigInt::from(0)), |acc, a| {
        acc + BigRational::new(BigInt::from(a.correct), BigInt::from(a.total))
    });
    let mean = sum / BigRational::from_integer(BigInt::from(accs.len()));
    mean.to_f64().ok_or(KacError::NonFinite("average_accuracy"))
}

/// Lower-triangular per-task accuracies plus pooled seen-class accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    /// `task_acc[t][k]` for `k <= t`.
    pub task_acc: Vec<Vec<f64>>,
    pub seen_acc: Vec<f64>,
    pub seen_counts: Vec<Accuracy>,
}

impl AccuracyMatrix {
    pub fn steps(&self) -> usize {
        self.task_acc.len()
    }

    /// Rows are steps, columns tasks; cells above the diagonal are empty.
    pub fn to_csv(&self) -> String {
        let t = self.steps();
        let mut out = String::from("step");
        for k in 0..t {
            out.push_str(&format!(",task{}", k + 1));
        }
        out.push('\n');
        for (s, row) in self.task_acc.iter().enumerate() {
            out.push_str(&(s + 1).to_string());
            for k in 0..t {
                out.push(',');
                if let Some(v) = row.get(k) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `f[k] = max_{t >= k} a[t][k] - a[T-1][k]` for every task `k < T - 1`.
/// The final task has no later step to forget in and is left out.
pub fn forgetting(matrix: &AccuracyMatrix) -> Result<Vec<f64>> {
    let t = matrix.steps();
    if t < 2 {
        return Err(KacError::param("forgetting needs at least two steps"));
    }
    for (s, row) in matrix.task_acc.iter().enumerate() {
        if row.len() != s + 1 {
            return Err(KacError::dim(
                "forgetting",
                format!("row {s} with {} entries", s + 1),
                format!("{} entries", row.len()),
            ));
        }
    }
    let last = &matrix.task_acc[t - 1];
    Ok((0..t - 1)
        .map(|k| {
            let best = (k..t).map(|s| matrix.task_acc[s][k]).fold(f64::NEG_INFINITY, f64::max);
            best - last[k]
        })
        .collect())
}
