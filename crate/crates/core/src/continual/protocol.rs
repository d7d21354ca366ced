use serde::{Deserialize, Serialize};

use super::train::{pooled_accuracy, predict, train_task, Backbone, Model, TrainConfig, TrainLog};
use super::{average_accuracy, forgetting, Accuracy, AccuracyMatrix, Dataset, StreamMode, TaskStream};
use crate::error::{KacError, Result};
use crate::heads::{activation_map, Head};
use crate::numerics::{Matrix, Rng};

const TAG_INIT: u64 = 0x696e_6974;
const TAG_SHUFFLE: u64 = 0x7368_7566;

/// Something that can be taken through the incremental protocol.
///
/// `train` only ever receives the current task's training split.
pub trait Learner {
    fn begin_task(&mut self, step: usize, mode: StreamMode, class_ids: &[usize]) -> Result<()>;

    fn train(&mut self, train: &Dataset, class_ids: &[usize]) -> Result<TrainLog>;

    fn predict(&self, features: &[f64], seen: &[usize]) -> Result<usize>;

    fn activation_map(&self) -> Option<Matrix> {
        None
    }
}

/// Backbone + head trained with [`train_task`].
#[derive(Debug, Clone)]
pub struct HeadLearner {
    pub model: Model,
    cfg: TrainConfig,
    init_rng: Rng,
    step: usize,
}

impl HeadLearner {
    pub fn new(cfg: &TrainConfig, feature_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = Rng::derive(cfg.seed, TAG_INIT, 0);
        let head = cfg.head.build(feature_dim, &mut init_rng)?;
        let backbone = if cfg.trainable_backbone {
            Backbone::trainable_identity(feature_dim)
        } else {
            Backbone::Frozen
        };
        Ok(HeadLearner {
            model: Model { backbone, head },
            cfg: cfg.clone(),
            init_rng,
            step: 0,
        })
    }
}

impl Learner for HeadLearner {
    fn begin_task(&mut self, step: usize, mode: StreamMode, class_ids: &[usize]) -> Result<()> {
        self.step = step;
        let have = self.model.head.num_classes();
        match mode {
            StreamMode::Cil => {
                let contiguous = class_ids.iter().enumerate().all(|(i, &c)| c == have + i);
                if !contiguous {
                    return Err(KacError::Protocol(format!(
                        "CIL step {step} must introduce class ids {have}.. in order"
                    )));
                }
                self.model.head.expand_classes(class_ids.len(), &mut self.init_rng)
            }
            StreamMode::Dil => {
                let needed = class_ids.iter().max().map_or(0, |m| m + 1);
                if needed > have {
                    self.model.head.expand_classes(needed - have, &mut self.init_rng)?;
                }
                Ok(())
            }
        }
    }

    fn train(&mut self, train: &Dataset, class_ids: &[usize]) -> Result<TrainLog> {
        let mut rng = Rng::derive(self.cfg.seed, TAG_SHUFFLE, self.step as u64);
        train_task(&mut self.model, train, class_ids, &self.cfg, &mut rng)
    }

    fn predict(&self, features: &[f64], seen: &[usize]) -> Result<usize> {
        predict(&self.model, features, seen)
    }

    fn activation_map(&self) -> Option<Matrix> {
        self.model.head.as_kac().map(activation_map)
    }
}

fn accuracy<L: Learner>(learner: &L, sets: &[&Dataset], seen: &[usize]) -> Result<Accuracy> {
    pooled_accuracy(sets, |f| learner.predict(f, seen))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub matrix: AccuracyMatrix,
    pub avg: f64,
    pub last: f64,
    /// Empty for single-task streams.
    pub forgetting: Vec<f64>,
    pub train_logs: Vec<TrainLog>,
    pub activation_map: Option<Matrix>,
}

/// Runs every task in order: expand, train on the task, then evaluate on
/// each seen task's test split and on their union.
pub fn run_protocol<L: Learner>(stream: &TaskStream, learner: &mut L) -> Result<ProtocolOutcome> {
    stream.validate()?;
    let mut seen: Vec<usize> = Vec::new();
    let mut task_acc = Vec::new();
    let mut seen_counts = Vec::new();
    let mut train_logs = Vec::new();
    for (t, task) in stream.tasks.iter().enumerate() {
        learner.begin_task(t, stream.mode, &task.class_ids)?;
        train_logs.push(learner.train(&task.train, &task.class_ids)?);
        for c in &task.class_ids {
            if let Err(pos) = seen.binary_search(c) {
                seen.insert(pos, *c);
            }
        }
        let tests: Vec<&Dataset> = stream.tasks[..=t].iter().map(|k| &k.test).collect();
        let row = tests
            .iter()
            .map(|set| accuracy(learner, &[*set], &seen).map(|a| a.value()))
            .collect::<Result<Vec<f64>>>()?;
        task_acc.push(row);
        seen_counts.push(accuracy(learner, &tests, &seen)?);
    }
    let matrix = AccuracyMatrix {
        task_acc,
        seen_acc: seen_counts.iter().map(Accuracy::value).collect(),
        seen_counts,
    };
    let avg = average_accuracy(&matrix.seen_counts)?;
    let last = *matrix.seen_acc.last().expect("stream has at least one task");
    let forgetting = if matrix.steps() >= 2 {
        forgetting(&matrix)?
    } else {
        Vec::new()
    };
    Ok(ProtocolOutcome {
        matrix,
        avg,
        last,
        forgetting,
        train_logs,
        activation_map: learner.activation_map(),
    })
}

/// Serializable result of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub mode: StreamMode,
    pub steps: usize,
    pub seen_acc: Vec<f64>,
    pub accuracy_matrix: AccuracyMatrix,
    pub avg: f64,
    pub last: f64,
    pub forgetting: Vec<f64>,
    pub mean_forgetting: Option<f64>,
    pub head_parameter_count: usize,
    pub activation_map: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// Report plus the trained model.
#[derive(Debug, Clone)]
pub struct ContinualRun {
    pub report: ContinualReport,
    pub model: Model,
}

pub fn run_continual(stream: &TaskStream, cfg: &TrainConfig) -> Result<ContinualRun> {
    let mut learner = HeadLearner::new(cfg, stream.feature_dim())?;
    let outcome = run_protocol(stream, &mut learner)?;
    let mean_forgetting = if outcome.forgetting.is_empty() {
        None
    } else {
        Some(outcome.forgetting.iter().sum::<f64>() / outcome.forgetting.len() as f64)
    };
    let report = ContinualReport {
        config: cfg.clone(),
        seed: cfg.seed,
        mode: stream.mode,
        steps: stream.tasks.len(),
        seen_acc: outcome.matrix.seen_acc.clone(),
        avg: outcome.avg,
        last: outcome.last,
        forgetting: outcome.forgetting,
        mean_forgetting,
        head_parameter_count: learner.model.head.parameter_count(),
        activation_map: outcome
            .activation_map
            .map(|m| (0..m.rows()).map(|r| m.row(r).to_vec()).collect()),
        accuracy_matrix: outcome.matrix,
        wall_clock_seconds: None,
    };
    Ok(ContinualRun {
        report,
        model: learner.model,
    })
}
