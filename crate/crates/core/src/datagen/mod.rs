//! Deterministic synthetic data.
//!
//! Feature streams are labeled Gaussian clusters in a small latent space,
//! pushed through a frozen random projection that stands in for a
//! pre-trained backbone. The regression toy of sequential Gaussian peaks
//! lives in [`peaks`]; CSV import/export in [`io`].
//!
//! Every random draw comes from a generator derived from the user seed and
//! a fixed purpose tag via [`crate::numerics::derive_seed`], so each task's
//! samples depend only on `(seed, task index)`.

pub mod io;
pub mod peaks;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::continual::{Dataset, StreamMode, Task, TaskStream};
use crate::error::{KacError, Result};
use crate::numerics::{Matrix, Rng};

pub use peaks::{make_peaks, run_peaks_experiment, PeakTask, PeaksConfig, PeaksOutcome, RegressorKind};

const TAG_MEANS: u64 = 0x6d65_616e;
const TAG_PROJECTION: u64 = 0x7072_6f6a;
const TAG_SAMPLES: u64 = 0x7361_6d70;
const TAG_SHIFT: u64 = 0x7368_6966;

fn default_per_class() -> usize {
    40
}
fn default_sigma() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    5.0
}
fn default_separation() -> f64 {
    3.0
}
fn default_attempts() -> usize {
    10_000
}
fn default_shift() -> f64 {
    2.0
}

/// Cluster and sampling settings shared by the stream generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamParams {
    #[serde(default = "default_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_per_class")]
    pub test_per_class: usize,
    /// Isotropic standard deviation of every latent cluster.
    #[serde(default = "default_sigma")]
    pub cluster_sigma: f64,
    /// Class means lie on a sphere of this radius.
    #[serde(default = "default_radius")]
    pub mean_radius: f64,
    /// Minimum distance between any two means, in units of `cluster_sigma`.
    #[serde(default = "default_separation")]
    pub separation_factor: f64,
    /// Total rejected draws allowed while placing the means.
    #[serde(default = "default_attempts")]
    pub max_resamples: usize,
    /// Norm of each domain's latent shift (DIL only).
    #[serde(default = "default_shift")]
    pub domain_shift: f64,
}

impl Default for StreamParams {
    fn default() -> Self {
        StreamParams {
            train_per_class: default_per_class(),
            test_per_class: default_per_class(),
            cluster_sigma: default_sigma(),
            mean_radius: default_radius(),
            separation_factor: default_separation(),
            max_resamples: default_attempts(),
            domain_shift: default_shift(),
        }
    }
}

impl StreamParams {
    pub fn validate(&self) -> Result<()> {
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(KacError::param("per-class sample counts must be at least 1"));
        }
        if !(self.cluster_sigma > 0.0) || !self.cluster_sigma.is_finite() {
            return Err(KacError::param("cluster sigma must be positive"));
        }
        if !(self.mean_radius > 0.0) || !self.mean_radius.is_finite() {
            return Err(KacError::param("mean radius must be positive"));
        }
        if !(self.separation_factor >= 0.0) || !(self.domain_shift >= 0.0) {
            return Err(KacError::param("separation factor and domain shift must be nonnegative"));
        }
        Ok(())
    }
}

/// One latent Gaussian cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub class_id: usize,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub train: usize,
    pub test: usize,
}

fn check_counts(counts: &[(&str, usize)]) -> Result<()> {
    for (name, v) in counts {
        if *v == 0 {
            return Err(KacError::param(format!("{name} must be at least 1")));
        }
    }
    Ok(())
}

/// Means on a sphere of radius `params.mean_radius`, each at least
/// `separation_factor * cluster_sigma` from all others.
pub fn sample_means(count: usize, d_latent: usize, params: &StreamParams, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = Rng::derive(seed, TAG_MEANS, 0);
    let min_dist = params.separation_factor * params.cluster_sigma;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut rejected = 0usize;
    while means.len() < count {
        let candidate = random_direction(&mut rng, d_latent, params.mean_radius);
        let ok = means.iter().all(|m| distance(m, &candidate) >= min_dist);
        if ok {
            means.push(candidate);
        } else {
            rejected += 1;
            if rejected > params.max_resamples {
                return Err(KacError::Generation(format!(
                    "could not place {count} means {min_dist} apart on a radius-{} sphere in {d_latent} \
                     dimensions after {} resamples",
                    params.mean_radius, params.max_resamples
                )));
            }
        }
    }
    Ok(means)
}

fn random_direction(rng: &mut Rng, d: usize, norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-12 {
            return v.into_iter().map(|x| x * norm / len).collect();
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Frozen `n_feature x d_latent` Gaussian matrix with entries of variance
/// `1 / d_latent`.
pub fn projection(n_feature: usize, d_latent: usize, seed: u64) -> Matrix {
    let mut rng = Rng::derive(seed, TAG_PROJECTION, 0);
    let scale = 1.0 / (d_latent as f64).sqrt();
    let data = (0..n_feature * d_latent).map(|_| rng.normal() * scale).collect();
    Matrix::from_vec(n_feature, d_latent, data).expect("finite projection")
}

fn draw_split(
    rng: &mut Rng,
    clusters: &[ClusterSpec],
    shift: &[f64],
    proj: &Matrix,
    per_class: impl Fn(&ClusterSpec) -> usize,
) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in clusters {
        for _ in 0..per_class(c) {
            let z: Vec<f64> = c
                .mean
                .iter()
                .zip(shift)
                .map(|(m, s)| m + s + c.sigma * rng.normal())
                .collect();
            rows.push(proj.matvec(&z)?);
            labels.push(c.class_id);
        }
    }
    Dataset::new(Matrix::from_rows(&rows)?, labels)
}

fn ensure_disjoint(t: usize, train: &Dataset, test: &Dataset) -> Result<()> {
    let bits = |row: &[f64]| row.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let seen: HashSet<Vec<u64>> = (0..train.len()).map(|i| bits(train.features.row(i))).collect();
    if (0..test.len()).any(|i| seen.contains(&bits(test.features.row(i)))) {
        return Err(KacError::Generation(format!("task {t}: a test sample duplicates a training sample")));
    }
    Ok(())
}

fn build_task(
    t: usize,
    seed: u64,
    clusters: &[ClusterSpec],
    shift: &[f64],
    proj: &Matrix,
) -> Result<Task> {
    let mut rng = Rng::derive(seed, TAG_SAMPLES, t as u64);
    let train = draw_split(&mut rng, clusters, shift, proj, |c| c.train)?;
    let test = draw_split(&mut rng, clusters, shift, proj, |c| c.test)?;
    ensure_disjoint(t, &train, &test)?;
    Ok(Task {
        train,
        test,
        class_ids: clusters.iter().map(|c| c.class_id).collect(),
    })
}

fn clusters_for(means: Vec<Vec<f64>>, params: &StreamParams) -> Vec<ClusterSpec> {
    means
        .into_iter()
        .enumerate()
        .map(|(class_id, mean)| ClusterSpec {
            class_id,
            mean,
            sigma: params.cluster_sigma,
            train: params.train_per_class,
            test: params.test_per_class,
        })
        .collect()
}

/// Class-incremental stream: task `t` owns classes
/// `t * classes_per_task .. (t + 1) * classes_per_task`.
pub fn make_cil_stream(
    num_tasks: usize,
    classes_per_task: usize,
    d_latent: usize,
    n_feature: usize,
    seed: u64,
    params: &StreamParams,
) -> Result<TaskStream> {
    check_counts(&[
        ("num_tasks", num_tasks),
        ("classes_per_task", classes_per_task),
        ("d_latent", d_latent),
        ("n_feature", n_feature),
    ])?;
    params.validate()?;
    let means = sample_means(num_tasks * classes_per_task, d_latent, params, seed)?;
    let clusters = clusters_for(means, params);
    let proj = projection(n_feature, d_latent, seed);
    let no_shift = vec![0.0; d_latent];
    let tasks = clusters
        .chunks(classes_per_task)
        .enumerate()
        .map(|(t, block)| build_task(t, seed, block, &no_shift, &proj))
        .collect::<Result<Vec<Task>>>()?;
    let stream = TaskStream {
        mode: StreamMode::Cil,
        tasks,
    };
    stream.validate()?;
    Ok(stream)
}

/// Per-domain latent shift vectors of norm `params.domain_shift`.
pub fn domain_shifts(num_domains: usize, d_latent: usize, params: &StreamParams, seed: u64) -> Vec<Vec<f64>> {
    (0..num_domains)
        .map(|d| {
            if params.domain_shift == 0.0 {
                vec![0.0; d_latent]
            } else {
                let mut rng = Rng::derive(seed, TAG_SHIFT, d as u64);
                random_direction(&mut rng, d_latent, params.domain_shift)
            }
        })
        .collect()
}

/// Domain-incremental stream: every domain has all `num_classes`
/// classes; domain `d` adds its own shift to every latent sample.
pub fn make_dil_stream(
    num_domains: usize,
    num_classes: usize,
    d_latent: usize,
    n_feature: usize,
    seed: u64,
    params: &StreamParams,
) -> Result<TaskStream> {
    check_counts(&[
        ("num_domains", num_domains),
        ("num_classes", num_classes),
        ("d_latent", d_latent),
        ("n_feature", n_feature),
    ])?;
    params.validate()?;
    let clusters = clusters_for(sample_means(num_classes, d_latent, params, seed)?, params);
    let proj = projection(n_feature, d_latent, seed);
    let tasks = domain_shifts(num_domains, d_latent, params, seed)
        .iter()
        .enumerate()
        .map(|(d, shift)| build_task(d, seed, &clusters, shift, &proj))
        .collect::<Result<Vec<Task>>>()?;
    let stream = TaskStream {
        mode: StreamMode::Dil,
        tasks,
    };
    stream.validate()?;
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> StreamParams {
        StreamParams {
            train_per_class: 5,
            test_per_class: 3,
            ..StreamParams::default()
        }
    }

    #[test]
    fn cil_bookkeeping() {
        let s = make_cil_stream(5, 4, 8, 32, 0, &small()).unwrap();
        assert_eq!(s.tasks.len(), 5);
        let blocks: Vec<usize> = s.tasks.iter().map(|t| t.class_ids.len()).collect();
        assert_eq!(blocks, vec![4; 5]);
        assert_eq!(s.tasks[4].class_ids, vec![16, 17, 18, 19]);
        for task in &s.tasks {
            assert_eq!(task.train.dim(), 32);
            for &c in &task.class_ids {
                assert_eq!(task.train.labels.iter().filter(|&&l| l == c).count(), 5);
                assert_eq!(task.test.labels.iter().filter(|&&l| l == c).count(), 3);
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a = make_cil_stream(2, 3, 6, 10, 7, &small()).unwrap();
        let b = make_cil_stream(2, 3, 6, 10, 7, &small()).unwrap();
        assert_eq!(a, b);
        let c = make_cil_stream(2, 3, 6, 10, 8, &small()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn means_respect_separation() {
        let p = StreamParams::default();
        let means = sample_means(20, 16, &p, 3).unwrap();
        for i in 0..means.len() {
            assert!((distance(&means[i], &[0.0; 16]) - p.mean_radius).abs() < 1e-9);
            for j in 0..i {
                assert!(distance(&means[i], &means[j]) >= 3.0);
            }
        }
    }

    #[test]
    fn impossible_separation_is_a_generation_error() {
        let p = StreamParams {
            mean_radius: 1.0,
            separation_factor: 3.0,
            max_resamples: 200,
            ..StreamParams::default()
        };
        assert!(matches!(sample_means(3, 2, &p, 0), Err(KacError::Generation(_))));
    }

    #[test]
    fn dil_shares_classes_and_degenerates() {
        let s = make_dil_stream(3, 4, 6, 12, 1, &small()).unwrap();
        assert!(s.tasks.iter().all(|t| t.class_ids == vec![0, 1, 2, 3]));
        let one = make_dil_stream(1, 4, 6, 12, 1, &small()).unwrap();
        assert_eq!(one.tasks.len(), 1);
    }

    #[test]
    fn zero_shift_means_identical_domain_distributions() {
        let p = StreamParams {
            domain_shift: 0.0,
            ..small()
        };
        let shifts = domain_shifts(4, 5, &p, 9);
        assert!(shifts.iter().flatten().all(|&v| v == 0.0));
        let shifted = domain_shifts(2, 5, &small(), 9);
        assert!((distance(&shifted[0], &[0.0; 5]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(make_cil_stream(0, 4, 8, 32, 0, &small()).is_err());
        assert!(make_dil_stream(2, 0, 8, 32, 0, &small()).is_err());
    }
}
