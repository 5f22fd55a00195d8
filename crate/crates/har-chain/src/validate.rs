//! Validation protocols and hyperparameter search.
//!
//! Three ways to split a windowed dataset: a single holdout split (with or
//! without subject grouping), k-fold over shuffled windows, and
//! leave-one-subject-out. [`run_cross_validation`] drives the full loop:
//! for every fold it fits the normalizer on training windows only, trains a
//! freshly initialized model, and scores the held-out windows. Everything
//! derives from one master seed, so a run is a pure function of
//! (data, config, seed).

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::model::{build_model, ModelSpec};
use crate::preprocess::{
    apply_normalizer_windows, fit_normalizer_windows, NormScheme, NormStats, WindowedDataset,
};
use crate::rng;
use crate::train::{evaluate_model, train, TrainConfig, TrainHistory};

/// How a holdout split groups windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Windows shuffle independently. Overlapping neighbors from the same
    /// recording can land on both sides, so scores read optimistic.
    Window,
    /// Whole subjects move together; the validation side never shares a
    /// subject with training.
    Subject,
}

/// One train/test split, as indices into the dataset it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub id: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Set for leave-one-subject-out folds.
    pub held_out_subject: Option<String>,
}

/// Split windows into a training and a validation set.
///
/// `Window` grouping shuffles all indices with the seed and cuts off
/// `val_fraction` (rounded, but at least one window on each side).
/// `Subject` grouping walks subjects in seeded order and moves whole
/// subjects to the validation side until it holds at least `val_fraction`
/// of the windows; it refuses datasets with a single subject.
pub fn split_train_val(
    ds: &WindowedDataset,
    val_fraction: f64,
    seed: u64,
    grouping: Grouping,
) -> Result<FoldSpec> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 windows to split, got {n}"
        )));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "val_fraction must lie strictly between 0 and 1, got {val_fraction}"
        )));
    }
    let mut r = rng::stream(seed, &[rng::SPLIT]);
    let (mut train, mut test): (Vec<usize>, Vec<usize>) = match grouping {
        Grouping::Window => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut r);
            let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
            let test = order[..n_val].to_vec();
            let train = order[n_val..].to_vec();
            (train, test)
        }
        Grouping::Subject => {
            let mut subjects = ds.distinct_subjects();
            if subjects.len() < 2 {
                return Err(Error::invalid(
                    "subject-grouped split needs at least 2 subjects",
                ));
            }
            subjects.shuffle(&mut r);
            let target = val_fraction * n as f64;
            let mut val_subjects = Vec::new();
            let mut covered = 0usize;
            for s in &subjects {
                // Never drain every subject into validation.
                if val_subjects.len() + 1 == subjects.len() {
                    break;
                }
                if covered as f64 >= target && !val_subjects.is_empty() {
                    break;
                }
                covered += ds.subject_ids.iter().filter(|id| *id == s).count();
                val_subjects.push(s.clone());
            }
            let test: Vec<usize> = (0..n)
                .filter(|&i| val_subjects.contains(&ds.subject_ids[i]))
                .collect();
            let train: Vec<usize> = (0..n)
                .filter(|&i| !val_subjects.contains(&ds.subject_ids[i]))
                .collect();
            (train, test)
        }
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok(FoldSpec {
        id: "holdout".to_string(),
        train,
        test,
        held_out_subject: None,
    })
}

/// Split shuffled windows into `k` contiguous chunks whose sizes differ by
/// at most one, larger chunks first. Fold `i` tests on chunk `i` and trains
/// on the rest.
pub fn kfold(ds: &WindowedDataset, k: usize, seed: u64) -> Result<Vec<FoldSpec>> {
    let n = ds.len();
    if k < 2 || k > n {
        return Err(Error::invalid(format!(
            "k must lie in 2..={n} for {n} windows, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::SPLIT]));
    let base = n / k;
    let rem = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut cursor = 0;
    for i in 0..k {
        let size = base + usize::from(i < rem);
        let mut test = order[cursor..cursor + size].to_vec();
        let mut train: Vec<usize> = order[..cursor]
            .iter()
            .chain(&order[cursor + size..])
            .copied()
            .collect();
        cursor += size;
        train.sort_unstable();
        test.sort_unstable();
        folds.push(FoldSpec {
            id: i.to_string(),
            train,
            test,
            held_out_subject: None,
        });
    }
    Ok(folds)
}

/// One fold per subject, in sorted subject order: the fold tests on that
/// subject's windows and trains on everyone else's.
pub fn loso(ds: &WindowedDataset) -> Result<Vec<FoldSpec>> {
    let subjects = ds.distinct_subjects();
    if subjects.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..ds.len()).partition(|&i| ds.subject_ids[i] == s);
            FoldSpec {
                id: s.clone(),
                train,
                test,
                held_out_subject: Some(s),
            }
        })
        .collect())
}

/// Which splitting protocol a cross-validation run uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Protocol {
    Holdout {
        val_fraction: f64,
        grouping: Grouping,
    },
    Kfold {
        k: usize,
    },
    Loso,
}

/// Materialize the folds a protocol implies for this dataset.
pub fn protocol_folds(
    ds: &WindowedDataset,
    protocol: &Protocol,
    seed: u64,
) -> Result<Vec<FoldSpec>> {
    match protocol {
        Protocol::Holdout {
            val_fraction,
            grouping,
        } => Ok(vec![split_train_val(ds, *val_fraction, seed, *grouping)?]),
        Protocol::Kfold { k } => kfold(ds, *k, seed),
        Protocol::Loso => loso(ds),
    }
}

/// Everything one fold produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub id: String,
    pub held_out_subject: Option<String>,
    pub train_windows: usize,
    pub test_windows: usize,
    /// Normalizer statistics fitted on this fold's training windows only.
    pub norm: NormStats,
    pub history: TrainHistory,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub protocol: Protocol,
    pub folds: Vec<FoldOutcome>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

/// Train and score one model per fold.
///
/// Expects unnormalized windows: each fold fits its own normalizer on its
/// training indices and applies those statistics to both sides, so no test
/// information reaches the model. The seeds inside `spec` and `cfg` are
/// ignored; fold `i` derives its own model and shuffle seeds from `seed`,
/// which makes the whole report a deterministic function of one value.
/// The fold's test set doubles as the validation set in its history; with
/// no early stopping this is reporting, not leakage.
///
/// Errors inside a fold come back tagged with the fold id. `std_*` fields
/// are population standard deviations across folds.
pub fn run_cross_validation(
    ds: &WindowedDataset,
    scheme: NormScheme,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    protocol: &Protocol,
    seed: u64,
) -> Result<CrossValReport> {
    let folds = protocol_folds(ds, protocol, seed)?;
    let mut outcomes = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        let run = || -> Result<FoldOutcome> {
            let norm = fit_normalizer_windows(ds, &fold.train, scheme)?;
            let normalized = apply_normalizer_windows(ds, &norm)?;
            let train_ds = normalized.select(&fold.train);
            let test_ds = normalized.select(&fold.test);
            let fold_spec = ModelSpec {
                seed: rng::mix(rng::mix(seed, rng::FOLD_MODEL), i as u64),
                ..spec.clone()
            };
            let fold_cfg = TrainConfig {
                seed: rng::mix(rng::mix(seed, rng::FOLD_TRAIN), i as u64),
                ..cfg.clone()
            };
            let model = build_model(&fold_spec)?;
            let history = train(&model, &train_ds, Some(&test_ds), &fold_cfg)?;
            let (_, metrics) = evaluate_model(&model, &test_ds, fold_cfg.batch_size)?;
            Ok(FoldOutcome {
                id: fold.id.clone(),
                held_out_subject: fold.held_out_subject.clone(),
                train_windows: fold.train.len(),
                test_windows: fold.test.len(),
                norm,
                history,
                metrics,
            })
        };
        outcomes.push(run().map_err(|e| e.in_fold(fold.id.clone()))?);
    }
    let accs: Vec<f64> = outcomes.iter().map(|o| o.metrics.accuracy).collect();
    let f1s: Vec<f64> = outcomes.iter().map(|o| o.metrics.macro_f1).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    let (mean_macro_f1, std_macro_f1) = mean_std(&f1s);
    Ok(CrossValReport {
        protocol: protocol.clone(),
        folds: outcomes,
        mean_accuracy,
        std_accuracy,
        mean_macro_f1,
        std_macro_f1,
    })
}

/// Hyperparameter ranges for [`random_search`]. The learning rate draws
/// log-uniformly from its range; everything else draws uniformly from the
/// listed choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lr: (f64, f64),
    pub batch_size: Vec<usize>,
    pub label_smoothing: Vec<f64>,
    pub maxup_copies: Vec<usize>,
    pub filters: Vec<usize>,
    pub hidden: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            lr: (1e-4, 1e-2),
            batch_size: vec![16, 32, 64],
            label_smoothing: vec![0.0, 0.05, 0.1],
            maxup_copies: vec![0, 2, 4],
            filters: vec![32, 64],
            hidden: vec![64, 128],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.0 > 0.0 && self.lr.0 <= self.lr.1) {
            return Err(Error::invalid(format!(
                "lr range must satisfy 0 < lo <= hi, got ({}, {})",
                self.lr.0, self.lr.1
            )));
        }
        for (name, empty) in [
            ("batch_size", self.batch_size.is_empty()),
            ("label_smoothing", self.label_smoothing.is_empty()),
            ("maxup_copies", self.maxup_copies.is_empty()),
            ("filters", self.filters.is_empty()),
            ("hidden", self.hidden.is_empty()),
        ] {
            if empty {
                return Err(Error::invalid(format!("search space `{name}` is empty")));
            }
        }
        Ok(())
    }
}

/// One sampled configuration and its validation scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub spec: ModelSpec,
    pub cfg: TrainConfig,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    /// Index into `trials` of the winner: highest validation macro-F1,
    /// earliest trial on ties.
    pub best: usize,
    pub trials: Vec<Trial>,
}

impl SearchReport {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

fn pick<T: Clone>(r: &mut impl Rng, xs: &[T]) -> T {
    xs[r.gen_range(0..xs.len())].clone()
}

/// Index of the largest value; the earlier index wins ties.
fn argmax_earliest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Random hyperparameter search against a single shared holdout split.
///
/// Trial `t` draws from its own stream, in a fixed order (lr, batch size,
/// label smoothing, maxup copies, filters, hidden), so adding trials never
/// changes earlier ones. All trials train on the same split and the same
/// train-fitted normalization, which keeps their scores comparable.
pub fn random_search(
    ds: &WindowedDataset,
    scheme: NormScheme,
    base_spec: &ModelSpec,
    base_cfg: &TrainConfig,
    space: &SearchSpace,
    budget: usize,
    val_fraction: f64,
    grouping: Grouping,
    seed: u64,
) -> Result<SearchReport> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::invalid("search budget must be at least 1"));
    }
    let split = split_train_val(ds, val_fraction, seed, grouping)?;
    let norm = fit_normalizer_windows(ds, &split.train, scheme)?;
    let normalized = apply_normalizer_windows(ds, &norm)?;
    let train_ds = normalized.select(&split.train);
    let val_ds = normalized.select(&split.test);

    let mut trials = Vec::with_capacity(budget);
    for t in 0..budget {
        let mut r = rng::stream(seed, &[rng::TRIAL, t as u64]);
        let lr = r.gen_range(space.lr.0.ln()..=space.lr.1.ln()).exp();
        let batch_size = pick(&mut r, &space.batch_size);
        let label_smoothing = pick(&mut r, &space.label_smoothing);
        let maxup_copies = pick(&mut r, &space.maxup_copies);
        let filters = pick(&mut r, &space.filters);
        let hidden = pick(&mut r, &space.hidden);
        let spec = ModelSpec {
            filters,
            hidden,
            seed: rng::mix(rng::mix(seed, rng::FOLD_MODEL), t as u64),
            ..base_spec.clone()
        };
        let cfg = TrainConfig {
            lr,
            batch_size,
            label_smoothing,
            maxup_copies,
            seed: rng::mix(rng::mix(seed, rng::FOLD_TRAIN), t as u64),
            ..base_cfg.clone()
        };
        let model = build_model(&spec)?;
        train(&model, &train_ds, None, &cfg)?;
        let (_, metrics) = evaluate_model(&model, &val_ds, cfg.batch_size)?;
        trials.push(Trial {
            index: t,
            spec,
            cfg,
            val_accuracy: metrics.accuracy,
            val_macro_f1: metrics.macro_f1,
        });
    }
    let scores: Vec<f64> = trials.iter().map(|t| t.val_macro_f1).collect();
    Ok(SearchReport {
        best: argmax_earliest(&scores),
        trials,
    })
}
