use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{baseline_architecture, train_baseline_with, train_cinn, BaselineKind, FoldData, TrainConfig, TrainReport};
use crate::autodiff::ParamStore;
use crate::dataset::{apply_preprocess, refit_preprocess, FoldSplit, PreprocessPlan, Scaling, TabularDataset};
use crate::error::{Error, Result};
use crate::graph::{partition, CausalDag};
use crate::model::{CinnArchitecture, CompileOptions, DomainPrior};

/// One model compared in a cross-validation run.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Cinn {
        label: String,
        dag: CausalDag,
        priors: Vec<DomainPrior>,
        pcgrad: bool,
        promote_isolated: bool,
    },
    Baseline(BaselineKind),
}

impl ModelSpec {
    pub fn cinn(dag: CausalDag, priors: Vec<DomainPrior>, pcgrad: bool) -> Self {
        let label = if pcgrad {
            "CINN (with PCGrad)"
        } else {
            "CINN (without PCGrad)"
        };
        ModelSpec::Cinn {
            label: label.into(),
            dag,
            priors,
            pcgrad,
            promote_isolated: false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Cinn { label, .. } => label.clone(),
            ModelSpec::Baseline(kind) => kind.label(),
        }
    }

    /// Compile the network this spec trains for data with `n_columns`
    /// encoded columns.
    pub fn architecture(&self, n_columns: usize, target: usize, cfg: &TrainConfig) -> Result<CinnArchitecture> {
        match self {
            ModelSpec::Cinn {
                dag,
                priors,
                promote_isolated,
                ..
            } => {
                if dag.n_vertices() != n_columns {
                    return Err(Error::Shape(format!(
                        "DAG has {} vertices, data has {n_columns} encoded columns",
                        dag.n_vertices()
                    )));
                }
                let mut part = partition(dag)?;
                if *promote_isolated {
                    part = part.promote_isolated();
                }
                let opts = CompileOptions {
                    widths: cfg.widths,
                    dropout_masks: false,
                    per_node_losses: cfg.pcgrad_per_node,
                };
                let mut arch = CinnArchitecture::compile(&part, dag, target, &opts)?;
                arch.attach_priors(priors)?;
                Ok(arch)
            }
            ModelSpec::Baseline(kind) => baseline_architecture(n_columns, target, *kind, cfg.widths),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvOptions {
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// Keep each fold's best parameters in the results.
    pub keep_params: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            jobs: 0,
            keep_params: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub model: String,
    pub fold: usize,
    pub learning_rate: f64,
    pub test_mse: f64,
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub learning_rate: f64,
    pub mean_test_mse: f64,
    /// Sample standard deviation over folds.
    pub std_test_mse: f64,
    pub n_folds: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CvResults {
    pub records: Vec<FoldRecord>,
    pub summaries: Vec<ModelSummary>,
    /// Full per-fold reports, aligned with `records`.
    #[serde(skip)]
    pub reports: Vec<TrainReport>,
    /// Best parameters per record when requested.
    #[serde(skip)]
    pub params: Vec<Option<ParamStore>>,
}

impl CvResults {
    pub fn summary(&self, model: &str) -> Option<&ModelSummary> {
        self.summaries.iter().find(|s| s.model == model)
    }

    /// Per-fold test MSEs of one model in fold order.
    pub fn fold_mses(&self, model: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.model == model)
            .map(|r| r.test_mse)
            .collect()
    }

    /// Machine-readable records and summaries (no wall-clock fields).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn table(&self) -> String {
        let width = self.summaries.iter().map(|s| s.model.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>13}  {:>10}  {:>5}  {:>8}",
            "model", "mean test MSE", "std", "folds", "lr"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<width$}  {:>13.6}  {:>10.6}  {:>5}  {:>8}",
                s.model, s.mean_test_mse, s.std_test_mse, s.n_folds, s.learning_rate
            );
        }
        out
    }
}

/// Mean and sample standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Encode every fold, refitting scaling on that fold's training rows.
pub fn encode_folds(
    data: &TabularDataset,
    reference: &PreprocessPlan,
    folds: &[FoldSplit],
    scaling: Scaling,
) -> Result<Vec<FoldData>> {
    folds
        .iter()
        .map(|f| {
            let plan = refit_preprocess(reference, data, &f.train_indices, scaling)?;
            Ok(FoldData {
                fold: f.fold_index,
                train: apply_preprocess(&plan, data, &f.train_indices)?,
                val: apply_preprocess(&plan, data, &f.val_indices)?,
                test: apply_preprocess(&plan, data, &f.test_indices)?,
            })
        })
        .collect()
}

struct Job {
    model: usize,
    lr: f64,
    fold: usize,
}

/// Train every model on every fold (all models see the same folds) and
/// aggregate the target test MSE. With a learning-rate grid, each model's
/// rate is picked by mean best validation MSE and only that rate is reported.
pub fn cross_validate(
    folds: &[FoldData],
    target: usize,
    models: &[ModelSpec],
    cfg: &TrainConfig,
    opts: &CvOptions,
) -> Result<CvResults> {
    cfg.validate()?;
    let Some(first) = folds.first() else {
        return Err(Error::Config("no folds to cross-validate".into()));
    };
    let n_columns = first.train.ncols();
    let archs = models
        .iter()
        .map(|m| m.architecture(n_columns, target, cfg))
        .collect::<Result<Vec<_>>>()?;
    let grid = cfg.lr_grid.clone().unwrap_or_else(|| vec![cfg.learning_rate]);
    let mut jobs = Vec::new();
    for model in 0..models.len() {
        for &lr in &grid {
            for fold in 0..folds.len() {
                jobs.push(Job { model, lr, fold });
            }
        }
    }

    let run = |job: &Job| {
        let spec = &models[job.model];
        let mut c = cfg.clone();
        c.learning_rate = job.lr;
        c.lr_grid = None;
        let out = match spec {
            ModelSpec::Cinn { pcgrad, .. } => {
                c.use_pcgrad = *pcgrad;
                train_cinn(&archs[job.model], &folds[job.fold], &c)
            }
            ModelSpec::Baseline(kind) => train_baseline_with(&archs[job.model], &folds[job.fold], *kind, &c),
        };
        out.map_err(|e| match e {
            Error::Diverged { .. } => e,
            other => Error::Training(format!("{} fold {}: {other}", spec.label(), job.fold)),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::Training(format!("thread pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| jobs.par_iter().map(run).collect());
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let mut results = CvResults::default();
    let per_model = grid.len() * folds.len();
    for (m, spec) in models.iter().enumerate() {
        let block = &outcomes[m * per_model..(m + 1) * per_model];
        let mut best_lr = 0;
        let mut best_val = f64::INFINITY;
        for (g, chunk) in block.chunks(folds.len()).enumerate() {
            let vals: Vec<f64> = chunk.iter().map(|t| t.report.best_val_mse).collect();
            let (mean, _) = mean_std(&vals);
            if mean < best_val {
                best_val = mean;
                best_lr = g;
            }
        }
        let label = spec.label();
        let lr = grid[best_lr];
        let chosen = &block[best_lr * folds.len()..(best_lr + 1) * folds.len()];
        let mut mses = Vec::new();
        for (f, t) in chosen.iter().enumerate() {
            let r = &t.report;
            mses.push(r.test_mse);
            results.records.push(FoldRecord {
                model: label.clone(),
                fold: folds[f].fold,
                learning_rate: lr,
                test_mse: r.test_mse,
                best_val_mse: r.best_val_mse,
                best_epoch: r.best_epoch,
                epochs_run: r.epochs_run,
            });
            results.reports.push(r.clone());
            results.params.push(opts.keep_params.then(|| t.params.clone()));
        }
        let (mean, std) = mean_std(&mses);
        results.summaries.push(ModelSummary {
            model: label,
            learning_rate: lr,
            mean_test_mse: mean,
            std_test_mse: std,
            n_folds: mses.len(),
        });
    }
    Ok(results)
}
