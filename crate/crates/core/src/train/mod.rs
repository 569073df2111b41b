//! Adam training with early stopping on the target's validation error,
//! cross-validation and the incremental-knowledge ablation.

mod ablation;
mod adam;
mod cv;

use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::model::{Batch, CinnArchitecture, CompileOptions, WeightPenalty, Widths};
use crate::pcgrad::{combine_with, sum_gradients};
use crate::rng::{indexed_rng, Stream};

pub use ablation::{run_ablation, AblationResults, AblationRow, AblationStep};
pub use adam::Adam;
pub use cv::{cross_validate, encode_folds, CvOptions, CvResults, FoldRecord, ModelSpec, ModelSummary};

/// Learning rates tried when a grid search is requested.
pub const DEFAULT_LR_GRID: [f64; 5] = [0.0001, 0.001, 0.005, 0.01, 0.02];

/// Regularizer of the fully connected comparison network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineKind {
    EarlyStop,
    L1 { alpha: f64 },
    L2 { alpha: f64 },
    Dropout { p: f64 },
    InputNoise { sigma: f64 },
}

impl BaselineKind {
    pub fn label(&self) -> String {
        match self {
            BaselineKind::EarlyStop => "baseline".into(),
            BaselineKind::L1 { alpha } => format!("L1 {alpha}"),
            BaselineKind::L2 { alpha } => format!("L2 {alpha}"),
            BaselineKind::Dropout { p } => format!("dropout {p}"),
            BaselineKind::InputNoise { sigma } => format!("input noise {sigma}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BaselineKind::EarlyStop => true,
            BaselineKind::L1 { alpha } | BaselineKind::L2 { alpha } => alpha >= 0.0 && alpha.is_finite(),
            BaselineKind::Dropout { p } => (0.0..1.0).contains(&p),
            BaselineKind::InputNoise { sigma } => sigma >= 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid baseline setting: {self:?}")))
        }
    }
}

/// Default strengths used when a baseline is named without a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineDefaults {
    pub l1_alpha: f64,
    pub l2_alpha: f64,
    pub dropout_p: f64,
    pub noise_sigma: f64,
}

impl Default for BaselineDefaults {
    fn default() -> Self {
        Self {
            l1_alpha: 1e-4,
            l2_alpha: 1e-4,
            dropout_p: 0.2,
            noise_sigma: 0.1,
        }
    }
}

impl BaselineDefaults {
    /// Every baseline kind at its default strength.
    pub fn all(&self) -> Vec<BaselineKind> {
        vec![
            BaselineKind::EarlyStop,
            BaselineKind::L1 { alpha: self.l1_alpha },
            BaselineKind::L2 { alpha: self.l2_alpha },
            BaselineKind::Dropout { p: self.dropout_p },
            BaselineKind::InputNoise {
                sigma: self.noise_sigma,
            },
        ]
    }

    /// Parse `early-stop`, `l1`, `l2`, `dropout`, `noise`, optionally with
    /// `:value` overriding the default strength.
    pub fn parse(&self, s: &str) -> Result<BaselineKind> {
        let (name, value) = match s.split_once(':') {
            Some((n, v)) => {
                let v =
                    f64::from_str(v.trim()).map_err(|_| Error::Config(format!("bad baseline strength in '{s}'")))?;
                (n.trim(), Some(v))
            }
            None => (s.trim(), None),
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "early-stop" | "early_stop" | "earlystop" | "baseline" => BaselineKind::EarlyStop,
            "l1" => BaselineKind::L1 {
                alpha: value.unwrap_or(self.l1_alpha),
            },
            "l2" => BaselineKind::L2 {
                alpha: value.unwrap_or(self.l2_alpha),
            },
            "dropout" | "do" => BaselineKind::Dropout {
                p: value.unwrap_or(self.dropout_p),
            },
            "noise" | "input-noise" | "input_noise" => BaselineKind::InputNoise {
                sigma: value.unwrap_or(self.noise_sigma),
            },
            _ => {
                return Err(Error::Config(format!(
                    "unknown baseline '{name}' (expected early-stop, l1, l2, dropout or noise)"
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Rows per Adam step; `None` means full batch.
    pub batch_size: Option<usize>,
    /// Weight of the domain-prior loss.
    pub gamma: f64,
    pub use_pcgrad: bool,
    /// Treat each modeled vertex's squared error as its own task instead of
    /// the two grouped terms.
    pub pcgrad_per_node: bool,
    pub seed: u64,
    /// When set, each model's learning rate is chosen from this grid by mean
    /// best validation error.
    pub lr_grid: Option<Vec<f64>>,
    pub widths: Widths,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 800,
            patience: 30,
            batch_size: None,
            gamma: 1.0,
            use_pcgrad: true,
            pcgrad_per_node: false,
            seed: 0,
            lr_grid: None,
            widths: Widths::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.patience == 0 {
            return Err(Error::Config("epochs and patience must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if let Some(grid) = &self.lr_grid {
            if grid.is_empty() || grid.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
                return Err(Error::Config(
                    "learning-rate grid must be non-empty and positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Encoded (one column per DAG vertex) rows of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldData {
    pub fold: usize,
    pub train: DMatrix<f64>,
    pub val: DMatrix<f64>,
    pub test: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training objective per epoch, measured before that epoch's updates.
    pub train_loss: Vec<f64>,
    /// Target MSE on the validation rows after each epoch.
    pub val_mse: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub test_mse: f64,
    pub epochs_run: usize,
    pub seconds: f64,
}

/// A trained model: its report and best-epoch parameters.
#[derive(Debug, Clone)]
pub struct Trained {
    pub report: TrainReport,
    pub params: ParamStore,
}

#[derive(Debug, Clone, Copy, Default)]
struct Perturbation {
    dropout: f64,
    noise: f64,
}

/// Train a compiled CINN (priors already attached) on one fold.
pub fn train_cinn(arch: &CinnArchitecture, data: &FoldData, cfg: &TrainConfig) -> Result<Trained> {
    fit(arch, data, cfg, Perturbation::default())
}

/// Architecture of the fully connected comparison network for `kind`.
pub fn baseline_architecture(
    n_columns: usize,
    target: usize,
    kind: BaselineKind,
    widths: Widths,
) -> Result<CinnArchitecture> {
    kind.validate()?;
    let opts = CompileOptions {
        widths,
        dropout_masks: matches!(kind, BaselineKind::Dropout { .. }),
        per_node_losses: false,
    };
    let mut arch = CinnArchitecture::baseline(n_columns, target, &opts)?;
    match kind {
        BaselineKind::L1 { alpha } => arch.attach_penalty(WeightPenalty::L1(alpha)),
        BaselineKind::L2 { alpha } => arch.attach_penalty(WeightPenalty::L2(alpha)),
        _ => {}
    }
    Ok(arch)
}

/// Train the all-features-to-target network with the given regularizer.
pub fn train_baseline_mlp(target: usize, data: &FoldData, kind: BaselineKind, cfg: &TrainConfig) -> Result<Trained> {
    let arch = baseline_architecture(data.train.ncols(), target, kind, cfg.widths)?;
    train_baseline_with(&arch, data, kind, cfg)
}

/// As [`train_baseline_mlp`] with a prebuilt architecture.
pub fn train_baseline_with(
    arch: &CinnArchitecture,
    data: &FoldData,
    kind: BaselineKind,
    cfg: &TrainConfig,
) -> Result<Trained> {
    let perturb = match kind {
        BaselineKind::Dropout { p } => Perturbation { dropout: p, noise: 0.0 },
        BaselineKind::InputNoise { sigma } => Perturbation {
            dropout: 0.0,
            noise: sigma,
        },
        _ => Perturbation::default(),
    };
    fit(arch, data, cfg, perturb)
}

fn task_nodes(arch: &CinnArchitecture, cfg: &TrainConfig) -> Vec<(NodeId, f64)> {
    let nodes = arch.loss_nodes();
    let mut tasks = Vec::new();
    if cfg.pcgrad_per_node && !nodes.per_node.is_empty() {
        tasks.extend(nodes.per_node.iter().map(|&(_, n)| (n, 1.0)));
    } else {
        if let Some(b) = nodes.mse_b {
            tasks.push((b, 1.0));
        }
        tasks.push((nodes.mse_o, 1.0));
    }
    if let Some(d) = nodes.domain {
        if cfg.gamma != 0.0 {
            tasks.push((d, cfg.gamma));
        }
    }
    tasks
}

fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    m.select_rows(idx.iter())
}

fn batch_rows(b: &Batch, idx: &[usize]) -> Batch {
    Batch {
        roots: rows(&b.roots, idx),
        obs_b: rows(&b.obs_b, idx),
        obs_o: rows(&b.obs_o, idx),
    }
}

fn fit(arch: &CinnArchitecture, data: &FoldData, cfg: &TrainConfig, perturb: Perturbation) -> Result<Trained> {
    cfg.validate()?;
    if data.train.nrows() == 0 || data.val.nrows() == 0 {
        return Err(Error::Training(format!(
            "fold {} has no training or validation rows",
            data.fold
        )));
    }
    let start = Instant::now();
    let fold = data.fold as u64;
    let mut params = arch.new_params();
    params.init_glorot(&mut indexed_rng(cfg.seed, Stream::Init, fold));
    let mut dropout_rng = indexed_rng(cfg.seed, Stream::Dropout, fold);
    let mut noise_rng = indexed_rng(cfg.seed, Stream::Noise, fold);
    let mut pcgrad_rng = indexed_rng(cfg.seed, Stream::PcGrad, fold);
    let mut batch_rng = indexed_rng(cfg.seed, Stream::Batches, fold);

    let train = arch.batch(&data.train)?;
    let val = arch.batch(&data.val)?;
    let test = arch.batch(&data.test)?;
    let tasks = task_nodes(arch, cfg);
    let penalty = arch.loss_nodes().penalty;
    let n = train.n_rows();
    let step_rows = cfg.batch_size.unwrap_or(n).min(n);

    let mut adam = Adam::new(params.n_params(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_mse: Vec::new(),
        best_epoch: 0,
        best_val_mse: f64::INFINITY,
        test_mse: f64::NAN,
        epochs_run: 0,
        seconds: 0.0,
    };
    let mut best = params.clone();
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        if step_rows < n {
            order.shuffle(&mut batch_rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(step_rows) {
            let mut batch = if step_rows < n {
                batch_rows(&train, chunk)
            } else {
                train.clone()
            };
            if perturb.noise > 0.0 {
                for x in batch.roots.iter_mut() {
                    let z: f64 = noise_rng.sample(StandardNormal);
                    *x += perturb.noise * z;
                }
            }
            let masks = (perturb.dropout > 0.0).then(|| {
                let keep = 1.0 - perturb.dropout;
                arch.mask_slots()
                    .iter()
                    .map(|&s| {
                        DMatrix::from_fn(batch.n_rows(), arch.tape().slot_width(s), |_, _| {
                            if dropout_rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect()
            });
            let inputs = arch.inputs(&batch, masks)?;
            let trace = arch.trace(&params, &inputs)?;
            let mut loss = tasks.iter().map(|&(node, w)| w * trace.scalar(node)).sum::<f64>();
            if let Some(p) = penalty {
                loss += trace.scalar(p);
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64 / n as f64;

            let mut grads = Vec::with_capacity(tasks.len());
            for &(node, w) in &tasks {
                let mut g = arch.tape().backward(&params, &trace, node)?;
                if w != 1.0 {
                    g.iter_mut().for_each(|x| *x *= w);
                }
                grads.push(g);
            }
            if grads.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Diverged { epoch, loss: f64::NAN });
            }
            let mut g = if cfg.use_pcgrad {
                combine_with(&grads, &mut pcgrad_rng)?
            } else {
                sum_gradients(&grads)?
            };
            if let Some(p) = penalty {
                let pg = arch.tape().backward(&params, &trace, p)?;
                g.iter_mut().zip(&pg).for_each(|(a, b)| *a += b);
            }
            let mut flat = params.flatten();
            adam.step(&mut flat, &g);
            params.set_flat(&flat)?;
        }

        let v = arch.target_mse(&params, &val)?;
        if !v.is_finite() {
            return Err(Error::Diverged { epoch, loss: v });
        }
        report.train_loss.push(epoch_loss);
        report.val_mse.push(v);
        report.epochs_run = epoch;
        if v < report.best_val_mse {
            report.best_val_mse = v;
            report.best_epoch = epoch;
            best.clone_from(&params);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    report.test_mse = arch.target_mse(&best, &test)?;
    report.seconds = start.elapsed().as_secs_f64();
    Ok(Trained { report, params: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{partition, CausalDag};
    use crate::rng::stream_rng;

    fn linear_fold(n: usize, seed: u64) -> FoldData {
        // x2 = x0 - 0.5 x1 + 0.1 noise
        let mut rng = stream_rng(seed, Stream::Synthetic);
        let mut make = |rows: usize| {
            let mut m = DMatrix::from_fn(rows, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            for r in 0..rows {
                m[(r, 2)] = m[(r, 0)] - 0.5 * m[(r, 1)] + 0.1 * m[(r, 2)];
            }
            m
        };
        FoldData {
            fold: 0,
            train: make(n),
            val: make(n / 4),
            test: make(n / 4),
        }
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 200,
            patience: 20,
            widths: Widths {
                trunk: 8,
                branch_b: 4,
                branch_o: 4,
                fusion: 4,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_a_linear_target() {
        let data = linear_fold(200, 1);
        let out = train_baseline_mlp(2, &data, BaselineKind::EarlyStop, &quick()).unwrap();
        assert!(out.report.test_mse < 0.2, "{:?}", out.report.test_mse);
        let min = out.report.val_mse.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(out.report.best_val_mse, min);
        assert_eq!(out.report.val_mse[out.report.best_epoch - 1], min);
    }

    #[test]
    fn star_partition_matches_baseline() {
        let data = linear_fold(100, 2);
        let cfg = TrainConfig {
            epochs: 30,
            gamma: 0.0,
            ..quick()
        };
        let base = train_baseline_mlp(2, &data, BaselineKind::EarlyStop, &cfg).unwrap();
        let dag = CausalDag::with_indices(3, [(0, 2), (1, 2)]).unwrap();
        let arch = CinnArchitecture::compile(
            &partition(&dag).unwrap(),
            &dag,
            2,
            &CompileOptions {
                widths: cfg.widths,
                ..Default::default()
            },
        )
        .unwrap();
        let cinn = train_cinn(&arch, &data, &cfg).unwrap();
        assert_eq!(base.report.val_mse, cinn.report.val_mse);
        assert_eq!(base.report.test_mse, cinn.report.test_mse);
    }

    #[test]
    fn zero_strength_regularizers_are_no_ops() {
        let data = linear_fold(100, 3);
        let cfg = TrainConfig { epochs: 25, ..quick() };
        let base = train_baseline_mlp(2, &data, BaselineKind::EarlyStop, &cfg)
            .unwrap()
            .report;
        for kind in [
            BaselineKind::Dropout { p: 0.0 },
            BaselineKind::InputNoise { sigma: 0.0 },
        ] {
            let r = train_baseline_mlp(2, &data, kind, &cfg).unwrap().report;
            assert_eq!(r.val_mse, base.val_mse, "{kind:?}");
            assert_eq!(r.test_mse, base.test_mse, "{kind:?}");
        }
    }

    #[test]
    fn strong_l1_shrinks_to_the_mean() {
        let data = linear_fold(200, 4);
        let cfg = TrainConfig {
            epochs: 400,
            patience: 400,
            ..quick()
        };
        let out = train_baseline_mlp(2, &data, BaselineKind::L1 { alpha: 10.0 }, &cfg).unwrap();
        let y = data.train.column(2);
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        let last = *out.report.train_loss.last().unwrap();
        let arch = baseline_architecture(3, 2, BaselineKind::EarlyStop, cfg.widths).unwrap();
        let batch = arch.batch(&data.train).unwrap();
        let mse = arch.target_mse(&out.params, &batch).unwrap();
        assert!((mse - var).abs() < 0.05 * var, "mse {mse} var {var} loss {last}");
    }

    #[test]
    fn patience_one_stops_after_first_worse_epoch() {
        // training pulls predictions toward +5 while validation wants -5,
        // so every update makes the validation error worse
        let mut data = linear_fold(100, 5);
        data.train.column_mut(2).fill(5.0);
        data.val.column_mut(2).fill(-5.0);
        let cfg = TrainConfig { patience: 1, ..quick() };
        let out = train_baseline_mlp(2, &data, BaselineKind::EarlyStop, &cfg)
            .unwrap()
            .report;
        assert!(out.val_mse[1] > out.val_mse[0], "{:?}", &out.val_mse);
        assert_eq!(out.epochs_run, 2);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn training_is_deterministic() {
        let data = linear_fold(80, 6);
        let cfg = TrainConfig { epochs: 20, ..quick() };
        let a = train_baseline_mlp(2, &data, BaselineKind::Dropout { p: 0.2 }, &cfg)
            .unwrap()
            .report;
        let b = train_baseline_mlp(2, &data, BaselineKind::Dropout { p: 0.2 }, &cfg)
            .unwrap()
            .report;
        assert_eq!(a.val_mse, b.val_mse);
        assert_eq!(a.test_mse, b.test_mse);
    }

    #[test]
    fn minibatches_cover_the_training_rows() {
        let data = linear_fold(100, 7);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: Some(32),
            ..quick()
        };
        let out = train_baseline_mlp(2, &data, BaselineKind::EarlyStop, &cfg).unwrap();
        assert_eq!(out.report.epochs_run, 5);
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let mut data = linear_fold(50, 8);
        data.train[(0, 2)] = f64::NAN;
        let err = train_baseline_mlp(2, &data, BaselineKind::EarlyStop, &quick()).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn baseline_names_parse() {
        let d = BaselineDefaults::default();
        assert_eq!(d.parse("l1").unwrap(), BaselineKind::L1 { alpha: 1e-4 });
        assert_eq!(d.parse("dropout:0.5").unwrap(), BaselineKind::Dropout { p: 0.5 });
        assert_eq!(d.parse("early-stop").unwrap(), BaselineKind::EarlyStop);
        assert!(d.parse("dropout:1.5").is_err());
        assert!(d.parse("mixup").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            patience: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let parsed: TrainConfig = toml::from_str("learning_rate = 0.01\nuse_pcgrad = false").unwrap();
        assert_eq!(parsed.epochs, 800);
        assert!(!parsed.use_pcgrad);
    }
}
