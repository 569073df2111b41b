//! Run configuration and the end-to-end stages: discovery on a holdout of
//! the rows, expert refinement, and fold encoding for training.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_preprocess, fit_preprocess_with, holdout_split, load_csv, make_folds, PreprocessPlan, Scaling, Schema,
    TabularDataset, UnseenCategory,
};
use crate::discovery::{acyclicity_h, discover, discovery_objective, DiscoveryConfig, WeightedAdjacency};
use crate::error::{Error, Result};
use crate::graph::{apply_refinement, CausalDag, RefinementScript};
use crate::model::DomainPrior;
use crate::train::{encode_folds, AblationStep, BaselineDefaults, FoldData, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    pub target: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub unseen: UnseenCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub folds: usize,
    /// Fraction of rows used for discovery.
    pub discovery_fraction: f64,
    /// Column scaling for the discovery data.
    pub discovery_scaling: Scaling,
    /// Column scaling refit on each fold's training rows.
    pub training_scaling: Scaling,
    /// Seed of the discovery holdout split; defaults to the master seed.
    /// Pinning it keeps a refinement script written against one discovered
    /// graph valid while the training seed varies.
    pub discovery_seed: Option<u64>,
    /// Treat vertices left isolated after refinement as extra roots instead
    /// of dropping them.
    pub promote_isolated: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            folds: 10,
            discovery_fraction: 0.8,
            discovery_scaling: Scaling::Standardize,
            training_scaling: Scaling::Standardize,
            discovery_seed: None,
            promote_isolated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub discovery: DiscoveryConfig,
    /// Edit script applied to the thresholded DAG.
    #[serde(default)]
    pub refinement: Option<PathBuf>,
    #[serde(default)]
    pub priors: Vec<DomainPrior>,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub baselines: BaselineDefaults,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub ablation: Vec<AblationStep>,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    /// Parse a TOML run config; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.dataset.path);
        if let Some(r) = cfg.refinement.as_mut() {
            resolve(r);
        }
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    /// Load and validate; referenced files must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::from_toml(&text, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dataset.path.is_file() {
            return Err(Error::Config(format!(
                "dataset file {} does not exist",
                self.dataset.path.display()
            )));
        }
        if let Some(r) = &self.refinement {
            if !r.is_file() {
                return Err(Error::Config(format!(
                    "refinement script {} does not exist",
                    r.display()
                )));
            }
        }
        self.discovery.validate()?;
        self.training.validate()?;
        for p in &self.priors {
            p.validate()?;
        }
        for b in self.baselines.all() {
            b.validate()?;
        }
        let pr = &self.protocol;
        if pr.folds < 2 {
            return Err(Error::Config("protocol.folds must be at least 2".into()));
        }
        if !(pr.discovery_fraction > 0.0 && pr.discovery_fraction <= 1.0) {
            return Err(Error::Config("protocol.discovery_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        Schema {
            target: self.dataset.target.clone(),
            categorical: self.dataset.categorical.clone(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.training.seed
    }

    pub fn load_dataset(&self) -> Result<TabularDataset> {
        load_csv(&self.dataset.path, &self.schema())
    }

    pub fn refinement_script(&self) -> Result<RefinementScript> {
        match &self.refinement {
            Some(p) => RefinementScript::read(p),
            None => Ok(RefinementScript::default()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscoveryOutput {
    pub weights: WeightedAdjacency,
    pub dag: CausalDag,
    /// Encoding fitted on the discovery rows; fixes the vertex layout.
    pub plan: PreprocessPlan,
    pub rows: Vec<usize>,
    pub h: f64,
    pub objective: f64,
    pub seconds: f64,
}

impl DiscoveryOutput {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "vertices: {}\nrows used: {}\nedges: {}\nh(W): {:.3e}\nobjective: {:.6}\nseconds: {:.2}\n",
            self.dag.n_vertices(),
            self.rows.len(),
            self.dag.n_edges(),
            self.h,
            self.objective,
            self.seconds
        );
        for (i, j) in self.dag.edges() {
            s.push_str(&format!(
                "edge [{i}, {j}] {} -> {} w={:.4}\n",
                self.dag.name(i),
                self.dag.name(j),
                self.weights.matrix()[(i, j)]
            ));
        }
        s
    }
}

/// Discovery rows and the encoding fitted on them.
pub fn discovery_plan(cfg: &RunConfig, data: &TabularDataset) -> Result<(Vec<usize>, PreprocessPlan)> {
    let seed = cfg.protocol.discovery_seed.unwrap_or(cfg.seed());
    let (rows, _) = holdout_split(data.n_rows(), cfg.protocol.discovery_fraction, seed)?;
    let plan = fit_preprocess_with(data, &rows, cfg.protocol.discovery_scaling)?.with_unseen(cfg.dataset.unseen);
    Ok((rows, plan))
}

/// Learn W on the discovery holdout rows and threshold it into a DAG whose
/// vertices are the encoded columns.
pub fn run_discovery(cfg: &RunConfig, data: &TabularDataset) -> Result<DiscoveryOutput> {
    let start = Instant::now();
    let (rows, plan) = discovery_plan(cfg, data)?;
    let x = apply_preprocess(&plan, data, &rows)?;
    let weights = discover(&x, &cfg.discovery)?;
    let dag = CausalDag::from_adjacency(&weights, cfg.discovery.tau, plan.encoded_names())?;
    let h = acyclicity_h(&weights);
    let (objective, _) = discovery_objective(&weights, &x, &cfg.discovery, 0.0)?;
    Ok(DiscoveryOutput {
        weights,
        dag,
        plan,
        rows,
        h,
        objective,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Every prior must follow a directed path of `dag`.
pub fn check_priors(dag: &CausalDag, priors: &[DomainPrior]) -> Result<()> {
    for p in priors {
        p.validate()?;
        if p.cause >= dag.n_vertices() || p.effect >= dag.n_vertices() {
            return Err(Error::Config(format!("prior {p}: vertex out of range")));
        }
        if !dag.has_path(p.cause, p.effect) {
            return Err(Error::Config(format!(
                "prior {p}: the refined DAG has no directed path {} -> {} ({} -> {})",
                p.cause,
                p.effect,
                dag.name(p.cause),
                dag.name(p.effect)
            )));
        }
    }
    Ok(())
}

/// Apply the configured script and check the priors against the result.
pub fn refine(cfg: &RunConfig, dag: &CausalDag) -> Result<CausalDag> {
    let refined = apply_refinement(dag, &cfg.refinement_script()?)?;
    check_priors(&refined, &cfg.priors)?;
    Ok(refined)
}

/// Encoded fold data over all rows, scaling refit per fold.
pub fn cv_folds(cfg: &RunConfig, data: &TabularDataset, plan: &PreprocessPlan) -> Result<Vec<FoldData>> {
    let folds = make_folds(data.n_rows(), cfg.protocol.folds, cfg.seed())?;
    encode_folds(data, plan, &folds, cfg.protocol.training_scaling)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
output_dir = "out"
[dataset]
path = "data.csv"
target = "y"

[discovery]
lambda = 0.05
tau = 0.5

[[priors]]
cause = 0
effect = 2
relation = "le"
bound = 0.01

[training]
epochs = 10
"#;

    #[test]
    fn parses_and_resolves_paths() {
        let cfg = RunConfig::from_toml(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(cfg.dataset.path, PathBuf::from("/base/data.csv"));
        assert_eq!(cfg.output_dir, PathBuf::from("/base/out"));
        assert_eq!(cfg.discovery.tau, 0.5);
        assert_eq!(cfg.training.epochs, 10);
        assert_eq!(cfg.training.learning_rate, 0.001);
        assert_eq!(cfg.protocol.folds, 10);
        assert_eq!(cfg.priors.len(), 1);
    }

    #[test]
    fn missing_dataset_fails_validation() {
        let cfg = RunConfig::from_toml(MINIMAL, Path::new("/nonexistent")).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[dataset]\npath = \"a\"\ntarget = \"y\"\ncolour = 1", Path::new(".")).is_err());
    }

    #[test]
    fn prior_path_check() {
        let dag = CausalDag::with_indices(3, [(0, 1), (1, 2)]).unwrap();
        assert!(check_priors(&dag, &[DomainPrior::at_most(0, 2, 0.01)]).is_ok());
        assert!(check_priors(&dag, &[DomainPrior::at_most(2, 0, 0.01)]).is_err());
    }
}
