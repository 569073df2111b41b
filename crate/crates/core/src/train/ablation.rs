use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvOptions, ModelSpec};
use super::{FoldData, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::{apply_refinement, CausalDag, RefinementScript};
use crate::model::DomainPrior;

/// Knowledge added at one step. Steps are cumulative: step k trains on the
/// base DAG with the edits and priors of steps 1..=k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationStep {
    pub label: String,
    /// Refinement edits in script syntax, for example `remove 5 8`.
    #[serde(default)]
    pub edits: Vec<String>,
    #[serde(default)]
    pub priors: Vec<DomainPrior>,
}

impl AblationStep {
    pub fn script(&self) -> Result<RefinementScript> {
        RefinementScript::parse(&self.edits.join("\n"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub step: usize,
    pub label: String,
    pub n_edges: usize,
    pub n_priors: usize,
    pub mean_test_mse: f64,
    pub std_test_mse: f64,
    pub fold_mses: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationResults {
    pub rows: Vec<AblationRow>,
}

impl AblationResults {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>4}  {:<width$}  {:>5}  {:>6}  {:>13}  {:>10}",
            "step", "label", "edges", "priors", "mean test MSE", "std"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>4}  {:<width$}  {:>5}  {:>6}  {:>13.6}  {:>10.6}",
                r.step, r.label, r.n_edges, r.n_priors, r.mean_test_mse, r.std_test_mse
            );
        }
        out
    }
}

/// The refined DAG and priors in force at every step, validated up front so
/// an invalid step fails before any training.
pub fn ablation_models(base: &CausalDag, steps: &[AblationStep]) -> Result<Vec<(CausalDag, Vec<DomainPrior>)>> {
    let mut dag = base.clone();
    let mut priors = Vec::new();
    let mut out = Vec::with_capacity(steps.len());
    for (k, step) in steps.iter().enumerate() {
        let named = |e: Error| Error::Graph(format!("ablation step {} ({}): {e}", k + 1, step.label));
        let script = step.script().map_err(named)?;
        dag = apply_refinement(&dag, &script).map_err(named)?;
        priors.extend(step.priors.iter().copied());
        for p in &priors {
            if p.cause >= dag.n_vertices() || p.effect >= dag.n_vertices() || !dag.has_path(p.cause, p.effect) {
                return Err(Error::Config(format!(
                    "ablation step {} ({}): prior {p} has no directed path in the refined DAG",
                    k + 1,
                    step.label
                )));
            }
        }
        out.push((dag.clone(), priors.clone()));
    }
    Ok(out)
}

/// One cross-validation of the CINN per cumulative step.
pub fn run_ablation(
    base: &CausalDag,
    steps: &[AblationStep],
    folds: &[FoldData],
    target: usize,
    cfg: &TrainConfig,
    opts: &CvOptions,
) -> Result<AblationResults> {
    if steps.is_empty() {
        return Err(Error::Config("ablation needs at least one step".into()));
    }
    let models = ablation_models(base, steps)?;
    let mut rows = Vec::with_capacity(steps.len());
    for (k, ((dag, priors), step)) in models.into_iter().zip(steps).enumerate() {
        let n_edges = dag.n_edges();
        let n_priors = priors.len();
        let spec = ModelSpec::cinn(dag, priors, cfg.use_pcgrad);
        let res = cross_validate(folds, target, &[spec], cfg, opts)
            .map_err(|e| Error::Training(format!("ablation step {} ({}): {e}", k + 1, step.label)))?;
        let s = &res.summaries[0];
        rows.push(AblationRow {
            step: k + 1,
            label: step.label.clone(),
            n_edges,
            n_priors,
            mean_test_mse: s.mean_test_mse,
            std_test_mse: s.std_test_mse,
            fold_mses: res.fold_mses(&s.model),
        });
        log::info!(
            "ablation step {} ({}): mean test MSE {:.6}",
            k + 1,
            step.label,
            s.mean_test_mse
        );
    }
    Ok(AblationResults { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(label: &str, edits: &[&str]) -> AblationStep {
        AblationStep {
            label: label.into(),
            edits: edits.iter().map(|s| s.to_string()).collect(),
            priors: Vec::new(),
        }
    }

    #[test]
    fn steps_accumulate() {
        let base = CausalDag::with_indices(4, [(0, 1), (1, 2), (0, 3)]).unwrap();
        let steps = [step("a", &["remove 0 3"]), step("b", &["add 2 3"])];
        let models = ablation_models(&base, &steps).unwrap();
        assert_eq!(models[0].0.n_edges(), 2);
        assert!(models[1].0.has_edge(2, 3) && !models[1].0.has_edge(0, 3));
    }

    #[test]
    fn cycle_names_the_step() {
        let base = CausalDag::with_indices(3, [(0, 1), (1, 2)]).unwrap();
        let steps = [step("fine", &[]), step("loop", &["add 2 0"])];
        let err = ablation_models(&base, &steps).unwrap_err().to_string();
        assert!(err.contains("step 2 (loop)"), "{err}");
    }

    #[test]
    fn prior_needs_a_path_at_its_step() {
        let base = CausalDag::with_indices(3, [(0, 1), (1, 2)]).unwrap();
        let mut s = step("cut", &["remove 1 2"]);
        s.priors.push(DomainPrior::at_most(0, 2, 0.0));
        assert!(ablation_models(&base, &[s]).is_err());
    }

    #[test]
    fn steps_parse_from_toml() {
        let s: AblationStep = toml::from_str(
            "label = \"x\"\nedits = [\"remove 5 8\", \"reverse 10 8\"]\n[[priors]]\ncause = 5\neffect = 13\nrelation = \"ge\"",
        )
        .unwrap();
        assert_eq!(s.script().unwrap().edits.len(), 2);
        assert_eq!(s.priors.len(), 1);
    }
}
