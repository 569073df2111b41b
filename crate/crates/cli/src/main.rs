use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use cinn::graph::{partition, CausalDag};
use cinn::pipeline::{check_priors, cv_folds, discovery_plan, refine, run_discovery, RunConfig};
use cinn::train::{cross_validate, run_ablation, CvOptions, CvResults, ModelSpec};
use cinn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cinn",
    version,
    about = "Causality-informed neural networks for tabular regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a weighted adjacency matrix and threshold it into a DAG.
    Discover(Common),
    /// Apply the configured edit script to the discovered DAG.
    Refine(Common),
    /// Cross-validate the CINN (or one baseline) and save checkpoints.
    Train(Common),
    /// Compare the CINN with and without PCGrad against every baseline.
    Evaluate(Common),
    /// Cross-validate once per cumulative knowledge step.
    Ablate(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `training.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for fold-level parallelism (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Sum task gradients instead of projecting conflicts away.
    #[arg(long)]
    no_pcgrad: bool,
    /// Train a baseline network instead: early-stop, l1, l2, dropout or
    /// noise, optionally with a strength as `kind:value`.
    #[arg(long)]
    baseline: Option<String>,
    /// Weight of the domain-prior loss.
    #[arg(long)]
    gamma: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Use this DAG file instead of the one under the output directory.
    #[arg(long)]
    dag: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Discover(c) => cmd_discover(&Ctx::new(&c)?),
        Command::Refine(c) => cmd_refine(&Ctx::new(&c)?).map(|_| ()),
        Command::Train(c) => cmd_train(&Ctx::new(&c)?),
        Command::Evaluate(c) => cmd_evaluate(&Ctx::new(&c)?),
        Command::Ablate(c) => cmd_ablate(&Ctx::new(&c)?),
    }
}

struct Ctx {
    cfg: RunConfig,
    args: Common,
}

impl Ctx {
    fn new(args: &Common) -> Result<Self> {
        let mut cfg = RunConfig::load(&args.config)?;
        if let Some(s) = args.seed {
            cfg.training.seed = s;
        }
        if let Some(g) = args.gamma {
            cfg.training.gamma = g;
        }
        if let Some(lr) = args.lr {
            cfg.training.learning_rate = lr;
        }
        if args.no_pcgrad {
            cfg.training.use_pcgrad = false;
        }
        if let Some(out) = &args.out {
            cfg.output_dir = out.clone();
        }
        cfg.training.validate()?;
        Ok(Self {
            cfg,
            args: args.clone(),
        })
    }

    fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.cfg.output_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| io(&d, e))?;
        Ok(d)
    }

    fn opts(&self, keep_params: bool) -> CvOptions {
        CvOptions {
            jobs: self.args.jobs,
            keep_params,
        }
    }
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io(path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    s.split('_').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("_")
}

fn cmd_discover(ctx: &Ctx) -> Result<()> {
    let data = ctx.cfg.load_dataset()?;
    info!(
        "discovering a DAG over {} rows x {} columns",
        data.n_rows(),
        data.n_columns()
    );
    let out = run_discovery(&ctx.cfg, &data)?;
    let d = ctx.dir("discovery")?;
    write(&d.join("weights.txt"), &out.weights.to_text())?;
    write(&d.join("summary.txt"), &out.summary())?;
    out.dag.write(ctx.dir("dag")?.join("discovered.dag"))?;
    print!("{}", out.summary());
    Ok(())
}

fn discovered_dag(ctx: &Ctx) -> Result<CausalDag> {
    let path = ctx.cfg.output_dir.join("dag").join("discovered.dag");
    if path.is_file() {
        return CausalDag::read(&path);
    }
    info!("{} not found; running discovery", path.display());
    cmd_discover(ctx)?;
    CausalDag::read(&path)
}

fn cmd_refine(ctx: &Ctx) -> Result<CausalDag> {
    let dag = discovered_dag(ctx)?;
    let refined = refine(&ctx.cfg, &dag)?;
    let d = ctx.dir("dag")?;
    refined.write(d.join("refined.dag"))?;
    let part = partition(&refined)?;
    let mut s = format!("edges: {} -> {}\n", dag.n_edges(), refined.n_edges());
    s.push_str(&format!("isolated: {:?}\nroots: {:?}\n", part.isolated, part.roots));
    for (j, layer) in part.intermediate_layers.iter().enumerate() {
        s.push_str(&format!("intermediate layer {}: {:?}\n", j + 1, layer));
    }
    s.push_str(&format!("leaves: {:?}\n", part.leaves));
    write(&d.join("refined_summary.txt"), &s)?;
    print!("{s}");
    Ok(refined)
}

/// The DAG to train on: `--dag`, else the refined DAG on disk, else run
/// discovery and refinement now.
fn training_dag(ctx: &Ctx) -> Result<CausalDag> {
    let dag = if let Some(p) = &ctx.args.dag {
        CausalDag::read(p)?
    } else {
        let path = ctx.cfg.output_dir.join("dag").join("refined.dag");
        if path.is_file() {
            CausalDag::read(&path)?
        } else {
            cmd_refine(ctx)?
        }
    };
    check_priors(&dag, &ctx.cfg.priors)?;
    Ok(dag)
}

fn cinn_spec(ctx: &Ctx, dag: CausalDag, pcgrad: bool) -> ModelSpec {
    let mut spec = ModelSpec::cinn(dag, ctx.cfg.priors.clone(), pcgrad);
    if let ModelSpec::Cinn { promote_isolated, .. } = &mut spec {
        *promote_isolated = ctx.cfg.protocol.promote_isolated;
    }
    spec
}

fn write_results(ctx: &Ctx, name: &str, res: &CvResults) -> Result<()> {
    let d = ctx.dir("reports")?;
    write(&d.join(format!("{name}.json")), &res.to_json())?;
    write(&d.join(format!("{name}.txt")), &res.table())?;
    print!("{}", res.table());
    Ok(())
}

fn cmd_train(ctx: &Ctx) -> Result<()> {
    let data = ctx.cfg.load_dataset()?;
    let (_, plan) = discovery_plan(&ctx.cfg, &data)?;
    let target = plan.target_encoded()?;
    let spec = match &ctx.args.baseline {
        Some(b) => ModelSpec::Baseline(ctx.cfg.baselines.parse(b)?),
        None => cinn_spec(ctx, training_dag(ctx)?, ctx.cfg.training.use_pcgrad),
    };
    let folds = cv_folds(&ctx.cfg, &data, &plan)?;
    let arch = spec.architecture(plan.n_encoded(), target, &ctx.cfg.training)?;
    let label = spec.label();
    let name = slug(&label);
    write(
        &ctx.dir("models")?.join(format!("{name}_architecture.txt")),
        &arch.summary(),
    )?;
    info!("training {label} on {} folds", folds.len());
    let res = cross_validate(&folds, target, &[spec], &ctx.cfg.training, &ctx.opts(true))?;

    let models = ctx.dir("models")?.join(&name);
    fs::create_dir_all(&models).map_err(|e| io(&models, e))?;
    for (rec, params) in res.records.iter().zip(&res.params) {
        if let Some(p) = params {
            p.save(models.join(format!("fold_{}.params", rec.fold)))?;
        }
    }
    let reports = serde_json::to_string_pretty(&res.reports).expect("reports serialize");
    write(&ctx.dir("reports")?.join(format!("{name}_folds.json")), &reports)?;
    write_results(ctx, &name, &res)
}

fn cmd_evaluate(ctx: &Ctx) -> Result<()> {
    let data = ctx.cfg.load_dataset()?;
    let (_, plan) = discovery_plan(&ctx.cfg, &data)?;
    let target = plan.target_encoded()?;
    let mut models = Vec::new();
    match &ctx.args.baseline {
        Some(b) => models.push(ModelSpec::Baseline(ctx.cfg.baselines.parse(b)?)),
        None => {
            models.extend(ctx.cfg.baselines.all().into_iter().map(ModelSpec::Baseline));
            let dag = training_dag(ctx)?;
            models.push(cinn_spec(ctx, dag.clone(), false));
            if !ctx.args.no_pcgrad {
                models.push(cinn_spec(ctx, dag, true));
            }
        }
    }
    let folds = cv_folds(&ctx.cfg, &data, &plan)?;
    info!("evaluating {} models on {} folds", models.len(), folds.len());
    let res = cross_validate(&folds, target, &models, &ctx.cfg.training, &ctx.opts(false))?;
    write_results(ctx, "evaluation", &res)
}

fn cmd_ablate(ctx: &Ctx) -> Result<()> {
    if ctx.cfg.ablation.is_empty() {
        return Err(Error::Config("the config has no [[ablation]] steps".into()));
    }
    let data = ctx.cfg.load_dataset()?;
    let (_, plan) = discovery_plan(&ctx.cfg, &data)?;
    let target = plan.target_encoded()?;
    let base = match &ctx.args.dag {
        Some(p) => CausalDag::read(p)?,
        None => discovered_dag(ctx)?,
    };
    let folds = cv_folds(&ctx.cfg, &data, &plan)?;
    let res = run_ablation(
        &base,
        &ctx.cfg.ablation,
        &folds,
        target,
        &ctx.cfg.training,
        &ctx.opts(false),
    )?;
    let d = ctx.dir("reports")?;
    write(&d.join("ablation.json"), &res.to_json())?;
    write(&d.join("ablation.txt"), &res.table())?;
    print!("{}", res.table());
    Ok(())
}
