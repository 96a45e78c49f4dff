use std::fmt::Display;
use std::path::{Path, PathBuf};

use cect::data::{split, synth_generate, Dataset, Manifest};
use cect::eval::{
    ablate as run_ablation, evaluate, init_seed, sweep as run_sweep, AblationSpec, Evaluation, ExperimentData,
    MetricsReport,
};
use cect::model::{checkpoint, model_grad_check, Cect, ParamStore};
use cect::report::{
    ablation_table, artifact_path, history_table, loss_table, render_confusion, run_id, sweep_table, write_json,
    write_text, EmbeddingSet, RunReport, Subset, Table,
};
use cect::train::{fit, resume, EpochRecord, BEST_CHECKPOINT, FIRST_MOMENT_PREFIX, SECOND_MOMENT_PREFIX};
use cect::{CectError, Result};

use crate::settings::Settings;

const CLASS_NAMES: [&str; 2] = ["positive", "negative"];

pub(crate) struct Ctx {
    pub settings: Settings,
    pub out: PathBuf,
    pub run_id: String,
    quiet: bool,
    artifacts: std::sync::Mutex<Vec<String>>,
}

impl Ctx {
    /// Creates the output directory and writes the resolved configuration.
    pub fn new(command: &str, settings: Settings, out: PathBuf, quiet: bool) -> Result<Self> {
        std::fs::create_dir_all(&out).map_err(|e| CectError::io(&out, e))?;
        let ctx = Ctx {
            run_id: run_id(command, settings.seed),
            settings,
            out,
            quiet,
            artifacts: Default::default(),
        };
        ctx.text("config", &ctx.settings.snapshot())?;
        Ok(ctx)
    }

    fn progress(&self, msg: impl Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn run_dir(&self) -> PathBuf {
        self.out.join(&self.run_id)
    }

    fn record(&self, path: &Path) {
        let rel = path.strip_prefix(&self.out).unwrap_or(path);
        self.artifacts
            .lock()
            .expect("artifact list")
            .push(rel.display().to_string());
    }

    fn text(&self, kind: &str, text: &str) -> Result<()> {
        let path = artifact_path(&self.out, &self.run_id, kind);
        write_text(&path, text)?;
        self.record(&path);
        Ok(())
    }

    fn table(&self, kind: &str, table: &Table) -> Result<()> {
        self.text(kind, &table.to_csv()?)
    }

    fn report(&self, command: &str) -> RunReport {
        let mut r = RunReport::new(command, self.settings.seed);
        r.model = Some(self.settings.model.clone());
        r.train_config = Some(self.settings.train_config());
        r
    }

    fn finish(&self, mut report: RunReport) -> Result<()> {
        let path = artifact_path(&self.out, &self.run_id, "report.json");
        self.record(&path);
        report.artifacts = self.artifacts.lock().expect("artifact list").clone();
        write_json(&path, &report)
    }
}

fn epoch_line(e: &EpochRecord) -> String {
    format!(
        "epoch {:>3}  steps {:>5}  lr {:.3e}  train loss {:.4}  train acc {:.4}  val loss {:.4}{}",
        e.epoch,
        e.steps,
        e.lr,
        e.train_loss,
        e.train_accuracy,
        e.val_loss,
        if e.improved { "  *" } else { "" }
    )
}

fn metric_line(subset: &str, ev: &Evaluation) -> String {
    let values = MetricsReport::NAMES
        .iter()
        .zip(ev.metrics.values())
        .map(|(n, v)| format!("{n} {}", v.map_or("n/a".to_string(), |x| format!("{x:.4}"))))
        .collect::<Vec<_>>()
        .join("  ");
    format!("{subset:<10} n {:>5}  loss {:.4}  {values}", ev.samples, ev.loss)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metrics_table<'a>(evals: impl IntoIterator<Item = (&'a String, &'a Evaluation)>) -> Table {
    let mut header: Vec<String> = ["subset", "samples", "loss", "tp", "fp", "fn", "tn"]
        .map(String::from)
        .to_vec();
    header.extend(MetricsReport::NAMES.map(String::from));
    let rows = evals
        .into_iter()
        .map(|(name, e)| {
            let c = &e.confusion;
            let mut row = vec![name.clone(), e.samples.to_string(), e.loss.to_string()];
            row.extend([c.tp, c.fp, c.fn_, c.tn].map(|x| x.to_string()));
            row.extend(e.metrics.values().map(cell));
            row
        })
        .collect();
    Table { header, rows }
}

/// Splits the configured dataset, generating a synthetic one under the
/// output directory when no data path is set.
fn load_data(ctx: &Ctx) -> Result<ExperimentData> {
    let s = &ctx.settings;
    let r = s.model.input_resolution;
    let manifest = match &s.data_path {
        Some(p) => Manifest::load(p)?,
        None => {
            let dir = ctx.out.join(format!("synthetic-s{}", s.seed));
            ctx.progress(format_args!(
                "no data.path set; generating {} synthetic images per class in {}",
                s.synth_n,
                dir.display()
            ));
            synth_generate(&dir, s.synth_n, r, s.seed)?
        }
    };
    let external = s.test_path.as_deref().map(Manifest::load).transpose()?;
    let parts = split(&manifest, &s.split_spec()?, external)?;
    ctx.progress(format_args!(
        "data: train {}  val {}  test {}",
        parts.train.records().len(),
        parts.val.records().len(),
        parts.test.records().len()
    ));
    Ok(ExperimentData {
        train: Dataset::load(&parts.train, r)?,
        val: Dataset::load(&parts.val, r)?,
        test: Dataset::load(&parts.test, r)?,
    })
}

fn default_checkpoint(ctx: &Ctx) -> PathBuf {
    ctx.out.join(run_id("train", ctx.settings.seed)).join(BEST_CHECKPOINT)
}

/// Loads model parameters from a checkpoint, ignoring optimizer moments.
fn load_model(ctx: &Ctx, path: &Path) -> Result<Cect> {
    let ck = checkpoint::load(path, &ctx.settings.model)?;
    let mut params = ParamStore::new();
    for (name, t) in ck.records {
        if !name.starts_with(FIRST_MOMENT_PREFIX) && !name.starts_with(SECOND_MOMENT_PREFIX) {
            params.insert(name, t);
        }
    }
    Cect::from_params(ctx.settings.model.clone(), params)
}

pub(crate) fn train(ctx: &Ctx, resume_run: bool) -> Result<()> {
    let data = load_data(ctx)?;
    let cfg = ctx.settings.train_config();
    let model_cfg = &ctx.settings.model;
    let dir = ctx.run_dir();
    let mut observer = |e: &EpochRecord| ctx.progress(epoch_line(e));
    let outcome = if resume_run {
        resume(&dir, model_cfg, &data.train, &data.val, &cfg, &mut observer)?
    } else {
        let net = Cect::new(model_cfg.clone(), init_seed(cfg.seed))?;
        fit(net, &data.train, &data.val, &cfg, Some(&dir), &mut observer)?
    };
    let mut report = ctx.report("train");
    for (name, ds) in [("validation", &data.val), ("test", &data.test)] {
        let ev = evaluate(&outcome.best, ds, &cfg.normalization)?;
        println!("{}", metric_line(name, &ev));
        report.evaluations.insert(name.to_string(), ev);
    }
    ctx.table("history.csv", &history_table(&outcome.history))?;
    ctx.table("losses.csv", &loss_table(&outcome.history))?;
    ctx.table("metrics.csv", &metrics_table(&report.evaluations))?;
    ctx.text(
        "confusion-test.svg",
        &render_confusion(&report.evaluations["test"].confusion, CLASS_NAMES),
    )?;
    for f in [BEST_CHECKPOINT, cect::train::LAST_CHECKPOINT, cect::train::STATE_FILE] {
        ctx.record(&dir.join(f));
    }
    report.training = Some(outcome.history);
    ctx.finish(report)
}

pub(crate) fn eval(ctx: &Ctx, checkpoint: Option<PathBuf>) -> Result<()> {
    let path = checkpoint.unwrap_or_else(|| default_checkpoint(ctx));
    let model = load_model(ctx, &path)?;
    let data = load_data(ctx)?;
    let norm = &ctx.settings.train.normalization;
    let mut report = ctx.report("eval");
    for (name, ds) in [("validation", &data.val), ("test", &data.test)] {
        let ev = evaluate(&model, ds, norm)?;
        println!("{}", metric_line(name, &ev));
        ctx.text(
            &format!("confusion-{name}.svg"),
            &render_confusion(&ev.confusion, CLASS_NAMES),
        )?;
        report.evaluations.insert(name.to_string(), ev);
    }
    ctx.table("metrics.csv", &metrics_table(&report.evaluations))?;
    ctx.finish(report)
}

pub(crate) fn sweep(ctx: &Ctx) -> Result<()> {
    let data = load_data(ctx)?;
    let s = &ctx.settings;
    let rows = run_sweep(
        &s.model,
        &s.train_config(),
        &data,
        &s.sweep,
        Some(&ctx.run_dir()),
        &mut |i, e| ctx.progress(format_args!("group {i}  {}", epoch_line(e))),
    )?;
    let table = sweep_table(&rows);
    print!("{}", table.to_csv()?);
    for (i, r) in rows.iter().enumerate() {
        if let Some(err) = &r.error {
            ctx.progress(format_args!("group {i} failed: {err}"));
        }
    }
    ctx.table("sweep.csv", &table)?;
    let mut report = ctx.report("sweep");
    report.sweep = Some(rows);
    ctx.finish(report)
}

pub(crate) fn ablate(ctx: &Ctx) -> Result<()> {
    let data = load_data(ctx)?;
    let s = &ctx.settings;
    let rows = run_ablation(
        &s.model,
        &s.train_config(),
        &data,
        &AblationSpec::standard(),
        Some(&ctx.run_dir()),
        &mut |i, e| ctx.progress(format_args!("row {i}  {}", epoch_line(e))),
    )?;
    let table = ablation_table(&rows);
    print!("{}", table.to_csv()?);
    for (i, r) in rows.iter().enumerate() {
        if let Some(err) = &r.error {
            ctx.progress(format_args!("row {i} failed: {err}"));
        }
    }
    ctx.table("ablation.csv", &table)?;
    let mut report = ctx.report("ablate");
    report.ablation = Some(rows);
    ctx.finish(report)
}

pub(crate) fn embed(ctx: &Ctx, checkpoint: Option<PathBuf>) -> Result<()> {
    let path = checkpoint.unwrap_or_else(|| default_checkpoint(ctx));
    let model = load_model(ctx, &path)?;
    let data = load_data(ctx)?;
    let norm = &ctx.settings.train.normalization;
    let width = ctx.settings.model.penultimate_width();
    let (mut features, mut labels, mut subsets) = (Vec::new(), Vec::new(), Vec::new());
    for (subset, ds) in [(Subset::Validation, &data.val), (Subset::Test, &data.test)] {
        let (images, _) = ds.all(norm);
        let f = model.extract_penultimate(&images)?;
        features.extend(f.data().iter().map(|&x| f64::from(x)));
        labels.extend(ds.samples().iter().map(|s| s.label));
        subsets.extend(std::iter::repeat_n(subset, ds.len()));
    }
    let set = EmbeddingSet::new(width, features, labels, subsets)?;
    for subset in [Subset::Validation, Subset::Test] {
        ctx.table(
            &format!("embeddings-{}.csv", subset.name()),
            &set.features_table(subset),
        )?;
    }
    let (points, result) = set.project(&ctx.settings.tsne_config())?;
    ctx.table("tsne.csv", &points)?;
    ctx.progress(format_args!(
        "t-SNE: {} points, perplexity {}, final KL {:.4}",
        set.len(),
        result.perplexity,
        result.kl_trace.last().copied().unwrap_or(f64::NAN)
    ));
    ctx.finish(ctx.report("embed"))
}

pub(crate) fn synth(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let manifest = synth_generate(&ctx.out, s.synth_n, s.model.input_resolution, s.seed)?;
    println!("wrote {} images to {}", manifest.records().len(), ctx.out.display());
    ctx.record(&ctx.out.join("manifest.csv"));
    let mut report = RunReport::new("synth", s.seed);
    report.model = Some(s.model.clone());
    ctx.finish(report)
}

pub(crate) fn gradcheck(ctx: &Ctx) -> Result<()> {
    let s = &ctx.settings;
    let check = model_grad_check(&s.model, s.seed, &s.gradcheck)?;
    println!(
        "max relative error {:.3e} (tolerance {:.0e}, worst tensors {})",
        check.max_rel_err,
        s.gradcheck.tol,
        check.worst_tensor.join(", ")
    );
    let (passed, worst) = (check.passed, check.max_rel_err);
    let mut report = RunReport::new("gradcheck", s.seed);
    report.model = Some(s.model.clone());
    report.gradcheck = Some(check);
    ctx.finish(report)?;
    if passed {
        Ok(())
    } else {
        Err(CectError::Numeric(format!(
            "gradient check failed: max relative error {worst:.3e} exceeds {:.0e}",
            s.gradcheck.tol
        )))
    }
}
