use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use cfrec_core::evaluation::{render_mae_table, write_reports_csv, EvalConfig, EvaluationReport, Evaluator};
use cfrec_core::factorization::{recommend_top_n_mf, rmse};
use cfrec_core::io::{read_ratings, write_ratings};
use cfrec_core::prediction::predict;
use cfrec_core::{
    blend_matrix, predict_mf, recommend_top_n, split, sweep_k, train, Axis, BlendConfig, FactorModel, FeatureProvider,
    Kernel, Prediction, RatingMatrix, SimilarityMatrix, TrainConfig,
};
use serde::Serialize;

use crate::opts::RunConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Machine output goes to `--out` when given, stdout otherwise.
fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Core(cfrec_core::Error::Io(io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    )))
}

fn load(cfg: &RunConfig) -> Result<RatingMatrix> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let triples = read_ratings(BufReader::new(file))?;
    let m = RatingMatrix::from_triples(triples, cfg.scale, cfg.duplicates)?;
    let dupes = m.summary().duplicates;
    if dupes > 0 {
        eprintln!("warning: {dupes} duplicate ratings; the last of each was kept");
    }
    Ok(m)
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        k: cfg.factors,
        learning_rate: cfg.lr,
        l2: cfg.l2,
        epochs: cfg.epochs,
        seed: cfg.seed,
        use_global_mean_bias: cfg.bias,
        optimizer: cfg.optimizer,
        ..TrainConfig::default()
    }
}

fn check_kernel(kernel: Kernel, axis: Axis) -> Result<()> {
    if !kernel.supports(axis) {
        return Err(CliError::Usage(format!(
            "kernel {kernel} is not defined on the {axis} axis"
        )));
    }
    Ok(())
}

/// Collaborative matrix on the configured axis, blended with features when
/// `--blend` is set.
fn neighbourhood(m: &RatingMatrix, cfg: &RunConfig) -> Result<SimilarityMatrix> {
    check_kernel(cfg.kernel, cfg.axis)?;
    let s = SimilarityMatrix::build(m, cfg.axis, cfg.kernel, cfg.min_overlap_for(cfg.kernel))?;
    if !cfg.blend {
        return Ok(s);
    }
    let provider = cfg.features.open()?;
    let labels = match cfg.axis {
        Axis::User => m.users(),
        Axis::Item => m.items(),
    };
    Ok(blend_matrix(
        &s,
        labels,
        provider.as_ref(),
        BlendConfig::new(cfg.alpha)?,
    )?)
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    user: &'a str,
    item: &'a str,
    value: f64,
    basis: String,
    neighbors_used: usize,
    fallback: String,
}

fn write_prediction(out: &mut dyn Write, user: &str, item: &str, p: &Prediction) -> Result<()> {
    let line = PredictionLine {
        user,
        item,
        value: p.value,
        basis: p.basis.to_string(),
        neighbors_used: p.neighbors_used,
        fallback: p.fallback.to_string(),
    };
    serde_json::to_writer(&mut *out, &line).map_err(cfrec_core::Error::from)?;
    writeln!(out).map_err(cfrec_core::Error::from)?;
    Ok(())
}

fn read_model(path: &Path) -> Result<FactorModel> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    Ok(FactorModel::read_json(BufReader::new(file))?)
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let m = load(cfg)?;
    let summary = m.summary();
    println!("{summary}");
    println!("density {:.6}", summary.density());
    if let Some(path) = &cfg.out {
        let mut out = output(Some(path))?;
        write_ratings(&m, &mut out)?;
        out.flush().map_err(cfrec_core::Error::from)?;
    }
    Ok(())
}

pub fn similar(cfg: &RunConfig, target: Option<&str>) -> Result<()> {
    let m = load(cfg)?;
    let s = neighbourhood(&m, cfg)?;
    let labels = match cfg.axis {
        Axis::User => m.users(),
        Axis::Item => m.items(),
    };
    let mut out = output(cfg.out.as_ref())?;
    match target {
        Some(label) => {
            let handle = match cfg.axis {
                Axis::User => m.user_handle(label)?.0,
                Axis::Item => m.item_handle(label)?.0,
            };
            let set = s.k_nearest(handle, cfg.k)?;
            s.write_neighbors(labels, &set, &mut out)?;
        }
        None => s.write_triples(labels, &mut out)?,
    }
    out.flush().map_err(cfrec_core::Error::from)?;
    Ok(())
}

pub fn predict_cmd(cfg: &RunConfig, user: &str, items: &[String], model: Option<&Path>) -> Result<()> {
    let mut out = output(cfg.out.as_ref())?;
    if let Some(path) = model {
        let model = read_model(path)?;
        let u = model.user_handle(user)?;
        for item in items {
            let p = predict_mf(&model, u, model.item_handle(item)?)?;
            write_prediction(&mut out, user, item, &p)?;
        }
    } else {
        let m = load(cfg)?;
        let s = neighbourhood(&m, cfg)?;
        let u = m.user_handle(user)?;
        for item in items {
            let p = predict(&m, &s, u, m.item_handle(item)?, cfg.k, cfg.neighbor_pool)?;
            write_prediction(&mut out, user, item, &p)?;
        }
    }
    out.flush().map_err(cfrec_core::Error::from)?;
    Ok(())
}

pub fn recommend(cfg: &RunConfig, user: &str, model: Option<&Path>) -> Result<()> {
    let m = load(cfg)?;
    let u = m.user_handle(user)?;
    let list = match model {
        Some(path) => {
            let model = read_model(path)?;
            if model.user_labels != m.users().labels() || model.item_labels != m.items().labels() {
                return Err(CliError::Usage("model catalogs do not match --data".into()));
            }
            recommend_top_n_mf(&model, &m, u, cfg.n)?
        }
        None => {
            let s = neighbourhood(&m, cfg)?;
            recommend_top_n(&m, &s, u, cfg.k, cfg.n, cfg.neighbor_pool)?
        }
    };
    let mut out = output(cfg.out.as_ref())?;
    for p in &list.entries {
        write_prediction(&mut out, user, m.item_label(p.item), p)?;
    }
    out.flush().map_err(cfrec_core::Error::from)?;
    Ok(())
}

fn eval_config(cfg: &RunConfig) -> Result<EvalConfig> {
    let user_based = cfg.algorithms.iter().any(|a| a.axis() == Some(Axis::User));
    if user_based {
        check_kernel(cfg.kernel, Axis::User)?;
    }
    let user_kernel = if cfg.kernel.supports(Axis::User) {
        cfg.kernel
    } else {
        Kernel::Cosine
    };
    Ok(EvalConfig {
        user_kernel,
        item_kernel: cfg.kernel,
        min_overlap: cfg.min_overlap,
        pool: cfg.neighbor_pool,
        threshold: cfg.threshold,
        n: cfg.n,
        blend: BlendConfig::new(cfg.alpha)?,
        train: train_config(cfg),
    })
}

fn provider(cfg: &RunConfig) -> Result<Option<Box<dyn FeatureProvider>>> {
    if cfg.algorithms.iter().any(|a| a.uses_features()) {
        Ok(Some(cfg.features.open()?))
    } else {
        Ok(None)
    }
}

fn report_table(reports: &[EvaluationReport]) -> String {
    let pct = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<12} {:>4} {:>8} {:>10} {:>8} {:>9} {:>9}\n",
        "algorithm", "K", "MAE", "precision", "recall", "coverage", "fallback"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<12} {:>4} {:>8.4} {:>10} {:>8} {:>9.2} {:>9}\n",
            r.algorithm,
            r.k,
            r.mae,
            pct(r.precision),
            pct(r.recall),
            r.coverage,
            r.n_fallback
        ));
    }
    out
}

fn emit_reports(cfg: &RunConfig, table: &str, reports: &[EvaluationReport]) -> Result<()> {
    let mut stdout = io::stdout().lock();
    if !cfg.quiet {
        writeln!(stdout, "{table}").map_err(cfrec_core::Error::from)?;
    }
    match &cfg.out {
        Some(path) => {
            let mut out = output(Some(path))?;
            write_reports_csv(reports, &mut out)?;
            out.flush().map_err(cfrec_core::Error::from)?;
        }
        None => write_reports_csv(reports, &mut stdout)?,
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let m = load(cfg)?;
    let sp = split(&m, cfg.holdout, cfg.seed)?;
    let config = eval_config(cfg)?;
    let provider = provider(cfg)?;
    let evaluator = Evaluator::new(&sp, &config, provider.as_deref())?;
    let mut reports = Vec::new();
    for &algorithm in &cfg.algorithms {
        let prepared = evaluator.prepare(algorithm)?;
        reports.push(evaluator.evaluate(algorithm, &prepared, cfg.k)?);
    }
    emit_reports(cfg, &report_table(&reports), &reports)
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let m = load(cfg)?;
    let sp = split(&m, cfg.holdout, cfg.seed)?;
    let config = eval_config(cfg)?;
    let provider = provider(cfg)?;
    let reports = sweep_k(&sp, &cfg.algorithms, &cfg.k_values, &config, provider.as_deref())?;
    emit_reports(cfg, &render_mae_table(&reports), &reports)
}

pub fn factorize(cfg: &RunConfig) -> Result<()> {
    let m = load(cfg)?;
    let trained = train(&m, &train_config(cfg))?;
    if !cfg.quiet {
        eprintln!(
            "{} epochs, loss {:.6} -> {:.6}, rmse {:.6}",
            trained.loss_trace.len(),
            trained.initial_loss,
            trained.final_loss(),
            rmse(&trained.model, &m)
        );
    }
    let mut out = output(cfg.out.as_ref())?;
    trained.model.write_json(&mut out)?;
    writeln!(out).map_err(cfrec_core::Error::from)?;
    out.flush().map_err(cfrec_core::Error::from)?;
    Ok(())
}
