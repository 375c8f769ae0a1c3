use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use nfft_krr::anova::mis_scores;
use nfft_krr::bench::{crossover, loglog_slope, rows_to_csv, run_mvm_bench, BenchConfig};
use nfft_krr::data::{balance_undersample, load_csv, load_features_csv, split_ordered, split_train_test, Dataset};
use nfft_krr::krr::{accuracy, decision_to_label, fit as fit_model, grid_search, KrrConfig, KrrModel};
use nfft_krr::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::report::RunReport;
use crate::{BenchArgs, DataArgs, FitArgs, GridArgs, MisRankArgs, PredictArgs, SolverArgs};

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(base.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

/// Write to stdout, turning a closed pipe into an I/O error instead of a panic.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn sigma_from_gamma(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(1.0 / gamma.sqrt())
}

fn load(data: &DataArgs) -> Result<Dataset> {
    let ds = load_csv(&data.csv, &data.label_column, &data.positive_label)?;
    if data.balance {
        balance_undersample(&ds, data.seed)
    } else {
        Ok(ds)
    }
}

fn split(ds: &Dataset, fraction: f64, shuffle: bool, seed: u64) -> Result<(Dataset, Dataset)> {
    // the second part is the test set
    let (a, b) = if shuffle {
        split_train_test(ds, 1.0 - fraction, seed)?
    } else {
        split_ordered(ds, 1.0 - fraction)?
    };
    Ok((a, b))
}

fn config(sigma: f64, lambda: f64, s: &SolverArgs) -> KrrConfig {
    KrrConfig {
        sigma,
        lambda,
        cg_tol: s.tol,
        cg_maxiter: s.maxiter,
        profile: s.profile,
        mis_threshold: s.threshold,
    }
}

fn record_fit(report: &mut RunReport, model: &KrrModel) {
    let d = model.diagnostics();
    report.cg_iterations = Some(d.cg_iterations);
    report.cg_residual = Some(d.cg_residual);
    report.converged = Some(d.converged);
    report.note("windows", model.windows().windows());
    report.note("dropped_features", model.dropped_features());
}

#[derive(Serialize)]
struct Ranking<'a> {
    columns: &'a [String],
    scores: &'a [f64],
    ranking: &'a [usize],
    ranked_columns: Vec<&'a str>,
    bins: usize,
}

pub fn mis_rank(a: &MisRankArgs) -> Result<()> {
    let start = Instant::now();
    let ds = load(&a.data)?;
    let t_load = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let mis = mis_scores(ds.x(), ds.y())?;
    let t_rank = start.elapsed().as_secs_f64();

    let out = Ranking {
        columns: ds.column_names(),
        scores: &mis.scores,
        ranking: &mis.ranking,
        ranked_columns: mis.ranking.iter().map(|&f| ds.column_names()[f].as_str()).collect(),
        bins: mis.bins,
    };
    emit(&(serde_json::to_string_pretty(&out)? + "\n"))?;

    if let Some(path) = &a.report {
        let mut report = RunReport::new(
            "mis-rank",
            json!({ "csv": a.data.csv, "label_column": a.data.label_column, "balance": a.data.balance }),
            Some(a.data.seed),
        );
        report.time("load", t_load);
        report.time("rank", t_rank);
        report.note("rows", ds.len());
        report.write(path)?;
    }
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let sigma = match (a.sigma, a.gamma) {
        (_, Some(g)) => sigma_from_gamma(g)?,
        (Some(s), None) => s,
        (None, None) => 1.0,
    };
    let cfg = config(sigma, a.lambda, &a.solver);
    cfg.validate()?;

    let total = Instant::now();
    let start = Instant::now();
    let ds = load(&a.data)?;
    let t_load = start.elapsed().as_secs_f64();
    let (train, test) = match a.split.test_fraction {
        Some(f) => {
            let (tr, te) = split(&ds, f, !a.split.no_shuffle_split, a.data.seed)?;
            (tr, Some(te))
        }
        None => (ds, None),
    };

    let start = Instant::now();
    let model = fit_model(&train, &cfg)?.with_seed(Some(a.data.seed));
    let t_fit = start.elapsed().as_secs_f64();
    model.save(&a.model_out)?;

    let mut report = RunReport::new(
        "fit",
        json!({
            "csv": a.data.csv,
            "model_out": a.model_out,
            "krr": cfg,
            "balance": a.data.balance,
            "test_fraction": a.split.test_fraction,
            "shuffle_split": !a.split.no_shuffle_split,
            "train_rows": train.len(),
        }),
        Some(a.data.seed),
    );
    report.time("load", t_load);
    report.time("fit", t_fit);
    record_fit(&mut report, &model);

    if let Some(test) = &test {
        let start = Instant::now();
        let pred = model.predict(test.x())?;
        report.time("predict", start.elapsed().as_secs_f64());
        report.accuracy = Some(accuracy(&pred, test.y()));
        report.note("test_rows", test.len());
    }
    report.time("total", total.elapsed().as_secs_f64());
    report.write(&a.report.clone().unwrap_or_else(|| with_suffix(&a.model_out, ".report.json")))?;

    let d = model.diagnostics();
    println!(
        "fit: {} rows, {} windows, sigma={sigma}, lambda={}, CG {} iterations (residual {:.2e}{}), {:.3} s",
        train.len(),
        model.windows().len(),
        cfg.lambda,
        d.cg_iterations,
        d.cg_residual,
        if d.converged { "" } else { ", NOT converged" },
        t_fit
    );
    if let Some(acc) = report.accuracy {
        println!("test accuracy: {:.4}", acc);
    }
    println!("model written to {}", a.model_out.display());
    Ok(())
}

/// Features in the model's column order, plus labels when requested.
fn predict_inputs(a: &PredictArgs, model: &KrrModel) -> Result<(Array2<f64>, Option<Vec<f64>>)> {
    let names = model.column_names();
    let (Some(label), Some(pos)) = (&a.label_column, &a.positive_label) else {
        return Ok((load_features_csv(&a.csv, names)?, None));
    };
    let ds = load_csv(&a.csv, label, pos)?;
    let idx = names
        .iter()
        .map(|n| {
            ds.column_names()
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::InvalidData(format!("column '{n}' missing from {}", a.csv.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ds.x().select(Axis(1), &idx), Some(ds.y().to_vec())))
}

fn write_predictions(path: &Path, decision: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row_index", "decision_value", "label"])?;
    for (i, &s) in decision.iter().enumerate() {
        let label = if decision_to_label(s) > 0.0 { "1" } else { "-1" };
        w.write_record([i.to_string(), s.to_string(), label.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let total = Instant::now();
    let start = Instant::now();
    let model = KrrModel::load(&a.model)?;
    let (x, y) = predict_inputs(a, &model)?;
    let t_load = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let decision = model.decision_function(x.view())?;
    let t_predict = start.elapsed().as_secs_f64();
    write_predictions(&a.out, &decision)?;

    let mut report = RunReport::new(
        "predict",
        json!({ "model": a.model, "csv": a.csv, "out": a.out, "krr": model.config() }),
        model.seed(),
    );
    report.time("load", t_load);
    report.time("predict", t_predict);
    report.note("rows", decision.len());
    if let Some(y) = &y {
        let labels: Vec<f64> = decision.iter().copied().map(decision_to_label).collect();
        report.accuracy = Some(accuracy(&labels, y));
    }
    report.time("total", total.elapsed().as_secs_f64());
    report.write(&a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json")))?;

    println!("predict: {} rows in {:.3} s", decision.len(), t_predict);
    if let Some(acc) = report.accuracy {
        println!("accuracy: {acc:.4}");
    }
    println!("predictions written to {}", a.out.display());
    Ok(())
}

pub fn gridsearch(a: &GridArgs) -> Result<()> {
    let sigmas = match &a.gamma_grid {
        Some(g) => g.iter().map(|&v| sigma_from_gamma(v)).collect::<Result<Vec<_>>>()?,
        None => a.sigma_grid.clone(),
    };
    let base = config(1.0, 1.0, &a.solver);

    let total = Instant::now();
    let start = Instant::now();
    let ds = load(&a.data)?;
    let (train, test) = split(&ds, a.test_fraction, !a.no_shuffle_split, a.data.seed)?;
    let t_load = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let result = grid_search(&train, &sigmas, &a.lambda_grid, &base, a.data.seed)?;
    let t_search = start.elapsed().as_secs_f64();
    let model = result.model.with_seed(Some(a.data.seed));
    model.save(&a.model_out)?;

    let start = Instant::now();
    let pred = model.predict(test.x())?;
    let t_predict = start.elapsed().as_secs_f64();
    let test_acc = accuracy(&pred, test.y());

    let cells_path = a.cells_out.clone().unwrap_or_else(|| with_suffix(&a.model_out, ".cells.csv"));
    let mut w = csv::Writer::from_path(&cells_path)?;
    for c in &result.cells {
        w.serialize(c)?;
    }
    w.flush()?;

    let mut report = RunReport::new(
        "gridsearch",
        json!({
            "csv": a.data.csv,
            "model_out": a.model_out,
            "sigma_grid": sigmas,
            "lambda_grid": a.lambda_grid,
            "base": base,
            "balance": a.data.balance,
            "test_fraction": a.test_fraction,
            "shuffle_split": !a.no_shuffle_split,
            "rows": ds.len(),
            "train_rows": train.len(),
            "test_rows": test.len(),
        }),
        Some(a.data.seed),
    );
    report.time("load", t_load);
    report.time("search", t_search);
    report.time("predict", t_predict);
    report.time("total", total.elapsed().as_secs_f64());
    report.accuracy = Some(test_acc);
    record_fit(&mut report, &model);
    report.note("best_sigma", result.best.sigma);
    report.note("best_lambda", result.best.lambda);
    report.note("selection_accuracy", result.best_accuracy);
    report.note("failed_cells", result.cells.iter().filter(|c| c.error.is_some()).count());
    report.note(
        "protocol",
        "parameters chosen on a 50:50 split of the training part; the test part is scored once with the refitted winner",
    );
    report.write(&a.report.clone().unwrap_or_else(|| with_suffix(&a.model_out, ".report.json")))?;

    println!(
        "gridsearch: {} cells ({} failed) on {} training rows, {:.2} s",
        result.cells.len(),
        result.cells.iter().filter(|c| c.error.is_some()).count(),
        train.len(),
        t_search
    );
    println!(
        "best sigma={} lambda={} (selection accuracy {})",
        result.best.sigma,
        result.best.lambda,
        result.best_accuracy.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
    );
    println!("test accuracy: {test_acc:.4} on {} rows", test.len());
    println!("model written to {}, cells to {}", a.model_out.display(), cells_path.display());
    Ok(())
}

pub fn bench_mvm(a: &BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        n_list: a.n_list.clone(),
        d: a.d,
        sigma: a.sigma,
        profile: a.profile,
        runs: a.runs,
        seed: a.seed,
        direct_limit: a.direct_limit,
    };
    let start = Instant::now();
    let rows = run_mvm_bench(&cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let csv = rows_to_csv(&rows);
    match &a.out {
        Some(p) => std::fs::write(p, &csv)?,
        None => emit(&csv)?,
    }

    let fast: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.t_fast)).collect();
    let direct: Vec<(usize, f64)> = rows.iter().filter_map(|r| r.t_direct.map(|t| (r.n, t))).collect();
    let cross = crossover(&rows);

    let report_path = a.report.clone().or_else(|| a.out.as_ref().map(|p| with_suffix(p, ".report.json")));
    if let Some(path) = report_path {
        let mut report = RunReport::new(
            "bench-mvm",
            json!({
                "n_list": a.n_list,
                "d": a.d,
                "sigma": a.sigma,
                "profile": a.profile,
                "runs": a.runs,
                "direct_limit": a.direct_limit,
            }),
            Some(a.seed),
        );
        report.time("total", elapsed);
        report.mvm_rel_errors = rows.iter().filter_map(|r| r.rel_error.map(|e| (r.n, e))).collect();
        report.note("crossover", cross);
        if fast.len() > 1 {
            report.note("fast_slope", loglog_slope(&fast));
        }
        if direct.len() > 1 {
            report.note("direct_slope", loglog_slope(&direct));
        }
        report.write(&path)?;
    }

    // stdout may carry the CSV itself
    let summary = format!(
        "bench-mvm: {} sizes in {:.2} s, crossover {}",
        rows.len(),
        elapsed,
        cross.map_or_else(|| "not reached".into(), |n| format!("N={n}"))
    );
    if a.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}
