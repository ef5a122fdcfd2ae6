//! Whole experiments driven by a recipe.
//!
//! Layout of an experiment directory:
//!
//! ```text
//! recipe.txt              canonical copy of the recipe
//! data/                   replica<r>.csv, truth files
//! replica<r>/model.ckpt   plus model.trace.csv
//! replica<r>/<mode>/      discovery outputs
//! eval/<mode>/            per-mode reports across replicas
//! results.csv             one row per method
//! ```
//!
//! Every directory carries a provenance record. Rerunning over an existing
//! directory skips each stage whose record still matches.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use rayon::prelude::*;
use uncle_core::datagen::io::read_truth;
use uncle_core::metrics::{static_best, EvalReport};

use crate::provenance::{self, Provenance};
use crate::recipe::{Mode, Recipe};
use crate::stages::{self, TruthSource};

/// Label of the time-invariant reference row.
pub const STATIC_BEST: &str = "Static Best";

#[derive(Clone, Debug)]
pub struct MethodResult {
    pub method: String,
    pub report: EvalReport,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub results: Vec<MethodResult>,
    /// `(auroc, auprc)` of the best static graph, for dynamic truth.
    pub static_best: Option<(f64, f64)>,
    pub table: String,
}

fn stage_err(stage: &str, replica: usize) -> impl FnOnce(anyhow::Error) -> anyhow::Error + '_ {
    move |e| e.context(format!("stage {stage} failed for replica {replica}"))
}

fn model_path(out: &Path, r: usize) -> PathBuf {
    out.join(format!("replica{r}")).join("model.ckpt")
}

fn mode_dir(out: &Path, r: usize, mode: Mode) -> PathBuf {
    out.join(format!("replica{r}")).join(mode.name())
}

/// Runs every stage for every replica; replicas run on the current rayon pool.
pub fn run_recipe(recipe: &Recipe, out: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let recipe_copy = out.join("recipe.txt");
    fs::write(&recipe_copy, recipe.to_text()).with_context(|| format!("cannot write {}", recipe_copy.display()))?;

    let data_dir = out.join("data");
    let truth = stages::generate(&recipe.dataset, &data_dir, true).map_err(|e| e.context("stage generate failed"))?;

    (0..recipe.dataset.replicas).into_par_iter().try_for_each(|r| -> Result<()> {
        let data = data_dir.join(stages::replica_file(r));
        let ckpt = model_path(out, r);
        stages::train(&data, |n| Ok(recipe.model_config(r, n)?), &ckpt, true).map_err(stage_err("train", r))?;
        let pcfg = recipe.perturbation_for(r);
        for &mode in &recipe.eval.modes {
            let smooth = (mode == Mode::Perturb && recipe.eval.smooth > 0.0).then_some(recipe.eval.smooth);
            stages::discover(&ckpt, Some(&data), mode, &pcfg, smooth, &mode_dir(out, r, mode), true)
                .map_err(stage_err(&format!("discover ({})", mode.name()), r))?;
        }
        Ok(())
    })?;

    let dynamic = recipe.dataset.generator.is_dynamic();
    let source = if dynamic { TruthSource::Segments(truth.clone()) } else { TruthSource::Static(truth.clone()) };
    let mut results = Vec::new();
    for &mode in &recipe.eval.modes {
        let file = if mode == Mode::Perturb { stages::STRENGTHS_FILE } else { stages::SUMMARY_FILE };
        let preds: Vec<PathBuf> = (0..recipe.dataset.replicas).map(|r| mode_dir(out, r, mode).join(file)).collect();
        let report = stages::evaluate(&preds, &source, mode.method(), &recipe.name, &out.join("eval").join(mode.name()), true)
            .map_err(|e| e.context(format!("stage eval ({}) failed", mode.name())))?;
        results.push(MethodResult {
            method: mode.method().to_string(),
            report,
        });
    }
    let best = if dynamic && recipe.eval.static_best {
        Some(static_best(&read_truth(&truth)?)?)
    } else {
        None
    };

    let mut table = String::from(EvalReport::CSV_HEADER);
    table.push('\n');
    for m in &results {
        let _ = writeln!(table, "{}", m.report.csv_row(&m.method, &recipe.name));
    }
    if let Some((a, p)) = best {
        let _ = writeln!(table, "{STATIC_BEST},{},1,{a:.4},0.0000,{p:.4},0.0000,,", recipe.name);
    }
    let results_path = out.join(stages::RESULTS_FILE);
    fs::write(&results_path, &table).with_context(|| format!("cannot write {}", results_path.display()))?;

    let mut prov = Provenance::new("run");
    prov.input("recipe", &recipe_copy)?;
    prov.write(&out.join(provenance::FILE), &[recipe_copy, results_path])?;
    info!("run: results in {}", out.display());
    Ok(RunOutcome {
        results,
        static_best: best,
        table,
    })
}

/// One point of an alpha/lambda1 sweep.
pub struct GridPoint {
    pub alpha: f64,
    pub lambda1: f64,
    pub outcome: RunOutcome,
}

/// Runs the recipe once per `(alpha, lambda1)` pair in `out/alpha<a>_lambda1<l>`
/// and writes `grid.csv` summarizing each method's scores.
pub fn run_grid(recipe: &Recipe, alphas: &[f64], lambdas: &[f64], out: &Path) -> Result<Vec<GridPoint>> {
    if alphas.is_empty() || lambdas.is_empty() {
        return Err(crate::error::usage("grid needs at least one alpha and one lambda1"));
    }
    let mut points = Vec::new();
    let mut csv = String::from("alpha,lambda1,method,auroc,auprc,acc\n");
    for &alpha in alphas {
        for &lambda1 in lambdas {
            let mut r = recipe.clone();
            r.model.push(("alpha".into(), alpha.to_string()));
            r.model.push(("lambda1".into(), lambda1.to_string()));
            r.model_config(0, 1)?;
            let dir = out.join(format!("alpha{alpha}_lambda1{lambda1}"));
            let outcome = run_recipe(&r, &dir)?;
            for m in &outcome.results {
                let _ = writeln!(
                    csv,
                    "{alpha},{lambda1},{},{:.4},{:.4},{:.4}",
                    m.method, m.report.auroc, m.report.auprc, m.report.acc
                );
            }
            points.push(GridPoint { alpha, lambda1, outcome });
        }
    }
    let path = out.join("grid.csv");
    fs::write(&path, csv).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(points)
}
