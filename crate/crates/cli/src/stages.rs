//! The four pipeline stages. Each writes its outputs plus a provenance
//! record; with `reuse` set, a stage whose record is current is skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use uncle_core::datagen::io::{is_manifest, read_dataset, read_manifest, read_matrix, write_dataset, write_truth};
use uncle_core::datagen::GroundTruth;
use uncle_core::discovery::{
    aggregate_dependencies, dynamic_graph, read_strengths, write_edge_series, write_strengths, DynamicCausalGraph,
    PerturbationConfig, Summary,
};
use uncle_core::metrics::{aggregate_replicas, evaluate_constant, evaluate_dynamic, evaluate_static, EvalReport};
use uncle_core::model::{checkpoint, train_with, EpochRecord, ModelConfig};
use uncle_core::CausalMatrix;

use crate::error::usage;
use crate::provenance::{self, Provenance};
use crate::recipe::{DatasetSpec, Mode};

pub const STRENGTHS_FILE: &str = "strengths.bin";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const EDGES_SMOOTHED_FILE: &str = "edges_smoothed.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const RESULTS_FILE: &str = "results.csv";

pub fn replica_file(replica: usize) -> String {
    format!("replica{replica}.csv")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Path of the truth file `generate` writes into `dir`.
pub fn truth_path(dir: &Path, dynamic: bool) -> PathBuf {
    dir.join(if dynamic { "truth_manifest.csv" } else { "truth.csv" })
}

/// Writes `replica<r>.csv` for every replica plus the truth files.
/// Returns the truth path.
pub fn generate(spec: &DatasetSpec, out: &Path, reuse: bool) -> Result<PathBuf> {
    create_dir(out)?;
    let mut prov = Provenance::new("generate");
    prov.set_all("", spec.to_kv());
    let prov_path = out.join(provenance::FILE);

    let (_, truth0) = spec.generate(0)?;
    let dynamic = truth0.is_dynamic();
    let truth = truth_path(out, dynamic);
    let mut outputs: Vec<PathBuf> = (0..spec.replicas).map(|r| out.join(replica_file(r))).collect();
    outputs.push(truth.clone());
    if let GroundTruth::Dynamic(segs) = &truth0 {
        outputs.extend((0..segs.len()).map(|k| out.join(format!("truth_segment{k}.csv"))));
    }
    if reuse && prov.is_current(&prov_path, &outputs) {
        info!("generate: {} is current, skipping", out.display());
        return Ok(truth);
    }

    for r in 0..spec.replicas {
        let (data, t) = spec.generate(r)?;
        if t != truth0 {
            bail!("replica {r} has a different ground truth than replica 0");
        }
        write_dataset(&out.join(replica_file(r)), &data)?;
    }
    let written = write_truth(out, &truth0)?;
    debug_assert_eq!(written, truth);
    prov.write(&prov_path, &outputs)?;
    info!("generate: wrote {} replica(s) to {}", spec.replicas, out.display());
    Ok(truth)
}

/// Checkpoint companions: `<stem>.trace.csv` and `<stem>.provenance.txt`.
pub fn trace_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("trace.csv")
}

pub fn model_provenance_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("provenance.txt")
}

fn trace_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("epoch,stage,L_Recon,L_Pred,L_L1,L_Total\n");
    for (k, r) in history.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            k + 1,
            r.stage.name(),
            r.recon,
            opt(r.pred),
            opt(r.l1),
            r.total
        );
    }
    s
}

/// Trains on `data` and writes the checkpoint, its loss trace and provenance.
/// `config` resolves the model configuration once the number of series is known.
pub fn train(
    data_path: &Path,
    config: impl FnOnce(usize) -> Result<ModelConfig>,
    out: &Path,
    reuse: bool,
) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let data = read_dataset(data_path)?;
    let cfg = config(data.num_vars())?;
    let mut prov = Provenance::new("train");
    prov.input("data", data_path)?;
    prov.set_all("model.", cfg.to_kv());
    let prov_path = model_provenance_path(out);
    let trace = trace_path(out);
    let outputs = [out.to_path_buf(), trace.clone()];
    if reuse && prov.is_current(&prov_path, &outputs) {
        info!("train: {} is current, skipping", out.display());
        return Ok(());
    }

    let total = cfg.recon_epochs + cfg.joint_epochs;
    let step = (total / 10).max(1);
    let mut seen = 0usize;
    let label = out.display().to_string();
    let (model, history) = train_with(&data, &cfg, |r| {
        seen += 1;
        if seen % step == 0 || seen == total {
            info!("train {label}: epoch {seen}/{total} ({}) total loss {:.6}", r.stage.name(), r.total);
        }
    })?;
    checkpoint::save(&model, out)?;
    fs::write(&trace, trace_csv(&history)).with_context(|| format!("cannot write {}", trace.display()))?;
    prov.write(&prov_path, &outputs)?;
    Ok(())
}

/// Runs one discovery mode and writes its artifacts into `out`.
pub fn discover(
    model_path: &Path,
    data_path: Option<&Path>,
    mode: Mode,
    perturbation: &PerturbationConfig,
    smooth: Option<f64>,
    out: &Path,
    reuse: bool,
) -> Result<()> {
    create_dir(out)?;
    let mut prov = Provenance::new("discover");
    prov.input("model", model_path)?;
    prov.set("mode", mode.name());
    let summary = out.join(SUMMARY_FILE);
    let mut outputs = vec![summary.clone()];
    if mode == Mode::Perturb {
        let data_path = data_path.ok_or_else(|| usage("perturb mode needs --data"))?;
        prov.input("data", data_path)?;
        prov.set("strategy", perturbation.strategy)
            .set("repeats", perturbation.repeats)
            .set("noise_sigma", perturbation.noise_sigma)
            .set("seed", perturbation.seed);
        outputs.extend([out.join(STRENGTHS_FILE), out.join(EDGES_FILE)]);
        if let Some(s) = smooth {
            prov.set("smooth", s);
            outputs.push(out.join(EDGES_SMOOTHED_FILE));
        }
    }
    let prov_path = out.join(provenance::FILE);
    if reuse && prov.is_current(&prov_path, &outputs) {
        info!("discover: {} is current, skipping", out.display());
        return Ok(());
    }

    let model = checkpoint::load(model_path)?;
    match mode {
        Mode::Aggregate => {
            let m = aggregate_dependencies(&model)?;
            uncle_core::datagen::io::write_matrix(&summary, &m)?;
        }
        Mode::Perturb => {
            let data = read_dataset(data_path.expect("checked above"))?;
            let g = dynamic_graph(&model, &data, perturbation)?;
            write_strengths(&out.join(STRENGTHS_FILE), &g)?;
            uncle_core::datagen::io::write_matrix(&summary, &g.summarize(Summary::Mean, None)?)?;
            write_edge_series(&out.join(EDGES_FILE), &g, &data.var_names, None)?;
            if let Some(s) = smooth {
                write_edge_series(&out.join(EDGES_SMOOTHED_FILE), &g, &data.var_names, Some(s))?;
            }
        }
    }
    prov.write(&prov_path, &outputs)?;
    info!("discover: {} results in {}", mode.name(), out.display());
    Ok(())
}

/// Ground truth for evaluation: a static matrix or a segment manifest.
#[derive(Clone, Debug)]
pub enum TruthSource {
    Static(PathBuf),
    Segments(PathBuf),
}

impl TruthSource {
    pub fn path(&self) -> &Path {
        match self {
            TruthSource::Static(p) | TruthSource::Segments(p) => p,
        }
    }

    fn load(&self) -> Result<GroundTruth> {
        match self {
            TruthSource::Static(p) => {
                if is_manifest(p)? {
                    return Err(usage(format!(
                        "{} is a segment manifest; pass it with --segments",
                        p.display()
                    )));
                }
                Ok(GroundTruth::Static(read_matrix(p)?))
            }
            TruthSource::Segments(p) => {
                if !is_manifest(p)? {
                    return Err(usage(format!("{} is not a segment manifest; pass it with --truth", p.display())));
                }
                Ok(read_manifest(p)?)
            }
        }
    }
}

enum Prediction {
    Static(CausalMatrix),
    Dynamic(DynamicCausalGraph),
}

fn read_prediction(path: &Path) -> Result<Prediction> {
    let head = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    if head.starts_with(b"UNCLE-STRENGTHS") {
        Ok(Prediction::Dynamic(read_strengths(path)?))
    } else {
        Ok(Prediction::Static(read_matrix(path)?))
    }
}

fn check_shape(pred: usize, truth: usize, path: &Path) -> Result<()> {
    if pred != truth {
        bail!(
            "prediction {} has {pred} variables but the ground truth has {truth}",
            path.display()
        );
    }
    Ok(())
}

/// Scores one prediction file.
pub fn score(pred_path: &Path, truth: &GroundTruth) -> Result<EvalReport> {
    let report = match (read_prediction(pred_path)?, truth) {
        (Prediction::Static(m), GroundTruth::Static(t)) => {
            check_shape(m.n(), t.n(), pred_path)?;
            evaluate_static(&m, t)?
        }
        (Prediction::Static(m), dynamic) => {
            check_shape(m.n(), dynamic.num_vars(), pred_path)?;
            evaluate_constant(&m, dynamic)?
        }
        (Prediction::Dynamic(g), GroundTruth::Static(t)) => {
            check_shape(g.num_vars(), t.n(), pred_path)?;
            evaluate_static(&g.summarize(Summary::Mean, None)?, t)?
        }
        (Prediction::Dynamic(g), dynamic) => {
            check_shape(g.num_vars(), dynamic.num_vars(), pred_path)?;
            evaluate_dynamic(&g, dynamic)?
        }
    };
    Ok(report)
}

/// Evaluates every prediction against one truth. Writes `report.txt` (the
/// aggregate when there are several), `report_replica<k>.txt` per replica
/// when there are several, and `results.csv`. Returns the final report.
pub fn evaluate(
    preds: &[PathBuf],
    truth: &TruthSource,
    method: &str,
    dataset: &str,
    out: &Path,
    reuse: bool,
) -> Result<EvalReport> {
    if preds.is_empty() {
        return Err(usage("at least one --pred is required"));
    }
    create_dir(out)?;
    let mut prov = Provenance::new("eval");
    prov.set("method", method).set("dataset", dataset);
    for (k, p) in preds.iter().enumerate() {
        prov.input(&format!("pred{k}"), p)?;
    }
    prov.input("truth", truth.path())?;
    let report_path = out.join(REPORT_FILE);
    let results_path = out.join(RESULTS_FILE);
    let mut outputs = vec![report_path.clone(), results_path.clone()];
    if preds.len() > 1 {
        outputs.extend((0..preds.len()).map(|k| out.join(format!("report_replica{k}.txt"))));
    }
    let prov_path = out.join(provenance::FILE);
    if reuse && prov.is_current(&prov_path, &outputs) {
        info!("eval: {} is current, skipping", out.display());
        let text = fs::read_to_string(&report_path)?;
        return Ok(EvalReport::from_kv(&text)?);
    }

    let gt = truth.load()?;
    let mut reports = Vec::with_capacity(preds.len());
    for p in preds {
        reports.push(score(p, &gt).with_context(|| format!("evaluating {}", p.display()))?);
    }
    let report = if reports.len() == 1 {
        reports[0].clone()
    } else {
        for (k, r) in reports.iter().enumerate() {
            let path = out.join(format!("report_replica{k}.txt"));
            fs::write(&path, r.to_kv()).with_context(|| format!("cannot write {}", path.display()))?;
        }
        aggregate_replicas(&reports)?
    };
    fs::write(&report_path, report.to_kv()).with_context(|| format!("cannot write {}", report_path.display()))?;
    let table = format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row(method, dataset));
    fs::write(&results_path, table).with_context(|| format!("cannot write {}", results_path.display()))?;
    prov.write(&prov_path, &outputs)?;
    Ok(report)
}
