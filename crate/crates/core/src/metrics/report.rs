use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Result, UncleError};

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentScore {
    pub index: usize,
    pub t_start: usize,
    pub t_end: usize,
    pub auroc: f64,
    pub auprc: f64,
    pub acc: f64,
}

/// 95% confidence half-widths across replicas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ci95 {
    pub auroc: f64,
    pub auprc: f64,
    pub acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub auroc: f64,
    pub auprc: f64,
    pub acc: f64,
    /// Accuracy-maximizing threshold; absent for per-segment means.
    pub threshold: Option<f64>,
    pub per_segment: Vec<SegmentScore>,
    pub skipped_segments: Vec<usize>,
    pub replicas: usize,
    pub ci95: Option<Ci95>,
}

impl EvalReport {
    pub fn single(auroc: f64, auprc: f64, acc: f64, threshold: Option<f64>) -> Self {
        Self {
            auroc,
            auprc,
            acc,
            threshold,
            per_segment: Vec::new(),
            skipped_segments: Vec::new(),
            replicas: 1,
            ci95: None,
        }
    }

    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "auroc={}", self.auroc);
        let _ = writeln!(s, "auprc={}", self.auprc);
        let _ = writeln!(s, "acc={}", self.acc);
        if let Some(t) = self.threshold {
            let _ = writeln!(s, "threshold={t}");
        }
        let _ = writeln!(s, "replicas={}", self.replicas);
        if let Some(ci) = self.ci95 {
            let _ = writeln!(s, "auroc_ci95={}", ci.auroc);
            let _ = writeln!(s, "auprc_ci95={}", ci.auprc);
            let _ = writeln!(s, "acc_ci95={}", ci.acc);
        }
        if !self.per_segment.is_empty() || !self.skipped_segments.is_empty() {
            let _ = writeln!(s, "segments={}", self.per_segment.len());
        }
        for seg in &self.per_segment {
            let k = seg.index;
            let _ = writeln!(s, "segment{k}_range={}-{}", seg.t_start, seg.t_end);
            let _ = writeln!(s, "segment{k}_auroc={}", seg.auroc);
            let _ = writeln!(s, "segment{k}_auprc={}", seg.auprc);
            let _ = writeln!(s, "segment{k}_acc={}", seg.acc);
        }
        if !self.skipped_segments.is_empty() {
            let list: Vec<String> = self.skipped_segments.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "skipped_segments={}", list.join(";"));
        }
        s
    }

    /// Parses the output of [`to_kv`](Self::to_kv).
    pub fn from_kv(text: &str) -> Result<Self> {
        let bad = |m: String| UncleError::Contract(format!("malformed report: {m}"));
        let mut r = Self::single(f64::NAN, f64::NAN, f64::NAN, None);
        let mut ci = Ci95 {
            auroc: f64::NAN,
            auprc: f64::NAN,
            acc: f64::NAN,
        };
        let mut has_ci = false;
        let mut segs: Vec<SegmentScore> = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line {line:?}")))?;
            let num = || v.parse::<f64>().map_err(|_| bad(format!("value of {k}")));
            match k {
                "auroc" => r.auroc = num()?,
                "auprc" => r.auprc = num()?,
                "acc" => r.acc = num()?,
                "threshold" => r.threshold = Some(num()?),
                "replicas" => r.replicas = v.parse().map_err(|_| bad("replicas".into()))?,
                "auroc_ci95" => (ci.auroc, has_ci) = (num()?, true),
                "auprc_ci95" => (ci.auprc, has_ci) = (num()?, true),
                "acc_ci95" => (ci.acc, has_ci) = (num()?, true),
                "segments" => {}
                "skipped_segments" => {
                    r.skipped_segments = v
                        .split(';')
                        .map(|x| x.parse().map_err(|_| bad("skipped_segments".into())))
                        .collect::<Result<_>>()?
                }
                _ => {
                    let rest = k.strip_prefix("segment").ok_or_else(|| bad(format!("unknown key {k}")))?;
                    let (idx, field) = rest.split_once('_').ok_or_else(|| bad(format!("unknown key {k}")))?;
                    let idx: usize = idx.parse().map_err(|_| bad(format!("unknown key {k}")))?;
                    if segs.last().map_or(true, |s| s.index != idx) {
                        segs.push(SegmentScore {
                            index: idx,
                            t_start: 0,
                            t_end: 0,
                            auroc: f64::NAN,
                            auprc: f64::NAN,
                            acc: f64::NAN,
                        });
                    }
                    let seg = segs.last_mut().expect("pushed above");
                    match field {
                        "range" => {
                            let (a, b) = v.split_once('-').ok_or_else(|| bad(format!("range {v}")))?;
                            seg.t_start = a.parse().map_err(|_| bad(format!("range {v}")))?;
                            seg.t_end = b.parse().map_err(|_| bad(format!("range {v}")))?;
                        }
                        "auroc" => seg.auroc = num()?,
                        "auprc" => seg.auprc = num()?,
                        "acc" => seg.acc = num()?,
                        _ => return Err(bad(format!("unknown key {k}"))),
                    }
                }
            }
        }
        if r.auroc.is_nan() || r.auprc.is_nan() || r.acc.is_nan() {
            return Err(bad("missing auroc, auprc or acc".into()));
        }
        r.ci95 = has_ci.then_some(ci);
        r.per_segment = segs;
        Ok(r)
    }

    pub const CSV_HEADER: &'static str = "method,dataset,replicas,auroc,auroc_ci95,auprc,auprc_ci95,acc,acc_ci95";

    /// One row matching [`CSV_HEADER`](Self::CSV_HEADER); CI columns are 0
    /// for a single replica.
    pub fn csv_row(&self, method: &str, dataset: &str) -> String {
        let ci = self.ci95.unwrap_or(Ci95 {
            auroc: 0.0,
            auprc: 0.0,
            acc: 0.0,
        });
        format!(
            "{method},{dataset},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.replicas, self.auroc, ci.auroc, self.auprc, ci.auprc, self.acc, ci.acc
        )
    }
}

/// Two-sided 95% half-width `t_{0.975, n-1} * s / sqrt(n)`; 0 for one value.
fn ci_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof").inverse_cdf(0.975);
    t * var.sqrt() / (n as f64).sqrt()
}

/// Mean of each metric with a 95% t-interval half-width.
pub fn aggregate_replicas(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(UncleError::Contract("no reports to aggregate".into()));
    }
    let col = |f: fn(&EvalReport) -> f64| reports.iter().map(f).collect::<Vec<f64>>();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, p, c) = (col(|r| r.auroc), col(|r| r.auprc), col(|r| r.acc));
    let mut out = EvalReport::single(mean(&a), mean(&p), mean(&c), None);
    out.replicas = reports.len();
    out.ci95 = Some(Ci95 {
        auroc: ci_half_width(&a),
        auprc: ci_half_width(&p),
        acc: ci_half_width(&c),
    });
    Ok(out)
}
