use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::perturb::{perturb_series, stream_seed, PerturbationConfig};
use crate::datagen::TimeSeriesDataset;
use crate::diffcore::Tensor;
use crate::error::{ensure, io_err, parse_err, Result};
use crate::graph::CausalMatrix;
use crate::model::UncleModel;

/// Per-step error gains, `strengths[t][j][i]` for `t` in `t_first..=t_last`
/// (1-based), where `j` is the perturbed cause and `i` the effect.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicCausalGraph {
    num_vars: usize,
    t_first: usize,
    strengths: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Summary {
    Mean,
    Sum,
}

impl std::str::FromStr for Summary {
    type Err = crate::UncleError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(crate::UncleError::Contract(format!("unknown summary mode {other:?}"))),
        }
    }
}

impl DynamicCausalGraph {
    pub fn new(num_vars: usize, t_first: usize, strengths: Vec<f64>) -> Result<Self> {
        let per_step = num_vars * num_vars;
        ensure!(num_vars >= 1 && t_first >= 1, "graph needs N >= 1 and t_first >= 1");
        ensure!(
            !strengths.is_empty() && strengths.len() % per_step == 0,
            "{} strengths do not fill whole {num_vars}x{num_vars} steps",
            strengths.len()
        );
        Ok(Self {
            num_vars,
            t_first,
            strengths,
        })
    }

    /// Same matrix at every step of `t_first..=t_last`.
    pub fn constant(m: &CausalMatrix, t_first: usize, t_last: usize) -> Result<Self> {
        ensure!(t_last >= t_first, "empty horizon");
        let strengths = m.as_slice().repeat(t_last + 1 - t_first);
        Self::new(m.n(), t_first, strengths)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn t_first(&self) -> usize {
        self.t_first
    }

    pub fn t_last(&self) -> usize {
        self.t_first + self.horizon() - 1
    }

    /// Number of time steps covered.
    pub fn horizon(&self) -> usize {
        self.strengths.len() / (self.num_vars * self.num_vars)
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    /// Strength of `cause -> effect` at 1-based time `t`.
    pub fn get(&self, t: usize, cause: usize, effect: usize) -> f64 {
        let n = self.num_vars;
        self.strengths[(t - self.t_first) * n * n + cause * n + effect]
    }

    pub fn at(&self, t: usize) -> CausalMatrix {
        let n = self.num_vars;
        let off = (t - self.t_first) * n * n;
        CausalMatrix::from_flat(n, self.strengths[off..off + n * n].to_vec()).expect("square slice")
    }

    /// Strength of one edge over the whole horizon.
    pub fn edge_series(&self, cause: usize, effect: usize) -> Vec<f64> {
        let n = self.num_vars;
        self.strengths.chunks_exact(n * n).map(|m| m[cause * n + effect]).collect()
    }

    /// Per-edge mean or sum over `window` (1-based, inclusive), or the whole
    /// horizon when `None`.
    pub fn summarize(&self, mode: Summary, window: Option<(usize, usize)>) -> Result<CausalMatrix> {
        let (a, b) = window.unwrap_or((self.t_first, self.t_last()));
        ensure!(a <= b, "empty window [{a}, {b}]");
        ensure!(
            a >= self.t_first && b <= self.t_last(),
            "window [{a}, {b}] outside horizon [{}, {}]",
            self.t_first,
            self.t_last()
        );
        let n = self.num_vars;
        let mut acc = vec![0.0; n * n];
        for t in a..=b {
            let off = (t - self.t_first) * n * n;
            for (s, v) in acc.iter_mut().zip(&self.strengths[off..off + n * n]) {
                *s += v;
            }
        }
        if mode == Summary::Mean {
            let len = (b + 1 - a) as f64;
            acc.iter_mut().for_each(|v| *v /= len);
        }
        CausalMatrix::from_flat(n, acc)
    }
}

/// Squared one-step errors `[N, T - L]` of forecasts made from `input`,
/// scored against the unperturbed normalized `target`.
fn squared_errors(model: &UncleModel, input: &Tensor, target: &Tensor) -> Result<Vec<f64>> {
    let (n, t) = (target.shape()[0], target.shape()[1]);
    let lag = model.config.lag;
    let pred = model.predict_next(input)?;
    let mut out = Vec::with_capacity(n * (t - lag));
    for (p_row, x_row) in pred.values().chunks_exact(t - lag).zip(target.values().chunks_exact(t)) {
        out.extend(p_row.iter().zip(&x_row[lag..]).map(|(p, x)| (p - x) * (p - x)));
    }
    Ok(out)
}

fn as_tensor(x: &TimeSeriesDataset) -> Result<Tensor> {
    Tensor::new(vec![x.num_vars(), x.steps()], x.values().to_vec())
}

/// Error-gain graph by temporal perturbation of each series in turn.
///
/// `x` is in raw units; it is normalized with the model's statistics before
/// perturbing and predicting. Series are processed in parallel, each with its
/// own random stream, so the result does not depend on scheduling.
pub fn dynamic_graph(model: &UncleModel, x: &TimeSeriesDataset, cfg: &PerturbationConfig) -> Result<DynamicCausalGraph> {
    cfg.validate()?;
    let n = model.num_vars();
    ensure!(x.num_vars() == n, "dataset has {} variables, model expects {n}", x.num_vars());
    let lag = model.config.lag;
    ensure!(x.steps() > lag, "need more than {lag} steps, got {}", x.steps());
    let horizon = x.steps() - lag;

    let norm = model.normalization.apply(x)?;
    let normalized = TimeSeriesDataset::from_rows(norm.values().chunks_exact(x.steps()).map(<[f64]>::to_vec).collect())?;
    let base = squared_errors(model, &norm, &norm)?;

    // gains[j] is [i][s] for cause j.
    let gains: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; n * horizon];
            for r in 0..cfg.repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, j, r));
                let pert = perturb_series(&normalized, j, cfg, &mut rng)?;
                let err = squared_errors(model, &as_tensor(&pert)?, &norm)?;
                for ((a, e), b) in acc.iter_mut().zip(&err).zip(&base) {
                    *a += (e - b).max(0.0);
                }
            }
            if cfg.repeats > 1 {
                let k = cfg.repeats as f64;
                acc.iter_mut().for_each(|v| *v /= k);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut strengths = vec![0.0; horizon * n * n];
    for (j, g) in gains.iter().enumerate() {
        for i in 0..n {
            for s in 0..horizon {
                strengths[s * n * n + j * n + i] = g[i * horizon + s];
            }
        }
    }
    DynamicCausalGraph::new(n, lag + 1, strengths)
}

/// Gaussian moving average truncated at `±4 sigma`; weights are renormalized
/// where the window runs past either end.
pub fn smooth_gaussian(series: &[f64], sigma: f64) -> Result<Vec<f64>> {
    ensure!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive, got {sigma}");
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let len = series.len() as isize;
    Ok((0..len)
        .map(|t| {
            let (mut num, mut den) = (0.0, 0.0);
            for (w, k) in kernel.iter().zip(-radius..=radius) {
                let s = t + k;
                if (0..len).contains(&s) {
                    num += w * series[s as usize];
                    den += w;
                }
            }
            num / den
        })
        .collect())
}

const STRENGTHS_MAGIC: &str = "UNCLE-STRENGTHS";

/// `strengths.bin`: one text line `UNCLE-STRENGTHS n=<N> t_first=<a> t_last=<b>`
/// followed by little-endian `f64` values in `[t][j][i]` order.
pub fn write_strengths(path: &Path, g: &DynamicCausalGraph) -> Result<()> {
    let mut bytes = format!("{STRENGTHS_MAGIC} n={} t_first={} t_last={}\n", g.num_vars, g.t_first, g.t_last()).into_bytes();
    bytes.reserve(g.strengths.len() * 8);
    for v in &g.strengths {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&bytes).map_err(io_err(path))
}

pub fn read_strengths(path: &Path) -> Result<DynamicCausalGraph> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| parse_err(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| parse_err(path, "header is not UTF-8"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(STRENGTHS_MAGIC) {
        return Err(parse_err(path, "not a strengths file"));
    }
    let (mut n, mut a, mut b) = (None, None, None);
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| parse_err(path, format!("bad header field {p:?}")))?;
        let v: usize = v.parse().map_err(|_| parse_err(path, format!("bad header value {p:?}")))?;
        match k {
            "n" => n = Some(v),
            "t_first" => a = Some(v),
            "t_last" => b = Some(v),
            _ => return Err(parse_err(path, format!("unknown header field {k:?}"))),
        }
    }
    let (n, a, b) = match (n, a, b) {
        (Some(n), Some(a), Some(b)) if b >= a => (n, a, b),
        _ => return Err(parse_err(path, "incomplete header")),
    };
    let body = &bytes[nl + 1..];
    let expected = (b + 1 - a) * n * n;
    if body.len() != expected * 8 {
        return Err(parse_err(path, format!("expected {expected} values, found {} bytes", body.len())));
    }
    let strengths = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    DynamicCausalGraph::new(n, a, strengths).map_err(|e| parse_err(path, e.to_string()))
}

/// Per-edge time series for plotting: column `t`, then one column per
/// off-diagonal edge named `cause->effect`. With `sigma`, each column is
/// Gaussian-smoothed first.
pub fn write_edge_series(path: &Path, g: &DynamicCausalGraph, names: &[String], sigma: Option<f64>) -> Result<()> {
    let n = g.num_vars;
    ensure!(names.len() == n, "{} names for {n} variables", names.len());
    let mut header = vec!["t".to_string()];
    let mut cols = Vec::new();
    for j in 0..n {
        for i in (0..n).filter(|&i| i != j) {
            header.push(format!("{}->{}", names[j], names[i]));
            let s = g.edge_series(j, i);
            cols.push(match sigma {
                Some(sig) => smooth_gaussian(&s, sig)?,
                None => s,
            });
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for s in 0..g.horizon() {
        out.push_str(&(g.t_first + s).to_string());
        for c in &cols {
            out.push(',');
            out.push_str(&c[s].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}
