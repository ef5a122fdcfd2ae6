use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::tcn::{BoundTcn, Tcn};
use crate::datagen::TimeSeriesDataset;
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{ensure, Result, UncleError};

/// Per-variable z-score statistics captured from the training series.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn fit(data: &TimeSeriesDataset) -> Self {
        let t = data.steps() as f64;
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for v in 0..data.num_vars() {
            let row = data.row(v);
            let m = row.iter().sum::<f64>() / t;
            let var = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / t;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s > 1e-12 { s } else { 1.0 });
        }
        Self { mean, std }
    }

    /// Normalized `[N, T]` tensor.
    pub fn apply(&self, data: &TimeSeriesDataset) -> Result<Tensor> {
        ensure!(
            data.num_vars() == self.mean.len(),
            "dataset has {} variables, normalization expects {}",
            data.num_vars(),
            self.mean.len()
        );
        let t = data.steps();
        let mut values = Vec::with_capacity(data.values().len());
        for v in 0..data.num_vars() {
            values.extend(data.row(v).iter().map(|x| (x - self.mean[v]) / self.std[v]));
        }
        Tensor::new(vec![data.num_vars(), t], values)
    }
}

/// Loss components of one forward pass. `total = recon + alpha * pred + l1`,
/// where `l1` already includes the `lambda1` factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub recon: f64,
    pub pred: f64,
    pub l1: f64,
    pub total: f64,
}

/// Uncoupler and Recoupler TCNs plus the `[C, L, N, N]` dependency tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct UncleModel {
    pub config: ModelConfig,
    pub normalization: Normalization,
    pub(crate) uncoupler: Tcn,
    pub(crate) recoupler: Tcn,
    pub(crate) dependencies: Option<Tensor>,
}

impl UncleModel {
    /// Randomly initialized model; all draws come from `config.seed`.
    pub fn new(config: ModelConfig, normalization: Normalization) -> Result<Self> {
        config.validate()?;
        ensure!(
            normalization.mean.len() == config.num_vars,
            "normalization covers {} variables, config has {}",
            normalization.mean.len(),
            config.num_vars
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let copies = (!config.share_params).then_some(config.num_vars);
        let c = config.channels;
        let uncoupler = Tcn::init(&mut rng, copies, 1, c, None, config.kernel_size, config.num_blocks);
        let recoupler = Tcn::init(&mut rng, copies, c, c, Some(1), config.kernel_size, config.num_blocks);
        let dependencies = if config.disable_dependency_matrices {
            None
        } else {
            let n = config.num_vars;
            let len = c * config.lag * n * n;
            let vals = (0..len).map(|_| rng.gen_range(-0.01..0.01)).collect();
            Some(Tensor::new(vec![c, config.lag, n, n], vals)?.with_grad())
        };
        Ok(Self {
            config,
            normalization,
            uncoupler,
            recoupler,
            dependencies,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.config.num_vars
    }

    /// `[C, L, N, N]` with `psi[c, l, target, source]`; `None` when disabled.
    pub fn dependencies(&self) -> Option<&Tensor> {
        self.dependencies.as_ref()
    }

    pub fn dependencies_mut(&mut self) -> Option<&mut Tensor> {
        self.dependencies.as_mut()
    }

    pub fn uncoupler(&self) -> &Tcn {
        &self.uncoupler
    }

    pub fn recoupler(&self) -> &Tcn {
        &self.recoupler
    }

    /// Number of TCN weights (Uncoupler plus Recoupler).
    pub fn tcn_param_count(&self) -> usize {
        self.uncoupler.num_params() + self.recoupler.num_params()
    }

    /// Every parameter in declaration order: Uncoupler, Recoupler, dependencies.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.uncoupler.params();
        out.extend(self.recoupler.params());
        out.extend(self.dependencies.as_ref());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.uncoupler.params_mut();
        out.extend(self.recoupler.params_mut());
        out.extend(self.dependencies.as_mut());
        out
    }

    /// Index where dependency parameters start in [`params`](Self::params).
    pub(crate) fn tcn_param_tensors(&self) -> usize {
        self.uncoupler.params().len() + self.recoupler.params().len()
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> Result<BoundModel> {
        let vars: Vec<Var> = self.params().into_iter().map(|p| tape.leaf(p)).collect();
        self.bind_vars(tape, &vars)
    }

    /// Binds to leaves already on `tape`, one per [`params`](Self::params) entry.
    pub(crate) fn bind_vars(&self, tape: &mut Tape, vars: &[Var]) -> Result<BoundModel> {
        ensure!(
            vars.len() == self.params().len(),
            "{} vars for {} parameter tensors",
            vars.len(),
            self.params().len()
        );
        let mut it = vars.iter().copied();
        let uncoupler = self.uncoupler.bind(&mut it);
        let recoupler = self.recoupler.bind(&mut it);
        let (psi, psi_trainable) = match it.next() {
            Some(p) => (p, true),
            None => {
                // Shift-only prediction: identity on the most recent lag.
                let (c, l, n) = (self.config.channels, self.config.lag, self.config.num_vars);
                let mut vals = vec![0.0; c * l * n * n];
                for ch in 0..c {
                    for i in 0..n {
                        vals[(ch * l) * n * n + i * n + i] = 1.0;
                    }
                }
                (tape.constant(vec![c, l, n, n], vals)?, false)
            }
        };
        Ok(BoundModel {
            uncoupler,
            recoupler,
            psi,
            psi_trainable,
            dropout: self.config.dropout_rate,
        })
    }

    fn check_series(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (n, t) = match x.shape() {
            &[n, t] => (n, t),
            s => return Err(UncleError::Contract(format!("series must be [N, T], got {s:?}"))),
        };
        ensure!(n == self.config.num_vars, "series has {n} variables, model expects {}", self.config.num_vars);
        ensure!(t >= 1, "series is empty");
        ensure!(x.is_finite(), "series contains non-finite values");
        Ok((n, t))
    }

    fn check_latent(&self, z: &Tensor) -> Result<()> {
        match z.shape() {
            &[n, c, _] if n == self.config.num_vars && c == self.config.channels => Ok(()),
            s => Err(UncleError::Contract(format!(
                "latent must be [{}, {}, T], got {s:?}",
                self.config.num_vars, self.config.channels
            ))),
        }
    }

    /// Uncoupler map of a normalized `[N, T]` series to latents `[N, C, T]`.
    pub fn uncouple(&self, x: &Tensor) -> Result<Tensor> {
        let (n, t) = self.check_series(x)?;
        let mut tape = Tape::new(0);
        let b = self.bind(&mut tape)?;
        let xv = tape.constant(vec![n, 1, t], x.values().to_vec())?;
        let z = b.uncouple(&mut tape, xv, false)?;
        Ok(tape.to_tensor(z))
    }

    /// Recoupler map of latents `[N, C, T]` back to a `[N, T]` series.
    pub fn recouple(&self, z: &Tensor) -> Result<Tensor> {
        self.check_latent(z)?;
        let mut tape = Tape::new(0);
        let b = self.bind(&mut tape)?;
        let zv = tape.leaf(z);
        let y = b.recouple(&mut tape, zv, false)?;
        let t = z.shape()[2];
        tape.to_tensor(y).reshape(vec![self.config.num_vars, t])
    }

    /// One-step latent prediction `[N, C, T - L]`; position `s` is time `s + L`.
    pub fn predict_latent(&self, z: &Tensor) -> Result<Tensor> {
        self.check_latent(z)?;
        ensure!(z.shape()[2] > self.config.lag, "need more than {} steps", self.config.lag);
        let mut tape = Tape::new(0);
        let b = self.bind(&mut tape)?;
        let zv = tape.leaf(z);
        let zh = b.predict_latent(&mut tape, zv)?;
        Ok(tape.to_tensor(zh))
    }

    /// One-step-ahead forecasts `[N, T - L]` aligned to targets `x[:, L..T]`.
    pub fn predict_next(&self, x: &Tensor) -> Result<Tensor> {
        let (n, t) = self.check_series(x)?;
        ensure!(t > self.config.lag, "need more than {} steps, got {t}", self.config.lag);
        let mut tape = Tape::new(0);
        let b = self.bind(&mut tape)?;
        let xv = tape.constant(vec![n, 1, t], x.values().to_vec())?;
        let z = b.uncouple(&mut tape, xv, false)?;
        let zh = b.predict_latent(&mut tape, z)?;
        let xh = b.recouple(&mut tape, zh, false)?;
        tape.to_tensor(xh).reshape(vec![n, t - self.config.lag])
    }

    /// Records the eval-mode total loss on `x` with the parameters taken from
    /// `vars` (one leaf per [`params`](Self::params) entry). Used for
    /// gradient checks against finite differences.
    pub fn record_total_loss(&self, tape: &mut Tape, vars: &[Var], x: &Tensor) -> Result<Var> {
        let bound = self.bind_vars(tape, vars)?;
        Ok(bound.losses(tape, x, &self.config, false, true)?.total)
    }

    /// Eval-mode loss decomposition on a normalized series.
    pub fn total_loss(&self, x: &Tensor) -> Result<LossTerms> {
        self.check_series(x)?;
        let mut tape = Tape::new(0);
        let b = self.bind(&mut tape)?;
        let vars = b.losses(&mut tape, x, &self.config, false, true)?;
        Ok(vars.terms(&tape))
    }
}

/// Model parameters bound as leaves on one tape.
pub(crate) struct BoundModel {
    uncoupler: BoundTcn,
    recoupler: BoundTcn,
    psi: Var,
    psi_trainable: bool,
    dropout: f64,
}

pub(crate) struct LossVars {
    pub recon: Var,
    pub pred: Option<Var>,
    pub l1: Option<Var>,
    pub total: Var,
}

impl LossVars {
    pub fn terms(&self, tape: &Tape) -> LossTerms {
        LossTerms {
            recon: tape.item(self.recon),
            pred: self.pred.map_or(0.0, |v| tape.item(v)),
            l1: self.l1.map_or(0.0, |v| tape.item(v)),
            total: tape.item(self.total),
        }
    }
}

impl BoundModel {
    /// Trainable leaves in [`UncleModel::params`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.uncoupler.vars();
        out.extend(self.recoupler.vars());
        if self.psi_trainable {
            out.push(self.psi);
        }
        out
    }

    pub fn uncouple(&self, tape: &mut Tape, x: Var, training: bool) -> Result<Var> {
        self.uncoupler.forward(tape, x, self.dropout, training)
    }

    pub fn recouple(&self, tape: &mut Tape, z: Var, training: bool) -> Result<Var> {
        self.recoupler.forward(tape, z, self.dropout, training)
    }

    pub fn predict_latent(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let mixed = tape.lagged_mix(self.psi, z)?;
        Ok(tape.relu(mixed))
    }

    /// Records the loss graph. Without `with_prediction` only the
    /// reconstruction term is built (pretraining).
    pub fn losses(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        config: &ModelConfig,
        training: bool,
        with_prediction: bool,
    ) -> Result<LossVars> {
        let (n, t) = (x.shape()[0], x.shape()[1]);
        let lag = config.lag;
        let xv = tape.constant(vec![n, 1, t], x.values().to_vec())?;
        let z = self.uncouple(tape, xv, training)?;
        let recon_out = self.recouple(tape, z, training)?;
        let recon = tape.mse(recon_out, xv)?;
        if !with_prediction {
            return Ok(LossVars {
                recon,
                pred: None,
                l1: None,
                total: recon,
            });
        }
        ensure!(t > lag, "need more than {lag} steps, got {t}");
        let zh = self.predict_latent(tape, z)?;
        let pred_out = self.recouple(tape, zh, training)?;
        let mut target = Vec::with_capacity(n * (t - lag));
        for row in x.values().chunks_exact(t) {
            target.extend_from_slice(&row[lag..]);
        }
        let target = tape.constant(vec![n, 1, t - lag], target)?;
        let pred = tape.mse(pred_out, target)?;
        let weighted_pred = tape.scale(pred, config.alpha);
        let mut total = tape.add(recon, weighted_pred)?;
        let l1 = if self.psi_trainable {
            let raw = tape.l1_sum(&[self.psi]);
            let l1 = tape.scale(raw, config.lambda1);
            total = tape.add(total, l1)?;
            Some(l1)
        } else {
            None
        };
        Ok(LossVars {
            recon,
            pred: Some(pred),
            l1,
            total,
        })
    }
}
