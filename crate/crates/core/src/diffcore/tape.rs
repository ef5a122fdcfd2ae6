//! Append-only computation graph with reverse-mode differentiation.
//!
//! Every op evaluates eagerly and records its inputs; [`Tape::backward`]
//! replays the record in reverse. Nodes are appended in topological order, so
//! a reverse index sweep is a valid reverse topological traversal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kernels::{self, ConvGeometry};
use super::tensor::Tensor;
use crate::error::{ensure, Result, UncleError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeometry,
        batch: usize,
        per_series_weights: bool,
    },
    Relu(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Dropout { input: Var, mask: Vec<f64> },
    Matvec { matrix: Var, vector: Var },
    LaggedMix { psi: Var, z: Var, lags: usize },
    Mse { pred: Var, target: Var },
    L1Sum(Vec<Var>),
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// A single-threaded computation graph.
pub struct Tape {
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Tape {
    /// `seed` drives dropout masks drawn on this tape.
    pub fn new(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Snapshot of a node as a detached tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf copying `t`; it receives gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        ensure!(numel == values.len(), "constant of shape {:?} given {} values", shape, values.len());
        Ok(self.push(shape, values, Op::Leaf, false))
    }

    /// Dilated causal convolution over `[C_in, T]` or a batch `[B, C_in, T]`.
    ///
    /// `weight` is `[C_out, C_in, K]` shared by every series, or
    /// `[B, C_out, C_in, K]` with one kernel per series; `bias` is `[C_out]`
    /// or `[B, C_out]` correspondingly. The input is implicitly left-padded
    /// with `(K - 1) * dilation` zeros so the output keeps length `T`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, dilation: usize) -> Result<Var> {
        ensure!(dilation >= 1, "dilation must be positive");
        let in_shape = self.shape(input).to_vec();
        let w_shape = self.shape(weight).to_vec();
        let b_shape = self.shape(bias).to_vec();
        let (batch, cin, steps, batched) = match in_shape.as_slice() {
            &[c, t] => (1, c, t, false),
            &[b, c, t] => (b, c, t, true),
            s => return Err(UncleError::Contract(format!("conv1d input must be rank 2 or 3, got {s:?}"))),
        };
        let (per_series, cout, wcin, taps) = match w_shape.as_slice() {
            &[o, i, k] => (false, o, i, k),
            &[b, o, i, k] if b == batch => (true, o, i, k),
            s => return Err(UncleError::Contract(format!("conv1d weight shape {s:?} incompatible with batch {batch}"))),
        };
        ensure!(taps >= 1, "kernel size must be at least 1");
        ensure!(
            wcin == cin,
            "conv1d weight expects {wcin} input channels, input has {cin}"
        );
        let expected_bias: Vec<usize> = if per_series { vec![batch, cout] } else { vec![cout] };
        ensure!(b_shape == expected_bias, "conv1d bias shape {:?}, expected {:?}", b_shape, expected_bias);

        let geom = ConvGeometry {
            in_channels: cin,
            out_channels: cout,
            taps,
            dilation,
            steps,
        };
        let mut out = vec![0.0; batch * geom.output_len()];
        {
            let x = self.value(input);
            let w = self.value(weight);
            let b = self.value(bias);
            out.par_chunks_mut(geom.output_len().max(1))
                .enumerate()
                .for_each(|(s, o)| {
                    let (ws, bs) = if per_series {
                        (
                            &w[s * geom.weight_len()..(s + 1) * geom.weight_len()],
                            &b[s * cout..(s + 1) * cout],
                        )
                    } else {
                        (w, b)
                    };
                    kernels::conv_forward(&geom, &x[s * geom.input_len()..(s + 1) * geom.input_len()], ws, bs, o);
                });
        }
        let shape = if batched { vec![batch, cout, steps] } else { vec![cout, steps] };
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            shape,
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                geom,
                batch,
                per_series_weights: per_series,
            },
            needs,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(shape, value, Op::Relu(x), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        ensure!(self.shape(a) == self.shape(b), "add: shapes {:?} and {:?} differ", self.shape(a), self.shape(b));
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(shape, value, Op::Add(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        ensure!(self.shape(a) == self.shape(b), "mul: shapes {:?} and {:?} differ", self.shape(a), self.shape(b));
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(shape, value, Op::Mul(a, b), needs))
    }

    /// Multiplication by a fixed scalar.
    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).iter().map(|v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        self.push(shape, value, Op::Scale(x, factor), needs)
    }

    /// Inverted dropout. In eval mode (or at rate 0) this returns `x` itself.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool) -> Result<Var> {
        ensure!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1), got {rate}");
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let value = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(x);
        Ok(self.push(shape, value, Op::Dropout { input: x, mask }, needs))
    }

    /// `[N, M] x [M] -> [N]`.
    pub fn matvec(&mut self, matrix: Var, vector: Var) -> Result<Var> {
        let (rows, cols) = match self.shape(matrix) {
            &[r, c] => (r, c),
            s => return Err(UncleError::Contract(format!("matvec matrix must be rank 2, got {s:?}"))),
        };
        ensure!(self.shape(vector) == [cols], "matvec: matrix has {cols} columns, vector shape {:?}", self.shape(vector));
        let m = self.value(matrix);
        let v = self.value(vector);
        let value = m.chunks_exact(cols.max(1)).take(rows).map(|row| kernels::dot(row, v)).collect();
        let needs = self.needs(matrix) || self.needs(vector);
        Ok(self.push(vec![rows], value, Op::Matvec { matrix, vector }, needs))
    }

    /// Channel-wise lagged mixing across series, the batched form of
    /// [`matvec`](Self::matvec) used for latent auto-regression.
    ///
    /// `psi` is `[C, L, N, N]` and `z` is `[N, C, T]`. The output is
    /// `[N, C, T - L]` where position `s` holds the prediction for time `s + L`:
    /// `out[:, c, s] = sum_l psi[c, l] . z[:, c, s + L - 1 - l]`.
    pub fn lagged_mix(&mut self, psi: Var, z: Var) -> Result<Var> {
        let (c, lags, n) = match self.shape(psi) {
            &[c, l, n, m] if n == m => (c, l, n),
            s => return Err(UncleError::Contract(format!("dependency tensor must be [C, L, N, N], got {s:?}"))),
        };
        let steps = match self.shape(z) {
            &[zn, zc, t] if zn == n && zc == c => t,
            s => return Err(UncleError::Contract(format!("latent shape {s:?} does not match dependency tensor [{c}, {lags}, {n}, {n}]"))),
        };
        ensure!(lags >= 1, "lag must be at least 1");
        ensure!(steps > lags, "need more than {lags} time steps, got {steps}");
        let out_steps = steps - lags;
        let p = self.value(psi);
        let zv = self.value(z);
        let mut out = vec![0.0; n * c * out_steps];
        for ch in 0..c {
            for l in 0..lags {
                let offset = lags - 1 - l;
                let mat = &p[(ch * lags + l) * n * n..(ch * lags + l + 1) * n * n];
                for row in 0..n {
                    let dst = &mut out[(row * c + ch) * out_steps..(row * c + ch + 1) * out_steps];
                    for col in 0..n {
                        let coef = mat[row * n + col];
                        if coef != 0.0 {
                            let src = &zv[(col * c + ch) * steps + offset..(col * c + ch) * steps + offset + out_steps];
                            kernels::axpy(coef, src, dst);
                        }
                    }
                }
            }
        }
        let needs = self.needs(psi) || self.needs(z);
        Ok(self.push(vec![n, c, out_steps], out, Op::LaggedMix { psi, z, lags }, needs))
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        ensure!(
            self.shape(pred) == self.shape(target),
            "mse: prediction shape {:?} vs target {:?}",
            self.shape(pred),
            self.shape(target)
        );
        let p = self.value(pred);
        let t = self.value(target);
        ensure!(!p.is_empty(), "mse of empty tensors");
        let total: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let value = vec![total / p.len() as f64];
        let needs = self.needs(pred) || self.needs(target);
        Ok(self.push(vec![], value, Op::Mse { pred, target }, needs))
    }

    /// Sum of absolute values across all listed tensors.
    pub fn l1_sum(&mut self, inputs: &[Var]) -> Var {
        let total: f64 = inputs.iter().flat_map(|&v| self.value(v)).map(|x| x.abs()).sum();
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(vec![], vec![total], Op::L1Sum(inputs.to_vec()), needs)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        ensure!(
            self.value(loss).len() == 1,
            "backward requires a scalar loss, got shape {:?}",
            self.shape(loss)
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Relu(x) => {
                    if self.needs(*x) {
                        let d: Vec<f64> = g
                            .iter()
                            .zip(&node.value)
                            .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                            .collect();
                        accumulate(&mut grads, *x, &d);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, &g);
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, &g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let d: Vec<f64> = g.iter().zip(self.value(*b)).map(|(g, y)| g * y).collect();
                        accumulate(&mut grads, *a, &d);
                    }
                    if self.needs(*b) {
                        let d: Vec<f64> = g.iter().zip(self.value(*a)).map(|(g, x)| g * x).collect();
                        accumulate(&mut grads, *b, &d);
                    }
                }
                Op::Scale(x, f) => {
                    if self.needs(*x) {
                        let d: Vec<f64> = g.iter().map(|g| g * f).collect();
                        accumulate(&mut grads, *x, &d);
                    }
                }
                Op::Dropout { input, mask } => {
                    if self.needs(*input) {
                        let d: Vec<f64> = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                        accumulate(&mut grads, *input, &d);
                    }
                }
                Op::Matvec { matrix, vector } => {
                    let cols = self.shape(*vector)[0];
                    if self.needs(*matrix) {
                        let v = self.value(*vector);
                        let d: Vec<f64> = g.iter().flat_map(|gr| v.iter().map(move |x| gr * x)).collect();
                        accumulate(&mut grads, *matrix, &d);
                    }
                    if self.needs(*vector) {
                        let m = self.value(*matrix);
                        let mut d = vec![0.0; cols];
                        for (row, gr) in m.chunks_exact(cols.max(1)).zip(&g) {
                            kernels::axpy(*gr, row, &mut d);
                        }
                        accumulate(&mut grads, *vector, &d);
                    }
                }
                Op::LaggedMix { psi, z, lags } => {
                    self.lagged_mix_backward(&mut grads, &g, *psi, *z, *lags);
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred);
                    let t = self.value(*target);
                    let scale = 2.0 * g[0] / p.len() as f64;
                    if self.needs(*pred) {
                        let d: Vec<f64> = p.iter().zip(t).map(|(a, b)| scale * (a - b)).collect();
                        accumulate(&mut grads, *pred, &d);
                    }
                    if self.needs(*target) {
                        let d: Vec<f64> = p.iter().zip(t).map(|(a, b)| scale * (b - a)).collect();
                        accumulate(&mut grads, *target, &d);
                    }
                }
                Op::L1Sum(inputs) => {
                    for &v in inputs {
                        if self.needs(v) {
                            let d: Vec<f64> = self.value(v).iter().map(|x| g[0] * sign(*x)).collect();
                            accumulate(&mut grads, v, &d);
                        }
                    }
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    geom,
                    batch,
                    per_series_weights,
                } => {
                    self.conv_backward(&mut grads, &g, *input, *weight, *bias, geom, *batch, *per_series_weights);
                }
            }
            // Keep leaf gradients; interior ones are no longer needed.
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        // The loss itself is a leaf only in degenerate graphs; handled above.
        Ok(Gradients { grads })
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        grads: &mut [Option<Vec<f64>>],
        g: &[f64],
        input: Var,
        weight: Var,
        bias: Var,
        geom: &ConvGeometry,
        batch: usize,
        per_series: bool,
    ) {
        let x = self.value(input);
        let w = self.value(weight);
        let wl = geom.weight_len();
        let (il, ol) = (geom.input_len(), geom.output_len());
        let cout = geom.out_channels;

        if self.needs(input) {
            let mut d = vec![0.0; x.len()];
            d.par_chunks_mut(il.max(1)).enumerate().for_each(|(s, dst)| {
                let ws = if per_series { &w[s * wl..(s + 1) * wl] } else { w };
                kernels::conv_backward_input(geom, &g[s * ol..(s + 1) * ol], ws, dst);
            });
            accumulate(grads, input, &d);
        }
        if self.needs(weight) || self.needs(bias) {
            // Per-series partials, reduced in series order for determinism.
            let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..batch)
                .into_par_iter()
                .map(|s| {
                    let mut gw = vec![0.0; wl];
                    let mut gb = vec![0.0; cout];
                    kernels::conv_backward_params(geom, &g[s * ol..(s + 1) * ol], &x[s * il..(s + 1) * il], &mut gw, &mut gb);
                    (gw, gb)
                })
                .collect();
            let (dw, db) = if per_series {
                let mut dw = Vec::with_capacity(batch * wl);
                let mut db = Vec::with_capacity(batch * cout);
                for (gw, gb) in partials {
                    dw.extend(gw);
                    db.extend(gb);
                }
                (dw, db)
            } else {
                let mut dw = vec![0.0; wl];
                let mut db = vec![0.0; cout];
                for (gw, gb) in partials {
                    dw.iter_mut().zip(gw).for_each(|(a, b)| *a += b);
                    db.iter_mut().zip(gb).for_each(|(a, b)| *a += b);
                }
                (dw, db)
            };
            if self.needs(weight) {
                accumulate(grads, weight, &dw);
            }
            if self.needs(bias) {
                accumulate(grads, bias, &db);
            }
        }
    }

    fn lagged_mix_backward(&self, grads: &mut [Option<Vec<f64>>], g: &[f64], psi: Var, z: Var, lags: usize) {
        let (c, n) = {
            let s = self.shape(psi);
            (s[0], s[2])
        };
        let steps = self.shape(z)[2];
        let out_steps = steps - lags;
        let p = self.value(psi);
        let zv = self.value(z);
        if self.needs(psi) {
            let mut d = vec![0.0; p.len()];
            for ch in 0..c {
                for l in 0..lags {
                    let offset = lags - 1 - l;
                    for row in 0..n {
                        let gr = &g[(row * c + ch) * out_steps..(row * c + ch + 1) * out_steps];
                        for col in 0..n {
                            let src = &zv[(col * c + ch) * steps + offset..(col * c + ch) * steps + offset + out_steps];
                            d[((ch * lags + l) * n + row) * n + col] = kernels::dot(gr, src);
                        }
                    }
                }
            }
            accumulate(grads, psi, &d);
        }
        if self.needs(z) {
            let mut d = vec![0.0; zv.len()];
            for ch in 0..c {
                for l in 0..lags {
                    let offset = lags - 1 - l;
                    let mat = &p[(ch * lags + l) * n * n..(ch * lags + l + 1) * n * n];
                    for row in 0..n {
                        let gr = &g[(row * c + ch) * out_steps..(row * c + ch + 1) * out_steps];
                        for col in 0..n {
                            let coef = mat[row * n + col];
                            if coef != 0.0 {
                                let start = (col * c + ch) * steps + offset;
                                kernels::axpy(coef, gr, &mut d[start..start + out_steps]);
                            }
                        }
                    }
                }
            }
            accumulate(grads, z, &d);
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, d: &[f64]) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(d).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(d.to_vec()),
    }
}

/// Gradients of one backward sweep, retained for leaf nodes.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a leaf, if it participated in the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds this sweep's gradient for `v` into `t.grad`.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor) -> Result<()> {
        match self.wrt(v) {
            Some(g) => t.accumulate_grad(g),
            None if t.requires_grad() => t.accumulate_grad(&vec![0.0; t.len()]),
            None => Ok(()),
        }
    }
}
