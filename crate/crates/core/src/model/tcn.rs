//! Temporal convolutional network applied independently to every series.
//!
//! A block is `relu(dropout(relu(conv)) -> dropout(relu(conv)) + residual)`
//! with dilation `2^b`, where the residual goes through a 1x1 convolution when
//! the channel count changes. Weights are either shared by all series or held
//! per series (leading `N` dimension).

use rand::Rng;

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub dilation: usize,
}

impl ConvLayer {
    fn init<R: Rng>(rng: &mut R, copies: Option<usize>, cout: usize, cin: usize, taps: usize, dilation: usize) -> Self {
        let bound = 1.0 / ((cin * taps) as f64).sqrt();
        let (w_shape, b_shape) = match copies {
            None => (vec![cout, cin, taps], vec![cout]),
            Some(n) => (vec![n, cout, cin, taps], vec![n, cout]),
        };
        let mut draw = |shape: Vec<usize>| {
            let len = shape.iter().product();
            let vals = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::new(shape, vals).expect("shape matches").with_grad()
        };
        let weight = draw(w_shape);
        let bias = draw(b_shape);
        Self { weight, bias, dilation }
    }

    fn bind(&self, vars: &mut impl Iterator<Item = Var>) -> BoundConv {
        BoundConv {
            weight: vars.next().expect("one var per parameter"),
            bias: vars.next().expect("one var per parameter"),
            dilation: self.dilation,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct TcnBlock {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub downsample: Option<ConvLayer>,
}

/// Stack of residual blocks plus an optional linear 1x1 output head.
#[derive(Clone, Debug, PartialEq)]
pub struct Tcn {
    pub(crate) blocks: Vec<TcnBlock>,
    pub(crate) head: Option<ConvLayer>,
}

impl Tcn {
    /// `copies = Some(n)` gives each of `n` series its own weights.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn init<R: Rng>(
        rng: &mut R,
        copies: Option<usize>,
        in_channels: usize,
        hidden: usize,
        out_channels: Option<usize>,
        taps: usize,
        num_blocks: usize,
    ) -> Self {
        let mut blocks = Vec::with_capacity(num_blocks);
        let mut cin = in_channels;
        for b in 0..num_blocks {
            let dilation = 1usize << b;
            let conv1 = ConvLayer::init(rng, copies, hidden, cin, taps, dilation);
            let conv2 = ConvLayer::init(rng, copies, hidden, hidden, taps, dilation);
            let downsample = (cin != hidden).then(|| ConvLayer::init(rng, copies, hidden, cin, 1, 1));
            blocks.push(TcnBlock { conv1, conv2, downsample });
            cin = hidden;
        }
        let head = out_channels.map(|c| ConvLayer::init(rng, copies, c, hidden, 1, 1));
        Self { blocks, head }
    }

    /// Parameters in declaration order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend([&b.conv1.weight, &b.conv1.bias, &b.conv2.weight, &b.conv2.bias]);
            if let Some(d) = &b.downsample {
                out.extend([&d.weight, &d.bias]);
            }
        }
        if let Some(h) = &self.head {
            out.extend([&h.weight, &h.bias]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv1.weight);
            out.push(&mut b.conv1.bias);
            out.push(&mut b.conv2.weight);
            out.push(&mut b.conv2.bias);
            if let Some(d) = &mut b.downsample {
                out.push(&mut d.weight);
                out.push(&mut d.bias);
            }
        }
        if let Some(h) = &mut self.head {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Binds to existing leaves, taken from `vars` in [`params`](Self::params) order.
    pub(crate) fn bind(&self, vars: &mut impl Iterator<Item = Var>) -> BoundTcn {
        BoundTcn {
            blocks: self
                .blocks
                .iter()
                .map(|b| BoundBlock {
                    conv1: b.conv1.bind(vars),
                    conv2: b.conv2.bind(vars),
                    downsample: b.downsample.as_ref().map(|d| d.bind(vars)),
                })
                .collect(),
            head: self.head.as_ref().map(|h| h.bind(vars)),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BoundConv {
    weight: Var,
    bias: Var,
    dilation: usize,
}

impl BoundConv {
    fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.conv1d(x, self.weight, self.bias, self.dilation)
    }
}

#[derive(Clone, Debug)]
struct BoundBlock {
    conv1: BoundConv,
    conv2: BoundConv,
    downsample: Option<BoundConv>,
}

/// A [`Tcn`] whose parameters are leaves on a particular tape.
#[derive(Clone, Debug)]
pub(crate) struct BoundTcn {
    blocks: Vec<BoundBlock>,
    head: Option<BoundConv>,
}

impl BoundTcn {
    /// Leaf handles in the same order as [`Tcn::params`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend([b.conv1.weight, b.conv1.bias, b.conv2.weight, b.conv2.bias]);
            if let Some(d) = &b.downsample {
                out.extend([d.weight, d.bias]);
            }
        }
        if let Some(h) = &self.head {
            out.extend([h.weight, h.bias]);
        }
        out
    }

    /// `x` is `[N, C_in, T]`.
    pub fn forward(&self, tape: &mut Tape, x: Var, dropout: f64, training: bool) -> Result<Var> {
        let mut h = x;
        for b in &self.blocks {
            let a = b.conv1.apply(tape, h)?;
            let a = tape.relu(a);
            let a = tape.dropout(a, dropout, training)?;
            let a = b.conv2.apply(tape, a)?;
            let a = tape.relu(a);
            let a = tape.dropout(a, dropout, training)?;
            let res = match &b.downsample {
                Some(d) => d.apply(tape, h)?,
                None => h,
            };
            let sum = tape.add(a, res)?;
            h = tape.relu(sum);
        }
        match &self.head {
            Some(head) => head.apply(tape, h),
            None => Ok(h),
        }
    }
}
