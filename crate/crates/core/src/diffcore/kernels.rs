//! Slice-level kernels for the dilated causal convolution.
//!
//! Layouts: a signal is `[channels][time]`, a kernel is `[out][in][tap]`.
//! Tap `k` reads the input `(taps - 1 - k) * dilation` steps in the past, so
//! the last tap is the current time step.

/// Geometry of one causal convolution applied to a single series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub taps: usize,
    pub dilation: usize,
    pub steps: usize,
}

impl ConvGeometry {
    pub fn input_len(&self) -> usize {
        self.in_channels * self.steps
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.steps
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.taps
    }

    #[inline]
    fn shift(&self, tap: usize) -> usize {
        (self.taps - 1 - tap) * self.dilation
    }
}

/// Unfolds `input` into a `[C_in * K, T]` matrix whose row `(i, k)` is input
/// channel `i` delayed by tap `k`'s shift, zero-filled at the start.
fn im2col(g: &ConvGeometry, input: &[f64], col: &mut [f64]) {
    let t_len = g.steps;
    for i in 0..g.in_channels {
        let in_row = &input[i * t_len..(i + 1) * t_len];
        for k in 0..g.taps {
            let dst = &mut col[(i * g.taps + k) * t_len..(i * g.taps + k + 1) * t_len];
            let shift = g.shift(k).min(t_len);
            dst[..shift].fill(0.0);
            dst[shift..].copy_from_slice(&in_row[..t_len - shift]);
        }
    }
}

/// Adjoint of [`im2col`], accumulating into `grad_in`.
fn col2im_add(g: &ConvGeometry, col: &[f64], grad_in: &mut [f64]) {
    let t_len = g.steps;
    for i in 0..g.in_channels {
        let dst = &mut grad_in[i * t_len..(i + 1) * t_len];
        for k in 0..g.taps {
            let shift = g.shift(k);
            if shift >= t_len {
                continue;
            }
            let src = &col[(i * g.taps + k) * t_len + shift..(i * g.taps + k + 1) * t_len];
            for (d, s) in dst[..t_len - shift].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

/// `C (m x n) = alpha * A (m x k) * B (k x n) + beta * C`, all given with
/// explicit row and column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + n - 1 < c.len());
    // SAFETY: the asserts above bound every index the routine touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// `out = bias + conv(input, weight)`; `out` is overwritten.
pub fn conv_forward(g: &ConvGeometry, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let t_len = g.steps;
    debug_assert_eq!(input.len(), g.input_len());
    debug_assert_eq!(weight.len(), g.weight_len());
    debug_assert_eq!(bias.len(), g.out_channels);
    debug_assert_eq!(out.len(), g.output_len());

    for (row, &b) in out.chunks_exact_mut(t_len.max(1)).zip(bias) {
        row.fill(b);
    }
    let rows = g.in_channels * g.taps;
    if g.taps == 1 {
        gemm(g.out_channels, rows, t_len, weight, (rows, 1), input, (t_len, 1), 1.0, out, t_len);
    } else {
        let mut col = vec![0.0; rows * t_len];
        im2col(g, input, &mut col);
        gemm(g.out_channels, rows, t_len, weight, (rows, 1), &col, (t_len, 1), 1.0, out, t_len);
    }
}

/// Accumulates the input gradient: `grad_in += conv^T(grad_out, weight)`.
pub fn conv_backward_input(g: &ConvGeometry, grad_out: &[f64], weight: &[f64], grad_in: &mut [f64]) {
    let t_len = g.steps;
    debug_assert_eq!(grad_out.len(), g.output_len());
    debug_assert_eq!(grad_in.len(), g.input_len());
    let rows = g.in_channels * g.taps;
    if g.taps == 1 {
        gemm(rows, g.out_channels, t_len, weight, (1, rows), grad_out, (t_len, 1), 1.0, grad_in, t_len);
    } else {
        let mut col = vec![0.0; rows * t_len];
        gemm(rows, g.out_channels, t_len, weight, (1, rows), grad_out, (t_len, 1), 0.0, &mut col, t_len);
        col2im_add(g, &col, grad_in);
    }
}

/// Accumulates weight and bias gradients for one series.
pub fn conv_backward_params(
    g: &ConvGeometry,
    grad_out: &[f64],
    input: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) {
    let t_len = g.steps;
    debug_assert_eq!(grad_weight.len(), g.weight_len());
    for (o, g_row) in grad_out.chunks_exact(t_len.max(1)).enumerate() {
        grad_bias[o] += sum(g_row);
    }
    let rows = g.in_channels * g.taps;
    if g.taps == 1 {
        gemm(g.out_channels, t_len, rows, grad_out, (t_len, 1), input, (1, t_len), 1.0, grad_weight, rows);
    } else {
        let mut col = vec![0.0; rows * t_len];
        im2col(g, input, &mut col);
        gemm(g.out_channels, t_len, rows, grad_out, (t_len, 1), &col, (1, t_len), 1.0, grad_weight, rows);
    }
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &mut y[..n]);
    for j in 0..n {
        y[j] += a * x[j];
    }
}

/// Dot product with four independent lanes; the summation order is fixed.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        lanes[0] += x[0] * y[0];
        lanes[1] += x[1] * y[1];
        lanes[2] += x[2] * y[2];
        lanes[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

#[inline]
pub(crate) fn sum(a: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let mut chunks = a.chunks_exact(4);
    for x in &mut chunks {
        lanes[0] += x[0];
        lanes[1] += x[1];
        lanes[2] += x[2];
        lanes[3] += x[3];
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + chunks.remainder().iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(g: &ConvGeometry, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.output_len()];
        for o in 0..g.out_channels {
            for t in 0..g.steps {
                let mut acc = bias[o];
                for i in 0..g.in_channels {
                    for k in 0..g.taps {
                        let back = (g.taps - 1 - k) * g.dilation;
                        if t >= back {
                            acc += weight[(o * g.in_channels + i) * g.taps + k] * input[i * g.steps + t - back];
                        }
                    }
                }
                out[o * g.steps + t] = acc;
            }
        }
        out
    }

    #[test]
    fn blocked_forward_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(cin, cout, taps, dil, steps) in &[(1, 1, 1, 1, 5), (3, 6, 3, 2, 17), (5, 9, 4, 4, 11), (2, 4, 2, 8, 6)] {
            let g = ConvGeometry { in_channels: cin, out_channels: cout, taps, dilation: dil, steps };
            let input: Vec<f64> = (0..g.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let weight: Vec<f64> = (0..g.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bias: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut out = vec![0.0; g.output_len()];
            conv_forward(&g, &input, &weight, &bias, &mut out);
            for (a, b) in out.iter().zip(naive(&g, &input, &weight, &bias)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_kernels_are_adjoint_to_forward() {
        // <conv(x), g> must equal <x, conv^T(g)> and <w, dW>.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(cin, cout, taps, dil, steps) in &[(1, 3, 1, 1, 9), (3, 5, 3, 2, 13), (4, 2, 5, 8, 10)] {
            let g = ConvGeometry { in_channels: cin, out_channels: cout, taps, dilation: dil, steps };
            let x: Vec<f64> = (0..g.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..g.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let go: Vec<f64> = (0..g.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let zero_bias = vec![0.0; cout];
            let y = naive(&g, &x, &w, &zero_bias);
            let lhs: f64 = y.iter().zip(&go).map(|(a, b)| a * b).sum();
            let mut gx = vec![0.0; g.input_len()];
            conv_backward_input(&g, &go, &w, &mut gx);
            let rhs_x: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
            let mut gw = vec![0.0; g.weight_len()];
            let mut gb = vec![0.0; cout];
            conv_backward_params(&g, &go, &x, &mut gw, &mut gb);
            let rhs_w: f64 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs_x).abs() < 1e-10, "{lhs} vs {rhs_x}");
            assert!((lhs - rhs_w).abs() < 1e-10, "{lhs} vs {rhs_w}");
            let gsum: f64 = go.chunks(steps).map(|r| r.iter().sum::<f64>()).sum();
            assert!((gb.iter().sum::<f64>() - gsum).abs() < 1e-10);
        }
    }

    #[test]
    fn dot_and_sum_handle_tails() {
        let a: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(sum(&a), 28.0);
        assert_eq!(dot(&a, &a), 140.0);
        assert_eq!(dot(&[], &[]), 0.0);
    }
}
