use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::dataset::{GroundTruth, Segment, TimeSeriesDataset};
use crate::error::{ensure, Result};
use crate::graph::CausalMatrix;

/// Integration settings for Lorenz-96.
#[derive(Clone, Debug, PartialEq)]
pub struct Lorenz96Params {
    pub p: usize,
    pub steps: usize,
    pub forcing: f64,
    pub dt: f64,
    pub subsample: usize,
    pub burn_in: usize,
    /// Standard deviation of the Gaussian jitter added to the all-`F` start.
    pub init_std: f64,
}

impl Lorenz96Params {
    pub fn new(p: usize, steps: usize, forcing: f64) -> Self {
        Self {
            p,
            steps,
            forcing,
            dt: 0.01,
            subsample: 5,
            burn_in: 1000,
            init_std: 0.1,
        }
    }
}

fn lorenz_rhs(x: &[f64], forcing: f64, out: &mut [f64]) {
    let p = x.len();
    for i in 0..p {
        let ip1 = x[(i + 1) % p];
        let im1 = x[(i + p - 1) % p];
        let im2 = x[(i + p - 2) % p];
        out[i] = (ip1 - im2) * im1 - x[i] + forcing;
    }
}

fn rk4_step(x: &mut [f64], forcing: f64, dt: f64, scratch: &mut [Vec<f64>; 5]) {
    let [k1, k2, k3, k4, tmp] = scratch;
    lorenz_rhs(x, forcing, k1);
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    lorenz_rhs(tmp, forcing, k2);
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    lorenz_rhs(tmp, forcing, k3);
    for i in 0..x.len() {
        tmp[i] = x[i] + dt * k3[i];
    }
    lorenz_rhs(tmp, forcing, k4);
    for i in 0..x.len() {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates from `x0`, returning `[var][sample]` rows after burn-in.
pub fn integrate_lorenz96(x0: &[f64], params: &Lorenz96Params) -> Result<Vec<Vec<f64>>> {
    ensure!(params.p >= 4, "Lorenz-96 needs p >= 4, got {}", params.p);
    ensure!(x0.len() == params.p, "initial state has {} entries for p = {}", x0.len(), params.p);
    ensure!(params.subsample >= 1 && params.dt > 0.0, "subsample and dt must be positive");
    let p = params.p;
    let mut x = x0.to_vec();
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; p]);
    for _ in 0..params.burn_in {
        rk4_step(&mut x, params.forcing, params.dt, &mut scratch);
    }
    let mut rows = vec![Vec::with_capacity(params.steps); p];
    for _ in 0..params.steps {
        for _ in 0..params.subsample {
            rk4_step(&mut x, params.forcing, params.dt, &mut scratch);
        }
        for (row, v) in rows.iter_mut().zip(&x) {
            row.push(*v);
        }
    }
    Ok(rows)
}

/// Lorenz-96 truth: `i` is driven by `i-2, i-1, i, i+1` (cyclic).
pub fn lorenz96_truth(p: usize) -> CausalMatrix {
    let mut m = CausalMatrix::zeros(p);
    for i in 0..p {
        for off in [p - 2, p - 1, 0, 1] {
            m.set((i + off) % p, i, 1.0);
        }
    }
    m
}

pub fn gen_lorenz96(params: &Lorenz96Params, seed: u64) -> Result<(TimeSeriesDataset, GroundTruth)> {
    ensure!(params.p >= 4, "Lorenz-96 needs p >= 4, got {}", params.p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, params.init_std).map_err(|e| crate::UncleError::Contract(e.to_string()))?;
    let x0: Vec<f64> = (0..params.p).map(|_| params.forcing + jitter.sample(&mut rng)).collect();
    let rows = integrate_lorenz96(&x0, params)?;
    let data = TimeSeriesDataset::from_rows(rows)?.with_origin(0, seed);
    Ok((data, GroundTruth::Static(lorenz96_truth(params.p))))
}

pub const TVSEM_SEGMENT: usize = 400;
const TVSEM_NOISE_STD: f64 = 0.316_227_766_016_837_94; // sqrt(0.1)

/// `(a_t, b_t)` at 1-based time `t`.
pub fn tvsem_coefficients(t: usize) -> (f64, f64) {
    if ((t - 1) / TVSEM_SEGMENT) % 2 == 0 {
        (0.8, 0.1)
    } else {
        (0.2, 0.7)
    }
}

/// Bivariate SEM whose dominant direction alternates every 400 steps.
/// Variables are `X` (index 0) and `Y` (index 1).
pub fn gen_tvsem(steps: usize, seed: u64) -> Result<(TimeSeriesDataset, GroundTruth)> {
    ensure!(
        steps > 0 && steps % TVSEM_SEGMENT == 0,
        "TVSEM length must be a positive multiple of {TVSEM_SEGMENT}, got {steps}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = || -> f64 {
        let e: f64 = StandardNormal.sample(&mut rng);
        TVSEM_NOISE_STD * e
    };
    let (mut xs, mut ys) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    let (mut x_prev, mut y_prev) = (0.0, 0.0);
    for t in 1..=steps {
        let (a, b) = tvsem_coefficients(t);
        let x = a * y_prev + noise();
        let y = b * x_prev + noise();
        xs.push(x);
        ys.push(y);
        (x_prev, y_prev) = (x, y);
    }
    let segments = (0..steps / TVSEM_SEGMENT)
        .map(|k| {
            let mut adj = CausalMatrix::zeros(2);
            if k % 2 == 0 {
                adj.set(1, 0, 1.0);
            } else {
                adj.set(0, 1, 1.0);
            }
            Segment {
                t_start: k * TVSEM_SEGMENT + 1,
                t_end: (k + 1) * TVSEM_SEGMENT,
                adjacency: adj,
            }
        })
        .collect();
    let data = TimeSeriesDataset::new(vec![xs, ys], vec!["X".into(), "Y".into()])?.with_origin(0, seed);
    Ok((data, GroundTruth::dynamic(segments, steps)?))
}

pub const NC8_NAMES: [&str; 8] = ["x", "y", "z", "w", "a", "b", "c", "o"];
const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;
const W: usize = 3;
const A: usize = 4;
const B: usize = 5;
const C: usize = 6;
const O: usize = 7;

/// Steps simulated and discarded before the first recorded sample.
pub const WARM_UP: usize = 32;
const MAX_LAG: usize = 16;
pub const ND8_SWITCH: usize = 500;

/// Noise for the eight variables at one step. Replaced by zeros in tests.
pub trait NoiseSource {
    fn draw(&mut self) -> [f64; 8];
}

impl NoiseSource for ChaCha8Rng {
    fn draw(&mut self) -> [f64; 8] {
        std::array::from_fn(|_| StandardNormal.sample(self))
    }
}

/// No noise at all.
pub struct Silent;

impl NoiseSource for Silent {
    fn draw(&mut self) -> [f64; 8] {
        [0.0; 8]
    }
}

fn x_driver(t: f64) -> f64 {
    0.45 * (t / (4.0 * PI)).sin() + 0.45 * (t / (9.0 * PI)).sin() + 0.25 * (t / (3.0 * PI)).sin()
}

fn a_driver(t: f64) -> f64 {
    0.15 * (t / 6.0).sin() + 0.35 * (t / 80.0).sin() + 0.65 * (t / 125.0).sin()
}

fn cube(v: f64) -> f64 {
    v * v * v
}

/// Rolling history where `lag(v, k)` is variable `v` at `k` steps back.
struct History {
    rows: Vec<Vec<f64>>,
}

impl History {
    fn new() -> Self {
        Self {
            rows: vec![vec![0.0; MAX_LAG]; 8],
        }
    }

    #[inline]
    fn lag(&self, v: usize, k: usize) -> f64 {
        let r = &self.rows[v];
        r[r.len() - k]
    }

    fn push(&mut self, vals: [f64; 8]) {
        for (r, v) in self.rows.iter_mut().zip(vals) {
            r.push(v);
        }
    }
}

/// One step of the eight-variable system; `switched` selects the reversed
/// `x, y, a, b` equations.
fn nc8_step(h: &History, t: f64, e: [f64; 8], switched: bool) -> [f64; 8] {
    let l = |v, k| h.lag(v, k);
    let (x, y, a, b) = if switched {
        let x = 0.08 * l(X, 1) - 0.08 * l(X, 2) + 0.04 * l(X, 3) + 0.04 * l(X, 4) + 0.04 * l(Y, 1) + 0.28 * l(Y, 2)
            - 0.08 * l(Y, 3)
            - 0.04 * l(Y, 4)
            + 0.1 * e[X];
        let y = x_driver(t) + 0.2 * l(Y, 1) - 0.12 * l(Y, 2) + 0.16 * l(Y, 3) + 0.04 * l(Y, 4) + 0.02 * e[Y];
        let a = 0.09 * l(A, 13) - 0.18 * l(A, 14) + 0.09 * l(A, 15) + 0.09 * l(A, 16) + 0.72 * l(B, 13) + 0.27 * l(A, 14)
            - 0.63 * l(A, 15)
            + 0.18 * l(A, 16)
            + 0.1 * e[A];
        let b = a_driver(t) + 0.36 * l(B, 13) + 0.27 * l(B, 14) - 0.36 * l(B, 15) + 0.18 * l(B, 16) + 0.02 * e[B];
        (x, y, a, b)
    } else {
        let x = x_driver(t) + 0.1 * e[X];
        let y = 0.24 * l(X, 1) - 0.28 * l(X, 2) + 0.08 * l(X, 3) + 0.2 * l(X, 4) + 0.2 * l(Y, 1) - 0.12 * l(Y, 2)
            + 0.16 * l(Y, 3)
            + 0.04 * l(Y, 4)
            + 0.02 * e[Y];
        let a = a_driver(t) + 0.1 * e[A];
        let b = 0.54 * l(A, 13) - 0.63 * l(A, 14) + 0.18 * l(A, 15) + 0.45 * l(A, 16) + 0.36 * l(B, 13) + 0.27 * l(B, 14)
            - 0.36 * l(B, 15)
            + 0.18 * l(B, 16)
            + 0.02 * e[B];
        (x, y, a, b)
    };
    let z = 3.0 * cube(0.6 * l(X, 1)) + 3.0 * cube(0.4 * l(X, 2)) + 3.0 * cube(0.2 * l(X, 3)) + 3.0 * cube(0.5 * l(X, 4))
        + 0.02 * e[Z];
    let w = 0.8 * cube(0.4 * l(Z, 1)) + 0.8 * cube(0.5 * l(Z, 2)) + 0.64 * l(Z, 3) + 0.48 * l(Z, 4) + 0.02 * e[W];
    let c = (0.24 * l(A, 13) + 0.3 * l(A, 14)).max(-0.2) + 1.2 * (0.2 * l(A, 15) + 0.5 * l(X, 16)).abs().sqrt()
        + 0.02 * e[C];
    let o = 0.39 * l(X, 13) - 0.65 * l(X, 14) + 0.52 * l(X, 15) + 0.13 * l(X, 16) + 0.52 * l(A, 1) - 0.65 * l(A, 2)
        + 0.26 * l(A, 3)
        + 0.52 * l(A, 4)
        + 0.02 * e[O];
    [x, y, z, w, a, b, c, o]
}

/// Simulates `steps` recorded samples. Recorded time runs `t = 1..=steps`
/// and the sinusoid drivers are evaluated at `t0 + t`.
fn simulate_eight(
    steps: usize,
    t0: i64,
    noise: &mut impl NoiseSource,
    switched: impl Fn(usize) -> bool,
) -> Vec<Vec<f64>> {
    let mut h = History::new();
    let mut rows = vec![Vec::with_capacity(steps); 8];
    for s in 0..WARM_UP + steps {
        let t = s as i64 - WARM_UP as i64 + 1;
        let sw = t >= 1 && switched(t as usize);
        let vals = nc8_step(&h, (t0 + t) as f64, noise.draw(), sw);
        h.push(vals);
        if t >= 1 {
            for (r, v) in rows.iter_mut().zip(vals) {
                r.push(v);
            }
        }
    }
    rows
}

fn edges(pairs: &[(usize, usize)]) -> CausalMatrix {
    let mut m = CausalMatrix::zeros(8);
    for &(j, i) in pairs {
        m.set(j, i, 1.0);
    }
    m
}

const SHARED_EDGES: [(usize, usize); 6] = [(X, Z), (Z, W), (A, C), (X, C), (A, O), (X, O)];

/// NC8 truth, with self-loops for the autoregressive `y` and `b`.
pub fn nc8_truth() -> CausalMatrix {
    let mut e = SHARED_EDGES.to_vec();
    e.extend([(X, Y), (A, B), (Y, Y), (B, B)]);
    edges(&e)
}

/// ND8 truth during reversed intervals.
pub fn nd8_switched_truth() -> CausalMatrix {
    let mut e = SHARED_EDGES.to_vec();
    e.extend([(Y, X), (B, A), (X, X), (Y, Y), (A, A), (B, B)]);
    edges(&e)
}

fn names8() -> Vec<String> {
    NC8_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn gen_nc8_with(steps: usize, t0: i64, noise: &mut impl NoiseSource) -> Result<TimeSeriesDataset> {
    ensure!(steps >= 1, "NC8 needs at least one step");
    TimeSeriesDataset::new(simulate_eight(steps, t0, noise, |_| false), names8())
}

pub fn gen_nc8(steps: usize, t0: i64, seed: u64) -> Result<(TimeSeriesDataset, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = gen_nc8_with(steps, t0, &mut rng)?.with_origin(0, seed);
    Ok((data, GroundTruth::Static(nc8_truth())))
}

/// Whether 1-based `t` falls in a reversed ND8 interval.
pub fn nd8_is_switched(t: usize) -> bool {
    ((t - 1) / ND8_SWITCH) % 2 == 1
}

pub fn gen_nd8_with(steps: usize, noise: &mut impl NoiseSource) -> Result<(TimeSeriesDataset, GroundTruth)> {
    ensure!(steps >= 1, "ND8 needs at least one step");
    let rows = simulate_eight(steps, 0, noise, nd8_is_switched);
    let segments = (0..steps.div_ceil(ND8_SWITCH))
        .map(|k| Segment {
            t_start: k * ND8_SWITCH + 1,
            t_end: ((k + 1) * ND8_SWITCH).min(steps),
            adjacency: if k % 2 == 0 { nc8_truth() } else { nd8_switched_truth() },
        })
        .collect();
    Ok((TimeSeriesDataset::new(rows, names8())?, GroundTruth::dynamic(segments, steps)?))
}

pub fn gen_nd8(steps: usize, seed: u64) -> Result<(TimeSeriesDataset, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, truth) = gen_nd8_with(steps, &mut rng)?;
    Ok((data.with_origin(0, seed), truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn off_diagonal_in_degree(m: &CausalMatrix, i: usize) -> usize {
        (0..m.n()).filter(|&j| j != i && m.get(j, i) == 1.0).count()
    }

    #[test]
    fn lorenz_truth_has_three_foreign_parents() {
        let m = lorenz96_truth(20);
        for i in 0..20 {
            assert_eq!(off_diagonal_in_degree(&m, i), 3);
            assert_eq!(m.get(i, i), 1.0);
            assert_eq!(m.get((i + 18) % 20, i), 1.0);
            assert_eq!(m.get((i + 19) % 20, i), 1.0);
            assert_eq!(m.get((i + 1) % 20, i), 1.0);
        }
    }

    #[test]
    fn lorenz_dimensions_and_determinism() {
        let params = Lorenz96Params::new(20, 250, 10.0);
        let (a, truth) = gen_lorenz96(&params, 3).unwrap();
        let (b, _) = gen_lorenz96(&params, 3).unwrap();
        let (c, _) = gen_lorenz96(&params, 4).unwrap();
        assert_eq!((a.num_vars(), a.steps()), (20, 250));
        assert_eq!(truth.num_vars(), 20);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!(gen_lorenz96(&Lorenz96Params::new(3, 10, 10.0), 0).is_err());
    }

    #[test]
    fn lorenz_near_fixed_point_stays_bounded() {
        let params = Lorenz96Params::new(20, 250, 10.0);
        let mut x0 = vec![10.0; 20];
        x0[0] += 1e-8;
        let rows = integrate_lorenz96(&x0, &params).unwrap();
        let max = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 40.0, "max |x| = {max}");
        let (chaotic, _) = gen_lorenz96(&params, 0).unwrap();
        assert!(chaotic.values().iter().all(|v| v.abs() < 40.0));
    }

    #[test]
    fn tvsem_coefficient_schedule() {
        assert_eq!(tvsem_coefficients(10), (0.8, 0.1));
        assert_eq!(tvsem_coefficients(400), (0.8, 0.1));
        assert_eq!(tvsem_coefficients(401), (0.2, 0.7));
        assert_eq!(tvsem_coefficients(450), (0.2, 0.7));
        assert_eq!(tvsem_coefficients(801), (0.8, 0.1));
    }

    #[test]
    fn tvsem_segments_and_signal() {
        let (data, truth) = gen_tvsem(2000, 1).unwrap();
        assert_eq!((data.num_vars(), data.steps()), (2, 2000));
        let GroundTruth::Dynamic(segs) = &truth else { panic!("expected dynamic truth") };
        assert_eq!(segs.len(), 5);
        for (k, s) in segs.iter().enumerate() {
            let (yx, xy) = (s.adjacency.get(1, 0), s.adjacency.get(0, 1));
            assert_eq!((yx, xy), if k % 2 == 0 { (1.0, 0.0) } else { (0.0, 1.0) });
        }
        let seg = &data.row(0)[..400];
        let m = seg.iter().sum::<f64>() / 400.0;
        let var = seg.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 399.0;
        assert!(var > 0.1, "variance {var}");
        assert!(gen_tvsem(1000, 0).is_err());
        assert_eq!(gen_tvsem(2000, 1).unwrap().0, data);
    }

    #[test]
    fn nc8_edges_follow_the_equations() {
        let m = nc8_truth();
        let off: Vec<(usize, usize)> =
            (0..8).flat_map(|j| (0..8).map(move |i| (j, i))).filter(|&(j, i)| j != i && m.get(j, i) == 1.0).collect();
        assert_eq!(off.len(), 8);
        for e in [(X, Y), (X, Z), (Z, W), (A, B), (A, C), (X, C), (A, O), (X, O)] {
            assert!(off.contains(&e), "{e:?}");
        }
    }

    #[test]
    fn nc8_noise_free_x_is_the_sinusoid() {
        let data = gen_nc8_with(300, 0, &mut Silent).unwrap();
        for t in 1..=300 {
            assert_eq!(data.get(X, t - 1), x_driver(t as f64));
            assert_eq!(data.get(A, t - 1), a_driver(t as f64));
        }
        let shifted = gen_nc8_with(50, 100, &mut Silent).unwrap();
        assert_eq!(shifted.get(X, 0), x_driver(101.0));
    }

    #[test]
    fn nc8_is_deterministic_and_finite() {
        let (a, _) = gen_nc8(2000, 0, 9).unwrap();
        let (b, _) = gen_nc8(2000, 0, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| v.is_finite()));
        assert_eq!(a.var_names, NC8_NAMES);
    }

    #[test]
    fn nd8_switches_and_keeps_fixed_edges() {
        let (data, truth) = gen_nd8(2000, 5).unwrap();
        assert_eq!(data.steps(), 2000);
        let GroundTruth::Dynamic(segs) = &truth else { panic!("expected dynamic truth") };
        assert_eq!(segs.iter().map(|s| (s.t_start, s.t_end)).collect::<Vec<_>>(), [(1, 500), (501, 1000), (1001, 1500), (1501, 2000)]);
        assert_eq!(segs[0].adjacency, nc8_truth());
        assert_eq!(segs[1].adjacency.get(Y, X), 1.0);
        assert_eq!(segs[1].adjacency.get(X, Y), 0.0);
        assert_eq!(segs[1].adjacency.get(B, A), 1.0);
        for s in segs {
            for v in [Z, W, C, O] {
                for j in 0..8 {
                    assert_eq!(s.adjacency.get(j, v), nc8_truth().get(j, v));
                }
            }
        }
        assert!(!nd8_is_switched(500));
        assert!(nd8_is_switched(501));
        assert!(!nd8_is_switched(1001));
    }

    #[test]
    fn nd8_first_interval_matches_nc8() {
        let (nd8, _) = gen_nd8_with(500, &mut Silent).unwrap();
        let nc8 = gen_nc8_with(500, 0, &mut Silent).unwrap();
        assert_eq!(nd8.values(), nc8.values());
        let (long, _) = gen_nd8_with(600, &mut Silent).unwrap();
        assert_eq!(long.get(Y, 549), x_driver(550.0) + 0.2 * long.get(Y, 548) - 0.12 * long.get(Y, 547)
            + 0.16 * long.get(Y, 546) + 0.04 * long.get(Y, 545));
        assert_ne!(long.get(X, 549), x_driver(550.0));
    }
}
