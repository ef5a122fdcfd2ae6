use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::datagen::TimeSeriesDataset;
use crate::error::{ensure, Result, UncleError};
use crate::model::splitmix;

/// How a single series is destroyed before re-predicting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Random temporal shuffle of the series.
    Permutation,
    ZeroMask,
    /// Additive Gaussian noise with `noise_sigma`.
    NoiseInjection,
    None,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Self::Permutation, Self::ZeroMask, Self::NoiseInjection, Self::None];

    pub fn name(self) -> &'static str {
        match self {
            Self::Permutation => "permutation",
            Self::ZeroMask => "zero_mask",
            Self::NoiseInjection => "noise_injection",
            Self::None => "none",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = UncleError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "permutation" | "perm" => Ok(Self::Permutation),
            "zero_mask" | "zero" => Ok(Self::ZeroMask),
            "noise_injection" | "noise" => Ok(Self::NoiseInjection),
            "none" => Ok(Self::None),
            other => Err(UncleError::Contract(format!("unknown perturbation strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationConfig {
    pub strategy: Strategy,
    /// Noise standard deviation, in normalized units.
    pub noise_sigma: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Permutation,
            noise_sigma: 1.0,
            repeats: 3,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.repeats >= 1, "repeats must be at least 1");
        ensure!(
            self.noise_sigma.is_finite() && self.noise_sigma >= 0.0,
            "noise_sigma must be finite and nonnegative"
        );
        Ok(())
    }
}

/// Seed of the random stream used for series `j` in repeat `repeat`.
/// Independent of the order in which series are processed.
pub fn stream_seed(seed: u64, j: usize, repeat: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ j as u64) ^ (repeat as u64).rotate_left(32))
}

/// Copy of `x` with only row `j` perturbed.
pub fn perturb_series(
    x: &TimeSeriesDataset,
    j: usize,
    cfg: &PerturbationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TimeSeriesDataset> {
    ensure!(j < x.num_vars(), "series index {j} out of range for {} variables", x.num_vars());
    let mut out = x.clone();
    let row = out.row_mut(j);
    match cfg.strategy {
        Strategy::Permutation => row.shuffle(rng),
        Strategy::ZeroMask => row.fill(0.0),
        Strategy::NoiseInjection => {
            let dist = Normal::new(0.0, cfg.noise_sigma).map_err(|e| UncleError::Contract(e.to_string()))?;
            for v in row.iter_mut() {
                *v += dist.sample(rng);
            }
        }
        Strategy::None => {}
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert_eq, proptest, Strategy as _};
    use rand::SeedableRng;

    fn data(rows: Vec<Vec<f64>>) -> TimeSeriesDataset {
        TimeSeriesDataset::from_rows(rows).unwrap()
    }

    #[test]
    fn strategies_parse_and_print() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("zero-mask".parse::<Strategy>().unwrap(), Strategy::ZeroMask);
        assert!("shuffle".parse::<Strategy>().is_err());
    }

    #[test]
    fn zero_mask_noise_and_none() {
        let x = data(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = PerturbationConfig {
            strategy: Strategy::ZeroMask,
            ..Default::default()
        };
        let z = perturb_series(&x, 1, &cfg, &mut rng).unwrap();
        assert_eq!(z.row(1), &[0.0; 3]);
        assert_eq!(z.row(0), x.row(0));
        cfg.strategy = Strategy::None;
        assert_eq!(perturb_series(&x, 0, &cfg, &mut rng).unwrap(), x);
        cfg.strategy = Strategy::NoiseInjection;
        let n = perturb_series(&x, 0, &cfg, &mut rng).unwrap();
        assert_ne!(n.row(0), x.row(0));
        assert_eq!(n.row(1), x.row(1));
        assert!(perturb_series(&x, 2, &cfg, &mut rng).is_err());
    }

    #[test]
    fn stream_seeds_differ_per_series_and_repeat() {
        let mut seen = std::collections::HashSet::new();
        for j in 0..20 {
            for r in 0..5 {
                assert!(seen.insert(stream_seed(7, j, r)));
            }
        }
        assert_ne!(stream_seed(7, 0, 0), stream_seed(8, 0, 0));
    }

    proptest! {
        #[test]
        fn permutation_preserves_the_multiset(
            rows in (1usize..5, 1usize..40).prop_flat_map(|(n, t)| {
                prop::collection::vec(prop::collection::vec(-1e3f64..1e3, t), n)
            }),
            j_seed in 0usize..100,
            seed in any::<u64>(),
        ) {
            let x = data(rows);
            let j = j_seed % x.num_vars();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = perturb_series(&x, j, &PerturbationConfig::default(), &mut rng).unwrap();
            let mut a = x.row(j).to_vec();
            let mut b = p.row(j).to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            for v in (0..x.num_vars()).filter(|&v| v != j) {
                prop_assert_eq!(x.row(v), p.row(v));
            }
        }
    }
}
