use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Result, UncleError};

/// Hyper-parameters of one model and its two-stage training run.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub num_vars: usize,
    /// Latent channels per series ("kernel filters").
    pub channels: usize,
    pub kernel_size: usize,
    pub num_blocks: usize,
    pub lag: usize,
    pub dropout_rate: f64,
    /// Weight of the prediction loss.
    pub alpha: f64,
    /// L1 weight on the dependency matrices.
    pub lambda1: f64,
    pub lr: f64,
    pub recon_epochs: usize,
    pub joint_epochs: usize,
    pub share_params: bool,
    /// Ablation: no dependency matrices; latent prediction is a plain time shift.
    pub disable_dependency_matrices: bool,
    pub seed: u64,
}

pub const DEFAULT_ALPHA: f64 = 5.0;
pub const DEFAULT_LAMBDA1: f64 = 1e-4;
pub const DEFAULT_DROPOUT: f64 = 0.2;

impl ModelConfig {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            channels: 8,
            kernel_size: 3,
            num_blocks: 4,
            lag: 1,
            dropout_rate: DEFAULT_DROPOUT,
            alpha: DEFAULT_ALPHA,
            lambda1: DEFAULT_LAMBDA1,
            lr: 2e-3,
            recon_epochs: 500,
            joint_epochs: 2500,
            share_params: true,
            disable_dependency_matrices: false,
            seed: 0,
        }
    }

    /// Configuration from a named row of the published settings table.
    pub fn from_preset(preset: Preset, num_vars: usize) -> Self {
        let row = preset.row();
        Self {
            lag: row.lag,
            kernel_size: row.kernel_size,
            num_blocks: row.num_blocks,
            channels: row.channels,
            recon_epochs: row.recon_epochs,
            joint_epochs: row.joint_epochs,
            lr: row.lr,
            ..Self::new(num_vars)
        }
    }

    /// Number of past steps (including the current one) the TCN stack sees.
    pub fn receptive_field(&self) -> usize {
        // Each block holds two convolutions at dilation 2^b.
        let span: usize = (0..self.num_blocks).map(|b| 2 * (self.kernel_size - 1) << b).sum();
        1 + span
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_vars >= 1, "num_vars must be positive");
        ensure!(self.channels >= 1, "channels must be positive");
        ensure!(self.kernel_size >= 1, "kernel_size must be positive");
        ensure!(self.num_blocks >= 1, "num_blocks must be positive");
        ensure!(self.lag >= 1, "lag must be at least 1");
        ensure!((0.0..1.0).contains(&self.dropout_rate), "dropout_rate must lie in [0, 1)");
        ensure!(self.alpha >= 0.0 && self.alpha.is_finite(), "alpha must be nonnegative");
        ensure!(self.lambda1 >= 0.0 && self.lambda1.is_finite(), "lambda1 must be nonnegative");
        ensure!(self.lr > 0.0 && self.lr.is_finite(), "lr must be positive");
        ensure!(
            self.receptive_field() >= 2,
            "receptive field {} is below 2; increase kernel_size",
            self.receptive_field()
        );
        Ok(())
    }

    /// `key=value` lines, the format shared by checkpoints and recipes.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("num_vars".into(), self.num_vars.to_string()),
            ("channels".into(), self.channels.to_string()),
            ("kernel_size".into(), self.kernel_size.to_string()),
            ("num_blocks".into(), self.num_blocks.to_string()),
            ("lag".into(), self.lag.to_string()),
            ("dropout_rate".into(), self.dropout_rate.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("lambda1".into(), self.lambda1.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("recon_epochs".into(), self.recon_epochs.to_string()),
            ("joint_epochs".into(), self.joint_epochs.to_string()),
            ("share_params".into(), self.share_params.to_string()),
            (
                "disable_dependency_matrices".into(),
                self.disable_dependency_matrices.to_string(),
            ),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    /// Applies one `key=value` override. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| UncleError::Contract(format!("invalid value {v:?} for {key}")))
        }
        match key {
            "num_vars" => self.num_vars = p(key, value)?,
            "channels" => self.channels = p(key, value)?,
            "kernel_size" => self.kernel_size = p(key, value)?,
            "num_blocks" => self.num_blocks = p(key, value)?,
            "lag" => self.lag = p(key, value)?,
            "dropout_rate" => self.dropout_rate = p(key, value)?,
            "alpha" => self.alpha = p(key, value)?,
            "lambda1" => self.lambda1 = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "recon_epochs" => self.recon_epochs = p(key, value)?,
            "joint_epochs" => self.joint_epochs = p(key, value)?,
            "share_params" => self.share_params = p(key, value)?,
            "disable_dependency_matrices" => self.disable_dependency_matrices = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "preset" => {
                let preset: Preset = value.parse()?;
                *self = Self {
                    num_vars: self.num_vars,
                    alpha: self.alpha,
                    lambda1: self.lambda1,
                    dropout_rate: self.dropout_rate,
                    share_params: self.share_params,
                    disable_dependency_matrices: self.disable_dependency_matrices,
                    seed: self.seed,
                    ..Self::from_preset(preset, self.num_vars)
                };
            }
            other => return Err(UncleError::Contract(format!("unknown model key {other:?}"))),
        }
        Ok(())
    }
}

/// One row of the published UnCLe settings table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PresetRow {
    pub lag: usize,
    pub kernel_size: usize,
    pub num_blocks: usize,
    pub channels: usize,
    pub recon_epochs: usize,
    pub joint_epochs: usize,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Lorenz1,
    Lorenz2,
    Lorenz3,
    Fmri,
    Nc8,
    Finance,
    Nd8,
    Tvsem,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Lorenz1,
        Preset::Lorenz2,
        Preset::Lorenz3,
        Preset::Fmri,
        Preset::Nc8,
        Preset::Finance,
        Preset::Nd8,
        Preset::Tvsem,
    ];

    pub fn row(self) -> PresetRow {
        let r = |lag, kernel_size, num_blocks, channels, recon_epochs, joint_epochs, lr| PresetRow {
            lag,
            kernel_size,
            num_blocks,
            channels,
            recon_epochs,
            joint_epochs,
            lr,
        };
        match self {
            Preset::Lorenz1 => r(1, 8, 6, 20, 1000, 2000, 5e-3),
            Preset::Lorenz2 => r(1, 6, 8, 12, 1000, 2500, 2e-3),
            Preset::Lorenz3 => r(1, 3, 6, 18, 500, 2500, 1e-3),
            Preset::Fmri => r(1, 6, 8, 12, 1000, 2000, 1e-5),
            Preset::Nc8 => r(1, 8, 6, 20, 1000, 2000, 3e-4),
            Preset::Finance => r(2, 2, 3, 24, 500, 10000, 3e-4),
            Preset::Nd8 => r(1, 8, 6, 20, 1000, 2000, 3e-4),
            Preset::Tvsem => r(1, 3, 4, 8, 500, 2500, 2e-3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Lorenz1 => "lorenz1",
            Preset::Lorenz2 => "lorenz2",
            Preset::Lorenz3 => "lorenz3",
            Preset::Fmri => "fmri",
            Preset::Nc8 => "nc8",
            Preset::Finance => "finance",
            Preset::Nd8 => "nd8",
            Preset::Tvsem => "tvsem",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = UncleError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['#', '_', '-'], "");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| UncleError::Contract(format!("unknown preset {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_table_rows() {
        let c = ModelConfig::from_preset(Preset::Lorenz1, 20);
        assert_eq!((c.lag, c.kernel_size, c.num_blocks, c.channels), (1, 8, 6, 20));
        assert_eq!((c.recon_epochs, c.joint_epochs, c.lr), (1000, 2000, 5e-3));
        let t = ModelConfig::from_preset(Preset::Tvsem, 2);
        assert_eq!((t.lag, t.kernel_size, t.num_blocks, t.channels), (1, 3, 4, 8));
        assert_eq!((t.recon_epochs, t.joint_epochs, t.lr), (500, 2500, 2e-3));
        assert_eq!("Lorenz#1".parse::<Preset>().unwrap(), Preset::Lorenz1);
        assert!("lorenz9".parse::<Preset>().is_err());
    }

    #[test]
    fn receptive_field_and_validation() {
        let mut c = ModelConfig::new(3);
        c.kernel_size = 3;
        c.num_blocks = 4;
        assert_eq!(c.receptive_field(), 1 + 2 * 2 * 15);
        c.kernel_size = 1;
        assert_eq!(c.receptive_field(), 1);
        assert!(c.validate().is_err());
        c.kernel_size = 2;
        assert!(c.validate().is_ok());
        c.lag = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut c = ModelConfig::from_preset(Preset::Lorenz1, 20);
        c.alpha = 0.25;
        c.share_params = false;
        let mut d = ModelConfig::new(1);
        for (k, v) in c.to_kv() {
            d.set(&k, &v).unwrap();
        }
        assert_eq!(c, d);
        assert!(d.set("bogus", "1").is_err());
        assert!(d.set("lag", "x").is_err());
    }
}
