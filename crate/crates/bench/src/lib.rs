//! Shared fixtures for the criterion benches.

use uncle_core::datagen::{gen_lorenz96, gen_tvsem, Lorenz96Params, TimeSeriesDataset};
use uncle_core::diffcore::Tensor;
use uncle_core::model::{ModelConfig, Preset, UncleModel};

/// A corpus with its preset model, initialized but untrained.
pub struct Fixture {
    pub name: &'static str,
    pub data: TimeSeriesDataset,
    pub model: UncleModel,
    pub normalized: Tensor,
}

fn fixture(name: &'static str, data: TimeSeriesDataset, preset: Preset) -> Fixture {
    let cfg = ModelConfig::from_preset(preset, data.num_vars());
    let norm = uncle_core::model::Normalization::fit(&data);
    let normalized = norm.apply(&data).expect("fixture data is valid");
    let model = UncleModel::new(cfg, norm).expect("preset is valid");
    Fixture {
        name,
        data,
        model,
        normalized,
    }
}

pub fn tvsem() -> Fixture {
    let (data, _) = gen_tvsem(2000, 0).expect("tvsem fixture");
    fixture("tvsem", data, Preset::Tvsem)
}

pub fn lorenz1() -> Fixture {
    let (data, _) = gen_lorenz96(&Lorenz96Params::new(20, 250, 10.0), 0).expect("lorenz fixture");
    fixture("lorenz1", data, Preset::Lorenz1)
}
