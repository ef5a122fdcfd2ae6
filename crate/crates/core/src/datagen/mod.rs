mod dataset;
mod generators;
pub mod io;

pub use dataset::{GroundTruth, Segment, TimeSeriesDataset};
pub use generators::{
    gen_lorenz96, gen_nc8, gen_nc8_with, gen_nd8, gen_nd8_with, gen_tvsem, integrate_lorenz96, lorenz96_truth,
    nc8_truth, nd8_is_switched, nd8_switched_truth, tvsem_coefficients, Lorenz96Params, NoiseSource, Silent,
    NC8_NAMES, ND8_SWITCH, TVSEM_SEGMENT, WARM_UP,
};
