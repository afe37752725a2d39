//! Fractional-order step-response modelling and identification for soft
//! actuators.
//!
//! The model is `G(s) = b0 / (s^α2 + a1 s^α1 + a0)`. Its step response is
//! evaluated from a Mittag-Leffler series with a Grünwald–Letnikov fallback,
//! and its five parameters are identified from measured traces by particle
//! swarm optimization.

pub mod baseline;
pub mod dataset;
mod dd;
pub mod error;
pub mod model;
pub mod presets;
pub mod pso;
pub mod special;

pub use baseline::{moment_inertia, simulate_nonlinear, stiffness, BeamGeometry, NonlinearParams};
pub use dataset::{
    average_traces, export_csv, gen_synthetic, load_csv, normalize, rmse, rmse_percent, Dataset,
    ErrorMetrics, StepTrace,
};
pub use error::{DataError, ModelError, PsoError, SpecialError};
pub use model::{
    dc_gain, freq_response, gl_weights, simulate_gl, step_response, step_response_series, EvalPath,
    FracTransferFunction, ModelResponse, ResponseOptions, SimGrid,
};
pub use pso::{fitness, run_pso, FitResult, ParamBounds, Particle, PsoConfig};
pub use special::{gamma_fn, mittag_leffler_3p, pochhammer, MLSeriesReport};
