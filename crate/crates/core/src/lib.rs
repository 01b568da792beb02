//! Brightness induction with time-dependent orientation feedback.
//!
//! The pipeline filters a luminance display with a multi-scale oriented
//! difference-of-Gaussians bank, pools each response in a Gaussian window to
//! get an orientation profile per scale, modulates that profile by circular
//! convolution with a stage-dependent orientation impulse response, combines
//! scales with a spatial-frequency power law and reads out the peak absolute
//! response.

pub mod config;
pub mod convolution;
pub mod experiment;
pub mod filterbank;
pub mod orientation;
pub mod pgm;
pub mod plot;
pub mod pooling;
pub mod stimuli;

pub use convolution::{convolve, Field};
pub use filterbank::{
    build_filter, respond_all, BankParams, Kernel2D, OdogFilterBank, OdogFilterSpec, ResponseStack,
};
pub use orientation::{
    circular_convolve, make_impulse_response, modulate, FeedbackCoefficients, ImpulseParams,
    ImpulseResponse, OrientationProfile, Stage,
};
pub use pooling::{
    combine_scales, pool_orientation, predict, spectral_weights, ModelConfig, PoolingWindow,
    PredictionResult, ScaleSelection, WindowRule,
};
pub use stimuli::{
    compose_display, make_square_grating, make_white_stimulus, GratingSpec, LuminanceImage, Phase,
    PixelGeometry, Placement, WhiteSpec,
};
