//! Target families and seeded synthetic data.

mod io;
mod models;
mod sampling;

pub use io::{read_model, write_model};
pub use models::{GaussianTarget, GmmModel, LogitModel, ModelSpec, ProbitModel};
pub use sampling::{
    build_g_prior, build_scaled_prior, random_gaussian_target, responses_from_uniforms,
    sample_binary_responses, sample_design, sample_gmm_data, sample_uniforms, standard_normal,
    Link, RngStream,
};
