//! Diffusion-guided multi-objective optimization.
//!
//! The crate bundles the pieces of a conditional denoising-diffusion optimizer whose reverse
//! steps are steered by multiple-gradient-descent directions and an RBF repulsion term:
//!
//! * [`autodiff`]: small reverse-mode engine used to train the networks
//! * [`problems`]: ZDT, DTLZ and RE benchmark problems with analytic Jacobians
//! * [`diffusion`] and [`ditmoo`]: the cosine-schedule DDPM and its cross-attention noise net
//! * [`guidance`] and [`sampler`]: guided reverse steps and the archive-keeping sampling loop
//! * [`pareto`] and [`metrics`]: dominance, sorting, crowding, hypervolume and friends
//! * [`mobo`] and [`offline`]: Bayesian and dataset-driven operating modes

pub mod autodiff;
pub mod error;
pub mod linalg;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub mod metrics;
pub mod pareto;
pub mod problems;
pub mod diffusion;
pub mod ditmoo;
pub mod guidance;
pub mod sampler;
pub mod mobo;
pub mod offline;
