//! Dense linear algebra, probability densities and seeded sampling.

mod density;
mod lu;
mod matrix;
mod rng;

pub use density::{gaussian_logpdf, laplace_logpdf, sigmoid, softplus, softplus_inv};
pub use lu::{log_abs_det, lu_factor, solve, LuFactorization, SINGULAR_RTOL};
pub use matrix::Matrix;
pub use rng::{normal_matrix, standard_normal, Rng};
