//! Bass martingales between measures in convex order.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which the file formats and the CLI use.

pub mod convexfn;
pub mod dualeval;
pub mod error;
pub mod io;
pub mod lp;
pub mod martingale;
pub mod measures;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod special;
pub mod transport;

pub use convexfn::{smoothed_grad_inverse, AnalyticConvex, ConvexPotential, GaussianIntegrals, Smoothed};
pub use dualeval::{dual_value, phi_psi, relaxed_dual, rho_psi, DualCertificate, DualValue};
pub use error::{Error, Result};
pub use martingale::{
    check_boundary, check_marginals, check_martingale, estimate_functionals, forward_construct,
    forward_construct_quantiles, kernel, sample_paths,
    time_consistency, BassModel,
};
pub use measures::{check_convex_order, check_irreducible, find_mt_coupling};
pub use quadrature::QuadratureSpec;
pub use scalar::Scalar;
pub use solver::{duality_gap_report, solve_bass_1d, solve_bass_nd, Marginal1d, QuantileFunction, SolverOptions};
pub use transport::{gaussian_cell_masses, mcov_1d, mcov_bass_kernel, mcov_discrete};

pub type DiscreteMeasure = measures::DiscreteMeasure<f64>;
pub type MartingaleCoupling = measures::MartingaleCoupling<f64>;
pub type MaxAffine = convexfn::MaxAffine<f64>;
pub type QuadratureRule = quadrature::QuadratureRule<f64>;
pub type BassSolution = solver::BassSolution<f64>;
pub type PathEnsemble = martingale::PathEnsemble<f64>;
