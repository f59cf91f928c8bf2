//! Infinite-width kernels, the empirical NTK, the linearized-training
//! posterior and studies of how well last-layer features approximate them.

mod dual;
mod gap;
mod kernels;
mod posterior;
mod width;

pub use dual::{DualActivation, GaussHermite, DEFAULT_QUADRATURE_ORDER, DOMAIN_TOLERANCE, QUADRATURE_TOLERANCE};
pub use gap::{approximation_gap_study, gap_coefficients, unit_pair, GapCoefficients, GapRow, GapStudy};
pub use kernels::{
    empirical_ntk, empirical_ntk_matrix, kernel_pair, kernel_recursion, kernel_recursion_with,
    recursion_from_correlation, KernelLayer, KernelPair,
};
pub use posterior::{
    feature_kernels, linearized_posterior, linearized_posterior_kernels, FeatureKernels, KernelProvider, Posterior,
    PosteriorKernels, RecursiveKernels,
};
pub use width::{validate_widths, width_sweep, WidthReport, WidthRow};
