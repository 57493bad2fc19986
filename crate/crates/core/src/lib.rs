//! Posterior inference for closed-population capture-recapture models.
//!
//! The crate covers the constant-detection model `M0`, the heterogeneous
//! detection model `Mh` with Beta-distributed capture probabilities, the
//! binomial model that ignores individual identity, and the Dirichlet
//! multinomial kernel used for list-based abundance estimation. For each it
//! evaluates likelihoods in log space, builds normalized posteriors of the
//! population size `N` on a truncated support, and checks whether the
//! posterior is proper by comparing analytic tail exponents with exponents
//! fitted to the kernel itself.
//!
//! Modules:
//! - [`capture_data`]: capture histories, sufficient statistics, simulators, file IO.
//! - [`likelihoods`]: log-likelihood kernels and the profile MLE for `M0`.
//! - [`posterior`]: marginal kernels over `N` and normalized posterior tables.
//! - [`propriety`]: analytic conditions and empirical tail-exponent fits.
//! - [`da_mcmc`]: data-augmentation Gibbs sampler and the augmentation-size sweep.

pub mod capture_data;
pub mod da_mcmc;
pub mod error;
pub mod likelihoods;
pub mod posterior;
pub mod propriety;
pub mod quadrature;
pub mod special;

pub use capture_data::{CaptureHistory, SufficientStats};
pub use error::{Error, Result};

pub use likelihoods::{BetaParams, HeterogeneityParams};
pub use posterior::{GammaPrior, NPrior, PosteriorTable, PriorSpec};
pub use propriety::{ProprietyReport, Verdict};
