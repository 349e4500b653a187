//! Multi-view metric learning in vector-valued kernel spaces.
//!
//! The learned kernel between views `l` and `m` is `K_l A_lm K_m`, so the
//! whole multi-view Gram matrix is `K = H A H` with `H = blockdiag(K_l)` and
//! a positive (semi)definite block metric `A`. The [`solver`] alternates an
//! exact coefficient solve, an optional combination-weight solve and a
//! (proximal) gradient step on `A`; [`nystrom`] replaces every `K_l` by a
//! shared-anchor low-rank factor `U_l U_lᵀ` so the solver runs in `pv`
//! instead of `nv` dimensions.

pub mod error;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod multiview;
pub mod nystrom;
pub mod solver;

pub use error::{MvmlError, Result};
