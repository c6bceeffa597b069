//! Weighted inertia-energy-dissipation (WIED) approximation of the weighted
//! nonlinear Cauchy-Neumann problem
//!
//! ```text
//! y^a U_t - div(y^a grad U) = 0     in R^{N+1}_+ x (0, inf)
//! -d_y^a U = -beta(u)               on y = 0,  u = U|_{y=0}
//! ```
//!
//! with a combustion-type `beta`, together with an implicit Euler reference
//! solver and discrete versions of the energy, truncation and Hölder
//! estimates used to analyse the limit `eps -> 0`.

pub mod assembly;
pub mod combustion;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod parabolic;
pub mod wied;

pub use assembly::{DiscreteOperators, ForcingSpec};
pub use combustion::{CombustionModel, ModelConfig};
pub use error::{Result, WiedError};
pub use field::Field;
pub use grid::{Cylinder, Domain, GridSpec, NormKind, Region, WeightedGrid};
pub use parabolic::ParabolicConfig;
pub use wied::{EpsilonSchedule, OuterMethod, WiedConfig};
