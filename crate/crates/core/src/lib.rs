//! Nice parameterized theories on periodic grids and constructive emergence
//! maps between them.
//!
//! A theory assigns an operator `Ψ_ε` to every parameter tuple `ε`, and its
//! action is `S[φ;ε] = ⟪φ, Ψ_ε φ⟫`. The [`emergence`] module builds maps `F`
//! with `S₁[φ;ε] = S₂[φ;F(ε)]` and checks them numerically.

pub mod background;
pub mod calculus;
pub mod emergence;
pub mod error;
pub mod operators;
pub mod parameters;
pub mod theories;
pub mod tolerance;

pub use background::{inner_product, action_value, make_grid, sample_field, Field, Grid, ScalarKind};
pub use error::{Error, Result};
pub use operators::{Operator, StencilSpec};
pub use parameters::{Param, ParamKind, ParamSpace};
pub use theories::{CoeffFn, Poly, PolyTerm, Theory};
