//! Conditional moments, norm moments and forward option pricing for
//! independent-increment processes in discretized Banach algebras.
//!
//! The library provides:
//!
//! * three concrete Banach-algebra instances (weighted grid functions under
//!   the pointwise product, d×d matrices, lattice measures under convolution),
//! * bounded k-linear maps, monomials and their Fréchet derivatives,
//! * Ornstein-Uhlenbeck stochastic convolutions and matrix Lévy processes
//!   with the orthogonal/parallel decomposition of their increments,
//! * closed-form conditional moment engines (commutative binomial formula,
//!   shift-semigroup form, non-commutative word expansion, Isserlis moment
//!   tensors, even/odd norm moments),
//! * a Bernstein-expansion pricer for European options on commodity forwards,
//! * an executable reconstruction of the non-commutative counterexample, and
//! * a frozen-path Monte Carlo oracle that gates every closed form.

pub mod algebra;
pub mod cli;
pub mod config;
pub mod counterexample;
pub mod error;
pub mod io;
pub mod moments;
pub mod multilinear;
pub mod oracle;
pub mod pricing;
pub mod process;
pub mod quad;
pub mod validate;

pub use algebra::{
    Algebra, AlgebraElement, AlgebraTag, FilipovicGeometry, GridSpec, LatticeSpec,
    MatrixAlgebraSpec,
};
pub use error::{Error, Result};
