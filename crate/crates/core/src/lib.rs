//! Quadratic Hamiltonians on standard symplectic space.

pub mod dynamics;
pub mod error;
pub mod floer;
pub mod hormander;
pub mod io;
pub mod linalg;
pub mod scalar;
pub mod symplectic;
pub mod tentacular;

pub use error::{Error, Result};
pub use scalar::Real;
pub use symplectic::{
    blend_liouville, hamiltonian_matrix, is_liouville, poisson_bracket, random_quadratic, random_symplectic,
    standard_j0, x_alpha_field, LinearField, PhasePoint, QuadraticHamiltonian, SymplecticMatrix,
};

pub type Hamiltonian = QuadraticHamiltonian<f64>;
pub type Hamiltonian32 = QuadraticHamiltonian<f32>;
pub type Field = LinearField<f64>;
pub type Symplectic = SymplecticMatrix<f64>;
pub type Point = PhasePoint<f64>;
