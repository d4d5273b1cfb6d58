//! Differentiation and linear-algebra substrate.

pub mod brackets;
pub mod dual;
pub mod jet;
pub mod linalg;
pub mod smooth;

pub use brackets::{iterated_brackets, lie_bracket, Bracket, FieldJet};
pub use dual::{Dual, Real, D1, D2};
pub use jet::{Jet, JetSpace};
pub use linalg::{annihilator, matrix_rank, nullspace, subspace_rank, symplectic_orthogonal, Subspace, RANK_TOL};
pub use smooth::{gradient, gradient_at, hessian, jacobian, jacobian_at, jvp_at, MapFn, Scalar, Smooth, SmoothMap};
