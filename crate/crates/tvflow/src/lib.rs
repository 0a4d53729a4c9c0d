//! Pathwise simulator and property-verification suite for singular
//! total-variation flow with rotational transport noise on a disc,
//! `dX = div[sgn(∇X)]dt + ½ div[bᵀb ∇X]dt + ⟨b∇X, dβ⟩` with Dirichlet
//! boundary, in the Yosida-regularized form `sgn ≈ ψ̃_λ`.
//!
//! Module map:
//! - [`grid`]: disc mask, adjoint-exact discrete ∇/div pair, resolvent;
//! - [`transport`]: rigid-rotation fields b(ξ)=Λξ, their groups e^{sB} and
//!   skew-adjoint generators B;
//! - [`regularization`]: Yosida map ψ_λ, Moreau envelope j_λ, discrete TV;
//! - [`noise`]: reproducible Brownian paths with bridge refinement;
//! - [`solver`]: the rescaled random-PDE integrator and the direct Itô
//!   integrator, plus the frame transformation between them;
//! - [`verify`]: variational-inequality slack, extinction statistics, the
//!   discrete Sobolev constant, contraction checks;
//! - [`harness`]: run configs, studies, ensembles, CSV/JSON outputs.

pub mod grid;
pub mod harness;
pub mod noise;
pub mod regularization;
pub mod solver;
pub mod transport;
pub mod verify;
