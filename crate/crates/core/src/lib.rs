//! Symmetry-based representation learning on a cyclic grid world.
//!
//! The crate covers the whole loop: a toroidal grid world with rendered
//! observations, exact group-theoretic checks (equivariance, disentanglement,
//! permuted worlds), closed-form reference representations, a small
//! reverse-mode autodiff engine, the trainable models (auto-encoder, CCI-VAE,
//! Forward-VAE and a decoupled action MLP) and the downstream evaluations.

pub mod action;
pub mod analytic;
pub mod autodiff;
pub mod evaluation;
pub mod group;
pub mod models;
pub mod world;
