//! Separated-variable Lagrangian solutions φ(z,t) = A(t)v(z) of the 3D
//! incompressible Euler equations: construction of the time and spatial
//! factors for each solution family, and an independent verifier.

pub mod cli;
pub mod config;
pub mod expr;
pub mod families;
pub mod jet;
pub mod ode;
pub mod rotations;
pub mod spatial;
pub mod temporal;
pub mod verify;
