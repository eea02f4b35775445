//! Projective families of finite-dimensional reduced quantum systems.
//!
//! A reduced system is labelled by a finite set of configurational degrees of
//! freedom together with a basis of constant momentum operators. Labels are
//! ordered by linear refinement, and density operators are carried from a
//! finer system to a coarser one by a partial trace followed by a pullback
//! along the induced injection. The [`dpg`] module realizes a holonomy-flux
//! family of labels combinatorially and [`almost_periodic`] provides the
//! dual inductive family of almost periodic function spaces.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod almost_periodic;
pub mod dof_systems;
pub mod dpg;
pub mod gaussian_states;
pub mod linalg;
pub mod reduced_spaces;

pub use linalg::{Matrix, Rational};
pub use reduced_spaces::{DofId, ReducedFrame};
