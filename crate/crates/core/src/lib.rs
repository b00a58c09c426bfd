//! Rigid underwater vehicle with flow-through controls in ideal irrotational
//! flow: hydrodynamic potentials, coupling matrices, Kirchhoff dynamics,
//! return-method rank conditions and local steering.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
extern crate alloc;

pub mod bem;
pub mod dynamics;
pub mod ellipsoid;
pub mod error;
pub mod hydro;
pub mod linalg;
pub mod mesh;
pub mod quad;
pub mod quat;
pub mod return_ctrl;
pub mod steering;

pub use error::{Error, Result};
