//! Finite-dimensional toolkit for a weak-decay model of massive leptons,
//! neutrinos and W bosons: truncated Fock spaces, Hamiltonians, infrared
//! cascades and Mourre-type commutator checks.

pub mod cascade;
pub mod constants;
pub mod fock;
pub mod grid;
pub mod jet;
pub mod kernels;
pub mod mourre;
pub mod ops;
pub mod spectral;
pub mod verify;
