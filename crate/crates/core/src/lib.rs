//! Coupled-resonator lattices with synthetic gauge fields.
//!
//! The crate builds magnetic tight-binding Hamiltonians for 2D arrays of ring
//! resonators ([`lattice`]), attaches input and output waveguides through a
//! non-Hermitian self-energy and computes transport from the Green's function
//! ([`probe`]), analyses spectra, currents and edge states ([`spectral`]),
//! checks the effective Hamiltonians against 4x4 transfer matrices of the
//! underlying waveguide/resonator chain ([`tmatrix`]) and runs disorder
//! ensembles and size sweeps ([`experiment`]).
//!
//! ```
//! use crowlattice::lattice::{build_h0, LatticeSpec};
//! use crowlattice::probe::{transport, ProbeSpec};
//!
//! let spec = LatticeSpec::open(6, 6, 0.25);
//! let h = build_h0(&spec).unwrap();
//! let c = transport(&h, &ProbeSpec::new((0, 0), (5, 0), 1.0), 1.5).unwrap();
//! assert!((c.total_power() - 1.0).abs() < 1e-10);
//! ```

pub mod error;
pub mod experiment;
pub mod lattice;
pub mod linalg;
pub mod probe;
pub mod rng;
pub mod spectral;
pub mod tmatrix;

#[doc(hidden)]
pub mod cli;

pub use error::{CrowError, Result};
