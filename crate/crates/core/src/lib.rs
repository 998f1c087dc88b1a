//! Virtual hybrid parallel-beam tomography.
//!
//! The chain runs from simulated electrode data to a conductivity image:
//! forward solves ([`forward`]), a calibrated Dirichlet-to-Neumann matrix
//! ([`dnmap`]), boundary traces of complex geometric optics solutions
//! ([`cgo`]), a pseudo-time transform into a blurred sinogram
//! ([`pseudotime`]), deconvolution ([`deblur`]) and finally a parallel-beam
//! reconstruction ([`recon`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cgo;
pub mod deblur;
pub mod dnmap;
pub mod error;
pub mod forward;
pub mod image;
pub mod mesh;
pub mod phantom;
pub mod pseudotime;
pub mod recon;
pub mod sinogram;
pub mod sparse;
pub mod vht;

pub use error::{Error, Result};
pub use image::ImageGrid;
pub use phantom::{Field, Inclusion, Phantom, Shape};
pub use sinogram::{ComplexSinogram, Sinogram};
