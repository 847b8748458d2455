//! Noise spectroscopy of a current-carrying nanowire with a trapped condensate.
//!
//! Atoms in the m = −1 Zeeman sublevel are flipped into the untrapped m = 0
//! state by the magnetic near field of current fluctuations. The transferred
//! atom number as a function of the offset field traces the current-noise
//! spectrum convolved with a response kernel set by the condensate.

// `!(x > 0.0)` deliberately rejects NaN; long literals are published constants.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod condensate;
pub mod config;
pub mod constants;
pub mod counting;
pub mod error;
pub mod interp;
pub mod inversion;
pub mod io;
pub mod kernel;
pub mod nanowire;
pub mod oracle;
pub mod quadrature;
pub mod spectra;

pub use error::{Error, Result};
