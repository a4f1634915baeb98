//! Steady-state thermodynamics of driven-dissipative cavity QED models.
//!
//! The crate builds Lindblad models on truncated composite Hilbert spaces,
//! solves for their steady states, computes counted-current noise via full
//! counting statistics and evaluates heat, power and entropy production in
//! three bookkeepings: standard, input-output and semi-classical.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fcs;
pub mod hilbert;
pub mod lindblad;
pub mod models;
pub mod sweep;
pub mod thermo;

pub use error::{Error, Result};
pub use hilbert::{HilbertSpace, Operator};
pub use lindblad::{liouvillian, steady_state, DissipationChannel, Drive, OpenSystem, SteadyState, Superoperator};
pub use models::{build_maser, build_sc_maser, MaserParams};
pub use thermo::{evaluate, ThermoReport};
