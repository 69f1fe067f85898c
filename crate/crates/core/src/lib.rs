//! Joint rate and power control for CDMA uplinks as a non-cooperative
//! pricing game, with base-station assignment, admission control and
//! discrete-rate adaptation.

// `!(x > 0.0)` is how domain checks reject NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admission;
pub mod error;
pub mod game;
pub mod model;
pub mod multicell;
pub mod oracle;
pub mod quantizer;
pub mod scenario;

pub use error::{Error, Result};
