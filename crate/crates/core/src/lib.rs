#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Discrete-event energy simulator for a DVFS-capable microcontroller with
//! an IEEE 802.15.4 radio.

pub mod clockctl;
pub mod error;
pub mod experiments;
pub mod freqopt;
pub mod mac;
pub mod netstack;
pub mod powermodel;
pub mod sim;
pub mod time;

pub use error::{Error, Result};
pub use time::Ns;
