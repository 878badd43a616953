#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
//! Passivity certification of static AC loads and dq-frame simulation of the
//! load-node/line networks they sit in.

pub mod dq;
pub mod error;
pub mod loads;
pub mod network;
pub mod newton;
pub mod passivity;
pub mod sim;

pub use dq::DqVector;
pub use error::{Error, Result};
pub use loads::{ExpParams, LoadModel, TwoTierParams, UpperModel, ZipParams};
pub use passivity::{PassivityCertificate, Verdict, VoltageWindow};
