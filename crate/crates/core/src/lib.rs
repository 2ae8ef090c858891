//! Device-free localization from received signal strength on a mesh of
//! static radio links.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod localizers;
pub mod rss_model;
pub mod simulator;
pub mod site;
pub mod stats;

pub use error::{DflError, Result};
