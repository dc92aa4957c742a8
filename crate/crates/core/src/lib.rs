#![no_std]

extern crate alloc;

pub mod dist;
pub mod error;
pub mod instances;
pub mod ipm;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod mpcloop;
pub mod oracle;
pub mod qpstruct;
pub mod sets;
pub mod synthesis;

pub use error::{Error, Result};
