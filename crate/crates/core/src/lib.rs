#![no_std]
extern crate alloc;

pub mod agent;
pub mod ansatz;
pub mod data;
pub mod error;
pub mod fisher;
pub mod numerics;
pub mod pauli;
pub mod quantum;

pub use error::{Error, Result};
