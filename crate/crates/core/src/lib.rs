pub mod action;
pub mod error;
pub mod checkpoint;
pub mod cli;
pub mod eval;
pub mod fusion;
pub mod lang;
pub mod lstm;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod synth;
pub mod task;
pub mod vision;

pub use error::{Error, Result};
