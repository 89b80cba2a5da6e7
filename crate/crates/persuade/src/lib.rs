pub mod cli;
pub mod error;
pub mod exact;
pub mod fixtures;
pub mod geometry;
pub mod independent;
pub mod lp;
pub mod model;
pub mod par;
pub mod prob_oracle;
pub mod simulate;
pub mod symmetric;

pub use error::{Error, Result};
