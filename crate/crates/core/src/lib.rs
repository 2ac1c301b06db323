pub mod cli;
pub mod contact;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod game;
pub mod learning;
pub mod multiclass;
pub mod oracle;
pub mod population;
pub mod roots;
pub mod sim;
pub mod threshold;

pub use error::{Error, Result};
