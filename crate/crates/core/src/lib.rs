pub mod ci_project;
pub mod cli;
pub mod cost;
pub mod dist;
pub mod error;
pub mod fastotclean;
pub mod io;
pub mod lp;
pub mod qclp;
pub mod repair;
pub mod unsaturated;
pub mod ot;

pub use error::{Error, Result};
