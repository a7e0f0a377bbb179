pub mod design;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod game;
pub mod labels;
pub mod lp;
pub mod poa;
pub mod registry;
pub mod worstcase;

pub use error::{Error, Result};
