//! From-scratch multilayer perceptrons and the small training experiments
//! built on them.

mod data;
mod experiments;
mod net;
mod train;

pub use data::*;
pub use experiments::*;
pub use net::*;
pub use train::*;
