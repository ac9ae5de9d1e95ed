//! Structure and identifiability analysis for general feed-forward networks.

pub mod compose;
pub mod eval;
pub mod experiment;
pub mod file;
pub mod iso;
pub mod net;
pub mod sigma;
pub mod torus;

pub use eval::{Builtin, Nonlinearity};
pub use net::{LayeredForm, NetError, Network, NodeId};
pub use sigma::TanhSeries;
