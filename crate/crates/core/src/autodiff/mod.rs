//! Reverse-mode differentiation over dense batch matrices.

mod params;
mod tape;

pub use params::{ParamBlock, ParamId, ParamStore};
pub use tape::{HingeKind, NodeId, Tape, Trace};
