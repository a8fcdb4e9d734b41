//! Derivative machinery.
//!
//! Input derivatives use forward mode ([`Dual1`], [`Dual2`] for single
//! points; [`Tape::jvp`]/[`Tape::jvp2`] for batches). Parameter gradients use
//! reverse mode over a [`Tape`] of matrix primitives that is re-recorded on
//! every step. Because the forward-mode tangents of a batch are themselves
//! recorded on the tape, the reverse sweep differentiates through them.

mod dual;
pub mod fastmath;
mod primitives;
mod tape;

pub use dual::{Dual1, Dual2, Scalar};
pub use primitives::{primitive_set, Primitive};
pub use tape::{record_and_backprop, Tape, UnaryKind, Var};
