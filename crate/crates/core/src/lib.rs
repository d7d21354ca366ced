// Index loops mirror the matrix formulas; `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod checkpoint;
pub mod codec;
pub mod continual;
pub mod datagen;
pub mod error;
pub mod gradcheck;
pub mod heads;
pub mod numerics;
pub mod optim;

pub use error::{KacError, Result};
