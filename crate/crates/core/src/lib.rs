#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod svd;
pub mod tensor;

pub use error::{Error, Result};
pub mod completion;
pub mod field;
pub mod io;
pub mod lowrank;
pub mod partition;
pub mod pipeline;
pub mod synth;
pub mod tt;
pub mod tucker;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/tucker.md")]
    mod tucker {}
    #[doc = include_str!("../../../book/src/tensor-trains.md")]
    mod tensor_trains {}
    #[doc = include_str!("../../../book/src/partitioning.md")]
    mod partitioning {}
    #[doc = include_str!("../../../book/src/completion.md")]
    mod completion {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
